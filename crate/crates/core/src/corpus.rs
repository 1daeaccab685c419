//! Review corpus types and leave-one-out example construction.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng::{derive_seed, rng_from_seed};
use crate::snippet::{flatten_with_budget, Snippet};
use crate::vocab::Vocabulary;

/// One tokenized review with its star rating.
#[derive(Clone, Debug, PartialEq)]
pub struct Review {
    pub item_id: String,
    pub tokens: Vec<String>,
    pub rating: u8,
}

/// All retained reviews of one item, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemBundle {
    pub item_id: String,
    pub reviews: Vec<Review>,
}

/// A star rating 1..=5, or the sixth PAD symbol meaning "no rating
/// preference". PAD never comes from ingestion; it is introduced by user
/// queries and by training-time augmentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RatingSymbol {
    Stars(u8),
    Pad,
}

impl RatingSymbol {
    pub fn stars(value: u8) -> RatingSymbol {
        assert!((1..=5).contains(&value), "rating {} outside 1..=5", value);
        RatingSymbol::Stars(value)
    }

    /// Row index into the 6-row rating embedding table.
    pub fn embedding_row(self) -> u32 {
        match self {
            RatingSymbol::Stars(v) => (v - 1) as u32,
            RatingSymbol::Pad => 5,
        }
    }

    pub fn as_stars(self) -> Option<u8> {
        match self {
            RatingSymbol::Stars(v) => Some(v),
            RatingSymbol::Pad => None,
        }
    }
}

/// One leave-one-out training or evaluation instance.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub context: Vec<Review>,
    pub target: Review,
    pub snippets: Vec<Vec<String>>,
    pub rating: RatingSymbol,
}

/// Keep the first `max` tokens, dropping the rest.
pub fn truncate_tokens(tokens: &mut Vec<String>, max: usize) {
    tokens.truncate(max);
}

/// Group reviews by item (first-appearance order), keeping items with at
/// least `min_reviews` reviews. Review order within a bundle follows the
/// input.
pub fn group_into_bundles(reviews: Vec<Review>, min_reviews: usize) -> Vec<ItemBundle> {
    assert!(min_reviews >= 1, "min_reviews must be at least 1");
    let mut order: Vec<String> = Vec::new();
    let mut grouped: alloc::collections::BTreeMap<String, Vec<Review>> =
        alloc::collections::BTreeMap::new();
    for review in reviews {
        if !grouped.contains_key(&review.item_id) {
            order.push(review.item_id.clone());
        }
        grouped.entry(review.item_id.clone()).or_default().push(review);
    }
    order
        .into_iter()
        .filter_map(|item_id| {
            let reviews = grouped.remove(&item_id).unwrap();
            (reviews.len() >= min_reviews).then_some(ItemBundle { item_id, reviews })
        })
        .collect()
}

/// Leave-one-out examples for one bundle: each review takes the target role
/// once; the remaining reviews form the context, uniformly subsampled
/// without replacement down to `max_reviews` when more exist. Subsampling
/// seeds derive from (seed, item id, target index) so results do not depend
/// on bundle processing order.
pub fn build_examples<F>(
    bundle: &ItemBundle,
    extractor: F,
    max_reviews: usize,
    seed: u64,
) -> Vec<TrainingExample>
where
    F: Fn(&[String]) -> Vec<Snippet>,
{
    assert!(
        bundle.reviews.len() >= 2,
        "bundle {} needs at least 2 reviews, has {}",
        bundle.item_id,
        bundle.reviews.len()
    );
    let item_seed = derive_seed(seed, &bundle.item_id, 0);
    (0..bundle.reviews.len())
        .map(|i| {
            let target = bundle.reviews[i].clone();
            let mut others: Vec<usize> = (0..bundle.reviews.len()).filter(|&j| j != i).collect();
            if others.len() > max_reviews {
                let mut rng = rng_from_seed(derive_seed(item_seed, "context", i as u64));
                others.shuffle(&mut rng);
                others.truncate(max_reviews);
                others.sort_unstable(); // keep original review order
            }
            let context = others.iter().map(|&j| bundle.reviews[j].clone()).collect();
            let snippets = extractor(&target.tokens)
                .into_iter()
                .map(|s| s.tokens)
                .collect();
            let rating = RatingSymbol::stars(target.rating);
            TrainingExample {
                context,
                target,
                snippets,
                rating,
            }
        })
        .collect()
}

/// Split bundles by item into train/valid/test with the given percentages;
/// no item's reviews cross splits.
pub fn split_by_item(
    mut bundles: Vec<ItemBundle>,
    valid_pct: usize,
    test_pct: usize,
    seed: u64,
) -> (Vec<ItemBundle>, Vec<ItemBundle>, Vec<ItemBundle>) {
    assert!(valid_pct + test_pct < 100, "split percentages leave no train data");
    let mut rng = rng_from_seed(derive_seed(seed, "split", 0));
    bundles.shuffle(&mut rng);
    let n = bundles.len();
    let n_valid = n * valid_pct / 100;
    let n_test = n * test_pct / 100;
    let test = bundles.split_off(n - n_test);
    let valid = bundles.split_off(bundles.len() - n_valid);
    (bundles, valid, test)
}

/// Training example with vocabulary ids applied, ready for the model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelExample {
    pub item_id: String,
    pub context_ids: Vec<Vec<u32>>,
    pub context_ratings: Vec<u8>,
    pub snippet_ids: Vec<u32>,
    pub target_ids: Vec<u32>,
    pub rating: RatingSymbol,
}

/// Map a [`TrainingExample`] onto vocabulary ids, flattening snippets under
/// the total token budget.
pub fn to_model_example(
    example: &TrainingExample,
    vocab: &Vocabulary,
    snippet_budget: usize,
) -> ModelExample {
    let snippets: Vec<Snippet> = example
        .snippets
        .iter()
        .map(|tokens| Snippet {
            tokens: tokens.clone(),
        })
        .collect();
    let flat = flatten_with_budget(&snippets, snippet_budget);
    ModelExample {
        item_id: example.target.item_id.clone(),
        context_ids: example
            .context
            .iter()
            .map(|r| vocab.encode(&r.tokens))
            .collect(),
        context_ratings: example.context.iter().map(|r| r.rating).collect(),
        snippet_ids: vocab.encode(&flat),
        target_ids: vocab.encode(&example.target.tokens),
        rating: example.rating,
    }
}

/// Replace the conditioning rating with PAD with the given probability;
/// training-time augmentation for the "overall review" mode.
pub fn augment_rating<R: Rng>(rating: RatingSymbol, prob: f64, rng: &mut R) -> RatingSymbol {
    if rng.gen::<f64>() < prob {
        RatingSymbol::Pad
    } else {
        rating
    }
}
