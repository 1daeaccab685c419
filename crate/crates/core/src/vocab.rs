//! Token vocabulary with fixed special symbols.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::rng::{fnv1a64, fnv1a64_continue};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;

pub const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

/// Bijective token <-> id map. Specials occupy ids 0..4 in the order
/// PAD, UNK, BOS, EOS.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    token_to_id: BTreeMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Build from corpus token frequencies.
    ///
    /// Tokens with frequency >= `min_freq` are kept, most frequent first,
    /// ties broken lexicographically, capped at `max_size` including the
    /// four specials.
    pub fn build<'a, I>(tokens: I, min_freq: usize, max_size: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        assert!(min_freq >= 1, "min_freq must be at least 1");
        assert!(
            max_size >= SPECIALS.len(),
            "max_size {} cannot hold the {} specials",
            max_size,
            SPECIALS.len()
        );
        let mut freqs: BTreeMap<&str, usize> = BTreeMap::new();
        for tok in tokens {
            *freqs.entry(tok).or_insert(0) += 1;
        }
        let mut ranked: Vec<(&str, usize)> = freqs
            .into_iter()
            .filter(|&(_, f)| f >= min_freq)
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - SPECIALS.len());

        Self::from_ordered_tokens(ranked.into_iter().map(|(t, _)| t.to_string()))
    }

    /// Rebuild from the stored non-special token order (shard loading).
    pub fn from_ordered_tokens<I>(tokens: I) -> Self
    where
        I: IntoIterator<Item = String>,
    {
        let mut id_to_token: Vec<String> =
            SPECIALS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(tokens);
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            token_to_id,
            id_to_token,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the specials are always present
    }

    /// Id for a token; unknown tokens map to UNK.
    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    /// All tokens in id order, specials first.
    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Ids back to surface tokens; specials are dropped.
    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .filter(|&&id| id >= SPECIALS.len() as u32)
            .map(|&id| self.token(id).to_string())
            .collect()
    }

    /// Order-sensitive hash of the full token list; recorded in shard
    /// headers so training can refuse mismatched vocabularies.
    pub fn hash(&self) -> u64 {
        let mut h = fnv1a64(&(self.id_to_token.len() as u64).to_le_bytes());
        for tok in &self.id_to_token {
            h = fnv1a64_continue(h, tok.as_bytes());
            h = fnv1a64_continue(h, &[0x1f]);
        }
        h
    }
}
