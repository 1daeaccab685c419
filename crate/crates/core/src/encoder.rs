//! Context-side encoders: bidirectional GRU over each review, bidirectional
//! snippet attention with a scalar gate, and rating-similarity gating.
//!
//! Reviews are encoded independently; token states are the sum of forward
//! and backward GRU states. Snippet attention scores every (review token,
//! snippet token) pair with `v_a1 . [H_i; S_j; H_i * S_j]`, normalizes both
//! ways, and gates each token state by a scalar from
//! `v_a2 . [H_i; A_i; H_i * A_i; H_i * s_mean]` where `A` is the attended
//! context and `s_mean` the mean attended snippet vector. Rating gating
//! scales each context review's rating embedding by its learned similarity
//! to the query rating.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::corpus::RatingSymbol;
use crate::gru::{gru_cell, GruParams, GruVars, INIT_RANGE};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// How the attended review context is aggregated.
///
/// The printed aggregation multiplies each token state by its total
/// attention mass, which is one, so `Literal` collapses to the identity and
/// exists only for the degeneracy regression. `Corrected` attends over the
/// opposite sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Eq6Form {
    Literal,
    Corrected,
}

#[derive(Clone, Debug)]
pub struct EncoderParams {
    pub token_embedding: Tensor,  // [vocab, emb]
    pub rating_embedding: Tensor, // [6, emb]: stars 1..5 plus PAD
    pub fwd: GruParams,
    pub bwd: GruParams,
    pub v_alpha1: Tensor, // [3 * hidden]
    pub v_alpha2: Tensor, // [4 * hidden]
    pub v_beta1: Tensor,  // [hidden]
}

impl EncoderParams {
    /// Uniform(-0.08, 0.08) weights. The attention forms require the token
    /// embedding and GRU hidden width to match.
    pub fn init<R: Rng>(vocab_size: usize, emb: usize, hidden: usize, rng: &mut R) -> Self {
        assert_eq!(
            emb, hidden,
            "snippet attention requires embedding size {} == hidden size {}",
            emb, hidden
        );
        EncoderParams {
            token_embedding: Tensor::uniform(&[vocab_size, emb], -INIT_RANGE, INIT_RANGE, rng),
            rating_embedding: Tensor::uniform(&[6, emb], -INIT_RANGE, INIT_RANGE, rng),
            fwd: GruParams::init(emb, hidden, rng),
            bwd: GruParams::init(emb, hidden, rng),
            v_alpha1: Tensor::uniform(&[3 * hidden], -INIT_RANGE, INIT_RANGE, rng),
            v_alpha2: Tensor::uniform(&[4 * hidden], -INIT_RANGE, INIT_RANGE, rng),
            v_beta1: Tensor::uniform(&[hidden], -INIT_RANGE, INIT_RANGE, rng),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.v_beta1.shape()[0]
    }

    pub fn vocab_size(&self) -> usize {
        self.token_embedding.shape()[0]
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            (format!("encoder.token_embedding"), &self.token_embedding),
            (format!("encoder.rating_embedding"), &self.rating_embedding),
        ];
        out.extend(self.fwd.named("encoder.fwd"));
        out.extend(self.bwd.named("encoder.bwd"));
        out.push((format!("encoder.v_alpha1"), &self.v_alpha1));
        out.push((format!("encoder.v_alpha2"), &self.v_alpha2));
        out.push((format!("encoder.v_beta1"), &self.v_beta1));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = vec![
            (format!("encoder.token_embedding"), &mut self.token_embedding),
            (format!("encoder.rating_embedding"), &mut self.rating_embedding),
        ];
        out.extend(self.fwd.named_mut("encoder.fwd"));
        out.extend(self.bwd.named_mut("encoder.bwd"));
        out.push((format!("encoder.v_alpha1"), &mut self.v_alpha1));
        out.push((format!("encoder.v_alpha2"), &mut self.v_alpha2));
        out.push((format!("encoder.v_beta1"), &mut self.v_beta1));
        out
    }

    pub fn leaves(&self, tape: &mut Tape, trainable: bool) -> EncoderVars {
        EncoderVars {
            token_embedding: tape.leaf(self.token_embedding.clone(), trainable),
            rating_embedding: tape.leaf(self.rating_embedding.clone(), trainable),
            fwd: self.fwd.leaves(tape, trainable),
            bwd: self.bwd.leaves(tape, trainable),
            v_alpha1: tape.leaf(self.v_alpha1.clone(), trainable),
            v_alpha2: tape.leaf(self.v_alpha2.clone(), trainable),
            v_beta1: tape.leaf(self.v_beta1.clone(), trainable),
        }
    }
}

#[derive(Clone, Copy)]
pub struct EncoderVars {
    pub token_embedding: Var,
    pub rating_embedding: Var,
    pub fwd: GruVars,
    pub bwd: GruVars,
    pub v_alpha1: Var,
    pub v_alpha2: Var,
    pub v_beta1: Var,
}

/// Validity mask over the padded `[l_r, l_s]` token grid, row-major.
pub fn token_mask(reviews: &[Vec<u32>], pad_to: usize) -> Vec<bool> {
    let mut mask = Vec::with_capacity(reviews.len() * pad_to);
    for review in reviews {
        for t in 0..pad_to {
            mask.push(t < review.len());
        }
    }
    mask
}

/// Encode each review independently; output `[l_r, pad_to, hidden]` with
/// exact zero vectors at padding positions.
pub fn encode_reviews(
    tape: &mut Tape,
    vars: &EncoderVars,
    reviews: &[Vec<u32>],
    pad_to: usize,
) -> Var {
    assert!(!reviews.is_empty(), "encode_reviews needs at least one review");
    let hidden = tape.value(vars.v_beta1).numel();
    let zero_row = tape.constant(Tensor::zeros(&[hidden]));
    let mut rows: Vec<Var> = Vec::with_capacity(reviews.len() * pad_to);
    for review in reviews {
        assert!(!review.is_empty(), "reviews must be non-empty after preprocessing");
        assert!(
            review.len() <= pad_to,
            "review length {} exceeds pad width {}",
            review.len(),
            pad_to
        );
        let emb = tape.embedding_lookup(vars.token_embedding, review);
        let emb_dim = tape.value(emb).shape()[1];
        let flat = tape.reshape(emb, &[review.len() * emb_dim]);
        let xs: Vec<Var> = (0..review.len())
            .map(|t| tape.slice(flat, t * emb_dim, emb_dim))
            .collect();

        let mut h = zero_row;
        let mut fwd_states = Vec::with_capacity(review.len());
        for &x in &xs {
            h = gru_cell(tape, x, h, &vars.fwd);
            fwd_states.push(h);
        }
        let mut h = zero_row;
        let mut bwd_states = vec![zero_row; review.len()];
        for (t, &x) in xs.iter().enumerate().rev() {
            h = gru_cell(tape, x, h, &vars.bwd);
            bwd_states[t] = h;
        }
        for t in 0..pad_to {
            if t < review.len() {
                rows.push(tape.add(fwd_states[t], bwd_states[t]));
            } else {
                rows.push(zero_row);
            }
        }
    }
    let flat = tape.concat(&rows);
    tape.reshape(flat, &[reviews.len(), pad_to, hidden])
}

/// Intermediate attention quantities, exposed for tests and diagnostics.
pub struct SnippetAttention {
    /// Raw pair scores `[l_r * l_s, m]`.
    pub scores: Var,
    /// Row softmax: each review token's distribution over snippet tokens.
    pub review_to_snippet: Var,
    /// Row softmax of the transposed, position-masked scores: each snippet
    /// token's distribution over valid review tokens.
    pub snippet_to_review: Var,
    /// Attended review context (the printed form's H-tilde).
    pub attended: Var,
    /// Gated output `[l_r, l_s, hidden]`.
    pub gated: Var,
}

/// Bidirectional attention between review token states and snippet token
/// embeddings, followed by the scalar gate. Requires at least one snippet
/// token; the caller bypasses with `H` unchanged when none exist.
pub fn snippet_attention(
    tape: &mut Tape,
    vars: &EncoderVars,
    h3: Var,
    mask: &[bool],
    snippet_ids: &[u32],
    form: Eq6Form,
) -> SnippetAttention {
    assert!(!snippet_ids.is_empty(), "snippet_attention requires snippets");
    let shape = tape.value(h3).shape().to_vec();
    assert_eq!(shape.len(), 3, "expected [l_r, l_s, hidden], got {:?}", shape);
    let (l_r, l_s, hidden) = (shape[0], shape[1], shape[2]);
    let n = l_r * l_s;
    assert_eq!(mask.len(), n, "mask length {} != {} positions", mask.len(), n);
    let m = snippet_ids.len();

    let hf = tape.reshape(h3, &[n, hidden]);
    let s = tape.embedding_lookup(vars.token_embedding, snippet_ids);

    let v1 = tape.slice(vars.v_alpha1, 0, hidden);
    let v2 = tape.slice(vars.v_alpha1, hidden, hidden);
    let v3 = tape.slice(vars.v_alpha1, 2 * hidden, hidden);

    // A[i,j] = v1.H_i + v2.S_j + v3.(H_i * S_j), assembled column/row-wise.
    let hv1 = tape.matmul(hf, v1);
    let hv1_col = tape.reshape(hv1, &[n, 1]);
    let ones_m = tape.constant(Tensor::ones(&[1, m]));
    let t1 = tape.matmul(hv1_col, ones_m);
    let sv2 = tape.matmul(s, v2);
    let hv3 = tape.mul(hf, v3);
    let s_t = tape.transpose(s);
    let t3 = tape.matmul(hv3, s_t);
    let t13 = tape.add(t1, t3);
    let scores = tape.add(t13, sv2);

    let review_to_snippet = tape.softmax(scores);
    let attended = match form {
        Eq6Form::Corrected => tape.matmul(review_to_snippet, s),
        // The positionwise attention mass sums to one, so the printed
        // aggregation returns each token state unchanged.
        Eq6Form::Literal => hf,
    };

    // Snippet-to-review attention excludes padding positions.
    let mut col_mask_data = Vec::with_capacity(n * m);
    for &valid in mask {
        let fill = if valid { 0.0 } else { f64::NEG_INFINITY };
        col_mask_data.extend(core::iter::repeat(fill).take(m));
    }
    let col_mask = tape.constant(Tensor::new(&[n, m], col_mask_data));
    let masked_scores = tape.add(scores, col_mask);
    let scores_t = tape.transpose(masked_scores);
    let snippet_to_review = tape.softmax(scores_t);
    let s_att = tape.matmul(snippet_to_review, hf);
    let s_mean = tape.mean_axis(s_att, 0);

    // Scalar gate per position from v_a2 . [H; A; H*A; H*s_mean].
    let w1 = tape.slice(vars.v_alpha2, 0, hidden);
    let w2 = tape.slice(vars.v_alpha2, hidden, hidden);
    let w3 = tape.slice(vars.v_alpha2, 2 * hidden, hidden);
    let w4 = tape.slice(vars.v_alpha2, 3 * hidden, hidden);
    let g1 = tape.matmul(hf, w1);
    let g2 = tape.matmul(attended, w2);
    let ha = tape.mul(hf, attended);
    let g3 = tape.matmul(ha, w3);
    let hs = tape.mul(hf, s_mean);
    let g4 = tape.matmul(hs, w4);
    let g12 = tape.add(g1, g2);
    let g34 = tape.add(g3, g4);
    let gate = tape.add(g12, g34);
    let gate_col = tape.reshape(gate, &[n, 1]);
    let ones_h = tape.constant(Tensor::ones(&[1, hidden]));
    let gate_mat = tape.matmul(gate_col, ones_h);
    let gated_flat = tape.mul(gate_mat, hf);
    let gated = tape.reshape(gated_flat, &[l_r, l_s, hidden]);

    SnippetAttention {
        scores,
        review_to_snippet,
        snippet_to_review,
        attended,
        gated,
    }
}

/// Rating-similarity gating: each context review's rating embedding scaled
/// by `v_b1 . (emb(query) * emb(rating_t))`.
pub fn rating_gate(
    tape: &mut Tape,
    vars: &EncoderVars,
    ratings: &[u8],
    query: RatingSymbol,
) -> Var {
    assert!(!ratings.is_empty(), "rating_gate needs at least one review");
    let hidden = tape.value(vars.v_beta1).numel();
    let rows: Vec<u32> = ratings
        .iter()
        .map(|&r| RatingSymbol::stars(r).embedding_row())
        .collect();
    let r_emb = tape.embedding_lookup(vars.rating_embedding, &rows);
    let q_emb2 = tape.embedding_lookup(vars.rating_embedding, &[query.embedding_row()]);
    let q_emb = tape.reshape(q_emb2, &[hidden]);
    let prod = tape.mul(r_emb, q_emb);
    let gates = tape.matmul(prod, vars.v_beta1);
    let gate_col = tape.reshape(gates, &[ratings.len(), 1]);
    let ones_h = tape.constant(Tensor::ones(&[1, hidden]));
    let gate_mat = tape.matmul(gate_col, ones_h);
    tape.mul(gate_mat, r_emb)
}

/// Encoder output handed to the decoder.
pub struct EncodedContext {
    /// Snippet-conditioned token contexts `[l_r, l_s, hidden]`.
    pub h_tilde_s: Var,
    /// Gated per-review rating contexts `[l_r, hidden]`.
    pub r_tilde: Var,
    /// Validity of each position in the flattened `[l_r * l_s]` grid.
    pub token_mask: Vec<bool>,
    pub l_r: usize,
    pub l_s: usize,
    pub hidden: usize,
}

impl EncodedContext {
    pub fn valid_count(&self) -> usize {
        self.token_mask.iter().filter(|&&m| m).count()
    }
}

/// Wiring switches for ablations: the full model enables both.
#[derive(Clone, Copy, Debug)]
pub struct EncodeOptions {
    pub snippet_attention: bool,
    pub rating_gate: bool,
    pub eq6_form: Eq6Form,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            snippet_attention: true,
            rating_gate: true,
            eq6_form: Eq6Form::Corrected,
        }
    }
}

/// Full context encoding. With no snippets (or attention disabled) the raw
/// token states pass through unchanged; with the rating path disabled the
/// rating context is zero.
pub fn encode_context(
    tape: &mut Tape,
    vars: &EncoderVars,
    reviews: &[Vec<u32>],
    ratings: &[u8],
    snippet_ids: &[u32],
    query_rating: RatingSymbol,
    pad_to: usize,
    opts: EncodeOptions,
) -> EncodedContext {
    assert_eq!(
        reviews.len(),
        ratings.len(),
        "reviews and ratings must align: {} vs {}",
        reviews.len(),
        ratings.len()
    );
    let hidden = tape.value(vars.v_beta1).numel();
    let mask = token_mask(reviews, pad_to);
    let h3 = encode_reviews(tape, vars, reviews, pad_to);
    let h_tilde_s = if opts.snippet_attention && !snippet_ids.is_empty() {
        snippet_attention(tape, vars, h3, &mask, snippet_ids, opts.eq6_form).gated
    } else {
        h3
    };
    let r_tilde = if opts.rating_gate {
        rating_gate(tape, vars, ratings, query_rating)
    } else {
        tape.constant(Tensor::zeros(&[reviews.len(), hidden]))
    };
    EncodedContext {
        h_tilde_s,
        r_tilde,
        token_mask: mask,
        l_r: reviews.len(),
        l_s: pad_to,
        hidden,
    }
}
