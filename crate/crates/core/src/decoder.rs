//! Autoregressive decoder: GRU state, content attention over the gated
//! review contexts and over the rating contexts, output projection, and
//! greedy / beam-search decoding.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::encoder::EncodedContext;
use crate::gru::{gru_cell, GruParams, GruVars, INIT_RANGE};
use crate::tape::{Tape, Var};
use crate::tensor::{log_softmax_1d, Tensor};

#[derive(Clone, Debug)]
pub struct DecoderParams {
    pub gru: GruParams, // input emb -> hidden
    pub w_h: Tensor,    // [2 * hidden] text attention scorer
    pub b_h: Tensor,    // [1]
    pub w_r: Tensor,    // [2 * hidden] rating attention scorer
    pub b_r: Tensor,    // [1]
    pub w_out: Tensor,  // [3 * hidden, vocab]
    pub b_out: Tensor,  // [vocab]
    pub w_init: Tensor, // [hidden, hidden] initial-state map
    pub b_init: Tensor, // [hidden]
}

impl DecoderParams {
    pub fn init<R: Rng>(vocab_size: usize, emb: usize, hidden: usize, rng: &mut R) -> Self {
        assert_eq!(emb, hidden, "decoder assumes embedding size == hidden size");
        DecoderParams {
            gru: GruParams::init(emb, hidden, rng),
            w_h: Tensor::uniform(&[2 * hidden], -INIT_RANGE, INIT_RANGE, rng),
            b_h: Tensor::zeros(&[1]),
            w_r: Tensor::uniform(&[2 * hidden], -INIT_RANGE, INIT_RANGE, rng),
            b_r: Tensor::zeros(&[1]),
            w_out: Tensor::uniform(&[3 * hidden, vocab_size], -INIT_RANGE, INIT_RANGE, rng),
            b_out: Tensor::zeros(&[vocab_size]),
            w_init: Tensor::uniform(&[hidden, hidden], -INIT_RANGE, INIT_RANGE, rng),
            b_init: Tensor::zeros(&[hidden]),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.b_out.shape()[0]
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.gru.named("decoder.gru");
        out.push((format!("decoder.w_h"), &self.w_h));
        out.push((format!("decoder.b_h"), &self.b_h));
        out.push((format!("decoder.w_r"), &self.w_r));
        out.push((format!("decoder.b_r"), &self.b_r));
        out.push((format!("decoder.w_out"), &self.w_out));
        out.push((format!("decoder.b_out"), &self.b_out));
        out.push((format!("decoder.w_init"), &self.w_init));
        out.push((format!("decoder.b_init"), &self.b_init));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = self.gru.named_mut("decoder.gru");
        out.push((format!("decoder.w_h"), &mut self.w_h));
        out.push((format!("decoder.b_h"), &mut self.b_h));
        out.push((format!("decoder.w_r"), &mut self.w_r));
        out.push((format!("decoder.b_r"), &mut self.b_r));
        out.push((format!("decoder.w_out"), &mut self.w_out));
        out.push((format!("decoder.b_out"), &mut self.b_out));
        out.push((format!("decoder.w_init"), &mut self.w_init));
        out.push((format!("decoder.b_init"), &mut self.b_init));
        out
    }

    pub fn leaves(&self, tape: &mut Tape, trainable: bool) -> DecoderVars {
        DecoderVars {
            gru: self.gru.leaves(tape, trainable),
            w_h: tape.leaf(self.w_h.clone(), trainable),
            b_h: tape.leaf(self.b_h.clone(), trainable),
            w_r: tape.leaf(self.w_r.clone(), trainable),
            b_r: tape.leaf(self.b_r.clone(), trainable),
            w_out: tape.leaf(self.w_out.clone(), trainable),
            b_out: tape.leaf(self.b_out.clone(), trainable),
            w_init: tape.leaf(self.w_init.clone(), trainable),
            b_init: tape.leaf(self.b_init.clone(), trainable),
        }
    }
}

#[derive(Clone, Copy)]
pub struct DecoderVars {
    pub gru: GruVars,
    pub w_h: Var,
    pub b_h: Var,
    pub w_r: Var,
    pub b_r: Var,
    pub w_out: Var,
    pub b_out: Var,
    pub w_init: Var,
    pub b_init: Var,
}

/// Initial decoder state: mean of the valid gated token contexts through a
/// learned affine map and tanh.
pub fn init_state(tape: &mut Tape, dec: &DecoderVars, ctx: &EncodedContext) -> Var {
    let n = ctx.l_r * ctx.l_s;
    let valid = ctx.valid_count();
    assert!(valid >= 1, "encoded context has no valid token positions");
    let hf = tape.reshape(ctx.h_tilde_s, &[n, ctx.hidden]);
    let weights = Tensor::new(
        &[1, n],
        ctx.token_mask
            .iter()
            .map(|&m| if m { 1.0 / valid as f64 } else { 0.0 })
            .collect(),
    );
    let w = tape.constant(weights);
    let mean2 = tape.matmul(w, hf);
    let mean = tape.reshape(mean2, &[ctx.hidden]);
    let lin = tape.matmul(mean, dec.w_init);
    let aff = tape.add(lin, dec.b_init);
    tape.tanh(aff)
}

/// One decoding step's tape nodes.
pub struct DecodeStep {
    pub h: Var,
    pub logits: Var,
    /// Attention over the flattened valid token positions.
    pub text_attn: Var,
    /// Attention over the per-review rating contexts.
    pub rating_attn: Var,
}

impl DecodeStep {
    /// Log softmax of the logits as plain values (inference path).
    pub fn log_probs(&self, tape: &Tape) -> Tensor {
        log_softmax_1d(tape.value(self.logits))
    }
}

/// Advance the decoder by one token.
pub fn decode_step(
    tape: &mut Tape,
    dec: &DecoderVars,
    token_embedding: Var,
    ctx: &EncodedContext,
    h_prev: Var,
    y_prev: u32,
) -> DecodeStep {
    let hidden = ctx.hidden;
    let n = ctx.l_r * ctx.l_s;
    assert!(ctx.valid_count() >= 1, "encoded context has no valid token positions");

    let x2 = tape.embedding_lookup(token_embedding, &[y_prev]);
    let x = tape.reshape(x2, &[tape.value(x2).numel()]);
    let h = gru_cell(tape, x, h_prev, &dec.gru);

    // Text attention over all valid gated token contexts.
    let hf = tape.reshape(ctx.h_tilde_s, &[n, hidden]);
    let wh1 = tape.slice(dec.w_h, 0, hidden);
    let wh2 = tape.slice(dec.w_h, hidden, hidden);
    let sc_ctx = tape.matmul(hf, wh1);
    let sc_h = tape.matmul(h, wh2);
    let sc_hb = tape.add(sc_h, dec.b_h);
    let scores = tape.add(sc_ctx, sc_hb);
    let mask = Tensor::new(
        &[n],
        ctx.token_mask
            .iter()
            .map(|&m| if m { 0.0 } else { f64::NEG_INFINITY })
            .collect(),
    );
    let mask = tape.constant(mask);
    let masked = tape.add(scores, mask);
    let text_attn = tape.softmax(masked);
    let attn_row = tape.reshape(text_attn, &[1, n]);
    let c_h2 = tape.matmul(attn_row, hf);
    let c_h = tape.reshape(c_h2, &[hidden]);

    // Rating attention over the gated rating contexts.
    let wr1 = tape.slice(dec.w_r, 0, hidden);
    let wr2 = tape.slice(dec.w_r, hidden, hidden);
    let sc_r_ctx = tape.matmul(ctx.r_tilde, wr1);
    let sc_r_h = tape.matmul(h, wr2);
    let sc_r_hb = tape.add(sc_r_h, dec.b_r);
    let scores_r = tape.add(sc_r_ctx, sc_r_hb);
    let rating_attn = tape.softmax(scores_r);
    let attn_r_row = tape.reshape(rating_attn, &[1, ctx.l_r]);
    let c_r2 = tape.matmul(attn_r_row, ctx.r_tilde);
    let c_r = tape.reshape(c_r2, &[hidden]);

    let cat = tape.concat(&[h, c_h, c_r]);
    let lin = tape.matmul(cat, dec.w_out);
    let logits = tape.add(lin, dec.b_out);

    DecodeStep {
        h,
        logits,
        text_attn,
        rating_attn,
    }
}

/// Argmax with ties broken by the lowest id.
fn argmax(values: &[f64]) -> u32 {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best as u32
}

/// Greedy decoding; returns the surface token ids (no BOS/EOS).
pub fn greedy_decode(
    tape: &mut Tape,
    dec: &DecoderVars,
    token_embedding: Var,
    ctx: &EncodedContext,
    bos: u32,
    eos: u32,
    max_len: usize,
) -> Vec<u32> {
    assert!(max_len >= 1, "max_len must be at least 1");
    let mut h = init_state(tape, dec, ctx);
    let mut y = bos;
    let mut out = Vec::new();
    for _ in 0..max_len {
        let step = decode_step(tape, dec, token_embedding, ctx, h, y);
        let next = argmax(tape.value(step.logits).data());
        if next == eos {
            break;
        }
        out.push(next);
        y = next;
        h = step.h;
    }
    out
}

/// A partially or fully decoded candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Emitted token ids, including the terminating EOS when present.
    pub tokens: Vec<u32>,
    /// Sum of per-step log probabilities.
    pub log_prob: f64,
    pub terminated: bool,
}

impl Hypothesis {
    /// Tokens without the terminating EOS.
    pub fn surface(&self, eos: u32) -> &[u32] {
        match self.tokens.last() {
            Some(&last) if last == eos => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }

    /// Total log probability divided by emitted length.
    pub fn normalized(&self) -> f64 {
        self.log_prob / self.tokens.len().max(1) as f64
    }
}

/// Beam search; returns the terminated pool ranked by length-normalized log
/// probability, ties broken by lexicographic token order.
///
/// Candidates are selected per step by summed log probability; hypotheses
/// that emit EOS (or hit `max_len`) retire into the pool and the freed
/// width goes to the remaining expansions.
pub fn beam_search(
    tape: &mut Tape,
    dec: &DecoderVars,
    token_embedding: Var,
    ctx: &EncodedContext,
    bos: u32,
    eos: u32,
    beam: usize,
    max_len: usize,
) -> Vec<Hypothesis> {
    assert!(beam >= 1, "beam width must be at least 1");
    assert!(max_len >= 1, "max_len must be at least 1");
    let h0 = init_state(tape, dec, ctx);
    let mut live: Vec<(Hypothesis, Var)> = vec![(
        Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            terminated: false,
        },
        h0,
    )];
    let mut pool: Vec<Hypothesis> = Vec::new();

    for t in 0..max_len {
        // Expand every live hypothesis with every token.
        let mut steps: Vec<(Var, Tensor)> = Vec::with_capacity(live.len());
        for (hyp, h) in &live {
            let y_prev = hyp.tokens.last().copied().unwrap_or(bos);
            let step = decode_step(tape, dec, token_embedding, ctx, *h, y_prev);
            let lp = step.log_probs(tape);
            steps.push((step.h, lp));
        }
        let mut candidates: Vec<(Hypothesis, usize)> = Vec::new();
        for (idx, (hyp, _)) in live.iter().enumerate() {
            let lp = &steps[idx].1;
            for tok in 0..lp.numel() as u32 {
                let mut tokens = hyp.tokens.clone();
                tokens.push(tok);
                candidates.push((
                    Hypothesis {
                        tokens,
                        log_prob: hyp.log_prob + lp.data()[tok as usize],
                        terminated: false,
                    },
                    idx,
                ));
            }
        }
        candidates.sort_by(|a, b| {
            b.0.log_prob
                .total_cmp(&a.0.log_prob)
                .then_with(|| a.0.tokens.cmp(&b.0.tokens))
        });
        candidates.truncate(beam);

        let mut next_live = Vec::new();
        let last_step = t + 1 == max_len;
        for (mut hyp, idx) in candidates {
            if *hyp.tokens.last().unwrap() == eos || last_step {
                hyp.terminated = true;
                pool.push(hyp);
            } else {
                next_live.push((hyp, steps[idx].0));
            }
        }
        live = next_live;
        if live.is_empty() {
            break;
        }
    }

    pool.sort_by(|a, b| {
        b.normalized()
            .total_cmp(&a.normalized())
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    pool
}

/// Best hypothesis under the beam ranking.
pub fn beam_decode(
    tape: &mut Tape,
    dec: &DecoderVars,
    token_embedding: Var,
    ctx: &EncodedContext,
    bos: u32,
    eos: u32,
    beam: usize,
    max_len: usize,
) -> Hypothesis {
    let pool = beam_search(tape, dec, token_embedding, ctx, bos, eos, beam, max_len);
    pool.into_iter().next().expect("beam search yields at least one hypothesis")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::RatingSymbol;
    use crate::encoder::{encode_context, EncodeOptions, EncoderParams};
    use crate::rng::rng_from_seed;
    use crate::vocab::{BOS, EOS};

    const DIM: usize = 4;

    fn setup(
        seed: u64,
        vocab: usize,
    ) -> (Tape, crate::encoder::EncoderVars, DecoderVars, EncodedContext) {
        let mut rng = rng_from_seed(seed);
        let enc = EncoderParams::init(vocab, DIM, DIM, &mut rng);
        let dec = DecoderParams::init(vocab, DIM, DIM, &mut rng);
        let mut tape = Tape::new();
        let enc_vars = enc.leaves(&mut tape, false);
        let dec_vars = dec.leaves(&mut tape, false);
        let ctx = encode_context(
            &mut tape,
            &enc_vars,
            &[vec![4, 5], vec![6]],
            &[5, 2],
            &[5],
            RatingSymbol::Stars(4),
            2,
            EncodeOptions::default(),
        );
        (tape, enc_vars, dec_vars, ctx)
    }

    #[test]
    fn zero_params_give_uniform_log_probs() {
        let vocab = 9;
        let mut tape = Tape::new();
        let enc = EncoderParams {
            token_embedding: Tensor::zeros(&[vocab, DIM]),
            rating_embedding: Tensor::zeros(&[6, DIM]),
            fwd: GruParams::zeros(DIM, DIM),
            bwd: GruParams::zeros(DIM, DIM),
            v_alpha1: Tensor::zeros(&[3 * DIM]),
            v_alpha2: Tensor::zeros(&[4 * DIM]),
            v_beta1: Tensor::zeros(&[DIM]),
        };
        let dec = DecoderParams {
            gru: GruParams::zeros(DIM, DIM),
            w_h: Tensor::zeros(&[2 * DIM]),
            b_h: Tensor::zeros(&[1]),
            w_r: Tensor::zeros(&[2 * DIM]),
            b_r: Tensor::zeros(&[1]),
            w_out: Tensor::zeros(&[3 * DIM, vocab]),
            b_out: Tensor::zeros(&[vocab]),
            w_init: Tensor::zeros(&[DIM, DIM]),
            b_init: Tensor::zeros(&[DIM]),
        };
        let enc_vars = enc.leaves(&mut tape, false);
        let dec_vars = dec.leaves(&mut tape, false);
        let ctx = encode_context(
            &mut tape,
            &enc_vars,
            &[vec![4, 5]],
            &[3],
            &[6],
            RatingSymbol::Pad,
            2,
            EncodeOptions::default(),
        );
        let h0 = init_state(&mut tape, &dec_vars, &ctx);
        let step = decode_step(&mut tape, &dec_vars, enc_vars.token_embedding, &ctx, h0, BOS);
        let lp = step.log_probs(&tape);
        let expected = -(vocab as f64).ln();
        for &v in lp.data() {
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn single_valid_token_takes_all_attention() {
        let mut rng = rng_from_seed(3);
        let vocab = 9;
        let enc = EncoderParams::init(vocab, DIM, DIM, &mut rng);
        let dec = DecoderParams::init(vocab, DIM, DIM, &mut rng);
        let mut tape = Tape::new();
        let enc_vars = enc.leaves(&mut tape, false);
        let dec_vars = dec.leaves(&mut tape, false);
        let ctx = encode_context(
            &mut tape,
            &enc_vars,
            &[vec![4]],
            &[1],
            &[5],
            RatingSymbol::Stars(1),
            3,
            EncodeOptions::default(),
        );
        let h0 = init_state(&mut tape, &dec_vars, &ctx);
        let step = decode_step(&mut tape, &dec_vars, enc_vars.token_embedding, &ctx, h0, BOS);
        let attn = tape.value(step.text_attn);
        assert!((attn.data()[0] - 1.0).abs() < 1e-12);
        assert_eq!(attn.data()[1], 0.0);
        assert_eq!(attn.data()[2], 0.0);
    }

    #[test]
    fn log_probs_normalize() {
        let (mut tape, enc_vars, dec_vars, ctx) = setup(4, 12);
        let h0 = init_state(&mut tape, &dec_vars, &ctx);
        let step = decode_step(&mut tape, &dec_vars, enc_vars.token_embedding, &ctx, h0, BOS);
        let lp = step.log_probs(&tape);
        let sum: f64 = lp.data().iter().map(|&v| v.exp()).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        let attn_sum: f64 = tape.value(step.text_attn).data().iter().sum();
        assert!((attn_sum - 1.0).abs() < 1e-9);
        let rating_sum: f64 = tape.value(step.rating_attn).data().iter().sum();
        assert!((rating_sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn immediate_eos_gives_empty_sequence() {
        let (mut tape, enc_vars, mut dec_vars, ctx) = setup(5, 12);
        let mut bias = Tensor::zeros(&[12]);
        bias.data_mut()[EOS as usize] = 100.0;
        dec_vars.b_out = tape.leaf(bias, false);
        let out = greedy_decode(&mut tape, &dec_vars, enc_vars.token_embedding, &ctx, BOS, EOS, 15);
        assert!(out.is_empty());
    }

    #[test]
    fn length_cap_is_respected() {
        let (mut tape, enc_vars, mut dec_vars, ctx) = setup(6, 12);
        let mut bias = Tensor::zeros(&[12]);
        bias.data_mut()[7] = 100.0;
        dec_vars.b_out = tape.leaf(bias, false);
        let out = greedy_decode(&mut tape, &dec_vars, enc_vars.token_embedding, &ctx, BOS, EOS, 3);
        assert_eq!(out, vec![7, 7, 7]);
    }

    #[test]
    fn beam_one_matches_greedy() {
        for seed in 0..5 {
            let (mut tape, enc_vars, dec_vars, ctx) = setup(100 + seed, 10);
            let greedy =
                greedy_decode(&mut tape, &dec_vars, enc_vars.token_embedding, &ctx, BOS, EOS, 8);
            let beam = beam_decode(
                &mut tape,
                &dec_vars,
                enc_vars.token_embedding,
                &ctx,
                BOS,
                EOS,
                1,
                8,
            );
            assert_eq!(beam.surface(EOS), greedy.as_slice(), "seed {}", seed);
        }
    }

    #[test]
    fn beam_five_dominates_greedy_log_prob() {
        for seed in 0..5 {
            let (mut tape, enc_vars, dec_vars, ctx) = setup(200 + seed, 10);
            let g1 = beam_decode(
                &mut tape,
                &dec_vars,
                enc_vars.token_embedding,
                &ctx,
                BOS,
                EOS,
                1,
                6,
            );
            let pool = beam_search(
                &mut tape,
                &dec_vars,
                enc_vars.token_embedding,
                &ctx,
                BOS,
                EOS,
                5,
                6,
            );
            let best = pool
                .iter()
                .map(|h| h.log_prob)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(best >= g1.log_prob - 1e-12, "seed {}", seed);
        }
    }

    #[test]
    fn hypothesis_log_prob_never_increases() {
        let (mut tape, enc_vars, dec_vars, ctx) = setup(7, 10);
        let pool = beam_search(
            &mut tape,
            &dec_vars,
            enc_vars.token_embedding,
            &ctx,
            BOS,
            EOS,
            3,
            5,
        );
        for hyp in &pool {
            assert!(hyp.log_prob <= 1e-12);
            assert!(hyp.terminated);
            let len = hyp.tokens.len();
            assert!(*hyp.tokens.last().unwrap() == EOS || len == 5);
        }
    }
}
