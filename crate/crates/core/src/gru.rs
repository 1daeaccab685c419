//! Gated recurrent unit cell.
//!
//! Gate convention: `z = sigmoid(Wz [x;h] + bz)`, `r = sigmoid(Wr [x;h] + br)`,
//! `h~ = tanh(Wh [x; r .* h] + bh)`, `h' = (1 - z) .* h + z .* h~`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const INIT_RANGE: f64 = 0.08;

#[derive(Clone, Debug)]
pub struct GruParams {
    pub w_z: Tensor,
    pub b_z: Tensor,
    pub w_r: Tensor,
    pub b_r: Tensor,
    pub w_h: Tensor,
    pub b_h: Tensor,
}

impl GruParams {
    /// Uniform(-0.08, 0.08) weights, zero biases.
    pub fn init<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let cat = input_dim + hidden_dim;
        GruParams {
            w_z: Tensor::uniform(&[cat, hidden_dim], -INIT_RANGE, INIT_RANGE, rng),
            b_z: Tensor::zeros(&[hidden_dim]),
            w_r: Tensor::uniform(&[cat, hidden_dim], -INIT_RANGE, INIT_RANGE, rng),
            b_r: Tensor::zeros(&[hidden_dim]),
            w_h: Tensor::uniform(&[cat, hidden_dim], -INIT_RANGE, INIT_RANGE, rng),
            b_h: Tensor::zeros(&[hidden_dim]),
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let cat = input_dim + hidden_dim;
        GruParams {
            w_z: Tensor::zeros(&[cat, hidden_dim]),
            b_z: Tensor::zeros(&[hidden_dim]),
            w_r: Tensor::zeros(&[cat, hidden_dim]),
            b_r: Tensor::zeros(&[hidden_dim]),
            w_h: Tensor::zeros(&[cat, hidden_dim]),
            b_h: Tensor::zeros(&[hidden_dim]),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.b_z.shape()[0]
    }

    pub fn named(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        alloc::vec![
            (format!("{prefix}.w_z"), &self.w_z),
            (format!("{prefix}.b_z"), &self.b_z),
            (format!("{prefix}.w_r"), &self.w_r),
            (format!("{prefix}.b_r"), &self.b_r),
            (format!("{prefix}.w_h"), &self.w_h),
            (format!("{prefix}.b_h"), &self.b_h),
        ]
    }

    pub fn named_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        alloc::vec![
            (format!("{prefix}.w_z"), &mut self.w_z),
            (format!("{prefix}.b_z"), &mut self.b_z),
            (format!("{prefix}.w_r"), &mut self.w_r),
            (format!("{prefix}.b_r"), &mut self.b_r),
            (format!("{prefix}.w_h"), &mut self.w_h),
            (format!("{prefix}.b_h"), &mut self.b_h),
        ]
    }

    /// Put the parameters on a tape as leaves.
    pub fn leaves(&self, tape: &mut Tape, trainable: bool) -> GruVars {
        GruVars {
            w_z: tape.leaf(self.w_z.clone(), trainable),
            b_z: tape.leaf(self.b_z.clone(), trainable),
            w_r: tape.leaf(self.w_r.clone(), trainable),
            b_r: tape.leaf(self.b_r.clone(), trainable),
            w_h: tape.leaf(self.w_h.clone(), trainable),
            b_h: tape.leaf(self.b_h.clone(), trainable),
        }
    }
}

#[derive(Clone, Copy)]
pub struct GruVars {
    pub w_z: Var,
    pub b_z: Var,
    pub w_r: Var,
    pub b_r: Var,
    pub w_h: Var,
    pub b_h: Var,
}

/// One GRU step: rank-1 input `x`, rank-1 state `h`, returns the new state.
pub fn gru_cell(tape: &mut Tape, x: Var, h: Var, p: &GruVars) -> Var {
    let hidden = tape.value(h).numel();
    let expected = tape.value(p.w_z).shape()[0];
    assert_eq!(
        tape.value(x).numel() + hidden,
        expected,
        "gru_cell dimension mismatch: x {:?} h {:?} vs gate rows {}",
        tape.value(x).shape(),
        tape.value(h).shape(),
        expected
    );
    let xh = tape.concat(&[x, h]);
    let z_lin = tape.matmul(xh, p.w_z);
    let z_aff = tape.add(z_lin, p.b_z);
    let z = tape.sigmoid(z_aff);
    let r_lin = tape.matmul(xh, p.w_r);
    let r_aff = tape.add(r_lin, p.b_r);
    let r = tape.sigmoid(r_aff);
    let rh = tape.mul(r, h);
    let xrh = tape.concat(&[x, rh]);
    let c_lin = tape.matmul(xrh, p.w_h);
    let c_aff = tape.add(c_lin, p.b_h);
    let candidate = tape.tanh(c_aff);
    let ones = tape.constant(Tensor::ones(&[hidden]));
    let neg_z = tape.scale(z, -1.0);
    let keep = tape.add(ones, neg_z);
    let kept = tape.mul(keep, h);
    let updated = tape.mul(z, candidate);
    tape.add(kept, updated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::tape::gradcheck;

    #[test]
    fn zero_params_halve_the_state() {
        // z = sigmoid(0) = 0.5 and the candidate is tanh(0) = 0, so the new
        // state is h / 2.
        let mut tape = Tape::new();
        let params = GruParams::zeros(2, 2);
        let vars = params.leaves(&mut tape, false);
        let x = tape.constant(Tensor::new(&[2], alloc::vec![0.3, -0.1]));
        let h = tape.constant(Tensor::new(&[2], alloc::vec![0.8, -0.4]));
        let out = gru_cell(&mut tape, x, h, &vars);
        let got = tape.value(out).data();
        assert!((got[0] - 0.4).abs() < 1e-12);
        assert!((got[1] + 0.2).abs() < 1e-12);
    }

    #[test]
    fn zero_everything_is_a_fixed_point() {
        let mut tape = Tape::new();
        let params = GruParams::zeros(3, 2);
        let vars = params.leaves(&mut tape, false);
        let x = tape.constant(Tensor::zeros(&[3]));
        let h = tape.constant(Tensor::zeros(&[2]));
        let out = gru_cell(&mut tape, x, h, &vars);
        assert_eq!(tape.value(out).data(), &[0.0, 0.0]);
    }

    #[test]
    fn gate_weight_gradients_match_finite_differences() {
        let mut rng = rng_from_seed(11);
        let params = GruParams::init(3, 2, &mut rng);
        let x = Tensor::uniform(&[3], -1.0, 1.0, &mut rng);
        let h = Tensor::uniform(&[2], -1.0, 1.0, &mut rng);
        let inputs = alloc::vec![
            params.w_z.clone(),
            params.b_z.clone(),
            params.w_r.clone(),
            params.b_r.clone(),
            params.w_h.clone(),
            params.b_h.clone(),
            x,
            h,
        ];
        let result = gradcheck::check(
            &inputs,
            |tape, vars| {
                let gru = GruVars {
                    w_z: vars[0],
                    b_z: vars[1],
                    w_r: vars[2],
                    b_r: vars[3],
                    w_h: vars[4],
                    b_h: vars[5],
                };
                let out = gru_cell(tape, vars[6], vars[7], &gru);
                // squared norm of the new state
                let sq = tape.mul(out, out);
                tape.sum(sq)
            },
            1e-5,
            1e-4,
        );
        assert!(result.is_ok(), "{:?}", result);
    }

    #[test]
    #[should_panic(expected = "dimension mismatch")]
    fn dimension_mismatch_panics() {
        let mut tape = Tape::new();
        let params = GruParams::zeros(3, 2);
        let vars = params.leaves(&mut tape, false);
        let x = tape.constant(Tensor::zeros(&[4]));
        let h = tape.constant(Tensor::zeros(&[2]));
        gru_cell(&mut tape, x, h, &vars);
    }
}
