//! Dense row-major `f64` tensors.
//!
//! Plain value carriers: gradients and operator recording live on the
//! [`crate::tape::Tape`]. Rank is arbitrary for elementwise work; linear
//! algebra kernels accept rank 1 and 2.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::math;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor from shape and row-major data.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
        }
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    /// Single-element tensor of shape `[1]`.
    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Uniform values in `[lo, hi)`; the standard weight initializer.
    pub fn uniform<R: Rng>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| lo + (hi - lo) * rng.gen::<f64>())
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// View as `(rows, cols)`; rank-1 tensors count as a single row.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.len() {
            1 => (1, self.shape[0]),
            2 => (self.shape[0], self.shape[1]),
            _ => panic!("expected rank <= 2, got shape {:?}", self.shape),
        }
    }

    /// Row `i` of a rank-2 tensor (or the whole of a rank-1 tensor).
    pub fn row(&self, i: usize) -> &[f64] {
        let (rows, cols) = self.dims2();
        assert!(i < rows, "row {} out of range for shape {:?}", i, self.shape);
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn reshape(&self, shape: &[usize]) -> Tensor {
        Tensor::new(shape, self.data.clone())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "shape mismatch in max_abs_diff");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| math::abs(a - b))
            .fold(0.0, f64::max)
    }

    pub fn iter(&self) -> core::slice::Iter<'_, f64> {
        self.data.iter()
    }
}

/// Log-softmax of a rank-1 tensor, computed with max subtraction.
///
/// Entries may be `-inf` (masked); at least one entry must be finite.
pub fn log_softmax_1d(logits: &Tensor) -> Tensor {
    assert_eq!(logits.rank(), 1, "log_softmax_1d expects rank 1");
    let max = logits.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(max.is_finite(), "log_softmax_1d: no finite entries");
    let sum: f64 = logits.data().iter().map(|&x| math::exp(x - max)).sum();
    let lse = max + math::ln(sum);
    Tensor::new(
        logits.shape(),
        logits.data().iter().map(|&x| x - lse).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_data_round_trip() {
        let t = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(t.shape(), &[2, 3]);
        assert_eq!(t.row(1), &[4.0, 5.0, 6.0]);
        assert_eq!(t.numel(), 6);
    }

    #[test]
    #[should_panic(expected = "does not match shape")]
    fn mismatched_data_length_panics() {
        Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn log_softmax_uniform() {
        let t = Tensor::new(&[4], vec![0.0; 4]);
        let ls = log_softmax_1d(&t);
        for &v in ls.data() {
            assert!((v - (-(4.0f64).ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn log_softmax_handles_masked_entries() {
        let t = Tensor::new(&[3], vec![0.0, f64::NEG_INFINITY, 0.0]);
        let ls = log_softmax_1d(&t);
        assert!((ls.data()[0] - (-(2.0f64).ln())).abs() < 1e-12);
        assert_eq!(ls.data()[1], f64::NEG_INFINITY);
    }
}
