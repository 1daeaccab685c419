//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] is an append-only arena of operator applications. Forward
//! values are computed eagerly; [`Tape::backward`] walks the recorded
//! entries once, in reverse topological order (which is simply reverse
//! insertion order), accumulating adjoints into the gradients of
//! `requires_grad` leaves.
//!
//! The primitive set is exactly what the model needs: matmul, broadcasting
//! add and elementwise multiply, concat, sigmoid, tanh, row softmax,
//! embedding lookup, cross entropy, sum/mean reductions, scalar multiply,
//! plus shape plumbing (transpose, reshape, slice).
//!
//! Shape errors are contract violations and panic with both shapes in the
//! message. Softmax and cross entropy accept `-inf` entries (attention
//! masking) but require at least one finite entry per row.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::tensor::Tensor;

/// Handle to a tape entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Matmul(usize, usize),
    Add(usize, usize),
    Mul(usize, usize),
    Concat(Vec<usize>),
    Sigmoid(usize),
    Tanh(usize),
    Softmax(usize),
    Embedding { table: usize, ids: Vec<u32> },
    CrossEntropy { logits: usize, target: usize },
    Sum { input: usize, axis: Option<usize> },
    Mean { input: usize, axis: Option<usize> },
    Scale { input: usize, factor: f64 },
    Transpose(usize),
    Reshape(usize),
    Slice { input: usize, start: usize },
}

struct Node {
    value: Tensor,
    // Present iff the node is a requires_grad leaf; accumulates across
    // backward calls until zero_grad.
    grad: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf; `None` for non-`requires_grad` nodes.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            if let Some(g) = node.grad.as_mut() {
                g.data_mut().fill(0.0);
            }
        }
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        let grad = requires_grad.then(|| Tensor::zeros(value.shape()));
        self.push(value, grad, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, value: Tensor, grad: Option<Tensor>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, value: Tensor, op: Op, inputs: &[usize]) -> Var {
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        self.push(value, None, op, needs_grad)
    }

    // ---- primitives -----------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (n, k, m, out_shape) = mm_spec(self.value(a).shape(), self.value(b).shape());
        let data = matmul_fwd(self.value(a).data(), self.value(b).data(), n, k, m);
        let value = Tensor::new(&out_shape, data);
        self.record(value, Op::Matmul(a.0, b.0), &[a.0, b.0])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = broadcast_zip(self.value(a), self.value(b), |x, y| x + y);
        self.record(value, Op::Add(a.0, b.0), &[a.0, b.0])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = broadcast_zip(self.value(a), self.value(b), |x, y| x * y);
        self.record(value, Op::Mul(a.0, b.0), &[a.0, b.0])
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let rank = self.value(parts[0]).rank();
        let rows = self.value(parts[0]).dims2().0;
        let mut cols_total = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(
                t.rank(),
                rank,
                "concat rank mismatch: {:?} vs {:?}",
                self.value(parts[0]).shape(),
                t.shape()
            );
            let (r, c) = t.dims2();
            assert_eq!(
                r,
                rows,
                "concat row mismatch: {:?} vs {:?}",
                self.value(parts[0]).shape(),
                t.shape()
            );
            cols_total += c;
        }
        let mut data = vec![0.0; rows * cols_total];
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p);
            let (_, c) = t.dims2();
            for r in 0..rows {
                data[r * cols_total + offset..r * cols_total + offset + c]
                    .copy_from_slice(t.row(r));
            }
            offset += c;
        }
        let out_shape: Vec<usize> = if rank == 1 {
            vec![cols_total]
        } else {
            vec![rows, cols_total]
        };
        let value = Tensor::new(&out_shape, data);
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let inputs = ids.clone();
        self.record(value, Op::Concat(ids), &inputs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = Tensor::new(
            self.value(x).shape(),
            self.value(x).data().iter().map(|&v| math::sigmoid(v)).collect(),
        );
        self.record(value, Op::Sigmoid(x.0), &[x.0])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = Tensor::new(
            self.value(x).shape(),
            self.value(x).data().iter().map(|&v| math::tanh(v)).collect(),
        );
        self.record(value, Op::Tanh(x.0), &[x.0])
    }

    /// Softmax over the last axis (each row of a rank-2 tensor, or the whole
    /// of a rank-1 tensor), computed with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (rows, cols) = t.dims2();
        let value = Tensor::new(t.shape(), softmax_fwd(t.data(), rows, cols));
        self.record(value, Op::Softmax(x.0), &[x.0])
    }

    /// Rows of `table` selected by `ids`; output shape `[ids.len(), emb]`.
    pub fn embedding_lookup(&mut self, table: Var, ids: &[u32]) -> Var {
        let t = self.value(table);
        assert_eq!(t.rank(), 2, "embedding table must be rank 2, got {:?}", t.shape());
        assert!(!ids.is_empty(), "embedding_lookup on empty id list");
        let (vocab, emb) = t.dims2();
        let mut data = Vec::with_capacity(ids.len() * emb);
        for &id in ids {
            assert!(
                (id as usize) < vocab,
                "embedding id {} out of range for table {:?}",
                id,
                t.shape()
            );
            data.extend_from_slice(t.row(id as usize));
        }
        let value = Tensor::new(&[ids.len(), emb], data);
        self.record(
            value,
            Op::Embedding {
                table: table.0,
                ids: ids.to_vec(),
            },
            &[table.0],
        )
    }

    /// Softmax cross entropy of rank-1 logits against a target index.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Var {
        let t = self.value(logits);
        assert_eq!(t.rank(), 1, "cross_entropy expects rank-1 logits, got {:?}", t.shape());
        assert!(
            target < t.numel(),
            "cross_entropy target {} out of range for logits {:?}",
            target,
            t.shape()
        );
        let max = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(max.is_finite(), "cross_entropy: no finite logits");
        let sum: f64 = t.data().iter().map(|&v| math::exp(v - max)).sum();
        let loss = max + math::ln(sum) - t.data()[target];
        self.record(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: logits.0,
                target,
            },
            &[logits.0],
        )
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total: f64 = self.value(x).data().iter().sum();
        self.record(
            Tensor::scalar(total),
            Op::Sum {
                input: x.0,
                axis: None,
            },
            &[x.0],
        )
    }

    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Var {
        let value = reduce_axis_fwd(self.value(x), axis, false);
        self.record(
            value,
            Op::Sum {
                input: x.0,
                axis: Some(axis),
            },
            &[x.0],
        )
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel() as f64;
        let total: f64 = self.value(x).data().iter().sum();
        self.record(
            Tensor::scalar(total / n),
            Op::Mean {
                input: x.0,
                axis: None,
            },
            &[x.0],
        )
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Var {
        let value = reduce_axis_fwd(self.value(x), axis, true);
        self.record(
            value,
            Op::Mean {
                input: x.0,
                axis: Some(axis),
            },
            &[x.0],
        )
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = Tensor::new(
            self.value(x).shape(),
            self.value(x).data().iter().map(|&v| v * factor).collect(),
        );
        self.record(
            value,
            Op::Scale {
                input: x.0,
                factor,
            },
            &[x.0],
        )
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let t = self.value(x);
        assert_eq!(t.rank(), 2, "transpose expects rank 2, got {:?}", t.shape());
        let (rows, cols) = t.dims2();
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                data[c * rows + r] = t.data()[r * cols + c];
            }
        }
        let value = Tensor::new(&[cols, rows], data);
        self.record(value, Op::Transpose(x.0), &[x.0])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let t = self.value(x);
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            t.numel(),
            "reshape {:?} -> {:?} changes element count",
            t.shape(),
            shape
        );
        let value = Tensor::new(shape, t.data().to_vec());
        self.record(value, Op::Reshape(x.0), &[x.0])
    }

    /// Contiguous sub-vector of a rank-1 tensor.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let t = self.value(x);
        assert_eq!(t.rank(), 1, "slice expects rank 1, got {:?}", t.shape());
        assert!(
            start + len <= t.numel(),
            "slice {}..{} out of range for {:?}",
            start,
            start + len,
            t.shape()
        );
        let value = Tensor::new(&[len], t.data()[start..start + len].to_vec());
        self.record(value, Op::Slice { input: x.0, start }, &[x.0])
    }

    // ---- backward -------------------------------------------------------

    /// Backpropagate from a scalar loss; leaf gradients accumulate.
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(
            self.nodes[loss.0].value.numel(),
            1,
            "backward requires a scalar loss, got shape {:?}",
            self.nodes[loss.0].value.shape()
        );
        if !self.nodes[loss.0].needs_grad {
            return;
        }
        // Transient adjoints for this pass; persistent grads only on leaves.
        let mut adjoints: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adjoints[loss.0] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                adjoints[id] = None;
                continue;
            }
            let g = match adjoints[id].take() {
                Some(g) => g,
                None => continue,
            };
            if let Some(leaf_grad) = self.nodes[id].grad.as_mut() {
                for (acc, &v) in leaf_grad.data_mut().iter_mut().zip(g.data()) {
                    *acc += v;
                }
            }
            self.propagate(id, &g, &mut adjoints);
        }
    }

    fn input_needs_grad(&self, id: usize) -> bool {
        self.nodes[id].needs_grad
    }

    fn adjoint_slot<'a>(
        &self,
        adjoints: &'a mut [Option<Tensor>],
        id: usize,
    ) -> &'a mut Tensor {
        if adjoints[id].is_none() {
            adjoints[id] = Some(Tensor::zeros(self.nodes[id].value.shape()));
        }
        adjoints[id].as_mut().unwrap()
    }

    fn propagate(&self, id: usize, g: &Tensor, adjoints: &mut [Option<Tensor>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (n, k, m, _) =
                    mm_spec(self.nodes[*a].value.shape(), self.nodes[*b].value.shape());
                if self.input_needs_grad(*a) {
                    let bv = self.nodes[*b].value.data().to_vec();
                    let da = self.adjoint_slot(adjoints, *a);
                    matmul_bwd_lhs(g.data(), &bv, n, k, m, da.data_mut());
                }
                if self.input_needs_grad(*b) {
                    let av = self.nodes[*a].value.data().to_vec();
                    let db = self.adjoint_slot(adjoints, *b);
                    matmul_bwd_rhs(g.data(), &av, n, k, m, db.data_mut());
                }
            }
            Op::Add(a, b) => {
                if self.input_needs_grad(*a) {
                    let target_len = self.nodes[*a].value.numel();
                    let da = self.adjoint_slot(adjoints, *a);
                    reduce_into(da.data_mut(), g.data(), target_len);
                }
                if self.input_needs_grad(*b) {
                    let target_len = self.nodes[*b].value.numel();
                    let db = self.adjoint_slot(adjoints, *b);
                    reduce_into(db.data_mut(), g.data(), target_len);
                }
            }
            Op::Mul(a, b) => {
                if self.input_needs_grad(*a) {
                    let contrib =
                        broadcast_zip(&self.nodes[*b].value, g, |bv, gv| bv * gv);
                    let target_len = self.nodes[*a].value.numel();
                    let da = self.adjoint_slot(adjoints, *a);
                    reduce_into(da.data_mut(), contrib.data(), target_len);
                }
                if self.input_needs_grad(*b) {
                    let contrib =
                        broadcast_zip(&self.nodes[*a].value, g, |av, gv| av * gv);
                    let target_len = self.nodes[*b].value.numel();
                    let db = self.adjoint_slot(adjoints, *b);
                    reduce_into(db.data_mut(), contrib.data(), target_len);
                }
            }
            Op::Concat(parts) => {
                let rows = self.nodes[id].value.dims2().0;
                let total_cols = self.nodes[id].value.dims2().1;
                let mut offset = 0;
                for &p in parts {
                    let (_, c) = self.nodes[p].value.dims2();
                    if self.input_needs_grad(p) {
                        let dp = self.adjoint_slot(adjoints, p);
                        let dd = dp.data_mut();
                        for r in 0..rows {
                            for j in 0..c {
                                dd[r * c + j] += g.data()[r * total_cols + offset + j];
                            }
                        }
                    }
                    offset += c;
                }
            }
            Op::Sigmoid(x) => {
                if self.input_needs_grad(*x) {
                    let y = self.nodes[id].value.data().to_vec();
                    let dx = self.adjoint_slot(adjoints, *x);
                    for ((d, &yv), &gv) in dx.data_mut().iter_mut().zip(&y).zip(g.data()) {
                        *d += gv * yv * (1.0 - yv);
                    }
                }
            }
            Op::Tanh(x) => {
                if self.input_needs_grad(*x) {
                    let y = self.nodes[id].value.data().to_vec();
                    let dx = self.adjoint_slot(adjoints, *x);
                    for ((d, &yv), &gv) in dx.data_mut().iter_mut().zip(&y).zip(g.data()) {
                        *d += gv * (1.0 - yv * yv);
                    }
                }
            }
            Op::Softmax(x) => {
                if self.input_needs_grad(*x) {
                    let y = self.nodes[id].value.clone();
                    let (rows, cols) = y.dims2();
                    let dx = self.adjoint_slot(adjoints, *x);
                    let dd = dx.data_mut();
                    for r in 0..rows {
                        let yr = &y.data()[r * cols..(r + 1) * cols];
                        let gr = &g.data()[r * cols..(r + 1) * cols];
                        let dot: f64 = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                        for j in 0..cols {
                            dd[r * cols + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::Embedding { table, ids } => {
                if self.input_needs_grad(*table) {
                    let emb = self.nodes[*table].value.dims2().1;
                    let dt = self.adjoint_slot(adjoints, *table);
                    let dd = dt.data_mut();
                    for (row, &id) in ids.iter().enumerate() {
                        let src = &g.data()[row * emb..(row + 1) * emb];
                        let dst = &mut dd[id as usize * emb..(id as usize + 1) * emb];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
            Op::CrossEntropy { logits, target } => {
                if self.input_needs_grad(*logits) {
                    let x = &self.nodes[*logits].value;
                    let probs = softmax_fwd(x.data(), 1, x.numel());
                    let gs = g.item();
                    let dx = self.adjoint_slot(adjoints, *logits);
                    for (j, d) in dx.data_mut().iter_mut().enumerate() {
                        let onehot = if j == *target { 1.0 } else { 0.0 };
                        *d += gs * (probs[j] - onehot);
                    }
                }
            }
            Op::Sum { input, axis } | Op::Mean { input, axis } => {
                if self.input_needs_grad(*input) {
                    let mean = matches!(self.nodes[id].op, Op::Mean { .. });
                    let in_shape = self.nodes[*input].value.shape().to_vec();
                    let dx = self.adjoint_slot(adjoints, *input);
                    reduce_bwd(dx.data_mut(), g.data(), &in_shape, *axis, mean);
                }
            }
            Op::Scale { input, factor } => {
                if self.input_needs_grad(*input) {
                    let f = *factor;
                    let dx = self.adjoint_slot(adjoints, *input);
                    for (d, &gv) in dx.data_mut().iter_mut().zip(g.data()) {
                        *d += gv * f;
                    }
                }
            }
            Op::Transpose(x) => {
                if self.input_needs_grad(*x) {
                    let (rows, cols) = self.nodes[id].value.dims2();
                    let dx = self.adjoint_slot(adjoints, *x);
                    let dd = dx.data_mut();
                    for r in 0..rows {
                        for c in 0..cols {
                            dd[c * rows + r] += g.data()[r * cols + c];
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if self.input_needs_grad(*x) {
                    let dx = self.adjoint_slot(adjoints, *x);
                    for (d, &gv) in dx.data_mut().iter_mut().zip(g.data()) {
                        *d += gv;
                    }
                }
            }
            Op::Slice { input, start } => {
                if self.input_needs_grad(*input) {
                    let dx = self.adjoint_slot(adjoints, *input);
                    let dd = dx.data_mut();
                    for (j, &gv) in g.data().iter().enumerate() {
                        dd[start + j] += gv;
                    }
                }
            }
        }
    }
}

// ---- kernels ------------------------------------------------------------

fn mm_spec(a: &[usize], b: &[usize]) -> (usize, usize, usize, Vec<usize>) {
    let (n, k) = match a.len() {
        1 => (1, a[0]),
        2 => (a[0], a[1]),
        _ => panic!("matmul lhs must be rank 1 or 2, got {:?}", a),
    };
    let (k2, m) = match b.len() {
        1 => (b[0], 1),
        2 => (b[0], b[1]),
        _ => panic!("matmul rhs must be rank 1 or 2, got {:?}", b),
    };
    assert_eq!(k, k2, "matmul shape mismatch: lhs {:?} rhs {:?}", a, b);
    let out_shape = match (a.len(), b.len()) {
        (1, 1) => vec![1],
        (1, 2) => vec![m],
        (2, 1) => vec![n],
        _ => vec![n, m],
    };
    (n, k, m, out_shape)
}

fn matmul_fwd(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * m];
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * m..(i + 1) * m];
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b[kk * m..(kk + 1) * m];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

// da[i,kk] += sum_j g[i,j] * b[kk,j]
fn matmul_bwd_lhs(g: &[f64], b: &[f64], n: usize, k: usize, m: usize, da: &mut [f64]) {
    for i in 0..n {
        let grow = &g[i * m..(i + 1) * m];
        let darow = &mut da[i * k..(i + 1) * k];
        for kk in 0..k {
            let brow = &b[kk * m..(kk + 1) * m];
            let mut acc = 0.0;
            for (&gv, &bv) in grow.iter().zip(brow) {
                acc += gv * bv;
            }
            darow[kk] += acc;
        }
    }
}

// db[kk,j] += sum_i a[i,kk] * g[i,j]
fn matmul_bwd_rhs(g: &[f64], a: &[f64], n: usize, k: usize, m: usize, db: &mut [f64]) {
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * m..(i + 1) * m];
        for (kk, &av) in arow.iter().enumerate() {
            let dbrow = &mut db[kk * m..(kk + 1) * m];
            for (dv, &gv) in dbrow.iter_mut().zip(grow) {
                *dv += av * gv;
            }
        }
    }
}

fn softmax_fwd(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let xr = &x[r * cols..(r + 1) * cols];
        let max = xr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(max.is_finite(), "softmax row {} has no finite entries", r);
        let or = &mut out[r * cols..(r + 1) * cols];
        let mut sum = 0.0;
        for (o, &v) in or.iter_mut().zip(xr) {
            *o = math::exp(v - max);
            sum += *o;
        }
        for o in or.iter_mut() {
            *o /= sum;
        }
    }
    out
}

/// Elementwise combine with broadcasting: identical shapes, a one-element
/// operand against anything, or a smaller operand whose shape equals the
/// trailing axes of the larger one (tiled over the leading axes).
fn broadcast_zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (big, small, small_is_lhs) = if a.shape() == b.shape() {
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        return Tensor::new(a.shape(), data);
    } else if b.numel() == 1 || is_trailing_of(b.shape(), a.shape()) {
        (a, b, false)
    } else if a.numel() == 1 || is_trailing_of(a.shape(), b.shape()) {
        (b, a, true)
    } else {
        panic!(
            "broadcast shape mismatch: lhs {:?} rhs {:?}",
            a.shape(),
            b.shape()
        );
    };
    let chunk = small.numel();
    let data = big
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let y = small.data()[i % chunk];
            if small_is_lhs {
                f(y, x)
            } else {
                f(x, y)
            }
        })
        .collect();
    Tensor::new(big.shape(), data)
}

fn is_trailing_of(small: &[usize], big: &[usize]) -> bool {
    small.len() < big.len() && big[big.len() - small.len()..] == *small
}

/// Accumulate a full-size contribution into a (possibly broadcast) target:
/// same length adds elementwise, length 1 adds the total, otherwise chunks
/// of the target length are summed.
fn reduce_into(target: &mut [f64], contrib: &[f64], target_len: usize) {
    debug_assert_eq!(target.len(), target_len);
    if contrib.len() == target_len {
        for (t, &c) in target.iter_mut().zip(contrib) {
            *t += c;
        }
    } else if target_len == 1 {
        target[0] += contrib.iter().sum::<f64>();
    } else {
        debug_assert_eq!(contrib.len() % target_len, 0);
        for (i, &c) in contrib.iter().enumerate() {
            target[i % target_len] += c;
        }
    }
}

fn reduce_axis_fwd(t: &Tensor, axis: usize, mean: bool) -> Tensor {
    assert_eq!(
        t.rank(),
        2,
        "axis reduction expects rank 2, got {:?} (axis {})",
        t.shape(),
        axis
    );
    let (rows, cols) = t.dims2();
    match axis {
        0 => {
            let mut out = vec![0.0; cols];
            for r in 0..rows {
                for (o, &v) in out.iter_mut().zip(t.row(r)) {
                    *o += v;
                }
            }
            if mean {
                for o in out.iter_mut() {
                    *o /= rows as f64;
                }
            }
            Tensor::new(&[cols], out)
        }
        1 => {
            let mut out = vec![0.0; rows];
            for (r, o) in out.iter_mut().enumerate() {
                *o = t.row(r).iter().sum();
                if mean {
                    *o /= cols as f64;
                }
            }
            Tensor::new(&[rows], out)
        }
        _ => panic!("axis {} out of range for shape {:?}", axis, t.shape()),
    }
}

fn reduce_bwd(dx: &mut [f64], g: &[f64], in_shape: &[usize], axis: Option<usize>, mean: bool) {
    match axis {
        None => {
            let n = dx.len() as f64;
            let gv = if mean { g[0] / n } else { g[0] };
            for d in dx.iter_mut() {
                *d += gv;
            }
        }
        Some(axis) => {
            let (rows, cols) = (in_shape[0], in_shape[1]);
            match axis {
                0 => {
                    let scale = if mean { 1.0 / rows as f64 } else { 1.0 };
                    for r in 0..rows {
                        for j in 0..cols {
                            dx[r * cols + j] += g[j] * scale;
                        }
                    }
                }
                1 => {
                    let scale = if mean { 1.0 / cols as f64 } else { 1.0 };
                    for r in 0..rows {
                        for j in 0..cols {
                            dx[r * cols + j] += g[r] * scale;
                        }
                    }
                }
                _ => unreachable!(),
            }
        }
    }
}

// ---- finite-difference oracle --------------------------------------------

/// Central finite-difference gradient checking.
///
/// Test support: rebuilds the graph from scratch for every perturbation, so
/// the check shares no code path with `backward`.
pub mod gradcheck {
    use alloc::format;
    use alloc::string::String;
    use alloc::vec::Vec;

    use super::{Tape, Var};
    use crate::math;
    use crate::tensor::Tensor;

    /// Compare analytic gradients of `f` (a scalar-valued graph builder)
    /// against central differences with the given step.
    ///
    /// The error is `|fd - analytic| / max(1, |fd|, |analytic|)`; returns the
    /// first offending entry, if any.
    pub fn check<F>(inputs: &[Tensor], f: F, step: f64, tol: f64) -> Result<(), String>
    where
        F: Fn(&mut Tape, &[Var]) -> Var,
    {
        let eval = |tensors: &[Tensor]| -> f64 {
            let mut tape = Tape::new();
            let vars: Vec<Var> = tensors
                .iter()
                .map(|t| tape.leaf(t.clone(), false))
                .collect();
            let out = f(&mut tape, &vars);
            tape.value(out).item()
        };

        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs
            .iter()
            .map(|t| tape.leaf(t.clone(), true))
            .collect();
        let out = f(&mut tape, &vars);
        tape.backward(out);
        let analytic: Vec<Tensor> = vars
            .iter()
            .map(|&v| tape.grad(v).expect("leaf grad").clone())
            .collect();

        let mut work: Vec<Tensor> = inputs.to_vec();
        for (i, input) in inputs.iter().enumerate() {
            for e in 0..input.numel() {
                let orig = input.data()[e];
                work[i].data_mut()[e] = orig + step;
                let up = eval(&work);
                work[i].data_mut()[e] = orig - step;
                let down = eval(&work);
                work[i].data_mut()[e] = orig;
                let fd = (up - down) / (2.0 * step);
                let an = analytic[i].data()[e];
                let denom = 1.0f64.max(math::abs(fd)).max(math::abs(an));
                let err = math::abs(fd - an) / denom;
                if err > tol {
                    return Err(format!(
                        "gradient mismatch at input {} element {}: analytic {} vs fd {} (rel err {})",
                        i, e, an, fd, err
                    ));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t1(data: &[f64]) -> Tensor {
        Tensor::new(&[data.len()], data.to_vec())
    }

    #[test]
    fn softmax_equal_logits_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(t1(&[0.0, 0.0]));
        let y = tape.softmax(x);
        assert_eq!(tape.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn matmul_identity_preserves_vector() {
        let mut tape = Tape::new();
        let i2 = tape.constant(Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]));
        let x = tape.constant(t1(&[3.5, -1.25]));
        let y = tape.matmul(i2, x);
        assert_eq!(tape.value(y).data(), &[3.5, -1.25]);
    }

    #[test]
    fn mul_sum_gradient_matches_hand_value() {
        // d/dx of sum(x .* y) at x=[1,2], y=[3,4] is [3,4].
        let mut tape = Tape::new();
        let x = tape.leaf(t1(&[1.0, 2.0]), true);
        let y = tape.constant(t1(&[3.0, 4.0]));
        let p = tape.mul(x, y);
        let s = tape.sum(p);
        tape.backward(s);
        assert_eq!(tape.grad(x).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn linear_sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let w = tape.leaf(t1(&[0.3, -0.7, 2.0]), true);
        let s = tape.sum(w);
        tape.backward(s);
        assert_eq!(tape.grad(w).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut tape = Tape::new();
        let w = tape.leaf(t1(&[1.0, 1.0, 1.0]), true);
        let s = tape.sum(w);
        tape.backward(s);
        tape.backward(s);
        assert_eq!(tape.grad(w).unwrap().data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn cross_entropy_uniform_gradient() {
        // softmax([0,0]) = [0.5, 0.5]; grad = softmax - onehot(0).
        let mut tape = Tape::new();
        let logits = tape.leaf(t1(&[0.0, 0.0]), true);
        let loss = tape.cross_entropy(logits, 0);
        tape.backward(loss);
        assert_eq!(tape.grad(logits).unwrap().data(), &[-0.5, 0.5]);
        assert!((tape.value(loss).item() - (2.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_nonnegative_and_zero_iff_onehot() {
        let mut tape = Tape::new();
        let sharp = tape.constant(t1(&[200.0, 0.0, 0.0]));
        let loss = tape.cross_entropy(sharp, 0);
        assert!(tape.value(loss).item() >= 0.0);
        assert!(tape.value(loss).item() < 1e-12);
        let diffuse = tape.constant(t1(&[1.0, 1.0, 1.0]));
        let loss2 = tape.cross_entropy(diffuse, 0);
        assert!(tape.value(loss2).item() > 0.1);
    }

    #[test]
    fn add_broadcasts_row_over_matrix() {
        let mut tape = Tape::new();
        let m = tape.leaf(Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]), true);
        let r = tape.leaf(t1(&[10.0, 20.0]), true);
        let s = tape.add(m, r);
        assert_eq!(tape.value(s).data(), &[11.0, 22.0, 13.0, 24.0]);
        let total = tape.sum(s);
        tape.backward(total);
        assert_eq!(tape.grad(r).unwrap().data(), &[2.0, 2.0]);
        assert_eq!(tape.grad(m).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    #[should_panic(expected = "matmul shape mismatch")]
    fn matmul_shape_mismatch_panics() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        tape.matmul(a, b);
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn embedding_id_out_of_range_panics() {
        let mut tape = Tape::new();
        let table = tape.constant(Tensor::zeros(&[4, 3]));
        tape.embedding_lookup(table, &[4]);
    }

    #[test]
    #[should_panic(expected = "scalar loss")]
    fn backward_on_non_scalar_panics() {
        let mut tape = Tape::new();
        let x = tape.leaf(t1(&[1.0, 2.0]), true);
        tape.backward(x);
    }

    #[test]
    fn forward_values_independent_of_grad_tracking() {
        let build = |requires_grad: bool| -> Tensor {
            let mut tape = Tape::new();
            let a = tape.leaf(Tensor::new(&[2, 2], vec![0.1, -0.4, 0.7, 0.2]), requires_grad);
            let b = tape.leaf(t1(&[0.3, -0.9]), requires_grad);
            let c = tape.matmul(a, b);
            let d = tape.tanh(c);
            let e = tape.softmax(d);
            tape.value(e).clone()
        };
        assert_eq!(build(true), build(false));
    }

    #[test]
    fn masked_softmax_gives_exact_zero_mass() {
        let mut tape = Tape::new();
        let x = tape.constant(t1(&[1.0, f64::NEG_INFINITY, 2.0]));
        let y = tape.softmax(x);
        assert_eq!(tape.value(y).data()[1], 0.0);
        let sum: f64 = tape.value(y).data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slice_and_concat_round_trip_gradients() {
        let mut tape = Tape::new();
        let x = tape.leaf(t1(&[1.0, 2.0, 3.0, 4.0]), true);
        let a = tape.slice(x, 0, 2);
        let b = tape.slice(x, 2, 2);
        let c = tape.concat(&[b, a]);
        let s = tape.sum(c);
        tape.backward(s);
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(tape.value(c).data(), &[3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn gradcheck_composite_expression() {
        let a = Tensor::new(&[2, 3], vec![0.1, -0.2, 0.3, 0.5, -0.6, 0.25]);
        let b = Tensor::new(&[3], vec![0.4, 0.9, -0.3]);
        let result = gradcheck::check(
            &[a, b],
            |tape, vars| {
                let m = tape.matmul(vars[0], vars[1]);
                let t = tape.tanh(m);
                let sm = tape.softmax(t);
                let ce = tape.cross_entropy(sm, 1);
                let sq = tape.mul(ce, ce);
                tape.mean(sq)
            },
            1e-5,
            1e-4,
        );
        assert!(result.is_ok(), "{:?}", result);
    }
}
