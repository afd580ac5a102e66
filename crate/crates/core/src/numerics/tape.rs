//! Reverse-mode differentiation over a linear tape of matrix operations.

use std::collections::HashMap;

use super::tensor::gemm;
use super::{NumericsError, ParamId, ParamStore, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Softmax(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    Mean(Var),
    WeightedSum(Var, Tensor),
    NegHalfSqDist(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records values and the operations that produced them.
///
/// A tape lives for one forward/backward pass. Parameters are read from a
/// [`ParamStore`] once per tape; repeated uses of the same parameter share one node,
/// so tied weights accumulate their gradient contributions.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_rows(t: &Tensor) -> Tensor {
    let c = t.cols();
    let mut out = t.clone();
    for row in out.data_mut().chunks_mut(c.max(1)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

fn neg_half_sq_dist(h: &Tensor, mu: &Tensor) -> Tensor {
    let (b, d, k) = (h.rows(), h.cols(), mu.rows());
    let mut out = Vec::with_capacity(b * k);
    for i in 0..b {
        let hi = h.row(i);
        for j in 0..k {
            let dist: f64 = hi.iter().zip(mu.row(j)).map(|(x, m)| (x - m) * (x - m)).sum();
            out.push(-0.5 * dist);
        }
    }
    debug_assert_eq!(mu.cols(), d);
    Tensor::matrix(b, k, out).expect("sized")
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// A value that gradients stop at.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value.as_matrix(), Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// Adds a `[1, n]` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumericsError> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(NumericsError::ShapeMismatch(format!("add_row {:?} + {:?}", av.shape(), rv.shape())));
        }
        let c = av.cols();
        let mut value = av.clone();
        for chunk in value.data_mut().chunks_mut(c.max(1)) {
            for (x, b) in chunk.iter_mut().zip(rv.data()) {
                *x += b;
            }
        }
        Ok(self.push(value, Op::AddRow(a, row)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        self.push(value, Op::Scale(a, factor))
    }

    pub fn offset(&mut self, a: Var, shift: f64) -> Var {
        let value = self.value(a).map(|x| x + shift);
        self.push(value, Op::Offset(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(value, Op::LeakyRelu(a, slope))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(softplus);
        self.push(value, Op::Softplus(a))
    }

    /// `log σ(a)`, computed as `-softplus(-a)`.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        let sp = self.softplus(neg);
        self.scale(sp, -1.0)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        self.push(value, Op::Softmax(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::concat_cols(&values)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NumericsError> {
        let av = self.value(a);
        if start > end || end > av.cols() {
            return Err(NumericsError::ShapeMismatch(format!("slice_cols {start}..{end} of width {}", av.cols())));
        }
        let value = av.slice_cols(start, end);
        Ok(self.push(value, Op::SliceCols(a, start)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::concat_rows(&values)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NumericsError> {
        let av = self.value(a);
        if start > end || end > av.rows() {
            return Err(NumericsError::ShapeMismatch(format!("slice_rows {start}..{end} of {} rows", av.rows())));
        }
        let value = av.slice_rows(start, end).as_matrix();
        Ok(self.push(value, Op::SliceRows(a, start)))
    }

    /// Mean over all entries, as a `[1, 1]` value.
    pub fn mean(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).mean());
        self.push(value, Op::Mean(a))
    }

    /// `Σ w ⊙ a` with constant weights, as a `[1, 1]` value.
    pub fn weighted_sum(&mut self, a: Var, weights: Tensor) -> Result<Var, NumericsError> {
        let av = self.value(a);
        if av.len() != weights.len() {
            return Err(NumericsError::ShapeMismatch(format!(
                "weighted_sum over {:?} with {} weights",
                av.shape(),
                weights.len()
            )));
        }
        let total = av.data().iter().zip(weights.data()).map(|(x, w)| x * w).sum();
        Ok(self.push(Tensor::scalar(total), Op::WeightedSum(a, weights)))
    }

    /// `out[b, k] = -½‖h_b − μ_k‖²` for `h: [B, d]`, `mu: [K, d]`.
    pub fn neg_half_sq_dist(&mut self, h: Var, mu: Var) -> Result<Var, NumericsError> {
        let (hv, mv) = (self.value(h), self.value(mu));
        if hv.cols() != mv.cols() {
            return Err(NumericsError::ShapeMismatch(format!(
                "distance between {:?} and {:?}",
                hv.shape(),
                mv.shape()
            )));
        }
        let value = neg_half_sq_dist(hv, mv);
        Ok(self.push(value, Op::NegHalfSqDist(h, mu)))
    }

    /// Gradients of the scalar `loss` with respect to every node on the tape.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        let elementwise = |input: Var, f: &dyn Fn(f64, f64, f64) -> f64| -> Tensor {
            let x = self.value(input);
            let data = x.data().iter().zip(y.data()).zip(g.data()).map(|((&xv, &yv), &gv)| f(xv, yv, gv)).collect();
            Tensor::new(x.shape().to_vec(), data).expect("same shape")
        };
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                let mut da = vec![0.0; m * k];
                gemm(m, n, k, g.data(), false, bv.data(), true, &mut da, 0.0);
                let mut db = vec![0.0; k * n];
                gemm(k, m, n, av.data(), true, g.data(), false, &mut db, 0.0);
                accumulate(grads, *a, Tensor::new(av.shape().to_vec(), da).expect("sized"));
                accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), db).expect("sized"));
            }
            Op::AddRow(a, row) => {
                let c = g.cols();
                let mut dr = vec![0.0; c];
                for chunk in g.data().chunks(c.max(1)) {
                    for (acc, v) in dr.iter_mut().zip(chunk) {
                        *acc += v;
                    }
                }
                accumulate(grads, *a, g.clone());
                let shape = self.value(*row).shape().to_vec();
                accumulate(grads, *row, Tensor::new(shape, dr).expect("sized"));
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let da = g.zip_map(self.value(*b), |gv, bv| gv * bv).expect("same shape");
                let db = g.zip_map(self.value(*a), |gv, av| gv * av).expect("same shape");
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::Scale(a, f) => accumulate(grads, *a, g.map(|v| v * f)),
            Op::Offset(a) => accumulate(grads, *a, g.clone()),
            Op::Relu(a) => {
                let d = elementwise(*a, &|x, _, gv| if x > 0.0 { gv } else { 0.0 });
                accumulate(grads, *a, d);
            }
            Op::LeakyRelu(a, slope) => {
                let s = *slope;
                let d = elementwise(*a, &move |x, _, gv| if x > 0.0 { gv } else { s * gv });
                accumulate(grads, *a, d);
            }
            Op::Tanh(a) => accumulate(grads, *a, elementwise(*a, &|_, y, gv| gv * (1.0 - y * y))),
            Op::Sigmoid(a) => accumulate(grads, *a, elementwise(*a, &|_, y, gv| gv * y * (1.0 - y))),
            Op::Softplus(a) => accumulate(grads, *a, elementwise(*a, &|x, _, gv| gv * sigmoid(x))),
            Op::Exp(a) => accumulate(grads, *a, elementwise(*a, &|_, y, gv| gv * y)),
            Op::Softmax(a) => {
                let c = y.cols();
                let mut d = Vec::with_capacity(y.len());
                for (yr, gr) in y.data().chunks(c.max(1)).zip(g.data().chunks(c.max(1))) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    d.extend(yr.iter().zip(gr).map(|(yv, gv)| yv * (gv - dot)));
                }
                accumulate(grads, *a, Tensor::new(y.shape().to_vec(), d).expect("sized"));
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    let shape = self.value(*p).shape().to_vec();
                    let piece = g.slice_cols(start, start + w);
                    accumulate(grads, *p, piece.reshape(shape).expect("sized"));
                    start += w;
                }
            }
            Op::SliceCols(a, start) => {
                let av = self.value(*a);
                let (r, c, w) = (av.rows(), av.cols(), g.cols());
                let mut d = vec![0.0; r * c];
                for row in 0..r {
                    d[row * c + start..row * c + start + w].copy_from_slice(g.row(row));
                }
                accumulate(grads, *a, Tensor::new(av.shape().to_vec(), d).expect("sized"));
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let r = self.value(*p).rows();
                    let shape = self.value(*p).shape().to_vec();
                    let piece = g.slice_rows(start, start + r);
                    accumulate(grads, *p, piece.reshape(shape).expect("sized"));
                    start += r;
                }
            }
            Op::SliceRows(a, start) => {
                let av = self.value(*a);
                let c = av.cols();
                let mut d = vec![0.0; av.len()];
                d[start * c..start * c + g.len()].copy_from_slice(g.data());
                accumulate(grads, *a, Tensor::new(av.shape().to_vec(), d).expect("sized"));
            }
            Op::Mean(a) => {
                let av = self.value(*a);
                let v = g.item() / av.len() as f64;
                accumulate(grads, *a, Tensor::full(av.shape(), v));
            }
            Op::WeightedSum(a, w) => {
                let gv = g.item();
                let shape = self.value(*a).shape().to_vec();
                let d = w.data().iter().map(|x| x * gv).collect();
                accumulate(grads, *a, Tensor::new(shape, d).expect("sized"));
            }
            Op::NegHalfSqDist(h, mu) => {
                let (hv, mv) = (self.value(*h), self.value(*mu));
                let (b, d, k) = (hv.rows(), hv.cols(), mv.rows());
                let mut dh = vec![0.0; b * d];
                let mut dm = vec![0.0; k * d];
                for i in 0..b {
                    for j in 0..k {
                        let gv = g.get(i, j);
                        if gv == 0.0 {
                            continue;
                        }
                        for c in 0..d {
                            let diff = hv.get(i, c) - mv.get(j, c);
                            dh[i * d + c] -= gv * diff;
                            dm[j * d + c] += gv * diff;
                        }
                    }
                }
                accumulate(grads, *h, Tensor::new(hv.shape().to_vec(), dh).expect("sized"));
                accumulate(grads, *mu, Tensor::new(mv.shape().to_vec(), dm).expect("sized"));
            }
        }
    }

    /// Gradient for every parameter in `store`; parameters that were not reached get zeros.
    pub fn param_grads(&self, grads: &Gradients, store: &ParamStore) -> Vec<Tensor> {
        (0..store.len())
            .map(|i| {
                let id = ParamId(i);
                self.params
                    .get(&id)
                    .and_then(|v| grads.wrt(*v).cloned())
                    .unwrap_or_else(|| Tensor::zeros(store.value(id).shape()))
            })
            .collect()
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                *e += d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}
