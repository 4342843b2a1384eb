//! Wengert-list reverse-mode differentiation.
//!
//! Every forward primitive appends a node holding its value and the ids of
//! its inputs. `backward` walks the list in reverse and accumulates each
//! node's gradient into its inputs, so fan-out is handled by summation.

use std::sync::Arc;

use super::params::{ParamId, ParamStore};
use super::tensor::{gemm, Tensor, Trans};
use crate::error::{Error, Result};
use crate::par::Execution;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Node-to-segment assignment for a flat row set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    ids: Vec<usize>,
    counts: Vec<usize>,
}

impl Segments {
    /// Every id must be `< num_segments`. Empty segments are allowed here;
    /// callers that need non-empty segments check [`Segments::check_nonempty`].
    pub fn new(ids: Vec<usize>, num_segments: usize) -> Result<Self> {
        let mut counts = vec![0usize; num_segments];
        for (row, &s) in ids.iter().enumerate() {
            if s >= num_segments {
                return Err(Error::Dataset(format!(
                    "row {row} assigned to segment {s}, but there are only {num_segments}"
                )));
            }
            counts[s] += 1;
        }
        Ok(Segments { ids, counts })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_segments(&self) -> usize {
        self.counts.len()
    }

    pub fn num_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn check_nonempty(&self) -> Result<()> {
        match self.counts.iter().position(|&c| c == 0) {
            Some(g) => Err(Error::Dataset(format!("segment {g} has no rows"))),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    ScaleBy(Var, Var),
    ScalarMul(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Powf(Var, f64),
    Sigmoid(Var),
    RowSoftmax(Var),
    Sum(Var),
    MeanRows(Var),
    ConcatCols(Vec<Var>),
    MaxOver(Vec<Var>),
    GatherRows(Var, Arc<[usize]>),
    ScatterAddRows(Var, Arc<[usize]>),
    ScaleRows(Var, Arc<[f64]>),
    Mask(Var, Arc<[f64]>),
    /// Attention weights are cached for the backward pass.
    SegmentSoftmaxPool {
        h: Var,
        scores: Var,
        segments: Arc<Segments>,
        weights: Vec<f64>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Arc<[usize]>,
        probs: Tensor,
    },
    BceWithLogits {
        logits: Var,
        targets: Arc<[f64]>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A recorded computation. One tape serves exactly one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
    exec: Execution,
}

fn shape_err(op: &str, shapes: &[(usize, usize)]) -> Error {
    let s: Vec<String> = shapes.iter().map(|(r, c)| format!("{r}x{c}")).collect();
    Error::Config(format!("{op}: incompatible shapes {}", s.join(", ")))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tape whose matrix products may use the parallel kernel path.
    pub fn with_execution(exec: Execution) -> Self {
        Tape {
            exec,
            ..Self::default()
        }
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to `v`, if any
    /// flowed into it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// A constant input (no gradient).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A differentiable leaf not tied to a parameter store.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Loads parameter `id` as a differentiable leaf; `backward` results are
    /// returned to the store by [`Tape::accumulate_param_grads`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.leaf(store.value(id).clone());
        self.params.push((id, v));
        v
    }

    // ---- forward primitives ------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(shape_err("matmul", &[sa, sb]));
        }
        let mut out = Tensor::zeros(sa.0, sb.1);
        gemm(
            self.exec,
            1.0,
            self.value(a),
            Trans::No,
            self.value(b),
            Trans::No,
            0.0,
            &mut out,
        );
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `a * b^T`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.1 {
            return Err(shape_err("matmul_bt", &[sa, sb]));
        }
        let mut out = Tensor::zeros(sa.0, sb.0);
        gemm(
            self.exec,
            1.0,
            self.value(a),
            Trans::No,
            self.value(b),
            Trans::Yes,
            0.0,
            &mut out,
        );
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMulBt(a, b), rg))
    }

    fn zip_same(
        &mut self,
        name: &str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(name, &[sa, sb]));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::from_vec(sa.0, sa.1, data), op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn row_broadcast(
        &mut self,
        name: &str,
        a: Var,
        row: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr != (1, sa.1) {
            return Err(shape_err(name, &[sa, sr]));
        }
        let r = self.value(row).data().to_vec();
        let mut out = self.value(a).clone();
        if sa.1 > 0 {
            for chunk in out.data_mut().chunks_mut(sa.1) {
                for (x, &y) in chunk.iter_mut().zip(&r) {
                    *x = f(*x, y);
                }
            }
        }
        let rg = self.rg(&[a, row]);
        Ok(self.push(out, op, rg))
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_broadcast("add_row", a, row, |x, y| x + y, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` elementwise by a `1 x c` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_broadcast("mul_row", a, row, |x, y| x * y, Op::MulRow(a, row))
    }

    /// Multiplies `a` by a differentiable `1 x 1` scalar.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        let ss = self.shape(s);
        if ss != (1, 1) {
            return Err(shape_err("scale_by", &[self.shape(a), ss]));
        }
        let k = self.value(s).item();
        let out = self.value(a).map(|x| x * k);
        let rg = self.rg(&[a, s]);
        Ok(self.push(out, Op::ScaleBy(a, s), rg))
    }

    pub fn scalar_mul(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x * k);
        let rg = self.rg(&[a]);
        self.push(out, Op::ScalarMul(a, k), rg)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x + k);
        let rg = self.rg(&[a]);
        self.push(out, Op::AddScalar(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let rg = self.rg(&[a]);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        let rg = self.rg(&[a]);
        self.push(out, Op::Exp(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        let rg = self.rg(&[a]);
        self.push(out, Op::Log(a), rg)
    }

    /// `a^p` elementwise; meant for positive inputs.
    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        let out = self.value(a).map(|x| x.powf(p));
        let rg = self.rg(&[a]);
        self.push(out, Op::Powf(a, p), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let rg = self.rg(&[a]);
        self.push(out, Op::Sigmoid(a), rg)
    }

    /// Softmax along each row, max-shifted.
    pub fn row_softmax(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let (r, c) = src.shape();
        let mut out = src.clone();
        if c > 0 {
            for row in out.data_mut().chunks_mut(c) {
                softmax_in_place(row);
            }
        }
        debug_assert_eq!(out.rows(), r);
        let rg = self.rg(&[a]);
        self.push(out, Op::RowSoftmax(a), rg)
    }

    /// Sum of all entries, as `1 x 1`.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Column means over all rows, as `1 x c`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if r == 0 {
            return Err(shape_err("mean_rows", &[(r, c)]));
        }
        let mut out = Tensor::zeros(1, c);
        for row in self.value(a).data().chunks(c.max(1)) {
            for (o, &x) in out.data_mut().iter_mut().zip(row) {
                *o += x;
            }
        }
        let inv = 1.0 / r as f64;
        out.data_mut().iter_mut().for_each(|x| *x *= inv);
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::MeanRows(a), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Config("concat_cols: no inputs".into()));
        };
        let rows = self.shape(first).0;
        if parts.iter().any(|&p| self.shape(p).0 != rows) {
            let shapes: Vec<_> = parts.iter().map(|&p| self.shape(p)).collect();
            return Err(shape_err("concat_cols", &shapes));
        }
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::from_vec(rows, total, data),
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    /// Elementwise maximum over a set of same-shaped tensors. The gradient
    /// goes to the first maximizer.
    pub fn max_over(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Config("max_over: no inputs".into()));
        };
        let s = self.shape(first);
        if parts.iter().any(|&p| self.shape(p) != s) {
            let shapes: Vec<_> = parts.iter().map(|&p| self.shape(p)).collect();
            return Err(shape_err("max_over", &shapes));
        }
        let mut out = self.value(first).clone();
        for &p in &parts[1..] {
            for (o, &x) in out.data_mut().iter_mut().zip(self.value(p).data()) {
                if x > *o {
                    *o = x;
                }
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(out, Op::MaxOver(parts.to_vec()), rg))
    }

    /// `out[i] = a[idx[i]]`.
    pub fn gather_rows(&mut self, a: Var, idx: Arc<[usize]>) -> Result<Var> {
        let (r, c) = self.shape(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(Error::Config(format!(
                "gather_rows: index {bad} out of range for {r}x{c}"
            )));
        }
        let out = self.value(a).select_rows(&idx);
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::GatherRows(a, idx), rg))
    }

    /// `out[idx[i]] += a[i]` into `n_out` zero rows.
    pub fn scatter_add_rows(&mut self, a: Var, idx: Arc<[usize]>, n_out: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if idx.len() != r {
            return Err(Error::Config(format!(
                "scatter_add_rows: {} indices for {r}x{c}",
                idx.len()
            )));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n_out) {
            return Err(Error::Config(format!(
                "scatter_add_rows: index {bad} out of range for {n_out} output rows"
            )));
        }
        let mut out = Tensor::zeros(n_out, c);
        let src = self.value(a);
        for (i, &dst) in idx.iter().enumerate() {
            for (o, &x) in out.row_slice_mut(dst).iter_mut().zip(src.row_slice(i)) {
                *o += x;
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::ScatterAddRows(a, idx), rg))
    }

    /// Per-segment row sums. Every segment must be non-empty.
    pub fn segment_sum(&mut self, h: Var, segments: &Segments) -> Result<Var> {
        segments.check_nonempty()?;
        if segments.num_rows() != self.shape(h).0 {
            return Err(shape_err(
                "segment_sum",
                &[self.shape(h), (segments.num_rows(), 1)],
            ));
        }
        let idx: Arc<[usize]> = segments.ids().into();
        self.scatter_add_rows(h, idx, segments.num_segments())
    }

    /// Multiplies row `i` by the constant `k[i]`.
    pub fn scale_rows(&mut self, a: Var, k: Arc<[f64]>) -> Result<Var> {
        let (r, c) = self.shape(a);
        if k.len() != r {
            return Err(shape_err("scale_rows", &[(r, c), (k.len(), 1)]));
        }
        let mut out = self.value(a).clone();
        for (i, &ki) in k.iter().enumerate() {
            out.row_slice_mut(i).iter_mut().for_each(|x| *x *= ki);
        }
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::ScaleRows(a, k), rg))
    }

    /// Elementwise product with a constant mask of the same shape.
    pub fn mask(&mut self, a: Var, mask: Arc<[f64]>) -> Result<Var> {
        let s = self.shape(a);
        if mask.len() != s.0 * s.1 {
            return Err(shape_err("mask", &[s, (mask.len(), 1)]));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(mask.iter())
            .map(|(x, m)| x * m)
            .collect();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::from_vec(s.0, s.1, data), Op::Mask(a, mask), rg))
    }

    /// For each segment `g`: `sum_{n in g} softmax_g(scores)_n * h_n`.
    ///
    /// Scores are shifted by the per-segment maximum before exponentiation.
    pub fn segment_softmax_weighted_sum(
        &mut self,
        h: Var,
        scores: Var,
        segments: Arc<Segments>,
    ) -> Result<Var> {
        let (n, d) = self.shape(h);
        let ss = self.shape(scores);
        if ss != (n, 1) || segments.num_rows() != n {
            return Err(shape_err(
                "segment_softmax_weighted_sum",
                &[(n, d), ss, (segments.num_rows(), 1)],
            ));
        }
        segments.check_nonempty()?;
        let weights = segment_softmax(self.value(scores).data(), &segments);
        let g = segments.num_segments();
        let mut out = Tensor::zeros(g, d);
        let hv = self.value(h);
        for (i, &seg) in segments.ids().iter().enumerate() {
            let a = weights[i];
            for (o, &x) in out.row_slice_mut(seg).iter_mut().zip(hv.row_slice(i)) {
                *o += a * x;
            }
        }
        let rg = self.rg(&[h, scores]);
        Ok(self.push(
            out,
            Op::SegmentSoftmaxPool {
                h,
                scores,
                segments,
                weights,
            },
            rg,
        ))
    }

    /// Attention weights cached by a `segment_softmax_weighted_sum` node.
    pub fn attention_weights(&self, pooled: Var) -> Option<&[f64]> {
        match &self.nodes[pooled.0].op {
            Op::SegmentSoftmaxPool { weights, .. } => Some(weights),
            _ => None,
        }
    }

    /// Mean over rows of `-log softmax(logits)[label]`, via log-sum-exp.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: Arc<[usize]>) -> Result<Var> {
        let (r, c) = self.shape(logits);
        if labels.len() != r || r == 0 {
            return Err(shape_err("softmax_cross_entropy", &[(r, c), (labels.len(), 1)]));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::Config(format!(
                "softmax_cross_entropy: label {bad} with only {c} classes"
            )));
        }
        let lv = self.value(logits);
        let mut probs = lv.clone();
        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = lv.row_slice(i);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
            loss += lse - row[y];
            softmax_in_place(probs.row_slice_mut(i));
        }
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss / r as f64),
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            },
            rg,
        ))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against targets in
    /// [0, 1]; `logits` is `n x 1`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Arc<[f64]>) -> Result<Var> {
        let (r, c) = self.shape(logits);
        if c != 1 || targets.len() != r || r == 0 {
            return Err(shape_err("bce_with_logits", &[(r, c), (targets.len(), 1)]));
        }
        let loss: f64 = self
            .value(logits)
            .data()
            .iter()
            .zip(targets.iter())
            // max(x,0) - x*y + log(1 + exp(-|x|))
            .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
            .sum();
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss / r as f64),
            Op::BceWithLogits { logits, targets },
            rg,
        ))
    }

    // ---- reverse pass -------------------------------------------------------

    /// Seeds `d loss / d loss = 1` and propagates to every reachable node.
    /// Gradients from earlier calls are cleared first.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let s = self.shape(loss);
        if s != (1, 1) {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got {}x{}",
                s.0, s.1
            )));
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        self.grads[loss.0] = Some(Tensor::scalar(1.0));
        let exec = self.exec;
        let Tape { nodes, grads, .. } = self;
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if nodes[i].requires_grad {
                propagate(exec, nodes, grads, i, &g);
            }
            grads[i] = Some(g);
        }
        Ok(())
    }

    /// Adds the gradients of every parameter leaf into `store`.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for &(id, v) in &self.params {
            if let Some(g) = &self.grads[v.0] {
                store.get_mut(id).grad.add_assign(g);
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in row.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    for x in row.iter_mut() {
        *x /= z;
    }
}

/// Per-segment softmax of `scores`, stabilized by the segment maximum.
pub fn segment_softmax(scores: &[f64], segments: &Segments) -> Vec<f64> {
    let g = segments.num_segments();
    let mut max = vec![f64::NEG_INFINITY; g];
    for (&s, &seg) in scores.iter().zip(segments.ids()) {
        if s > max[seg] {
            max[seg] = s;
        }
    }
    let mut w: Vec<f64> = scores
        .iter()
        .zip(segments.ids())
        .map(|(&s, &seg)| (s - max[seg]).exp())
        .collect();
    let mut z = vec![0.0; g];
    for (&e, &seg) in w.iter().zip(segments.ids()) {
        z[seg] += e;
    }
    for (e, &seg) in w.iter_mut().zip(segments.ids()) {
        *e /= z[seg];
    }
    w
}

fn acc<'a>(nodes: &[Node], grads: &'a mut [Option<Tensor>], v: Var) -> Option<&'a mut Tensor> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let (r, c) = nodes[v.0].value.shape();
    Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(r, c)))
}

fn acc_map(
    nodes: &[Node],
    grads: &mut [Option<Tensor>],
    v: Var,
    g: &Tensor,
    f: impl Fn(usize, f64) -> f64,
) {
    if let Some(dst) = acc(nodes, grads, v) {
        for (k, (d, &gk)) in dst.data_mut().iter_mut().zip(g.data()).enumerate() {
            *d += f(k, gk);
        }
    }
}

fn propagate(
    exec: Execution,
    nodes: &[Node],
    grads: &mut [Option<Tensor>],
    i: usize,
    g: &Tensor,
) {
    let out = &nodes[i].value;
    match &nodes[i].op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            // dA = dC B^T ; dB = A^T dC
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            if let Some(da) = acc(nodes, grads, *a) {
                gemm(exec, 1.0, g, Trans::No, bv, Trans::Yes, 1.0, da);
            }
            if let Some(db) = acc(nodes, grads, *b) {
                gemm(exec, 1.0, av, Trans::Yes, g, Trans::No, 1.0, db);
            }
        }
        Op::MatMulBt(a, b) => {
            // C = A B^T: dA = dC B ; dB = dC^T A
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            if let Some(da) = acc(nodes, grads, *a) {
                gemm(exec, 1.0, g, Trans::No, bv, Trans::No, 1.0, da);
            }
            if let Some(db) = acc(nodes, grads, *b) {
                gemm(exec, 1.0, g, Trans::Yes, av, Trans::No, 1.0, db);
            }
        }
        Op::Add(a, b) => {
            acc_map(nodes, grads, *a, g, |_, x| x);
            acc_map(nodes, grads, *b, g, |_, x| x);
        }
        Op::Sub(a, b) => {
            acc_map(nodes, grads, *a, g, |_, x| x);
            acc_map(nodes, grads, *b, g, |_, x| -x);
        }
        Op::Mul(a, b) => {
            let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
            acc_map(nodes, grads, *a, g, |k, x| x * bv[k]);
            acc_map(nodes, grads, *b, g, |k, x| x * av[k]);
        }
        Op::AddRow(a, row) => {
            acc_map(nodes, grads, *a, g, |_, x| x);
            let c = out.cols();
            if let Some(dr) = acc(nodes, grads, *row) {
                for grow in g.data().chunks(c.max(1)) {
                    for (d, &x) in dr.data_mut().iter_mut().zip(grow) {
                        *d += x;
                    }
                }
            }
        }
        Op::MulRow(a, row) => {
            let c = out.cols().max(1);
            let rv = nodes[row.0].value.data();
            let av = nodes[a.0].value.data();
            acc_map(nodes, grads, *a, g, |k, x| x * rv[k % c]);
            if let Some(dr) = acc(nodes, grads, *row) {
                for (grow, arow) in g.data().chunks(c).zip(av.chunks(c)) {
                    for ((d, &x), &y) in dr.data_mut().iter_mut().zip(grow).zip(arow) {
                        *d += x * y;
                    }
                }
            }
        }
        Op::ScaleBy(a, s) => {
            let k = nodes[s.0].value.item();
            acc_map(nodes, grads, *a, g, |_, x| x * k);
            let av = nodes[a.0].value.data();
            if let Some(ds) = acc(nodes, grads, *s) {
                let dot: f64 = g.data().iter().zip(av).map(|(x, y)| x * y).sum();
                ds.data_mut()[0] += dot;
            }
        }
        Op::ScalarMul(a, k) => acc_map(nodes, grads, *a, g, |_, x| x * k),
        Op::AddScalar(a) => acc_map(nodes, grads, *a, g, |_, x| x),
        Op::Relu(a) => {
            let av = nodes[a.0].value.data();
            acc_map(nodes, grads, *a, g, |k, x| if av[k] > 0.0 { x } else { 0.0 });
        }
        Op::Exp(a) => {
            let ov = out.data();
            acc_map(nodes, grads, *a, g, |k, x| x * ov[k]);
        }
        Op::Log(a) => {
            let av = nodes[a.0].value.data();
            acc_map(nodes, grads, *a, g, |k, x| x / av[k]);
        }
        Op::Powf(a, p) => {
            let av = nodes[a.0].value.data();
            acc_map(nodes, grads, *a, g, |k, x| x * p * av[k].powf(p - 1.0));
        }
        Op::Sigmoid(a) => {
            let ov = out.data();
            acc_map(nodes, grads, *a, g, |k, x| x * ov[k] * (1.0 - ov[k]));
        }
        Op::RowSoftmax(a) => {
            let c = out.cols().max(1);
            if let Some(da) = acc(nodes, grads, *a) {
                for ((drow, grow), srow) in da
                    .data_mut()
                    .chunks_mut(c)
                    .zip(g.data().chunks(c))
                    .zip(out.data().chunks(c))
                {
                    let dot: f64 = grow.iter().zip(srow).map(|(x, s)| x * s).sum();
                    for ((d, &x), &s) in drow.iter_mut().zip(grow).zip(srow) {
                        *d += s * (x - dot);
                    }
                }
            }
        }
        Op::Sum(a) => {
            let k = g.item();
            acc_map(nodes, grads, *a, &nodes[a.0].value, |_, _| k);
        }
        Op::MeanRows(a) => {
            let r = nodes[a.0].value.rows();
            let c = out.cols().max(1);
            let inv = 1.0 / r as f64;
            let gv = g.data();
            acc_map(nodes, grads, *a, &nodes[a.0].value, |k, _| gv[k % c] * inv);
        }
        Op::ConcatCols(parts) => {
            let total = out.cols();
            let mut off = 0;
            for p in parts {
                let pc = nodes[p.0].value.cols();
                if let Some(dp) = acc(nodes, grads, *p) {
                    for r in 0..out.rows() {
                        let src = &g.data()[r * total + off..r * total + off + pc];
                        for (d, &x) in dp.row_slice_mut(r).iter_mut().zip(src) {
                            *d += x;
                        }
                    }
                }
                off += pc;
            }
        }
        Op::MaxOver(parts) => {
            // route each entry to the first part attaining the max
            let n = out.len();
            let mut owner = vec![0usize; n];
            let mut best: Vec<f64> = nodes[parts[0].0].value.data().to_vec();
            for (pi, p) in parts.iter().enumerate().skip(1) {
                for (k, &x) in nodes[p.0].value.data().iter().enumerate() {
                    if x > best[k] {
                        best[k] = x;
                        owner[k] = pi;
                    }
                }
            }
            for (pi, p) in parts.iter().enumerate() {
                acc_map(nodes, grads, *p, g, |k, x| if owner[k] == pi { x } else { 0.0 });
            }
        }
        Op::GatherRows(a, idx) => {
            if let Some(da) = acc(nodes, grads, *a) {
                for (i, &src) in idx.iter().enumerate() {
                    for (d, &x) in da.row_slice_mut(src).iter_mut().zip(g.row_slice(i)) {
                        *d += x;
                    }
                }
            }
        }
        Op::ScatterAddRows(a, idx) => {
            if let Some(da) = acc(nodes, grads, *a) {
                for (i, &dst) in idx.iter().enumerate() {
                    for (d, &x) in da.row_slice_mut(i).iter_mut().zip(g.row_slice(dst)) {
                        *d += x;
                    }
                }
            }
        }
        Op::ScaleRows(a, k) => {
            let c = out.cols().max(1);
            acc_map(nodes, grads, *a, g, |e, x| x * k[e / c]);
        }
        Op::Mask(a, m) => acc_map(nodes, grads, *a, g, |k, x| x * m[k]),
        Op::SegmentSoftmaxPool {
            h,
            scores,
            segments,
            weights,
        } => {
            let hv = &nodes[h.0].value;
            if let Some(dh) = acc(nodes, grads, *h) {
                for (i, &seg) in segments.ids().iter().enumerate() {
                    let a = weights[i];
                    for (d, &x) in dh.row_slice_mut(i).iter_mut().zip(g.row_slice(seg)) {
                        *d += a * x;
                    }
                }
            }
            if nodes[scores.0].requires_grad {
                // ds_n = a_n (da_n - sum_m a_m da_m), da_n = <dout_g, h_n>
                let da: Vec<f64> = segments
                    .ids()
                    .iter()
                    .enumerate()
                    .map(|(i, &seg)| {
                        hv.row_slice(i)
                            .iter()
                            .zip(g.row_slice(seg))
                            .map(|(x, y)| x * y)
                            .sum()
                    })
                    .collect();
                let mut mean = vec![0.0; segments.num_segments()];
                for (i, &seg) in segments.ids().iter().enumerate() {
                    mean[seg] += weights[i] * da[i];
                }
                if let Some(ds) = acc(nodes, grads, *scores) {
                    for (i, &seg) in segments.ids().iter().enumerate() {
                        ds.data_mut()[i] += weights[i] * (da[i] - mean[seg]);
                    }
                }
            }
        }
        Op::SoftmaxCrossEntropy {
            logits,
            labels,
            probs,
        } => {
            let k = g.item() / labels.len() as f64;
            let c = probs.cols();
            let pv = probs.data();
            acc_map(nodes, grads, *logits, probs, |e, _| {
                let onehot = if labels[e / c] == e % c { 1.0 } else { 0.0 };
                k * (pv[e] - onehot)
            });
        }
        Op::BceWithLogits { logits, targets } => {
            let k = g.item() / targets.len() as f64;
            let lv = nodes[logits.0].value.data();
            acc_map(nodes, grads, *logits, &nodes[logits.0].value, |e, _| {
                k * (sigmoid(lv[e]) - targets[e])
            });
        }
    }
}
