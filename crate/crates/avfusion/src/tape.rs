//! Reverse-mode automatic differentiation over a Wengert tape.
//!
//! Ops are appended during the forward pass and replayed in reverse to
//! accumulate gradients. Node ids are assigned in push order, so every
//! input id precedes its consumers and the backward sweep visits each node
//! exactly once. All reductions use a fixed sequential order (ascending
//! index), which makes whole computations bitwise reproducible.

use crate::error::{AvError, Result};
use crate::parallel;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`]. Only valid for the tape that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// C = A @ B with A: [m,k], B: [k,n]
    MatMul { a: Var, b: Var },
    /// C[i] = A[i] @ B[i] with A: [p,m,k], B: [p,k,n]
    Bmm { a: Var, b: Var },
    /// C[i] = A[i] @ B[i]^T with A: [p,m,k], B: [p,n,k]
    BmmTransposed { a: Var, b: Var },
    Add { a: Var, b: Var },
    /// x[..., d] + bias[d], broadcast over leading dims
    AddBias { x: Var, bias: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, factor: f64 },
    /// y = mul * x + add, elementwise
    Affine { x: Var, mul: f64 },
    Relu { x: Var },
    Sigmoid { x: Var },
    /// y = ln(max(x, floor)); gradient is zero where the clamp is active
    LnClamped { x: Var, floor: f64 },
    /// Concatenation along the last dimension; `widths` are the input extents
    ConcatLast { parts: Vec<Var>, widths: Vec<usize> },
    /// Row-stabilized softmax over the last dimension
    SoftmaxRows { x: Var },
    /// Full reduction to a single element
    Sum { x: Var },
    /// Same data, new shape
    Reshape { x: Var },
}

struct Node {
    op: Op,
    tensor: Tensor,
}

/// Append-only computation graph with gradient accumulation.
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

    /// Register an input tensor; participates in backward iff
    /// `tensor.requires_grad` is set.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        self.push(Op::Leaf, tensor)
    }

    /// Register a tensor that never receives gradient.
    pub fn constant(&mut self, mut tensor: Tensor) -> Var {
        tensor.requires_grad = false;
        self.push(Op::Leaf, tensor)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].tensor
    }

    /// Accumulated gradient of `v` after [`Tape::backward`]; `None` when no
    /// gradient flowed to it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].tensor.grad.as_deref()
    }

    /// Smallest |input| across all relu ops recorded so far (infinity when
    /// none ran). Finite-difference checks use this to reject evaluation
    /// points that sit inside an eps window of the relu kink, where the
    /// derivative is not defined and central differences are meaningless.
    pub fn relu_kink_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for node in &self.nodes {
            if let Op::Relu { x } = node.op {
                for &v in self.nodes[x.0].tensor.data() {
                    margin = margin.min(v.abs());
                }
            }
        }
        margin
    }

    fn push(&mut self, op: Op, tensor: Tensor) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node { op, tensor });
        Var(id)
    }

    fn push_checked(&mut self, op: Op, tensor: Tensor, what: &str) -> Result<Var> {
        if !tensor.is_finite() {
            return Err(AvError::NonFinite(format!("{what} produced NaN/Inf")));
        }
        Ok(self.push(op, tensor))
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].tensor.requires_grad
    }

    // ── Forward ops ──────────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(AvError::ShapeMismatch(format!(
                "matmul {sa:?} x {sb:?}"
            )));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        mm(ta.data(), tb.data(), &mut out, m, k, n);
        let mut t = Tensor::new(vec![m, n], out)?;
        t.requires_grad = self.requires(a) || self.requires(b);
        self.push_checked(Op::MatMul { a, b }, t, "matmul")
    }

    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(AvError::ShapeMismatch(format!("bmm {sa:?} x {sb:?}")));
        }
        let (p, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![0.0; p * m * n];
        for i in 0..p {
            mm(
                &self.value(a).data()[i * m * k..(i + 1) * m * k],
                &self.value(b).data()[i * k * n..(i + 1) * k * n],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let mut t = Tensor::new(vec![p, m, n], out)?;
        t.requires_grad = self.requires(a) || self.requires(b);
        self.push_checked(Op::Bmm { a, b }, t, "bmm")
    }

    /// Batched A @ B^T; the score kernel for attention (e.g. Q @ K^T).
    pub fn bmm_tb(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[2] {
            return Err(AvError::ShapeMismatch(format!("bmm_tb {sa:?} x {sb:?}")));
        }
        let (p, m, k, n) = (sa[0], sa[1], sa[2], sb[1]);
        let mut out = vec![0.0; p * m * n];
        for i in 0..p {
            mm_tb(
                &self.value(a).data()[i * m * k..(i + 1) * m * k],
                &self.value(b).data()[i * n * k..(i + 1) * n * k],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                n,
                k,
            );
        }
        let mut t = Tensor::new(vec![p, m, n], out)?;
        t.requires_grad = self.requires(a) || self.requires(b);
        self.push_checked(Op::BmmTransposed { a, b }, t, "bmm_tb")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(AvError::ShapeMismatch(format!(
                "add {:?} + {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let mut t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        t.requires_grad = self.requires(a) || self.requires(b);
        self.push_checked(Op::Add { a, b }, t, "add")
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let d = self.value(x).last_dim();
        if self.value(bias).shape() != [d] {
            return Err(AvError::ShapeMismatch(format!(
                "bias {:?} against last dim {d}",
                self.value(bias).shape()
            )));
        }
        let rows = self.value(x).leading();
        let mut data = self.value(x).data().to_vec();
        for r in 0..rows {
            for (v, b) in data[r * d..(r + 1) * d].iter_mut().zip(self.value(bias).data()) {
                *v += b;
            }
        }
        let mut t = Tensor::new(self.value(x).shape().to_vec(), data)?;
        t.requires_grad = self.requires(x) || self.requires(bias);
        self.push_checked(Op::AddBias { x, bias }, t, "add_bias")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(AvError::ShapeMismatch(format!(
                "mul {:?} * {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let mut t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        t.requires_grad = self.requires(a) || self.requires(b);
        self.push_checked(Op::Mul { a, b }, t, "mul")
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        if !factor.is_finite() {
            return Err(AvError::NonFinite("scale factor".into()));
        }
        self.unary(x, Op::Scale { x, factor }, |v| v * factor, "scale")
    }

    /// Elementwise `mul * x + add`; e.g. `affine(x, -1.0, 1.0)` is `1 - x`.
    pub fn affine(&mut self, x: Var, mul: f64, add: f64) -> Result<Var> {
        if !mul.is_finite() || !add.is_finite() {
            return Err(AvError::NonFinite("affine coefficients".into()));
        }
        self.unary(x, Op::Affine { x, mul }, |v| mul * v + add, "affine")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Relu { x }, |v| v.max(0.0), "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Sigmoid { x }, |v| 1.0 / (1.0 + (-v).exp()), "sigmoid")
    }

    pub fn ln_clamped(&mut self, x: Var, floor: f64) -> Result<Var> {
        if !(floor > 0.0) {
            return Err(AvError::InvalidArgument("ln floor must be positive".into()));
        }
        self.unary(x, Op::LnClamped { x, floor }, |v| v.max(floor).ln(), "ln")
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64, what: &str) -> Result<Var> {
        let data: Vec<f64> = self.value(x).data().iter().map(|&v| f(v)).collect();
        let mut t = Tensor::new(self.value(x).shape().to_vec(), data)?;
        t.requires_grad = self.requires(x);
        self.push_checked(op, t, what)
    }

    /// Concatenate along the last dimension; all leading extents must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(AvError::InvalidArgument("concat of zero tensors".into()));
        }
        let lead_shape = {
            let s = self.value(parts[0]).shape();
            s[..s.len() - 1].to_vec()
        };
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.value(p).shape();
            if s[..s.len() - 1] != lead_shape[..] {
                return Err(AvError::ShapeMismatch(format!(
                    "concat leading shapes differ: {:?} vs {:?}",
                    &s[..s.len() - 1],
                    lead_shape
                )));
            }
            widths.push(*s.last().unwrap());
        }
        let rows: usize = lead_shape.iter().product();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead_shape;
        shape.push(total);
        let mut t = Tensor::new(shape, data)?;
        t.requires_grad = parts.iter().any(|&p| self.requires(p));
        self.push_checked(
            Op::ConcatLast {
                parts: parts.to_vec(),
                widths,
            },
            t,
            "concat",
        )
    }

    /// Softmax over the last dimension, stabilized by per-row max
    /// subtraction. Each output row is nonnegative and sums to 1.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let c = self.value(x).last_dim();
        let rows = self.value(x).leading();
        let mut data = self.value(x).data().to_vec();
        for r in 0..rows {
            let row = &mut data[r * c..(r + 1) * c];
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let mut t = Tensor::new(self.value(x).shape().to_vec(), data)?;
        t.requires_grad = self.requires(x);
        self.push_checked(Op::SoftmaxRows { x }, t, "softmax")
    }

    /// Sum of all elements, as a single-element tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let mut acc = 0.0;
        for &v in self.value(x).data() {
            acc += v;
        }
        let mut t = Tensor::new(vec![1], vec![acc])?;
        t.requires_grad = self.requires(x);
        self.push_checked(Op::Sum { x }, t, "sum")
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).numel() {
            return Err(AvError::ShapeMismatch(format!(
                "reshape {:?} -> {shape:?}",
                self.value(x).shape()
            )));
        }
        let mut t = Tensor::new(shape, self.value(x).data().to_vec())?;
        t.requires_grad = self.requires(x);
        Ok(self.push(Op::Reshape { x }, t))
    }

    // ── Backward ─────────────────────────────────────────────────────

    /// Accumulate d(root)/d(leaf) into every grad-tracking node, replaying
    /// the tape in reverse. `root` must be a single-element tensor.
    /// Gradients add across fan-out.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if !self.value(root).is_scalar() {
            return Err(AvError::ShapeMismatch(format!(
                "backward root must be scalar, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[root.0] = Some(vec![1.0]);

        for id in (0..n).rev() {
            if !self.nodes[id].tensor.requires_grad {
                continue;
            }
            let Some(dout) = grads[id].take() else {
                continue;
            };
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf => {
                    grads[id] = Some(dout); // keep for extraction below
                    continue;
                }
                Op::MatMul { a, b } => {
                    let (m, k) = {
                        let s = self.nodes[a.0].tensor.shape();
                        (s[0], s[1])
                    };
                    let nn = self.nodes[b.0].tensor.shape()[1];
                    if self.requires(a) {
                        let mut da = vec![0.0; m * k];
                        mm_tb(&dout, self.nodes[b.0].tensor.data(), &mut da, m, k, nn);
                        accumulate(&mut grads[a.0], &da);
                    }
                    if self.requires(b) {
                        let mut db = vec![0.0; k * nn];
                        mm_ta(self.nodes[a.0].tensor.data(), &dout, &mut db, m, k, nn);
                        accumulate(&mut grads[b.0], &db);
                    }
                }
                Op::Bmm { a, b } => {
                    let (p, m, k) = {
                        let s = self.nodes[a.0].tensor.shape();
                        (s[0], s[1], s[2])
                    };
                    let nn = self.nodes[b.0].tensor.shape()[2];
                    if self.requires(a) {
                        let mut da = vec![0.0; p * m * k];
                        for i in 0..p {
                            mm_tb(
                                &dout[i * m * nn..(i + 1) * m * nn],
                                &self.nodes[b.0].tensor.data()[i * k * nn..(i + 1) * k * nn],
                                &mut da[i * m * k..(i + 1) * m * k],
                                m,
                                k,
                                nn,
                            );
                        }
                        accumulate(&mut grads[a.0], &da);
                    }
                    if self.requires(b) {
                        let mut db = vec![0.0; p * k * nn];
                        for i in 0..p {
                            mm_ta(
                                &self.nodes[a.0].tensor.data()[i * m * k..(i + 1) * m * k],
                                &dout[i * m * nn..(i + 1) * m * nn],
                                &mut db[i * k * nn..(i + 1) * k * nn],
                                m,
                                k,
                                nn,
                            );
                        }
                        accumulate(&mut grads[b.0], &db);
                    }
                }
                Op::BmmTransposed { a, b } => {
                    let (p, m, k) = {
                        let s = self.nodes[a.0].tensor.shape();
                        (s[0], s[1], s[2])
                    };
                    let nn = self.nodes[b.0].tensor.shape()[1];
                    if self.requires(a) {
                        let mut da = vec![0.0; p * m * k];
                        for i in 0..p {
                            mm(
                                &dout[i * m * nn..(i + 1) * m * nn],
                                &self.nodes[b.0].tensor.data()[i * nn * k..(i + 1) * nn * k],
                                &mut da[i * m * k..(i + 1) * m * k],
                                m,
                                nn,
                                k,
                            );
                        }
                        accumulate(&mut grads[a.0], &da);
                    }
                    if self.requires(b) {
                        let mut db = vec![0.0; p * nn * k];
                        for i in 0..p {
                            mm_ta(
                                &dout[i * m * nn..(i + 1) * m * nn],
                                &self.nodes[a.0].tensor.data()[i * m * k..(i + 1) * m * k],
                                &mut db[i * nn * k..(i + 1) * nn * k],
                                m,
                                nn,
                                k,
                            );
                        }
                        accumulate(&mut grads[b.0], &db);
                    }
                }
                Op::Add { a, b } => {
                    if self.requires(a) {
                        accumulate(&mut grads[a.0], &dout);
                    }
                    if self.requires(b) {
                        accumulate(&mut grads[b.0], &dout);
                    }
                }
                Op::AddBias { x, bias } => {
                    if self.requires(x) {
                        accumulate(&mut grads[x.0], &dout);
                    }
                    if self.requires(bias) {
                        let d = self.nodes[bias.0].tensor.numel();
                        let mut db = vec![0.0; d];
                        for (r, chunk) in dout.chunks(d).enumerate() {
                            let _ = r;
                            for (acc, g) in db.iter_mut().zip(chunk) {
                                *acc += g;
                            }
                        }
                        accumulate(&mut grads[bias.0], &db);
                    }
                }
                Op::Mul { a, b } => {
                    if self.requires(a) {
                        let da: Vec<f64> = dout
                            .iter()
                            .zip(self.nodes[b.0].tensor.data())
                            .map(|(g, v)| g * v)
                            .collect();
                        accumulate(&mut grads[a.0], &da);
                    }
                    if self.requires(b) {
                        let db: Vec<f64> = dout
                            .iter()
                            .zip(self.nodes[a.0].tensor.data())
                            .map(|(g, v)| g * v)
                            .collect();
                        accumulate(&mut grads[b.0], &db);
                    }
                }
                Op::Scale { x, factor } => {
                    let dx: Vec<f64> = dout.iter().map(|g| g * factor).collect();
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::Affine { x, mul } => {
                    let dx: Vec<f64> = dout.iter().map(|g| g * mul).collect();
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::Relu { x } => {
                    let dx: Vec<f64> = dout
                        .iter()
                        .zip(self.nodes[x.0].tensor.data())
                        .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::Sigmoid { x } => {
                    let dx: Vec<f64> = dout
                        .iter()
                        .zip(self.nodes[id].tensor.data())
                        .map(|(g, &y)| g * y * (1.0 - y))
                        .collect();
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::LnClamped { x, floor } => {
                    let dx: Vec<f64> = dout
                        .iter()
                        .zip(self.nodes[x.0].tensor.data())
                        .map(|(g, &v)| if v > floor { g / v } else { 0.0 })
                        .collect();
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::ConcatLast { parts, widths } => {
                    let total: usize = widths.iter().sum();
                    let rows = dout.len() / total;
                    let mut offset = 0;
                    for (&p, &w) in parts.iter().zip(&widths) {
                        if self.requires(p) {
                            let mut dp = Vec::with_capacity(rows * w);
                            for r in 0..rows {
                                dp.extend_from_slice(&dout[r * total + offset..r * total + offset + w]);
                            }
                            accumulate(&mut grads[p.0], &dp);
                        }
                        offset += w;
                    }
                }
                Op::SoftmaxRows { x } => {
                    let y = self.nodes[id].tensor.data();
                    let c = self.nodes[id].tensor.last_dim();
                    let mut dx = vec![0.0; y.len()];
                    for r in 0..y.len() / c {
                        let ys = &y[r * c..(r + 1) * c];
                        let gs = &dout[r * c..(r + 1) * c];
                        let mut dot = 0.0;
                        for (g, yv) in gs.iter().zip(ys) {
                            dot += g * yv;
                        }
                        for ((dv, g), yv) in dx[r * c..(r + 1) * c].iter_mut().zip(gs).zip(ys) {
                            *dv = yv * (g - dot);
                        }
                    }
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::Sum { x } => {
                    let dx = vec![dout[0]; self.nodes[x.0].tensor.numel()];
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::Reshape { x } => {
                    accumulate(&mut grads[x.0], &dout);
                }
            }
        }

        for (node, grad) in self.nodes.iter_mut().zip(grads) {
            if node.tensor.requires_grad {
                node.tensor.grad = grad;
            }
        }
        Ok(())
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, grad: &[f64]) {
    match slot {
        Some(existing) => {
            for (acc, g) in existing.iter_mut().zip(grad) {
                *acc += g;
            }
        }
        None => *slot = Some(grad.to_vec()),
    }
}

// ── Matrix kernels ───────────────────────────────────────────────────
//
// Each output element is a dot product accumulated over ascending inner
// index; the loop nests below only reorder which outputs are produced
// when, never the per-element summation order.

/// C += A @ B, A: [m,k], B: [k,n], C zero-initialized by the caller.
fn mm(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), m * n);
    parallel::for_each_row_chunk(c, n, parallel::effective_threads(), |row0, chunk| {
        for (i, crow) in chunk.chunks_mut(n).enumerate() {
            let arow = &a[(row0 + i) * k..(row0 + i + 1) * k];
            for (t, &av) in arow.iter().enumerate() {
                let brow = &b[t * n..(t + 1) * n];
                for (cv, &bv) in crow.iter_mut().zip(brow) {
                    *cv += av * bv;
                }
            }
        }
    });
}

/// C += A @ B^T, A: [m,k], B: [n,k].
fn mm_tb(a: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize) {
    debug_assert_eq!(c.len(), m * n);
    parallel::for_each_row_chunk(c, n, parallel::effective_threads(), |row0, chunk| {
        for (i, crow) in chunk.chunks_mut(n).enumerate() {
            let arow = &a[(row0 + i) * k..(row0 + i + 1) * k];
            for (cv, brow) in crow.iter_mut().zip(b.chunks(k)) {
                let mut acc = 0.0;
                for (&av, &bv) in arow.iter().zip(brow) {
                    acc += av * bv;
                }
                *cv += acc;
            }
        }
    });
}

/// C += A^T @ B, A: [m,k], B: [m,n], C: [k,n]. Accumulates over rows of A
/// in ascending order; kept sequential so the sum order is fixed.
fn mm_ta(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (t, &av) in arow.iter().enumerate() {
            let crow = &mut c[t * n..(t + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}
