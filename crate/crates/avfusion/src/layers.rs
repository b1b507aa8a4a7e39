//! Network building blocks: fully connected layers, residual and gated
//! residual blocks, single-head self- and cross-modal attention, inverted
//! dropout, and the per-class sigmoid classifier head.
//!
//! Parameters are plain tensors owned by the model; `register` puts them on
//! a tape for one forward/backward pass. Layers never mutate parameters.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{AvError, Result};
use crate::rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::None => "none",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

/// Uniform init with He scaling for relu fan-in, Xavier otherwise.
fn init_weight(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Tensor {
    let limit = match activation {
        Activation::Relu => (6.0 / in_dim as f64).sqrt(),
        _ => (6.0 / (in_dim + out_dim) as f64).sqrt(),
    };
    let data: Vec<f64> = (0..in_dim * out_dim)
        .map(|_| rng.gen_range(-limit..limit))
        .collect();
    Tensor::new(vec![in_dim, out_dim], data).expect("finite init")
}

// ── Fully connected ──────────────────────────────────────────────────

/// Weights of one fully connected layer: `activation(x W + b)`.
#[derive(Debug, Clone)]
pub struct FcParams {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

/// Initial bias for a layer with the given activation. Relu layers start
/// with a small positive bias: a fully dead input row would otherwise pin
/// later preactivations exactly on the relu kink (and keep whole rows dark
/// at the start of training).
pub fn init_bias(out_dim: usize, activation: Activation) -> Tensor {
    match activation {
        Activation::Relu => Tensor::new(vec![out_dim], vec![0.01; out_dim]).expect("finite"),
        _ => Tensor::zeros(vec![out_dim]),
    }
}

impl FcParams {
    pub fn init(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        FcParams {
            weight: init_weight(in_dim, out_dim, activation, rng),
            bias: init_bias(out_dim, activation),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn register(&self, tape: &mut Tape, trainable: bool) -> FcVars {
        let mut w = self.weight.clone();
        let mut b = self.bias.clone();
        w.requires_grad = trainable;
        b.requires_grad = trainable;
        FcVars {
            weight: tape.leaf(w),
            bias: tape.leaf(b),
            activation: self.activation,
        }
    }
}

/// Tape handles for one registered FC layer.
#[derive(Debug, Clone, Copy)]
pub struct FcVars {
    pub weight: Var,
    pub bias: Var,
    pub activation: Activation,
}

/// `activation(x W + b)`, bias broadcast over rows. Accepts any leading
/// shape; only the last dimension must match the weight's input extent.
pub fn fc_forward(tape: &mut Tape, x: Var, p: &FcVars) -> Result<Var> {
    let shape = tape.value(x).shape().to_vec();
    let in_dim = tape.value(p.weight).shape()[0];
    let out_dim = tape.value(p.weight).shape()[1];
    if *shape.last().unwrap() != in_dim {
        return Err(AvError::ShapeMismatch(format!(
            "fc input {shape:?} against weight [{in_dim}, {out_dim}]"
        )));
    }
    let rows = tape.value(x).leading();
    let x2 = if shape.len() == 2 {
        x
    } else {
        tape.reshape(x, vec![rows, in_dim])?
    };
    let h = tape.matmul(x2, p.weight)?;
    let h = tape.add_bias(h, p.bias)?;
    let h = match p.activation {
        Activation::None => h,
        Activation::Relu => tape.relu(h)?,
        Activation::Sigmoid => tape.sigmoid(h)?,
    };
    if shape.len() == 2 {
        Ok(h)
    } else {
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = out_dim;
        tape.reshape(h, out_shape)
    }
}

// ── Residual blocks ──────────────────────────────────────────────────

/// The learned mapping of a residual block; the skip connection requires
/// the first input extent to equal the last output extent.
#[derive(Debug, Clone)]
pub struct ResidualParams {
    pub inner: Vec<FcParams>,
}

impl ResidualParams {
    pub fn new(inner: Vec<FcParams>) -> Result<Self> {
        let first = inner
            .first()
            .ok_or_else(|| AvError::InvalidArgument("residual block needs inner layers".into()))?;
        let last = inner.last().unwrap();
        if first.in_dim() != last.out_dim() {
            return Err(AvError::ShapeMismatch(format!(
                "residual mapping {} -> {} cannot be skip-added",
                first.in_dim(),
                last.out_dim()
            )));
        }
        Ok(ResidualParams { inner })
    }

    /// Two-layer mapping at a fixed width: relu then linear.
    pub fn two_layer(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        ResidualParams {
            inner: vec![
                FcParams::init(dim, dim, Activation::Relu, rng),
                FcParams::init(dim, dim, Activation::None, rng),
            ],
        }
    }

    pub fn register(&self, tape: &mut Tape, trainable: bool) -> ResidualVars {
        ResidualVars {
            inner: self.inner.iter().map(|p| p.register(tape, trainable)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ResidualVars {
    pub inner: Vec<FcVars>,
}

fn residual_mapping(tape: &mut Tape, x: Var, p: &ResidualVars) -> Result<Var> {
    let mut h = x;
    for fc in &p.inner {
        h = fc_forward(tape, h, fc)?;
    }
    Ok(h)
}

/// `y = F(x) + x`.
pub fn residual_block(tape: &mut Tape, x: Var, p: &ResidualVars) -> Result<Var> {
    let f = residual_mapping(tape, x, p)?;
    tape.add(f, x)
}

/// Gate weights: `g = sigmoid(x W_g + b_g)`.
#[derive(Debug, Clone)]
pub struct GateParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl GateParams {
    pub fn init(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        GateParams {
            weight: init_weight(dim, dim, Activation::Sigmoid, rng),
            bias: Tensor::zeros(vec![dim]),
        }
    }

    pub fn register(&self, tape: &mut Tape, trainable: bool) -> GateVars {
        let mut w = self.weight.clone();
        let mut b = self.bias.clone();
        w.requires_grad = trainable;
        b.requires_grad = trainable;
        GateVars {
            weight: tape.leaf(w),
            bias: tape.leaf(b),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GateVars {
    pub weight: Var,
    pub bias: Var,
}

/// `y = g * F(x) + (1 - g) * x` with `g = sigmoid(x W_g + b_g)` computed
/// row-wise. The gate interpolates between the mapping and the identity.
pub fn gated_residual_block(tape: &mut Tape, x: Var, p: &ResidualVars, gate: &GateVars) -> Result<Var> {
    let pre = tape.matmul(x, gate.weight)?;
    let pre = tape.add_bias(pre, gate.bias)?;
    let g = tape.sigmoid(pre)?;
    let f = residual_mapping(tape, x, p)?;
    let gated_f = tape.mul(g, f)?;
    let one_minus_g = tape.affine(g, -1.0, 1.0)?;
    let gated_x = tape.mul(one_minus_g, x)?;
    tape.add(gated_f, gated_x)
}

// ── Attention ────────────────────────────────────────────────────────

/// Query/key/value projections of one attention head, all `d x d`.
#[derive(Debug, Clone)]
pub struct AttnParams {
    pub w_query: Tensor,
    pub w_key: Tensor,
    pub w_value: Tensor,
}

impl AttnParams {
    pub fn init(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        AttnParams {
            w_query: init_weight(dim, dim, Activation::None, rng),
            w_key: init_weight(dim, dim, Activation::None, rng),
            w_value: init_weight(dim, dim, Activation::None, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.w_query.shape()[0]
    }

    pub fn register(&self, tape: &mut Tape, trainable: bool) -> AttnVars {
        let mut reg = |t: &Tensor| {
            let mut t = t.clone();
            t.requires_grad = trainable;
            tape.leaf(t)
        };
        AttnVars {
            w_query: reg(&self.w_query),
            w_key: reg(&self.w_key),
            w_value: reg(&self.w_value),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AttnVars {
    pub w_query: Var,
    pub w_key: Var,
    pub w_value: Var,
}

/// Project the last dimension of a `[batch, n, d]` tensor through a `[d, d]`
/// weight, shared across batch and rows.
fn project(tape: &mut Tape, x: Var, w: Var) -> Result<Var> {
    let shape = tape.value(x).shape().to_vec();
    let d = *shape.last().unwrap();
    let rows = tape.value(x).leading();
    let flat = tape.reshape(x, vec![rows, d])?;
    let p = tape.matmul(flat, w)?;
    tape.reshape(p, shape)
}

fn as_batched(tape: &mut Tape, x: Var) -> Result<(Var, bool)> {
    match tape.value(x).shape().len() {
        2 => {
            let s = tape.value(x).shape().to_vec();
            Ok((tape.reshape(x, vec![1, s[0], s[1]])?, true))
        }
        3 => Ok((x, false)),
        other => Err(AvError::ShapeMismatch(format!(
            "attention input must be rank 2 or 3, got rank {other}"
        ))),
    }
}

/// One attention direction: queries from `xq` attend over keys/values from
/// `xkv`; `softmax(Q K^T / sqrt(d)) V`.
fn attention_direction(
    tape: &mut Tape,
    xq: Var,
    xkv: Var,
    w_query: Var,
    w_key: Var,
    w_value: Var,
) -> Result<Var> {
    let (xq, squeeze) = as_batched(tape, xq)?;
    let (xkv, _) = as_batched(tape, xkv)?;
    let dq = tape.value(xq).last_dim();
    let dk = tape.value(xkv).last_dim();
    if dq != dk {
        return Err(AvError::ShapeMismatch(format!(
            "attention feature dims differ: {dq} vs {dk}"
        )));
    }
    let q = project(tape, xq, w_query)?;
    let k = project(tape, xkv, w_key)?;
    let v = project(tape, xkv, w_value)?;
    let scores = tape.bmm_tb(q, k)?;
    let scores = tape.scale(scores, 1.0 / (dq as f64).sqrt())?;
    let weights = tape.softmax_rows(scores)?;
    let out = tape.bmm(weights, v)?;
    if squeeze {
        let s = tape.value(out).shape().to_vec();
        tape.reshape(out, vec![s[1], s[2]])
    } else {
        Ok(out)
    }
}

/// Self-attention over the rows of `x` (`[n, d]` or `[batch, n, d]`).
pub fn self_attention(tape: &mut Tape, x: Var, p: &AttnVars) -> Result<Var> {
    attention_direction(tape, x, x, p.w_query, p.w_key, p.w_value)
}

/// Cross-modal attention between two row sets with a shared feature dim.
/// Returns the pair (keys/values from `xv` guided by `xa` queries,
/// keys/values from `xa` guided by `xv` queries).
pub fn cross_modal_attention(
    tape: &mut Tape,
    xa: Var,
    xv: Var,
    pa: &AttnVars,
    pv: &AttnVars,
) -> Result<(Var, Var)> {
    let v_given_a = attention_direction(tape, xa, xv, pa.w_query, pv.w_key, pv.w_value)?;
    let a_given_v = attention_direction(tape, xv, xa, pv.w_query, pa.w_key, pa.w_value)?;
    Ok((v_given_a, a_given_v))
}

// ── Dropout ──────────────────────────────────────────────────────────

/// Inverted dropout: during training each element is zeroed with
/// probability `rate` and survivors are scaled by `1/(1-rate)`; at
/// inference the input is returned untouched.
pub fn dropout(tape: &mut Tape, x: Var, rate: f64, seed: u64, training: bool) -> Result<Var> {
    if !(0.0..1.0).contains(&rate) {
        return Err(AvError::InvalidArgument(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    if !training || rate == 0.0 {
        return Ok(x);
    }
    let mut r = rng::rng(seed);
    let keep_scale = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..tape.value(x).numel())
        .map(|_| if r.gen::<f64>() < rate { 0.0 } else { keep_scale })
        .collect();
    let mask = tape.constant(Tensor::new(tape.value(x).shape().to_vec(), mask)?);
    tape.mul(x, mask)
}

// ── Classifier head ──────────────────────────────────────────────────

/// Per-class sigmoid output layer for multi-label prediction; class
/// probabilities are independent, with no normalization across classes.
pub fn classifier_head(tape: &mut Tape, x: Var, p: &FcVars) -> Result<Var> {
    if p.activation != Activation::Sigmoid {
        return Err(AvError::InvalidArgument(
            "classifier head requires sigmoid activation".into(),
        ));
    }
    fc_forward(tape, x, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::gradcheck;

    fn t2(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    fn random_tensor(shape: Vec<usize>, r: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn fc_identity_weights() {
        let mut tape = Tape::new();
        let x = tape.constant(t2(&[vec![0.3, -0.8], vec![2.0, 5.5]]));
        let p = FcParams {
            weight: t2(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
            bias: Tensor::zeros(vec![2]),
            activation: Activation::None,
        };
        let pv = p.register(&mut tape, false);
        let y = fc_forward(&mut tape, x, &pv).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(x).data());
    }

    #[test]
    fn fc_relu_clips() {
        // [1,1] @ [[1],[1]] + [-3] = [-1] -> relu -> [0]
        let mut tape = Tape::new();
        let x = tape.constant(t2(&[vec![1.0, 1.0]]));
        let p = FcParams {
            weight: t2(&[vec![1.0], vec![1.0]]),
            bias: Tensor::new(vec![1], vec![-3.0]).unwrap(),
            activation: Activation::Relu,
        };
        let pv = p.register(&mut tape, false);
        let y = fc_forward(&mut tape, x, &pv).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0]);
    }

    #[test]
    fn fc_zero_input_yields_bias() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(vec![2, 3]));
        let p = FcParams {
            weight: random_tensor(vec![3, 2], &mut rng::rng(5)),
            bias: Tensor::new(vec![2], vec![0.7, -1.1]).unwrap(),
            activation: Activation::None,
        };
        let pv = p.register(&mut tape, false);
        let y = fc_forward(&mut tape, x, &pv).unwrap();
        assert_eq!(tape.value(y).data(), &[0.7, -1.1, 0.7, -1.1]);
    }

    #[test]
    fn residual_zero_mapping_is_identity() {
        let mut tape = Tape::new();
        let x = tape.constant(t2(&[vec![1.5, -2.0, 0.25]]));
        let p = ResidualParams::new(vec![
            FcParams {
                weight: Tensor::zeros(vec![3, 3]),
                bias: Tensor::zeros(vec![3]),
                activation: Activation::Relu,
            },
            FcParams {
                weight: Tensor::zeros(vec![3, 3]),
                bias: Tensor::zeros(vec![3]),
                activation: Activation::None,
            },
        ])
        .unwrap();
        let pv = p.register(&mut tape, false);
        let y = residual_block(&mut tape, x, &pv).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(x).data());
    }

    #[test]
    fn residual_hand_evaluated() {
        // d=1, x=[2], single inner layer w=0.5, relu: F=1, y=3
        let mut tape = Tape::new();
        let x = tape.constant(t2(&[vec![2.0]]));
        let p = ResidualParams::new(vec![FcParams {
            weight: t2(&[vec![0.5]]),
            bias: Tensor::zeros(vec![1]),
            activation: Activation::Relu,
        }])
        .unwrap();
        let pv = p.register(&mut tape, false);
        let y = residual_block(&mut tape, x, &pv).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0]);
    }

    #[test]
    fn residual_rejects_width_change() {
        let mut r = rng::rng(0);
        let err = ResidualParams::new(vec![FcParams::init(3, 4, Activation::Relu, &mut r)]);
        assert!(matches!(err, Err(AvError::ShapeMismatch(_))));
    }

    #[test]
    fn gate_at_sigmoid_midpoint_averages() {
        let mut r = rng::rng(9);
        let res = ResidualParams::two_layer(3, &mut r);
        let gate = GateParams {
            weight: Tensor::zeros(vec![3, 3]),
            bias: Tensor::zeros(vec![3]),
        };
        let x = random_tensor(vec![2, 3], &mut r);

        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let rv = res.register(&mut tape, false);
        let gv = gate.register(&mut tape, false);
        let y = gated_residual_block(&mut tape, xv, &rv, &gv).unwrap();
        let f = residual_mapping(&mut tape, xv, &rv).unwrap();
        for i in 0..6 {
            let expect = 0.5 * tape.value(f).data()[i] + 0.5 * x.data()[i];
            assert!((tape.value(y).data()[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn gate_saturation_limits() {
        let mut r = rng::rng(10);
        let res = ResidualParams::two_layer(3, &mut r);
        let x = random_tensor(vec![2, 3], &mut r);
        for (bias, toward_mapping) in [(-50.0, false), (50.0, true)] {
            let gate = GateParams {
                weight: Tensor::zeros(vec![3, 3]),
                bias: Tensor::new(vec![3], vec![bias; 3]).unwrap(),
            };
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let rv = res.register(&mut tape, false);
            let gv = gate.register(&mut tape, false);
            let y = gated_residual_block(&mut tape, xv, &rv, &gv).unwrap();
            let f = residual_mapping(&mut tape, xv, &rv).unwrap();
            for i in 0..6 {
                let expect = if toward_mapping {
                    tape.value(f).data()[i]
                } else {
                    x.data()[i]
                };
                assert!((tape.value(y).data()[i] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gate_output_is_convex_combination() {
        let mut r = rng::rng(21);
        for _ in 0..20 {
            let res = ResidualParams::two_layer(4, &mut r);
            let gate = GateParams::init(4, &mut r);
            let x = random_tensor(vec![3, 4], &mut r);
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let rv = res.register(&mut tape, false);
            let gv = gate.register(&mut tape, false);
            let y = gated_residual_block(&mut tape, xv, &rv, &gv).unwrap();
            let f = residual_mapping(&mut tape, xv, &rv).unwrap();
            for i in 0..12 {
                let lo = tape.value(f).data()[i].min(x.data()[i]) - 1e-12;
                let hi = tape.value(f).data()[i].max(x.data()[i]) + 1e-12;
                let v = tape.value(y).data()[i];
                assert!(v >= lo && v <= hi, "coordinate {i} outside [{lo}, {hi}]: {v}");
            }
        }
    }

    #[test]
    fn attention_single_row_copies_value_projection() {
        let mut r = rng::rng(2);
        let p = AttnParams::init(3, &mut r);
        let x = random_tensor(vec![1, 3], &mut r);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let pv = p.register(&mut tape, false);
        let y = self_attention(&mut tape, xv, &pv).unwrap();
        let xv2 = tape.constant(x);
        let wv = tape.constant(p.w_value.clone());
        let expect = tape.matmul(xv2, wv).unwrap();
        for i in 0..3 {
            assert!((tape.value(y).data()[i] - tape.value(expect).data()[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn attention_identical_rows_give_identical_outputs() {
        let mut r = rng::rng(3);
        let p = AttnParams::init(4, &mut r);
        let row: Vec<f64> = (0..4).map(|_| r.gen_range(-1.0..1.0)).collect();
        let x = t2(&[row.clone(), row.clone(), row]);
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let pv = p.register(&mut tape, false);
        let y = self_attention(&mut tape, xv, &pv).unwrap();
        let out = tape.value(y).data();
        assert_eq!(&out[0..4], &out[4..8]);
        assert_eq!(&out[4..8], &out[8..12]);
    }

    #[test]
    fn attention_matches_brute_force_expansion() {
        // d=2, X=I, all projections identity: weights are the row softmax of
        // X X^T / sqrt(2), output = weights @ X.
        let mut tape = Tape::new();
        let x = tape.constant(t2(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let eye = t2(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let p = AttnParams {
            w_query: eye.clone(),
            w_key: eye.clone(),
            w_value: eye,
        };
        let pv = p.register(&mut tape, false);
        let y = self_attention(&mut tape, x, &pv).unwrap();

        let s = 1.0 / 2.0f64.sqrt();
        let e_hi = s.exp();
        let e_lo = 0.0f64.exp();
        let w_hi = e_hi / (e_hi + e_lo);
        let w_lo = e_lo / (e_hi + e_lo);
        let expect = [w_hi, w_lo, w_lo, w_hi];
        for (got, want) in tape.value(y).data().iter().zip(expect) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
    }

    #[test]
    fn attention_invariant_to_logit_shift() {
        // Replicate the pipeline with a constant added to every score row;
        // softmax shift invariance must leave the output unchanged.
        let mut r = rng::rng(4);
        let p = AttnParams::init(3, &mut r);
        let x = random_tensor(vec![4, 3], &mut r);
        let run = |shift: f64| {
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let pv = p.register(&mut tape, false);
            let q = tape.matmul(xv, pv.w_query).unwrap();
            let k = tape.matmul(xv, pv.w_key).unwrap();
            let v = tape.matmul(xv, pv.w_value).unwrap();
            let q3 = tape.reshape(q, vec![1, 4, 3]).unwrap();
            let k3 = tape.reshape(k, vec![1, 4, 3]).unwrap();
            let scores = tape.bmm_tb(q3, k3).unwrap();
            let scores = tape.scale(scores, 1.0 / 3.0f64.sqrt()).unwrap();
            let shifted = tape.affine(scores, 1.0, shift).unwrap();
            let w = tape.softmax_rows(shifted).unwrap();
            let v3 = tape.reshape(v, vec![1, 4, 3]).unwrap();
            let out = tape.bmm(w, v3).unwrap();
            tape.value(out).data().to_vec()
        };
        let base = run(0.0);
        let shifted = run(7.5);
        for (a, b) in base.iter().zip(&shifted) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_modal_single_key_collapses_to_value_row() {
        let mut r = rng::rng(6);
        let pa = AttnParams::init(3, &mut r);
        let pv = AttnParams::init(3, &mut r);
        let xa = random_tensor(vec![4, 3], &mut r);
        let xv = random_tensor(vec![1, 3], &mut r);
        let mut tape = Tape::new();
        let a = tape.constant(xa);
        let v = tape.constant(xv.clone());
        let pav = pa.register(&mut tape, false);
        let pvv = pv.register(&mut tape, false);
        let (v_given_a, _) = cross_modal_attention(&mut tape, a, v, &pav, &pvv).unwrap();
        let vv = tape.constant(xv);
        let wv = tape.constant(pv.w_value.clone());
        let expect = tape.matmul(vv, wv).unwrap();
        let out = tape.value(v_given_a).data();
        for row in 0..4 {
            for col in 0..3 {
                assert!((out[row * 3 + col] - tape.value(expect).data()[col]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cross_modal_degenerates_to_self_attention() {
        let mut r = rng::rng(7);
        let p = AttnParams::init(4, &mut r);
        let x = random_tensor(vec![3, 4], &mut r);
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let pv = p.register(&mut tape, false);
        let (v_given_a, a_given_v) = cross_modal_attention(&mut tape, xv, xv, &pv, &pv).unwrap();
        let selfa = self_attention(&mut tape, xv, &pv).unwrap();
        assert_eq!(tape.value(v_given_a).data(), tape.value(selfa).data());
        assert_eq!(tape.value(a_given_v).data(), tape.value(selfa).data());
    }

    #[test]
    fn cross_modal_matches_literal_transcription() {
        // 2x2 case evaluated against a by-hand expansion of the two
        // attention directions.
        let mut r = rng::rng(8);
        let pa = AttnParams::init(2, &mut r);
        let pv = AttnParams::init(2, &mut r);
        let xa = random_tensor(vec![2, 2], &mut r);
        let xv = random_tensor(vec![2, 2], &mut r);

        let mm2 = |x: &Tensor, w: &Tensor| -> Vec<f64> {
            let (xd, wd) = (x.data(), w.data());
            let mut out = vec![0.0; 4];
            for i in 0..2 {
                for j in 0..2 {
                    out[i * 2 + j] = xd[i * 2] * wd[j] + xd[i * 2 + 1] * wd[2 + j];
                }
            }
            out
        };
        let oracle = |xq: &Tensor, xkv: &Tensor, wq: &Tensor, wk: &Tensor, wv: &Tensor| {
            let q = mm2(xq, wq);
            let k = mm2(xkv, wk);
            let v = mm2(xkv, wv);
            let mut out = vec![0.0; 4];
            for i in 0..2 {
                let s0 = (q[i * 2] * k[0] + q[i * 2 + 1] * k[1]) / 2.0f64.sqrt();
                let s1 = (q[i * 2] * k[2] + q[i * 2 + 1] * k[3]) / 2.0f64.sqrt();
                let m = s0.max(s1);
                let (e0, e1) = ((s0 - m).exp(), (s1 - m).exp());
                let z = e0 + e1;
                let (w0, w1) = (e0 / z, e1 / z);
                out[i * 2] = w0 * v[0] + w1 * v[2];
                out[i * 2 + 1] = w0 * v[1] + w1 * v[3];
            }
            out
        };

        let mut tape = Tape::new();
        let a = tape.constant(xa.clone());
        let v = tape.constant(xv.clone());
        let pav = pa.register(&mut tape, false);
        let pvv = pv.register(&mut tape, false);
        let (v_given_a, a_given_v) = cross_modal_attention(&mut tape, a, v, &pav, &pvv).unwrap();

        let want_va = oracle(&xa, &xv, &pa.w_query, &pv.w_key, &pv.w_value);
        let want_av = oracle(&xv, &xa, &pv.w_query, &pa.w_key, &pa.w_value);
        for (got, want) in tape.value(v_given_a).data().iter().zip(&want_va) {
            assert!((got - want).abs() < 1e-14);
        }
        for (got, want) in tape.value(a_given_v).data().iter().zip(&want_av) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn dropout_identity_cases() {
        let mut r = rng::rng(12);
        let x = random_tensor(vec![4, 4], &mut r);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let inference = dropout(&mut tape, xv, 0.4, 1, false).unwrap();
        assert_eq!(inference, xv); // inference is the same node, bitwise identity
        let zero_rate = dropout(&mut tape, xv, 0.0, 1, true).unwrap();
        assert_eq!(zero_rate, xv);
        assert!(dropout(&mut tape, xv, 1.0, 1, true).is_err());
    }

    #[test]
    fn dropout_monte_carlo_unbiased() {
        let n = 1_000_000;
        let x = Tensor::new(vec![n], vec![1.0; n]).unwrap();
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let y = dropout(&mut tape, xv, 0.4, 99, true).unwrap();
        let out = tape.value(y).data();
        let survivors = out.iter().filter(|&&v| v != 0.0).count() as f64 / n as f64;
        assert!((survivors - 0.6).abs() < 0.01, "survival rate {survivors}");
        let mean: f64 = out.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn classifier_zero_params_give_half() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(vec![2, 3]));
        let p = FcParams {
            weight: Tensor::zeros(vec![3, 4]),
            bias: Tensor::zeros(vec![4]),
            activation: Activation::Sigmoid,
        };
        let pv = p.register(&mut tape, false);
        let y = classifier_head(&mut tape, x, &pv).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn classifier_saturates_and_is_unnormalized() {
        let mut r = rng::rng(13);
        let mut p = FcParams::init(3, 4, Activation::Sigmoid, &mut r);
        p.bias.data_mut()[2] = 30.0;
        let x = random_tensor(vec![2, 3], &mut r);
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let pv = p.register(&mut tape, false);
        let y = classifier_head(&mut tape, xv, &pv).unwrap();
        let out = tape.value(y).data();
        assert!(out[2] > 0.999 && out[6] > 0.999);
        let row_sum: f64 = out[0..4].iter().sum();
        assert!((row_sum - 1.0).abs() > 1e-3, "multi-label rows do not normalize");
        assert!(out.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn classifier_requires_sigmoid() {
        let mut r = rng::rng(14);
        let p = FcParams::init(2, 2, Activation::Relu, &mut r);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(vec![1, 2]));
        let pv = p.register(&mut tape, false);
        assert!(matches!(
            classifier_head(&mut tape, x, &pv),
            Err(AvError::InvalidArgument(_))
        ));
    }

    #[test]
    fn all_layers_pass_gradcheck_small_shapes() {
        for seed in 0..5u64 {
            let mut r = rng::rng(1000 + seed);

            // fc (relu)
            let x = random_tensor(vec![4, 6], &mut r);
            let p = FcParams::init(6, 5, Activation::Relu, &mut r);
            let act = p.activation;
            let report = gradcheck(
                &|tape: &mut Tape, vars: &[Var]| {
                    let fcv = FcVars {
                        weight: vars[1],
                        bias: vars[2],
                        activation: act,
                    };
                    let y = fc_forward(tape, vars[0], &fcv)?;
                    tape.sum(y)
                },
                &[x, p.weight.clone(), p.bias.clone()],
                1e-5,
                1e-5,
            )
            .unwrap();
            assert!(report.pass, "fc seed {seed}: {}", report.describe());

            // residual block
            let x = random_tensor(vec![3, 4], &mut r);
            let res = ResidualParams::two_layer(4, &mut r);
            let report = gradcheck(
                &|tape: &mut Tape, vars: &[Var]| {
                    let rv = ResidualVars {
                        inner: vec![
                            FcVars { weight: vars[1], bias: vars[2], activation: Activation::Relu },
                            FcVars { weight: vars[3], bias: vars[4], activation: Activation::None },
                        ],
                    };
                    let y = residual_block(tape, vars[0], &rv)?;
                    tape.sum(y)
                },
                &[
                    x.clone(),
                    res.inner[0].weight.clone(),
                    res.inner[0].bias.clone(),
                    res.inner[1].weight.clone(),
                    res.inner[1].bias.clone(),
                ],
                1e-5,
                1e-5,
            )
            .unwrap();
            assert!(report.pass, "residual seed {seed}: {}", report.describe());

            // gated residual block
            let gate = GateParams::init(4, &mut r);
            let report = gradcheck(
                &|tape: &mut Tape, vars: &[Var]| {
                    let rv = ResidualVars {
                        inner: vec![
                            FcVars { weight: vars[1], bias: vars[2], activation: Activation::Relu },
                            FcVars { weight: vars[3], bias: vars[4], activation: Activation::None },
                        ],
                    };
                    let gv = GateVars { weight: vars[5], bias: vars[6] };
                    let y = gated_residual_block(tape, vars[0], &rv, &gv)?;
                    tape.sum(y)
                },
                &[
                    x,
                    res.inner[0].weight.clone(),
                    res.inner[0].bias.clone(),
                    res.inner[1].weight.clone(),
                    res.inner[1].bias.clone(),
                    gate.weight.clone(),
                    gate.bias.clone(),
                ],
                1e-5,
                1e-5,
            )
            .unwrap();
            assert!(report.pass, "gated seed {seed}: {}", report.describe());

            // self-attention
            let x = random_tensor(vec![5, 4], &mut r);
            let attn = AttnParams::init(4, &mut r);
            let report = gradcheck(
                &|tape: &mut Tape, vars: &[Var]| {
                    let av = AttnVars { w_query: vars[1], w_key: vars[2], w_value: vars[3] };
                    let y = self_attention(tape, vars[0], &av)?;
                    tape.sum(y)
                },
                &[x, attn.w_query.clone(), attn.w_key.clone(), attn.w_value.clone()],
                1e-5,
                1e-5,
            )
            .unwrap();
            assert!(report.pass, "self-attn seed {seed}: {}", report.describe());

            // cross-modal attention (both outputs summed)
            let xa = random_tensor(vec![3, 4], &mut r);
            let xv = random_tensor(vec![2, 4], &mut r);
            let pa = AttnParams::init(4, &mut r);
            let pv = AttnParams::init(4, &mut r);
            let report = gradcheck(
                &|tape: &mut Tape, vars: &[Var]| {
                    let pav = AttnVars { w_query: vars[2], w_key: vars[3], w_value: vars[4] };
                    let pvv = AttnVars { w_query: vars[5], w_key: vars[6], w_value: vars[7] };
                    let (va, av) = cross_modal_attention(tape, vars[0], vars[1], &pav, &pvv)?;
                    let sa = tape.sum(va)?;
                    let sb = tape.sum(av)?;
                    tape.add(sa, sb)
                },
                &[
                    xa,
                    xv,
                    pa.w_query.clone(),
                    pa.w_key.clone(),
                    pa.w_value.clone(),
                    pv.w_query.clone(),
                    pv.w_key.clone(),
                    pv.w_value.clone(),
                ],
                1e-5,
                1e-5,
            )
            .unwrap();
            assert!(report.pass, "cross-attn seed {seed}: {}", report.describe());

            // classifier head
            let x = random_tensor(vec![4, 5], &mut r);
            let p = FcParams::init(5, 3, Activation::Sigmoid, &mut r);
            let report = gradcheck(
                &|tape: &mut Tape, vars: &[Var]| {
                    let fcv = FcVars { weight: vars[1], bias: vars[2], activation: Activation::Sigmoid };
                    let y = classifier_head(tape, vars[0], &fcv)?;
                    tape.sum(y)
                },
                &[x, p.weight.clone(), p.bias.clone()],
                1e-5,
                1e-5,
            )
            .unwrap();
            assert!(report.pass, "classifier seed {seed}: {}", report.describe());

            // dropout with a fixed mask (gradient equals the mask)
            let x = random_tensor(vec![6, 6], &mut r);
            let report = gradcheck(
                &|tape: &mut Tape, vars: &[Var]| {
                    let y = dropout(tape, vars[0], 0.4, 42, true)?;
                    tape.sum(y)
                },
                &[x],
                1e-5,
                1e-5,
            )
            .unwrap();
            assert!(report.pass, "dropout seed {seed}: {}", report.describe());
        }
    }
}
