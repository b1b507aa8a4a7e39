//! Finite-difference validation of analytic gradients.
//!
//! Compares backward-pass gradients against central differences
//! `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)` per coordinate.

use crate::error::{AvError, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Floor for the relative-error denominator, so near-zero gradient pairs
/// compare on absolute terms.
pub const REL_ERR_FLOOR: f64 = 1e-8;

/// Absolute difference below which a coordinate counts as agreeing.
/// Central differences of an O(1)-valued function carry ~1e-11 of
/// cancellation noise at eps 1e-5, so differences this small say nothing
/// about the analytic gradient; any real gradient defect lands orders of
/// magnitude above this.
pub const FD_NOISE_FLOOR: f64 = 1e-7;

/// Outcome of one gradient check.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub max_rel_err: f64,
    /// Index of the input tensor holding the worst coordinate.
    pub worst_input: usize,
    /// Flat index of the worst coordinate within that tensor.
    pub worst_coord: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub tol: f64,
    pub pass: bool,
}

impl GradReport {
    pub fn describe(&self) -> String {
        format!(
            "max rel err {:.3e} at input {} coord {} (analytic {:.6e}, numeric {:.6e})",
            self.max_rel_err,
            self.worst_input,
            self.worst_coord,
            self.analytic_at_worst,
            self.numeric_at_worst
        )
    }
}

/// A differentiable scalar function of several tensors: builds its value on
/// the given tape from leaf variables supplied in input order.
pub trait ScalarFn: Fn(&mut Tape, &[Var]) -> Result<Var> {}
impl<F: Fn(&mut Tape, &[Var]) -> Result<Var>> ScalarFn for F {}

fn eval<F: ScalarFn>(f: &F, inputs: &[Tensor]) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let root = f(&mut tape, &vars)?;
    if !tape.value(root).is_scalar() {
        return Err(AvError::ShapeMismatch(format!(
            "gradcheck target must return a scalar, got shape {:?}",
            tape.value(root).shape()
        )));
    }
    tape.value(root).item()
}

/// Run `f` once with gradient tracking and return the analytic gradient per
/// input (zeros for inputs the output does not depend on).
pub fn analytic_gradients<F: ScalarFn>(f: &F, inputs: &[Tensor]) -> Result<Vec<Vec<f64>>> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_grad()))
        .collect();
    let root = f(&mut tape, &vars)?;
    if !tape.value(root).is_scalar() {
        return Err(AvError::ShapeMismatch(format!(
            "gradcheck target must return a scalar, got shape {:?}",
            tape.value(root).shape()
        )));
    }
    tape.backward(root)?;
    Ok(vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| match tape.grad(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; t.numel()],
        })
        .collect())
}

/// Compare the given analytic gradients against central finite differences
/// of `f`. Exposed separately from [`gradcheck`] so the harness itself can
/// be tested against deliberately corrupted gradients.
pub fn compare_with_numeric<F: ScalarFn>(
    f: &F,
    inputs: &[Tensor],
    analytic: &[Vec<f64>],
    eps: f64,
    tol: f64,
) -> Result<GradReport> {
    if !(eps > 0.0) {
        return Err(AvError::InvalidArgument("gradcheck eps must be > 0".into()));
    }
    let mut report = GradReport {
        max_rel_err: 0.0,
        worst_input: 0,
        worst_coord: 0,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        tol,
        pass: true,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.numel() {
            let orig = input.data()[j];
            work[i].data_mut()[j] = orig + eps;
            let plus = eval(f, &work)?;
            work[i].data_mut()[j] = orig - eps;
            let minus = eval(f, &work)?;
            work[i].data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[i][j];
            let diff = (a - numeric).abs();
            if diff < FD_NOISE_FLOOR {
                continue;
            }
            let rel = diff / a.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_input = i;
                report.worst_coord = j;
                report.analytic_at_worst = a;
                report.numeric_at_worst = numeric;
            }
        }
    }
    report.pass = report.max_rel_err < tol;
    Ok(report)
}

/// Check the analytic gradient of a scalar-valued tensor function against
/// central finite differences on every coordinate of every input.
pub fn gradcheck<F: ScalarFn>(f: &F, inputs: &[Tensor], eps: f64, tol: f64) -> Result<GradReport> {
    let analytic = analytic_gradients(f, inputs)?;
    compare_with_numeric(f, inputs, &analytic, eps, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn quadratic_is_near_exact() {
        // f = 0.5 * ||x||^2 has gradient x; central differences are exact up
        // to roundoff for quadratics.
        let f = |tape: &mut Tape, vars: &[Var]| {
            let sq = tape.mul(vars[0], vars[0])?;
            let s = tape.sum(sq)?;
            tape.scale(s, 0.5)
        };
        let mut r = rng::rng(11);
        let x = Tensor::new(vec![6], (0..6).map(|_| r.gen_range(-2.0..2.0)).collect()).unwrap();
        let report = gradcheck(&f, &[x], 1e-5, 1e-9).unwrap();
        assert!(report.pass, "{}", report.describe());
    }

    #[test]
    fn constant_function_passes() {
        let f = |tape: &mut Tape, _vars: &[Var]| {
            let c = tape.constant(Tensor::scalar(4.25));
            tape.sum(c)
        };
        let x = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let report = gradcheck(&f, &[x], 1e-5, 1e-9).unwrap();
        assert!(report.pass);
        assert_eq!(report.max_rel_err, 0.0);
    }

    #[test]
    fn corrupted_gradient_is_located() {
        let f = |tape: &mut Tape, vars: &[Var]| {
            let sq = tape.mul(vars[0], vars[0])?;
            tape.sum(sq)
        };
        let x = Tensor::new(vec![4], vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let mut analytic = analytic_gradients(&f, &[x.clone()]).unwrap();
        analytic[0][2] += 0.1;
        let report = compare_with_numeric(&f, &[x], &analytic, 1e-5, 1e-5).unwrap();
        assert!(!report.pass);
        assert_eq!(report.worst_input, 0);
        assert_eq!(report.worst_coord, 2);
    }

    #[test]
    fn non_scalar_target_rejected() {
        let f = |tape: &mut Tape, vars: &[Var]| tape.relu(vars[0]);
        let x = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            gradcheck(&f, &[x], 1e-5, 1e-5),
            Err(AvError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn two_layer_net_with_bce_passes() {
        // Random two-layer net ending in sigmoid + binary cross-entropy;
        // the finite-difference oracle is the check itself.
        let mut r = rng::rng(3);
        let x = Tensor::new(vec![2, 3], (0..6).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
        let w1 = Tensor::new(vec![3, 4], (0..12).map(|_| r.gen_range(-0.7..0.7)).collect()).unwrap();
        let w2 = Tensor::new(vec![4, 2], (0..8).map(|_| r.gen_range(-0.7..0.7)).collect()).unwrap();
        let labels = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();

        let f = move |tape: &mut Tape, vars: &[Var]| {
            let h = tape.matmul(vars[0], vars[1])?;
            let h = tape.sigmoid(h)?;
            let logits = tape.matmul(h, vars[2])?;
            let probs = tape.sigmoid(logits)?;
            let y = tape.constant(labels.clone());
            let one_minus_y = tape.affine(y, -1.0, 1.0)?;
            let ln_p = tape.ln_clamped(probs, 1e-12)?;
            let one_minus_p = tape.affine(probs, -1.0, 1.0)?;
            let ln_q = tape.ln_clamped(one_minus_p, 1e-12)?;
            let t1 = tape.mul(y, ln_p)?;
            let t2 = tape.mul(one_minus_y, ln_q)?;
            let s = tape.add(t1, t2)?;
            let total = tape.sum(s)?;
            tape.scale(total, -0.5)
        };
        let report = gradcheck(&f, &[x, w1, w2], 1e-5, 1e-5).unwrap();
        assert!(report.pass, "{}", report.describe());
    }
}
