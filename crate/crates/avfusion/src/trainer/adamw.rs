//! AdamW: Adam moments with decoupled weight decay.
//!
//! Decay multiplies the parameter directly (`p *= 1 - lr*wd`) and never
//! enters the moment buffers, so with `wd = 0` the update is exactly Adam.

use crate::error::{AvError, Result};
use crate::models::NamedTensor;

use super::TrainConfig;

/// First/second moment buffers mirroring the parameter list, plus the step
/// counter used for bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl OptState {
    pub fn new(params: &[NamedTensor]) -> Self {
        OptState {
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect(),
        }
    }

    fn check_shapes(&self, params: &[NamedTensor]) -> Result<()> {
        if self.m.len() != params.len() || self.v.len() != params.len() {
            return Err(AvError::ShapeMismatch(
                "optimizer state does not mirror the parameter list".into(),
            ));
        }
        for ((m, v), p) in self.m.iter().zip(&self.v).zip(params) {
            if m.len() != p.tensor.numel() || v.len() != p.tensor.numel() {
                return Err(AvError::ShapeMismatch(format!(
                    "optimizer buffers for {} have wrong length",
                    p.name
                )));
            }
        }
        Ok(())
    }
}

/// One AdamW update over all parameters.
///
/// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`, bias-corrected, then
/// `p <- p (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps)`.
pub fn adamw_step(
    params: &mut [NamedTensor],
    grads: &[Vec<f64>],
    state: &mut OptState,
    cfg: &TrainConfig,
) -> Result<()> {
    state.check_shapes(params)?;
    if grads.len() != params.len() {
        return Err(AvError::ShapeMismatch(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    for (grad, param) in grads.iter().zip(params.iter()) {
        if grad.len() != param.tensor.numel() {
            return Err(AvError::ShapeMismatch(format!(
                "gradient for {} has length {}, parameter has {}",
                param.name,
                grad.len(),
                param.tensor.numel()
            )));
        }
        if !grad.iter().all(|g| g.is_finite()) {
            return Err(AvError::NonFinite(format!(
                "gradient for {} is not finite; step aborted",
                param.name
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    let decay = 1.0 - cfg.learning_rate * cfg.weight_decay;

    for ((param, grad), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let data = param.tensor.data_mut();
        for i in 0..data.len() {
            let g = grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            data[i] = data[i] * decay - cfg.learning_rate * (m_hat / (v_hat.sqrt() + cfg.epsilon));
        }
        if !param.tensor.is_finite() {
            return Err(AvError::NonFinite(format!(
                "parameter {} became non-finite after update",
                param.name
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn one_param(values: Vec<f64>) -> Vec<NamedTensor> {
        vec![NamedTensor {
            name: "w".into(),
            tensor: Tensor::new(vec![values.len()], values).unwrap(),
        }]
    }

    #[test]
    fn zero_gradient_without_decay_is_a_fixed_point() {
        let mut params = one_param(vec![0.3, -1.7, 2.5]);
        let before: Vec<u64> = params[0].tensor.data().iter().map(|v| v.to_bits()).collect();
        let mut state = OptState::new(&params);
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        for _ in 0..3 {
            adamw_step(&mut params, &[vec![0.0; 3]], &mut state, &cfg).unwrap();
        }
        let after: Vec<u64> = params[0].tensor.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn zero_gradient_with_decay_is_pure_decay() {
        let initial = [0.3, -1.7, 2.5];
        let mut params = one_param(initial.to_vec());
        let mut state = OptState::new(&params);
        let cfg = TrainConfig::default(); // wd = 0.01, lr = 1e-4
        adamw_step(&mut params, &[vec![0.0; 3]], &mut state, &cfg).unwrap();
        let factor = 1.0 - cfg.learning_rate * cfg.weight_decay;
        for (got, orig) in params[0].tensor.data().iter().zip(initial) {
            assert_eq!(got.to_bits(), (orig * factor).to_bits());
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // bias correction makes m_hat/sqrt(v_hat) = g/|g| on step one
        let mut params = one_param(vec![1.0]);
        let mut state = OptState::new(&params);
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        adamw_step(&mut params, &[vec![0.1]], &mut state, &cfg).unwrap();
        let delta = params[0].tensor.data()[0] - 1.0;
        assert!((delta + 1e-4).abs() < 1e-8, "delta {delta}");
        assert_eq!(state.step, 1);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut params = one_param(vec![1.0]);
        let mut state = OptState::new(&params);
        let cfg = TrainConfig::default();
        let err = adamw_step(&mut params, &[vec![f64::NAN]], &mut state, &cfg).unwrap_err();
        assert!(matches!(err, AvError::NonFinite(_)));
        assert_eq!(state.step, 0, "aborted step must not advance the counter");
        assert_eq!(params[0].tensor.data()[0], 1.0);
    }
}
