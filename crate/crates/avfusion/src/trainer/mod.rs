//! Training: multi-label binary cross-entropy, AdamW updates, the epoch
//! loop, and checkpoint persistence.

pub mod adamw;
pub mod checkpoint;

pub use adamw::{adamw_step, OptState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};

use std::time::Instant;

use crate::data::{batch_iter, Dataset};
use crate::error::{AvError, Result};
use crate::metrics::{evaluate, MetricReport};
use crate::models::{ForwardOpts, Model};
use crate::rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Probabilities are clamped this far away from 0 and 1 before the logs.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            epochs: 20,
            batch_size: 256,
            dropout_rate: 0.4,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(AvError::InvalidArgument("learning_rate must be > 0".into()));
        }
        if self.epochs == 0 {
            return Err(AvError::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(AvError::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(AvError::InvalidArgument("dropout_rate must be in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(AvError::InvalidArgument("betas must be in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(AvError::InvalidArgument("epsilon > 0 and weight_decay >= 0 required".into()));
        }
        Ok(())
    }
}

// ── Loss ─────────────────────────────────────────────────────────────

/// Multi-label binary cross-entropy: per-class terms are summed within a
/// sample and averaged over the batch. `labels` must be 0/1 and match the
/// probability shape; probabilities are clamped at [`PROB_CLAMP`] inside
/// the logs, leaving the gradient path exact wherever the clamp is idle.
pub fn bce_loss(tape: &mut Tape, probs: Var, labels: &Tensor) -> Result<Var> {
    if tape.value(probs).shape() != labels.shape() {
        return Err(AvError::ShapeMismatch(format!(
            "probabilities {:?} against labels {:?}",
            tape.value(probs).shape(),
            labels.shape()
        )));
    }
    if tape.value(probs).shape().len() != 2 {
        return Err(AvError::ShapeMismatch("bce expects [batch, classes]".into()));
    }
    if !labels.data().iter().all(|&v| v == 0.0 || v == 1.0) {
        return Err(AvError::InvalidArgument("labels must be exactly 0 or 1".into()));
    }
    let batch = tape.value(probs).shape()[0] as f64;
    let y = tape.constant(labels.clone());
    let ln_p = tape.ln_clamped(probs, PROB_CLAMP)?;
    let one_minus_p = tape.affine(probs, -1.0, 1.0)?;
    let ln_not_p = tape.ln_clamped(one_minus_p, PROB_CLAMP)?;
    let one_minus_y = tape.affine(y, -1.0, 1.0)?;
    let pos = tape.mul(y, ln_p)?;
    let neg = tape.mul(one_minus_y, ln_not_p)?;
    let per_entry = tape.add(pos, neg)?;
    let total = tape.sum(per_entry)?;
    tape.scale(total, -1.0 / batch)
}

// ── Fit ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample training loss over the epoch.
    pub loss: f64,
    pub gap: f64,
    pub f1: f64,
    pub seconds: f64,
}

#[derive(Debug)]
pub struct FitOutcome {
    pub history: Vec<EpochRecord>,
    pub checkpoint: Checkpoint,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalSettings {
    pub k: usize,
    pub threshold: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { k: 20, threshold: 0.5 }
    }
}

fn check_dims(model: &Model, dataset: &Dataset, what: &str) -> Result<()> {
    let h = &dataset.header;
    if h.visual_dim as usize != model.spec.visual_dim
        || h.audio_dim as usize != model.spec.audio_dim
        || h.num_classes as usize != model.spec.num_classes
    {
        return Err(AvError::ShapeMismatch(format!(
            "{what} dataset ({}v/{}a/{}c) does not match model ({}v/{}a/{}c)",
            h.visual_dim,
            h.audio_dim,
            h.num_classes,
            model.spec.visual_dim,
            model.spec.audio_dim,
            model.spec.num_classes
        )));
    }
    Ok(())
}

/// One optimizer step on one batch; returns the batch loss.
pub fn train_step(
    model: &mut Model,
    visual: &Tensor,
    audio: &Tensor,
    labels: &Tensor,
    state: &mut OptState,
    cfg: &TrainConfig,
    dropout_seed: u64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let (param_vars, probs) = model.forward_on_tape(
        &mut tape,
        visual,
        audio,
        ForwardOpts {
            training: true,
            trainable: true,
            dropout_rate: cfg.dropout_rate,
            seed: dropout_seed,
        },
    )?;
    let loss = bce_loss(&mut tape, probs, labels)?;
    let loss_val = tape.value(loss).item()?;
    tape.backward(loss)?;
    let grads: Vec<Vec<f64>> = param_vars
        .iter()
        .zip(&model.params)
        .map(|(&v, p)| match tape.grad(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; p.tensor.numel()],
        })
        .collect();
    adamw_step(&mut model.params, &grads, state, cfg)?;
    Ok(loss_val)
}

/// Train for `cfg.epochs` epochs. Shuffling, dropout, and initialization
/// all derive from `cfg.seed`, so identical configs give identical
/// histories. Metrics come from `valid` when given, otherwise from the
/// training set. `on_epoch` runs after each epoch (progress output,
/// periodic checkpoints).
pub fn fit(
    model: &mut Model,
    train: &Dataset,
    valid: Option<&Dataset>,
    cfg: &TrainConfig,
    eval_settings: EvalSettings,
    mut on_epoch: impl FnMut(&EpochRecord, &Model, &OptState) -> Result<()>,
) -> Result<FitOutcome> {
    cfg.validate()?;
    check_dims(model, train, "train")?;
    if let Some(v) = valid {
        check_dims(model, v, "valid")?;
    }
    if train.is_empty() {
        return Err(AvError::InvalidArgument("training set is empty".into()));
    }
    let mut state = OptState::new(&model.params);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut loss_sum = 0.0;
        let mut samples = 0usize;
        for (batch_idx, batch) in batch_iter(train, cfg.batch_size, cfg.seed, epoch)?.enumerate() {
            let dropout_seed = rng::derive2(cfg.seed, epoch as u64, batch_idx as u64);
            let loss = train_step(
                model,
                &batch.visual,
                &batch.audio,
                &batch.labels,
                &mut state,
                cfg,
                dropout_seed,
            )
            .map_err(|e| match e {
                AvError::NonFinite(_) => AvError::NonFiniteLoss { epoch, batch: batch_idx },
                other => other,
            })?;
            if !loss.is_finite() {
                return Err(AvError::NonFiniteLoss { epoch, batch: batch_idx });
            }
            loss_sum += loss * batch.indices.len() as f64;
            samples += batch.indices.len();
        }
        let report: MetricReport = evaluate(
            model,
            valid.unwrap_or(train),
            eval_settings.k,
            eval_settings.threshold,
        )?;
        let record = EpochRecord {
            epoch,
            loss: loss_sum / samples as f64,
            gap: report.gap,
            f1: report.f1,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record, model, &state)?;
        history.push(record);
    }
    let checkpoint = Checkpoint::from_training(model, &state, cfg, cfg.epochs);
    Ok(FitOutcome { history, checkpoint })
}

#[cfg(test)]
mod tests;
