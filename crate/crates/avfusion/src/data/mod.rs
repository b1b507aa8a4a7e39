//! Dataset types, batching, and feature standardization.
//!
//! Records hold one video each: an id, a sparse ascending label set, and one
//! f32 feature vector per modality. Storage stays f32; batches upcast to f64
//! for the training core.

pub mod format;
pub mod synth;

pub use format::{read_dataset, write_records, RecordReader};
pub use synth::SynthConfig;

use rand::seq::SliceRandom;

use crate::error::{AvError, Result};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub num_classes: u32,
    pub visual_dim: u32,
    pub audio_dim: u32,
    pub num_records: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    /// Strictly ascending class indices, each below `num_classes`.
    pub labels: Vec<u32>,
    pub visual: Vec<f32>,
    pub audio: Vec<f32>,
}

impl FeatureRecord {
    pub fn validate(&self, header: &DatasetHeader) -> Result<()> {
        if self.id.is_empty() {
            return Err(AvError::InvalidArgument("record id must be non-empty".into()));
        }
        if !self.labels.windows(2).all(|w| w[0] < w[1]) {
            return Err(AvError::InvalidArgument(format!(
                "record {}: labels must be strictly ascending",
                self.id
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= header.num_classes) {
            return Err(AvError::InvalidArgument(format!(
                "record {}: label {bad} >= num_classes {}",
                self.id, header.num_classes
            )));
        }
        if self.visual.len() != header.visual_dim as usize
            || self.audio.len() != header.audio_dim as usize
        {
            return Err(AvError::ShapeMismatch(format!(
                "record {}: vectors {}x{} against header {}x{}",
                self.id,
                self.visual.len(),
                self.audio.len(),
                header.visual_dim,
                header.audio_dim
            )));
        }
        if self.visual.iter().chain(&self.audio).any(|v| !v.is_finite()) {
            return Err(AvError::NonFinite(format!("record {}", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<FeatureRecord>,
}

impl Dataset {
    pub fn new(header: DatasetHeader, records: Vec<FeatureRecord>) -> Result<Self> {
        if header.num_records != records.len() as u64 {
            return Err(AvError::InvalidArgument(format!(
                "header claims {} records, got {}",
                header.num_records,
                records.len()
            )));
        }
        for record in &records {
            record.validate(&header)?;
        }
        Ok(Dataset { header, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Dense 0/1 label row for one record.
    pub fn dense_labels(&self, index: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.header.num_classes as usize];
        for &l in &self.records[index].labels {
            row[l as usize] = 1.0;
        }
        row
    }
}

/// Recover the sparse ascending index set from a dense 0/1 row.
pub fn sparse_labels(dense: &[f64]) -> Vec<u32> {
    dense
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, _)| i as u32)
        .collect()
}

// ── Batching ─────────────────────────────────────────────────────────

/// One mini-batch, features upcast to f64, labels densified.
pub struct Batch {
    pub visual: Tensor,
    pub audio: Tensor,
    pub labels: Tensor,
    pub indices: Vec<usize>,
}

pub struct BatchIter<'a> {
    dataset: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

/// Deterministic shuffled batches: the permutation depends only on
/// `(shuffle_seed, epoch)`. The final partial batch is emitted.
pub fn batch_iter(
    dataset: &Dataset,
    batch_size: usize,
    shuffle_seed: u64,
    epoch: usize,
) -> Result<BatchIter<'_>> {
    if batch_size == 0 {
        return Err(AvError::InvalidArgument("batch_size must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng::rng(rng::derive2(shuffle_seed, 0x5f37, epoch as u64)));
    Ok(BatchIter {
        dataset,
        order,
        batch_size,
        cursor: 0,
    })
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let indices = self.order[self.cursor..end].to_vec();
        self.cursor = end;

        let b = indices.len();
        let v_dim = self.dataset.header.visual_dim as usize;
        let a_dim = self.dataset.header.audio_dim as usize;
        let c = self.dataset.header.num_classes as usize;
        let mut visual = Vec::with_capacity(b * v_dim);
        let mut audio = Vec::with_capacity(b * a_dim);
        let mut labels = Vec::with_capacity(b * c);
        for &i in &indices {
            let r = &self.dataset.records[i];
            visual.extend(r.visual.iter().map(|&v| v as f64));
            audio.extend(r.audio.iter().map(|&v| v as f64));
            labels.extend(self.dataset.dense_labels(i));
        }
        Some(Batch {
            visual: Tensor::new(vec![b, v_dim], visual).expect("validated records"),
            audio: Tensor::new(vec![b, a_dim], audio).expect("validated records"),
            labels: Tensor::new(vec![b, c], labels).expect("validated records"),
            indices,
        })
    }
}

// ── Standardization ──────────────────────────────────────────────────

/// Per-dimension mean/std of both modalities, for optional input
/// standardization (off by default).
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub visual_mean: Vec<f64>,
    pub visual_std: Vec<f64>,
    pub audio_mean: Vec<f64>,
    pub audio_std: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-6;

fn column_stats(rows: impl Iterator<Item = Vec<f64>> + Clone, dim: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; dim];
    for row in rows.clone() {
        for (m, v) in mean.iter_mut().zip(&row) {
            *m += v;
        }
    }
    let n = n.max(1) as f64;
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for row in rows {
        for ((s, v), m) in var.iter_mut().zip(&row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
    (mean, std)
}

pub fn compute_stats(dataset: &Dataset) -> NormStats {
    let v_dim = dataset.header.visual_dim as usize;
    let a_dim = dataset.header.audio_dim as usize;
    let n = dataset.len();
    let visual_rows = dataset
        .records
        .iter()
        .map(|r| r.visual.iter().map(|&v| v as f64).collect::<Vec<_>>());
    let (visual_mean, visual_std) = column_stats(visual_rows, v_dim, n);
    let audio_rows = dataset
        .records
        .iter()
        .map(|r| r.audio.iter().map(|&v| v as f64).collect::<Vec<_>>());
    let (audio_mean, audio_std) = column_stats(audio_rows, a_dim, n);
    NormStats {
        visual_mean,
        visual_std,
        audio_mean,
        audio_std,
    }
}

/// Standardize every record in place with the given statistics.
pub fn apply_stats(dataset: &mut Dataset, stats: &NormStats) {
    for r in &mut dataset.records {
        for (v, (m, s)) in r
            .visual
            .iter_mut()
            .zip(stats.visual_mean.iter().zip(&stats.visual_std))
        {
            *v = ((*v as f64 - m) / s) as f32;
        }
        for (v, (m, s)) in r
            .audio
            .iter_mut()
            .zip(stats.audio_mean.iter().zip(&stats.audio_std))
        {
            *v = ((*v as f64 - m) / s) as f32;
        }
    }
}
