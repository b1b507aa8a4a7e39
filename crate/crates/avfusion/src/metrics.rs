//! Ranking and threshold metrics.
//!
//! Average precision follows the cumulative form `sum_k P(k) dr(k)` over a
//! ranked list. GAP pools every video's top-k scored classes into one
//! global list and computes AP there with the recall denominator equal to
//! the total number of positive labels. F1 is micro-averaged over all
//! video-class decisions at a fixed threshold; the report always states
//! `k`, the threshold, and the averaging scheme.

use crate::data::Dataset;
use crate::error::{AvError, Result};
use crate::models::Model;
use crate::tensor::Tensor;

/// Scores and ground truth for one video.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub video_id: String,
    /// One score per class.
    pub scores: Vec<f64>,
    /// Ascending ground-truth class indices.
    pub labels: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct PredictionSet {
    pub num_classes: usize,
    pub predictions: Vec<Prediction>,
}

impl PredictionSet {
    pub fn new(num_classes: usize, predictions: Vec<Prediction>) -> Result<Self> {
        let mut ids = std::collections::BTreeSet::new();
        for p in &predictions {
            if !ids.insert(p.video_id.as_str()) {
                return Err(AvError::InvalidArgument(format!(
                    "duplicate video id {}",
                    p.video_id
                )));
            }
            if p.scores.len() != num_classes {
                return Err(AvError::ShapeMismatch(format!(
                    "video {}: {} scores for {num_classes} classes",
                    p.video_id,
                    p.scores.len()
                )));
            }
            if !p.scores.iter().all(|s| s.is_finite()) {
                return Err(AvError::NonFinite(format!("video {}", p.video_id)));
            }
            if p.labels.iter().any(|&l| l as usize >= num_classes) {
                return Err(AvError::InvalidArgument(format!(
                    "video {}: label out of range",
                    p.video_id
                )));
            }
        }
        Ok(PredictionSet {
            num_classes,
            predictions,
        })
    }

    pub fn num_positive_labels(&self) -> usize {
        self.predictions.iter().map(|p| p.labels.len()).sum()
    }
}

// ── Average precision ────────────────────────────────────────────────

/// AP over one ranked list: sort by descending score (ties keep input
/// order), accumulate precision at every relevant hit, and divide by the
/// number of relevant items. `None` when nothing is relevant (the caller
/// chooses a skip-or-zero policy; per-class aggregation skips).
pub fn average_precision(scores: &[f64], relevance: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), relevance.len(), "scores and relevance must align");
    let num_relevant = relevance.iter().filter(|&&r| r).count();
    if num_relevant == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    Some(ap_over_ranked(
        order.iter().map(|&i| relevance[i]),
        num_relevant,
    ))
}

/// `sum_k P(k) dr(k)` where dr is `1/num_relevant` at each hit.
fn ap_over_ranked(ranked_relevance: impl Iterator<Item = bool>, num_relevant: usize) -> f64 {
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (k, relevant) in ranked_relevance.enumerate() {
        if relevant {
            hits += 1;
            ap += hits as f64 / (k + 1) as f64 / num_relevant as f64;
        }
    }
    ap
}

// ── GAP ──────────────────────────────────────────────────────────────

/// Global average precision at k: each video contributes its k highest
/// scored classes to one pooled list (ties broken by ascending class
/// index), the pool is ranked by descending score with ties broken by
/// (video id, class index) ascending, and AP is computed against the
/// total positive-label count.
pub fn gap_at_k(set: &PredictionSet, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(AvError::InvalidArgument("k must be >= 1".into()));
    }
    if set.predictions.is_empty() {
        return Err(AvError::InvalidArgument("empty prediction set".into()));
    }
    let total_positives = set.num_positive_labels();
    if total_positives == 0 {
        return Ok(0.0);
    }
    struct Entry<'a> {
        score: f64,
        video_id: &'a str,
        class: u32,
        positive: bool,
    }
    let mut pooled: Vec<Entry> = Vec::with_capacity(set.predictions.len() * k.min(set.num_classes));
    for p in &set.predictions {
        let mut classes: Vec<u32> = (0..set.num_classes as u32).collect();
        classes.sort_by(|&a, &b| {
            p.scores[b as usize]
                .total_cmp(&p.scores[a as usize])
                .then(a.cmp(&b))
        });
        for &class in classes.iter().take(k.min(set.num_classes)) {
            pooled.push(Entry {
                score: p.scores[class as usize],
                video_id: &p.video_id,
                class,
                positive: p.labels.binary_search(&class).is_ok(),
            });
        }
    }
    pooled.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.video_id.cmp(b.video_id))
            .then(a.class.cmp(&b.class))
    });
    Ok(ap_over_ranked(
        pooled.iter().map(|e| e.positive),
        total_positives,
    ))
}

// ── F1 ───────────────────────────────────────────────────────────────

/// Micro-averaged F1 at a threshold: a class is predicted when its score
/// is >= threshold; TP/FP/FN aggregate over every video-class pair.
/// Returns `(f1, precision, recall)`; 0/0 ratios resolve to 0.
pub fn f1_micro(set: &PredictionSet, threshold: f64) -> Result<(f64, f64, f64)> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(AvError::InvalidArgument(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for p in &set.predictions {
        for class in 0..set.num_classes {
            let predicted = p.scores[class] >= threshold;
            let actual = p.labels.binary_search(&(class as u32)).is_ok();
            match (predicted, actual) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((f1, precision, recall))
}

// ── Report ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub gap: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub k: usize,
    pub threshold: f64,
    pub num_videos: usize,
    pub num_positive_labels: usize,
}

impl MetricReport {
    pub fn from_set(set: &PredictionSet, k: usize, threshold: f64) -> Result<MetricReport> {
        let gap = gap_at_k(set, k)?;
        let (f1, precision, recall) = f1_micro(set, threshold)?;
        Ok(MetricReport {
            gap,
            f1,
            precision,
            recall,
            k,
            threshold,
            num_videos: set.predictions.len(),
            num_positive_labels: set.num_positive_labels(),
        })
    }

    /// Single-line record for CLI output.
    pub fn to_json_line(&self) -> String {
        format!(
            "{{\"gap\":{:.6},\"f1\":{:.6},\"precision\":{:.6},\"recall\":{:.6},\
             \"k\":{},\"threshold\":{},\"f1_averaging\":\"micro\",\
             \"num_videos\":{},\"num_positive_labels\":{}}}",
            self.gap,
            self.f1,
            self.precision,
            self.recall,
            self.k,
            self.threshold,
            self.num_videos,
            self.num_positive_labels
        )
    }

    pub fn csv_header() -> &'static str {
        "gap,f1,precision,recall,k,threshold,num_videos,num_positive_labels"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{},{},{},{}",
            self.gap,
            self.f1,
            self.precision,
            self.recall,
            self.k,
            self.threshold,
            self.num_videos,
            self.num_positive_labels
        )
    }
}

const EVAL_BATCH: usize = 256;

/// Score a dataset with a model in inference mode.
pub fn predict(model: &Model, dataset: &Dataset) -> Result<PredictionSet> {
    let v_dim = dataset.header.visual_dim as usize;
    let a_dim = dataset.header.audio_dim as usize;
    let mut predictions = Vec::with_capacity(dataset.len());
    for chunk in dataset.records.chunks(EVAL_BATCH) {
        let b = chunk.len();
        let visual = Tensor::new(
            vec![b, v_dim],
            chunk
                .iter()
                .flat_map(|r| r.visual.iter().map(|&v| v as f64))
                .collect(),
        )?;
        let audio = Tensor::new(
            vec![b, a_dim],
            chunk
                .iter()
                .flat_map(|r| r.audio.iter().map(|&v| v as f64))
                .collect(),
        )?;
        let probs = model.infer(&visual, &audio)?;
        let c = model.spec.num_classes;
        for (i, record) in chunk.iter().enumerate() {
            predictions.push(Prediction {
                video_id: record.id.clone(),
                scores: probs.data()[i * c..(i + 1) * c].to_vec(),
                labels: record.labels.clone(),
            });
        }
    }
    PredictionSet::new(model.spec.num_classes, predictions)
}

/// One inference pass over the dataset, then GAP and micro-F1.
pub fn evaluate(model: &Model, dataset: &Dataset, k: usize, threshold: f64) -> Result<MetricReport> {
    if dataset.header.num_classes as usize != model.spec.num_classes {
        return Err(AvError::ShapeMismatch(format!(
            "dataset has {} classes, model {}",
            dataset.header.num_classes, model.spec.num_classes
        )));
    }
    let set = predict(model, dataset)?;
    MetricReport::from_set(&set, k, threshold)
}
