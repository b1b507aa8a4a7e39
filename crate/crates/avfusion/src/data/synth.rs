//! Synthetic dataset generator with planted per-modality and cross-modal
//! label structure.
//!
//! Per record, latent audio and visual bits are drawn uniformly. Audio-only
//! classes copy an audio bit, visual-only classes a visual bit, and each
//! cross-modal class is the XOR of one fresh audio bit and one fresh visual
//! bit, so no single modality carries any information about it. Bits are
//! embedded as +/-1 signal values in the leading dimensions of each feature
//! vector, the remaining dimensions are pure unit Gaussian distractors, and
//! `noise_std` Gaussian noise is added on top of every signal dimension.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{AvError, Result};
use crate::rng;

use super::{Dataset, DatasetHeader, FeatureRecord};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub num_records: usize,
    pub audio_dim: usize,
    pub visual_dim: usize,
    /// Class split; the three counts must sum to `num_classes`.
    pub audio_only: usize,
    pub visual_only: usize,
    pub cross_modal: usize,
    pub noise_std: f64,
    /// Pure-noise dimensions appended to each modality after its signal
    /// dimensions; signal + distractors must fill each vector exactly.
    pub distractor_dims: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// Desk-scale defaults: 32 classes (8 audio-only, 8 visual-only, 16
    /// cross-modal), 96-dim vectors with 75% distractor dimensions.
    fn default() -> Self {
        SynthConfig {
            num_classes: 32,
            num_records: 20_000,
            audio_dim: 96,
            visual_dim: 96,
            audio_only: 8,
            visual_only: 8,
            cross_modal: 16,
            noise_std: 0.25,
            distractor_dims: 72,
            seed: 7,
        }
    }
}

impl SynthConfig {
    /// Signal dimensions carried by the audio vector.
    pub fn audio_signal_dims(&self) -> usize {
        self.audio_only + self.cross_modal
    }

    /// Signal dimensions carried by the visual vector.
    pub fn visual_signal_dims(&self) -> usize {
        self.visual_only + self.cross_modal
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(AvError::InvalidArgument("num_classes must be >= 1".into()));
        }
        if self.audio_only + self.visual_only + self.cross_modal != self.num_classes {
            return Err(AvError::InvalidArgument(format!(
                "class split {}+{}+{} does not sum to num_classes {}",
                self.audio_only, self.visual_only, self.cross_modal, self.num_classes
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(AvError::InvalidArgument("noise_std must be >= 0".into()));
        }
        for (name, signal, dim) in [
            ("audio", self.audio_signal_dims(), self.audio_dim),
            ("visual", self.visual_signal_dims(), self.visual_dim),
        ] {
            if signal + self.distractor_dims > dim {
                return Err(AvError::InvalidArgument(format!(
                    "{name} split needs {signal} signal dims + {} distractors, \
                     exceeding {name}_dim {dim}",
                    self.distractor_dims
                )));
            }
            if signal + self.distractor_dims < dim {
                return Err(AvError::InvalidArgument(format!(
                    "{name}_dim {dim} leaves {} dims unaccounted \
                     ({signal} signal + {} distractors)",
                    dim - signal - self.distractor_dims,
                    self.distractor_dims
                )));
            }
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<Dataset> {
        self.validate()?;
        let mut r = rng::rng(self.seed);
        let mut records = Vec::with_capacity(self.num_records);
        for i in 0..self.num_records {
            records.push(self.one_record(i, &mut r));
        }
        let header = DatasetHeader {
            num_classes: self.num_classes as u32,
            visual_dim: self.visual_dim as u32,
            audio_dim: self.audio_dim as u32,
            num_records: self.num_records as u64,
        };
        Dataset::new(header, records)
    }

    fn one_record(&self, index: usize, r: &mut ChaCha8Rng) -> FeatureRecord {
        let audio_bits: Vec<bool> = (0..self.audio_signal_dims()).map(|_| r.gen::<f64>() < 0.5).collect();
        let visual_bits: Vec<bool> = (0..self.visual_signal_dims()).map(|_| r.gen::<f64>() < 0.5).collect();

        let mut labels = Vec::new();
        for c in 0..self.audio_only {
            if audio_bits[c] {
                labels.push(c as u32);
            }
        }
        for c in 0..self.visual_only {
            if visual_bits[c] {
                labels.push((self.audio_only + c) as u32);
            }
        }
        for c in 0..self.cross_modal {
            if audio_bits[self.audio_only + c] ^ visual_bits[self.visual_only + c] {
                labels.push((self.audio_only + self.visual_only + c) as u32);
            }
        }

        let audio = self.embed(&audio_bits, self.audio_dim, r);
        let visual = self.embed(&visual_bits, self.visual_dim, r);
        FeatureRecord {
            id: format!("synth-{index:08}"),
            labels,
            visual,
            audio,
        }
    }

    fn embed(&self, bits: &[bool], dim: usize, r: &mut ChaCha8Rng) -> Vec<f32> {
        let mut v = Vec::with_capacity(dim);
        for &bit in bits {
            let signal = if bit { 1.0 } else { -1.0 };
            v.push((signal + self.noise_std * gauss(r)) as f32);
        }
        for _ in bits.len()..dim {
            v.push(gauss(r) as f32);
        }
        v
    }
}

/// Standard normal via Box-Muller; implemented here so the generated bytes
/// are pinned by this crate rather than by a sampling dependency's version.
fn gauss(r: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - r.gen::<f64>(); // (0, 1]
    let u2: f64 = r.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::write_records;

    fn small_cfg() -> SynthConfig {
        SynthConfig {
            num_classes: 8,
            num_records: 400,
            audio_dim: 6,
            visual_dim: 6,
            audio_only: 2,
            visual_only: 2,
            cross_modal: 4,
            noise_std: 0.0,
            distractor_dims: 0,
            seed: 3,
        }
    }

    #[test]
    fn split_must_sum_to_classes() {
        let mut cfg = small_cfg();
        cfg.cross_modal = 40;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn split_must_fit_dims() {
        let mut cfg = small_cfg();
        cfg.audio_dim = 3; // needs 6 signal dims
        assert!(cfg.validate().is_err());
        let mut cfg = small_cfg();
        cfg.distractor_dims = 1;
        assert!(cfg.validate().is_err(), "dims must be exactly signal+distractors");
    }

    #[test]
    fn noiseless_signal_dims_predict_unimodal_classes() {
        let cfg = small_cfg();
        let ds = cfg.generate().unwrap();
        for (i, rec) in ds.records.iter().enumerate() {
            let dense = ds.dense_labels(i);
            for c in 0..cfg.audio_only {
                let predicted = rec.audio[c] > 0.0;
                assert_eq!(predicted, dense[c] != 0.0, "audio class {c} record {i}");
            }
            for c in 0..cfg.visual_only {
                let predicted = rec.visual[c] > 0.0;
                assert_eq!(
                    predicted,
                    dense[cfg.audio_only + c] != 0.0,
                    "visual class {c} record {i}"
                );
            }
        }
    }

    #[test]
    fn cross_modal_classes_are_xor_of_planted_bits() {
        let cfg = small_cfg();
        let ds = cfg.generate().unwrap();
        for (i, rec) in ds.records.iter().enumerate() {
            let dense = ds.dense_labels(i);
            for c in 0..cfg.cross_modal {
                let a_bit = rec.audio[cfg.audio_only + c] > 0.0;
                let v_bit = rec.visual[cfg.visual_only + c] > 0.0;
                let class = cfg.audio_only + cfg.visual_only + c;
                assert_eq!(a_bit ^ v_bit, dense[class] != 0.0, "record {i} class {class}");
            }
        }
    }

    #[test]
    fn single_modality_is_chance_on_cross_classes() {
        // Balanced accuracy of every single audio signal bit against a
        // cross-modal class stays at chance.
        let mut cfg = small_cfg();
        cfg.num_records = 10_000;
        let ds = cfg.generate().unwrap();
        let class = cfg.audio_only + cfg.visual_only; // first cross class
        for bit in 0..cfg.audio_signal_dims() {
            let mut tp = 0u32;
            let mut tn = 0u32;
            let mut pos = 0u32;
            let mut neg = 0u32;
            for (i, rec) in ds.records.iter().enumerate() {
                let label = ds.dense_labels(i)[class] != 0.0;
                let pred = rec.audio[bit] > 0.0;
                if label {
                    pos += 1;
                    if pred {
                        tp += 1;
                    }
                } else {
                    neg += 1;
                    if !pred {
                        tn += 1;
                    }
                }
            }
            let balanced = 0.5 * (tp as f64 / pos as f64 + tn as f64 / neg as f64);
            let off_chance = (balanced - 0.5).abs();
            assert!(off_chance < 0.03, "audio bit {bit} predicts cross class: {balanced}");
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = small_cfg();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.avfr");
        let p2 = dir.path().join("b.avfr");
        let d1 = cfg.generate().unwrap();
        let d2 = cfg.generate().unwrap();
        write_records(&d1.header, d1.records.iter(), &p1).unwrap();
        write_records(&d2.header, d2.records.iter(), &p2).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }
}
