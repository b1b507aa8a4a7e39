//! Checkpoint persistence.
//!
//! Little-endian binary: magic `AVCK`, u16 version, a length-prefixed
//! `key=value` UTF-8 config block, then repeated tensor entries
//! `[u16 name_len, name, u8 rank, u32 extents.., f64 data..]`, and a
//! trailing CRC32 over all prior bytes. Tensor payloads are raw f64 bits,
//! so save/load round-trips are exact and repeated saves are byte-identical.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::data::NormStats;
use crate::error::{AvError, Result};
use crate::models::{ArchName, ArchSpec, Fusion, Model, NamedTensor};
use crate::tensor::Tensor;

use super::{OptState, TrainConfig};

const MAGIC: &[u8; 4] = b"AVCK";
pub const CHECKPOINT_VERSION: u16 = 1;
/// Weight-init scheme identifier recorded for reproducibility.
pub const INIT_SCHEME: &str = "he_relu_xavier_linear_bias1e-2_v1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub spec: ArchSpec,
    pub config: TrainConfig,
    /// Epochs completed when the snapshot was taken.
    pub epoch: usize,
    pub params: Vec<NamedTensor>,
    pub opt_state: OptState,
    /// Present when inputs were standardized; holds the training-set stats.
    pub norm_stats: Option<NormStats>,
}

impl Checkpoint {
    pub fn from_training(model: &Model, state: &OptState, cfg: &TrainConfig, epoch: usize) -> Self {
        Checkpoint {
            spec: model.spec.clone(),
            config: cfg.clone(),
            epoch,
            params: model.params.clone(),
            opt_state: state.clone(),
            norm_stats: None,
        }
    }

    pub fn with_norm_stats(mut self, stats: Option<NormStats>) -> Self {
        self.norm_stats = stats;
        self
    }

    /// Rebuild the model; parameter names and shapes must match the plan of
    /// the embedded spec exactly.
    pub fn to_model(&self) -> Result<Model> {
        let mut model = Model::build(self.spec.clone(), self.config.seed)?;
        if model.params.len() != self.params.len() {
            return Err(AvError::Format {
                offset: 0,
                message: format!(
                    "checkpoint has {} parameter tensors, architecture expects {}",
                    self.params.len(),
                    model.params.len()
                ),
            });
        }
        for (slot, stored) in model.params.iter_mut().zip(&self.params) {
            if slot.name != stored.name || slot.tensor.shape() != stored.tensor.shape() {
                return Err(AvError::Format {
                    offset: 0,
                    message: format!(
                        "checkpoint tensor {} {:?} does not match plan slot {} {:?}",
                        stored.name,
                        stored.tensor.shape(),
                        slot.name,
                        slot.tensor.shape()
                    ),
                });
            }
            slot.tensor = stored.tensor.clone();
        }
        Ok(model)
    }

    fn config_block(&self) -> String {
        let s = &self.spec;
        let c = &self.config;
        let mut out = String::new();
        for (key, value) in [
            ("arch", s.name.as_str().to_string()),
            ("fusion", s.fusion.as_str().to_string()),
            ("visual_dim", s.visual_dim.to_string()),
            ("audio_dim", s.audio_dim.to_string()),
            ("hidden_dim", s.hidden_dim.to_string()),
            ("attn_dim", s.attn_dim.to_string()),
            ("num_classes", s.num_classes.to_string()),
            ("branch_depth", s.branch_depth.to_string()),
            ("fusion_depth", s.fusion_depth.to_string()),
            ("attn_rows", s.attn_rows.to_string()),
            ("use_attention", s.use_attention.to_string()),
            ("learning_rate", c.learning_rate.to_string()),
            ("epochs", c.epochs.to_string()),
            ("batch_size", c.batch_size.to_string()),
            ("dropout_rate", c.dropout_rate.to_string()),
            ("weight_decay", c.weight_decay.to_string()),
            ("beta1", c.beta1.to_string()),
            ("beta2", c.beta2.to_string()),
            ("epsilon", c.epsilon.to_string()),
            ("seed", c.seed.to_string()),
            ("epoch", self.epoch.to_string()),
            ("opt_step", self.opt_state.step.to_string()),
            ("standardize", self.norm_stats.is_some().to_string()),
            ("init", INIT_SCHEME.to_string()),
        ] {
            out.push_str(key);
            out.push('=');
            out.push_str(&value);
            out.push('\n');
        }
        out
    }
}

fn push_tensor(bytes: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f64]) {
    bytes.extend_from_slice(&(name.len() as u16).to_le_bytes());
    bytes.extend_from_slice(name.as_bytes());
    bytes.push(shape.len() as u8);
    for &extent in shape {
        bytes.extend_from_slice(&(extent as u32).to_le_bytes());
    }
    for &v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let config = checkpoint.config_block();
    bytes.extend_from_slice(&(config.len() as u32).to_le_bytes());
    bytes.extend_from_slice(config.as_bytes());

    for p in &checkpoint.params {
        push_tensor(&mut bytes, &format!("p:{}", p.name), p.tensor.shape(), p.tensor.data());
    }
    for (p, m) in checkpoint.params.iter().zip(&checkpoint.opt_state.m) {
        push_tensor(&mut bytes, &format!("m:{}", p.name), &[m.len()], m);
    }
    for (p, v) in checkpoint.params.iter().zip(&checkpoint.opt_state.v) {
        push_tensor(&mut bytes, &format!("v:{}", p.name), &[v.len()], v);
    }
    if let Some(stats) = &checkpoint.norm_stats {
        push_tensor(&mut bytes, "norm:visual_mean", &[stats.visual_mean.len()], &stats.visual_mean);
        push_tensor(&mut bytes, "norm:visual_std", &[stats.visual_std.len()], &stats.visual_std);
        push_tensor(&mut bytes, "norm:audio_mean", &[stats.audio_mean.len()], &stats.audio_mean);
        push_tensor(&mut bytes, "norm:audio_std", &[stats.audio_std.len()], &stats.audio_std);
    }

    let crc = crc32fast::hash(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    fs::write(path, bytes)?;
    Ok(())
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(AvError::Format {
                offset: self.pos as u64,
                message: format!("truncated checkpoint: needed {n} more bytes"),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

fn required<'m>(map: &'m HashMap<String, String>, key: &str) -> Result<&'m str> {
    map.get(key).map(|s| s.as_str()).ok_or_else(|| AvError::Format {
        offset: 0,
        message: format!("config block missing key {key}"),
    })
}

fn parse_num<T: std::str::FromStr>(map: &HashMap<String, String>, key: &str) -> Result<T> {
    required(map, key)?.parse().map_err(|_| AvError::Format {
        offset: 0,
        message: format!("config value for {key} is not a valid number"),
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    if bytes.len() < 10 {
        return Err(AvError::Format {
            offset: bytes.len() as u64,
            message: "file too short for a checkpoint".into(),
        });
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(AvError::Format {
            offset: (bytes.len() - 4) as u64,
            message: format!("CRC32 mismatch: stored {stored:#010x}, computed {computed:#010x}"),
        });
    }

    let mut p = Parser { bytes: body, pos: 0 };
    if p.take(4)? != MAGIC {
        return Err(AvError::Format {
            offset: 0,
            message: "bad magic, expected \"AVCK\"".into(),
        });
    }
    let version = p.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(AvError::Format {
            offset: 4,
            message: format!("unsupported checkpoint version {version}"),
        });
    }
    let config_len = p.u32()? as usize;
    let config_str = std::str::from_utf8(p.take(config_len)?).map_err(|_| AvError::Format {
        offset: 10,
        message: "config block is not UTF-8".into(),
    })?;
    let mut map = HashMap::new();
    for line in config_str.lines() {
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.to_string(), v.to_string());
        }
    }

    let name = ArchName::parse(required(&map, "arch")?)?;
    let fusion = match required(&map, "fusion")? {
        "none" => Fusion::None,
        "early" => Fusion::Early,
        "late" => Fusion::Late,
        other => {
            return Err(AvError::Format {
                offset: 0,
                message: format!("unknown fusion mode {other}"),
            })
        }
    };
    let spec = ArchSpec {
        name,
        visual_dim: parse_num(&map, "visual_dim")?,
        audio_dim: parse_num(&map, "audio_dim")?,
        hidden_dim: parse_num(&map, "hidden_dim")?,
        attn_dim: parse_num(&map, "attn_dim")?,
        num_classes: parse_num(&map, "num_classes")?,
        branch_depth: parse_num(&map, "branch_depth")?,
        fusion_depth: parse_num(&map, "fusion_depth")?,
        attn_rows: parse_num(&map, "attn_rows")?,
        use_attention: parse_num(&map, "use_attention")?,
        fusion,
    };
    let config = TrainConfig {
        learning_rate: parse_num(&map, "learning_rate")?,
        epochs: parse_num(&map, "epochs")?,
        batch_size: parse_num(&map, "batch_size")?,
        dropout_rate: parse_num(&map, "dropout_rate")?,
        weight_decay: parse_num(&map, "weight_decay")?,
        beta1: parse_num(&map, "beta1")?,
        beta2: parse_num(&map, "beta2")?,
        epsilon: parse_num(&map, "epsilon")?,
        seed: parse_num(&map, "seed")?,
    };
    let epoch: usize = parse_num(&map, "epoch")?;
    let opt_step: u64 = parse_num(&map, "opt_step")?;

    // tensor entries until the CRC
    let mut params: Vec<NamedTensor> = Vec::new();
    let mut moments: HashMap<String, Vec<f64>> = HashMap::new();
    let mut velocities: HashMap<String, Vec<f64>> = HashMap::new();
    let mut norm: HashMap<String, Vec<f64>> = HashMap::new();
    while p.pos < body.len() {
        let name_len = p.u16()? as usize;
        let name = std::str::from_utf8(p.take(name_len)?)
            .map_err(|_| AvError::Format {
                offset: p.pos as u64,
                message: "tensor name is not UTF-8".into(),
            })?
            .to_string();
        let rank = p.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(p.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = p.take(numel * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(n) = name.strip_prefix("p:") {
            let tensor = Tensor::new(shape, data).map_err(|e| AvError::Format {
                offset: p.pos as u64,
                message: format!("invalid tensor {n}: {e}"),
            })?;
            params.push(NamedTensor {
                name: n.to_string(),
                tensor,
            });
        } else if let Some(n) = name.strip_prefix("m:") {
            moments.insert(n.to_string(), data);
        } else if let Some(n) = name.strip_prefix("v:") {
            velocities.insert(n.to_string(), data);
        } else if let Some(n) = name.strip_prefix("norm:") {
            norm.insert(n.to_string(), data);
        } else {
            return Err(AvError::Format {
                offset: p.pos as u64,
                message: format!("unknown tensor section {name}"),
            });
        }
    }

    let take_buf = |store: &mut HashMap<String, Vec<f64>>, what: &str, p: &NamedTensor| {
        store.remove(&p.name).ok_or_else(|| AvError::Format {
            offset: 0,
            message: format!("missing {what} buffer for {}", p.name),
        })
    };
    let mut opt_state = OptState {
        step: opt_step,
        m: Vec::with_capacity(params.len()),
        v: Vec::with_capacity(params.len()),
    };
    for param in &params {
        opt_state.m.push(take_buf(&mut moments, "first-moment", param)?);
        opt_state.v.push(take_buf(&mut velocities, "second-moment", param)?);
    }

    let norm_stats = if map.get("standardize").map(|s| s == "true").unwrap_or(false) {
        let mut get = |key: &str| {
            norm.remove(key).ok_or_else(|| AvError::Format {
                offset: 0,
                message: format!("missing standardization tensor norm:{key}"),
            })
        };
        Some(NormStats {
            visual_mean: get("visual_mean")?,
            visual_std: get("visual_std")?,
            audio_mean: get("audio_mean")?,
            audio_std: get("audio_std")?,
        })
    } else {
        None
    };

    Ok(Checkpoint {
        spec,
        config,
        epoch,
        params,
        opt_state,
        norm_stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ALL_ARCHS;
    use crate::rng;
    use rand::Rng;

    fn toy_checkpoint() -> Checkpoint {
        let spec = ArchSpec::defaults(ArchName::AttendFusion).with_dims(6, 4, 5, 4, 3);
        let model = Model::build(spec, 77).unwrap();
        let mut state = OptState::new(&model.params);
        state.step = 41;
        let mut r = rng::rng(5);
        for buf in state.m.iter_mut().chain(state.v.iter_mut()) {
            for v in buf.iter_mut() {
                *v = r.gen_range(-0.5..0.5);
            }
        }
        Checkpoint::from_training(&model, &state, &TrainConfig::default(), 12)
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.avck");
        let p2 = dir.path().join("b.avck");
        let ck = toy_checkpoint();
        save_checkpoint(&ck, &p1).unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        save_checkpoint(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(loaded.epoch, 12);
        assert_eq!(loaded.opt_state.step, 41);
        assert_eq!(loaded.config, TrainConfig::default());
    }

    #[test]
    fn loaded_model_forward_is_bitwise_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.avck");
        let ck = toy_checkpoint();
        save_checkpoint(&ck, &path).unwrap();
        let restored = load_checkpoint(&path).unwrap().to_model().unwrap();
        let original = ck.to_model().unwrap();

        let mut r = rng::rng(9);
        let visual = Tensor::new(vec![2, 6], (0..12).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
        let audio = Tensor::new(vec![2, 4], (0..8).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
        let a = original.infer(&visual, &audio).unwrap();
        let b = restored.infer(&visual, &audio).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn truncation_and_corruption_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.avck");
        save_checkpoint(&toy_checkpoint(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let cut = &bytes[..bytes.len() / 2];
        std::fs::write(&path, cut).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(AvError::Format { .. })));

        let mut flipped = bytes.clone();
        let mid = flipped.len() / 3;
        flipped[mid] ^= 0x40;
        std::fs::write(&path, &flipped).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        match err {
            AvError::Format { message, .. } => assert!(message.contains("CRC32"), "{message}"),
            other => panic!("expected CRC error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.avck");
        save_checkpoint(&toy_checkpoint(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9; // version field
        let body_len = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..body_len]);
        bytes[body_len..].copy_from_slice(&crc.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        match err {
            AvError::Format { offset: 4, message } => assert!(message.contains("version")),
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn round_trips_for_every_architecture() {
        let dir = tempfile::tempdir().unwrap();
        for name in ALL_ARCHS {
            let spec = ArchSpec::defaults(name).with_dims(6, 4, 5, 4, 3);
            let model = Model::build(spec, 3).unwrap();
            let state = OptState::new(&model.params);
            let ck = Checkpoint::from_training(&model, &state, &TrainConfig::default(), 0);
            let path = dir.path().join(format!("{}.avck", name.as_str()));
            save_checkpoint(&ck, &path).unwrap();
            let restored = load_checkpoint(&path).unwrap();
            restored.to_model().unwrap();
            assert_eq!(restored.spec, ck.spec, "{}", name.as_str());
        }
    }
}
