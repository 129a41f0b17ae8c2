//! Binary checkpoints: little-endian, a magic string, a JSON header with
//! the config and a tensor directory (name / shape / offset), then raw
//! 32-bit values.
//!
//! The tensor section holds the parameter registry, every batch norm's
//! running statistics, and any extra tensors the caller supplies (the
//! trainer stores optimizer state there as `opt.m.*` / `opt.v.*`).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AcousticModel, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::Element;

const MAGIC: &[u8; 8] = b"QZCKPT01";

/// Training progress stored alongside the weights so a run can resume
/// deterministically.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub step: usize,
    pub epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
    /// Offset into the data section, in elements.
    offset: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    trainer: Option<TrainerState>,
    tensors: Vec<TensorMeta>,
}

/// A checkpoint as read from disk, before instantiation.
pub struct RawCheckpoint {
    pub config: ModelConfig,
    pub trainer: Option<TrainerState>,
    pub tensors: HashMap<String, (Vec<usize>, Vec<f32>)>,
}

impl RawCheckpoint {
    pub fn tensor(&self, name: &str) -> Option<&(Vec<usize>, Vec<f32>)> {
        self.tensors.get(name)
    }
}

/// Serialize a model (plus optional trainer progress and extra tensors).
pub fn save_checkpoint<E: Element>(
    model: &AcousticModel<E>,
    path: impl AsRef<Path>,
    trainer: Option<TrainerState>,
    extra: &[(String, Vec<f32>)],
) -> Result<()> {
    if !model.all_finite() {
        return Err(Error::Numeric(
            "refusing to save a model with non-finite parameters".into(),
        ));
    }

    let mut metas = Vec::new();
    let mut data: Vec<f32> = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, values: Vec<f32>| {
        metas.push(TensorMeta {
            name,
            shape,
            offset: data.len(),
            len: values.len(),
        });
        data.extend(values);
    };

    for (name, p) in model.params() {
        push(
            name,
            p.shape().to_vec(),
            p.data().iter().map(|v| v.to_f64() as f32).collect(),
        );
    }
    for (prefix, bn) in model.bn_layers() {
        let (mean, var) = bn.running_stats();
        push(
            format!("{prefix}.running_mean"),
            vec![bn.channels],
            mean.iter().map(|v| v.to_f64() as f32).collect(),
        );
        push(
            format!("{prefix}.running_var"),
            vec![bn.channels],
            var.iter().map(|v| v.to_f64() as f32).collect(),
        );
    }
    for (name, values) in extra {
        push(name.clone(), vec![values.len()], values.clone());
    }

    let header = Header {
        config: model.config.clone(),
        trainer,
        tensors: metas,
    };
    let header_json = serde_json::to_vec(&header)?;

    let mut out = Vec::with_capacity(16 + header_json.len() + data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for v in &data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read and validate a checkpoint file without building a model.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<RawCheckpoint> {
    let bytes = fs::read(path.as_ref())
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.as_ref().display())))?;
    if bytes.len() < 16 || &bytes[0..8] != MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header_end = 16 + header_len;
    if bytes.len() < header_end {
        return Err(Error::Format("truncated checkpoint header".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| Error::Format(format!("bad checkpoint header: {e}")))?;

    let data = &bytes[header_end..];
    let mut tensors = HashMap::new();
    for meta in header.tensors {
        let start = meta.offset * 4;
        let end = start + meta.len * 4;
        if end > data.len() {
            return Err(Error::Format(format!(
                "truncated checkpoint: tensor {} runs past the end",
                meta.name
            )));
        }
        if meta.shape.iter().product::<usize>() != meta.len {
            return Err(Error::Format(format!(
                "tensor {}: shape {:?} does not match length {}",
                meta.name, meta.shape, meta.len
            )));
        }
        let values: Vec<f32> = data[start..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        tensors.insert(meta.name, (meta.shape, values));
    }
    Ok(RawCheckpoint {
        config: header.config,
        trainer: header.trainer,
        tensors,
    })
}

fn configs_compatible(file: &ModelConfig, requested: &ModelConfig) -> bool {
    let mut a = file.clone();
    let mut b = requested.clone();
    a.name = String::new();
    b.name = String::new();
    a.vocabulary = String::new();
    b.vocabulary = String::new();
    a == b
}

/// Build a model from a checkpoint.
///
/// With `config = None` the file's own config is used. A different label
/// inventory is permitted only with `reinit_head`, which keeps the fresh
/// seed-initialized output projection instead of the stored one.
pub fn load_checkpoint<E: Element>(
    path: impl AsRef<Path>,
    config: Option<&ModelConfig>,
    reinit_head: bool,
    seed: u64,
) -> Result<(AcousticModel<E>, RawCheckpoint)> {
    let raw = read_checkpoint(path)?;
    let target = config.unwrap_or(&raw.config).clone();
    if !configs_compatible(&raw.config, &target) {
        return Err(Error::Config(
            "checkpoint architecture does not match the requested config".into(),
        ));
    }
    if raw.config.vocabulary != target.vocabulary && !reinit_head {
        return Err(Error::Config(format!(
            "checkpoint has {} labels but the config wants {}; pass --reinit-head to fine-tune",
            raw.config.labels(),
            target.labels()
        )));
    }

    let mut model = AcousticModel::<E>::build(&target, seed)?;
    if reinit_head {
        model.reinit_head(seed)?;
    }

    for (name, param) in model.params() {
        let is_head = name.starts_with("c4.");
        match raw.tensors.get(&name) {
            Some((shape, values)) => {
                if shape != param.shape() {
                    if reinit_head && is_head {
                        continue;
                    }
                    return Err(Error::Config(format!(
                        "tensor {name}: checkpoint shape {:?} vs model {:?}",
                        shape,
                        param.shape()
                    )));
                }
                param.set_data(values.iter().map(|&v| E::from_f64(v as f64)).collect());
            }
            None => {
                return Err(Error::Config(format!("checkpoint is missing tensor {name}")));
            }
        }
    }
    for (prefix, bn) in model.bn_layers() {
        let mean_name = format!("{prefix}.running_mean");
        let var_name = format!("{prefix}.running_var");
        let (Some((_, mean)), Some((_, var))) =
            (raw.tensors.get(&mean_name), raw.tensors.get(&var_name))
        else {
            return Err(Error::Config(format!(
                "checkpoint is missing running stats for {prefix}"
            )));
        };
        if mean.len() != bn.channels || var.len() != bn.channels {
            return Err(Error::Config(format!(
                "running stats for {prefix} have the wrong width"
            )));
        }
        bn.set_running_stats(
            mean.iter().map(|&v| E::from_f64(v as f64)).collect(),
            var.iter().map(|&v| E::from_f64(v as f64)).collect(),
        )?;
    }
    Ok((model, raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::nn::Mode;
    use crate::rng::Rng;
    use crate::tensor::Tensor;

    fn tiny_model(seed: u64) -> AcousticModel<f32> {
        AcousticModel::build(&ModelConfig::tiny_1x1(), seed).unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact_and_forward_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut model = tiny_model(11);
        model.set_mode(Mode::Eval);
        save_checkpoint(&model, &path, Some(TrainerState { step: 5, epoch: 1 }), &[]).unwrap();

        let (mut loaded, raw) = load_checkpoint::<f32>(&path, None, false, 999).unwrap();
        loaded.set_mode(Mode::Eval);
        assert_eq!(raw.trainer, Some(TrainerState { step: 5, epoch: 1 }));
        for ((na, pa), (_, pb)) in model.params().iter().zip(loaded.params().iter()) {
            assert_eq!(pa.values(), pb.values(), "{na}");
        }

        let mut rng = Rng::new(3);
        let feats = Tensor::<f32>::rand_uniform(&[1, 64, 30], -1.0, 1.0, &mut rng);
        let (a, _) = model.forward(&feats, &[30], None).unwrap();
        let (b, _) = loaded.forward(&feats, &[30], None).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn truncated_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = tiny_model(1);
        save_checkpoint(&model, &path, None, &[]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut = path.with_extension("cut");
        std::fs::write(&cut, &bytes[..bytes.len() - 64]).unwrap();
        assert!(matches!(read_checkpoint(&cut), Err(Error::Format(_))));
        std::fs::write(&cut, b"garbage").unwrap();
        assert!(matches!(read_checkpoint(&cut), Err(Error::Format(_))));
    }

    #[test]
    fn reinit_head_keeps_body_and_replaces_c4() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = tiny_model(7);
        save_checkpoint(&model, &path, None, &[]).unwrap();

        // Same architecture, bigger label inventory.
        let mut wide = ModelConfig::tiny_1x1();
        wide.vocabulary = format!("{}012", wide.vocabulary);
        assert!(load_checkpoint::<f32>(&path, Some(&wide), false, 5).is_err());

        let (loaded, _) = load_checkpoint::<f32>(&path, Some(&wide), true, 5).unwrap();
        assert_eq!(loaded.vocab.size(), 32);
        let before: std::collections::HashMap<String, Vec<f32>> = model
            .params()
            .into_iter()
            .map(|(n, p)| (n, p.values()))
            .collect();
        for (name, p) in loaded.params() {
            if name.starts_with("c4.") {
                // 32-label head cannot have the stored 29-label shape.
                assert_ne!(before[&name].len(), p.numel(), "{name} must be fresh");
            } else {
                assert_eq!(before[&name], p.values(), "{name} must carry over");
            }
        }
    }

    #[test]
    fn extra_tensors_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = tiny_model(2);
        let extra = vec![("opt.v.c1.dw.weight".to_string(), vec![1.5f32, 2.5])];
        save_checkpoint(&model, &path, None, &extra).unwrap();
        let raw = read_checkpoint(&path).unwrap();
        assert_eq!(raw.tensor("opt.v.c1.dw.weight").unwrap().1, vec![1.5, 2.5]);
    }

    #[test]
    fn incompatible_architecture_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = tiny_model(2);
        save_checkpoint(&model, &path, None, &[]).unwrap();
        let other = ModelConfig::wsj_5x3();
        assert!(load_checkpoint::<f32>(&path, Some(&other), false, 1).is_err());
    }
}
