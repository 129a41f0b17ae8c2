//! Declarative model configuration and the shipped architectures.
//!
//! The JSON schema (version 1) mirrors these structs exactly; unknown keys
//! are rejected. A config file carries a `model` section and an optional
//! `training` section:
//!
//! ```json
//! {
//!   "config_version": 1,
//!   "model": {
//!     "name": "quartznet15x5",
//!     "input_features": 64,
//!     "vocabulary": "abcdefghijklmnopqrstuvwxyz '",
//!     "dropout": 0.0,
//!     "c1": { "kernel": 33, "channels": 256, "stride": 2, "separable": true },
//!     "blocks": [
//!       { "modules": 5, "kernel": 33, "channels": 256, "repeat": 3, "groups": 1, "separable": true }
//!     ],
//!     "c2": { "kernel": 87, "channels": 512, "separable": true },
//!     "c3": { "channels": 1024 },
//!     "c4": { "dilation": 2 }
//!   },
//!   "training": { ... }
//! }
//! ```

use serde::{Deserialize, Serialize};

use crate::ctc::Vocabulary;
use crate::error::{Error, Result};
use crate::frontend::AugmentSpec;

pub const CONFIG_VERSION: u32 = 1;

/// The C1 prologue layer.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PrologueSpec {
    pub kernel: usize,
    pub channels: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_true")]
    pub separable: bool,
}

fn default_stride() -> usize {
    2
}
fn default_true() -> bool {
    true
}
fn default_one() -> usize {
    1
}

/// One group of identical residual blocks.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    /// R: conv modules per block.
    pub modules: usize,
    /// K: depthwise kernel width.
    pub kernel: usize,
    /// C: output channels.
    pub channels: usize,
    /// S: how many times this block is repeated.
    #[serde(default = "default_one")]
    pub repeat: usize,
    /// Groups for the module pointwise convolutions.
    #[serde(default = "default_one")]
    pub groups: usize,
    #[serde(default = "default_true")]
    pub separable: bool,
}

/// The C2 epilogue layer.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct C2Spec {
    pub kernel: usize,
    pub channels: usize,
    #[serde(default = "default_true")]
    pub separable: bool,
}

/// The C3 projection (kernel 1).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct C3Spec {
    pub channels: usize,
}

/// The C4 output projection (kernel 1, output extent = label count
/// including the blank).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct C4Spec {
    #[serde(default = "default_c4_dilation")]
    pub dilation: usize,
}

fn default_c4_dilation() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub input_features: usize,
    /// Text symbols in class order; the CTC blank is implicit and last.
    pub vocabulary: String,
    #[serde(default)]
    pub dropout: f64,
    pub c1: PrologueSpec,
    pub blocks: Vec<BlockSpec>,
    pub c2: C2Spec,
    pub c3: C3Spec,
    pub c4: C4Spec,
}

impl ModelConfig {
    pub fn vocab(&self) -> Result<Vocabulary> {
        Vocabulary::new(&self.vocabulary)
    }

    /// Output classes: symbols + blank.
    pub fn labels(&self) -> usize {
        self.vocabulary.chars().count() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_features == 0 {
            return Err(Error::Config("input_features must be >= 1".into()));
        }
        if self.blocks.is_empty() {
            return Err(Error::Config("at least one block group is required".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        self.vocab()?;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.modules == 0 || b.kernel == 0 || b.channels == 0 || b.repeat == 0 {
                return Err(Error::Config(format!(
                    "block {i}: modules, kernel, channels and repeat must be >= 1"
                )));
            }
            if b.groups == 0 || b.channels % b.groups != 0 {
                return Err(Error::Config(format!(
                    "block {i}: groups {} must divide channels {}",
                    b.groups, b.channels
                )));
            }
        }
        if self.c1.kernel == 0 || self.c1.stride == 0 || self.c1.channels == 0 {
            return Err(Error::Config("c1 needs kernel, stride, channels >= 1".into()));
        }
        if self.c2.kernel == 0 || self.c2.channels == 0 || self.c3.channels == 0 {
            return Err(Error::Config("c2/c3 need kernel and channels >= 1".into()));
        }
        if self.c4.dilation == 0 {
            return Err(Error::Config("c4 dilation must be >= 1".into()));
        }
        Ok(())
    }

    /// Block instances after expanding repeats, with input channels resolved.
    /// Returns `(spec_index, c_in, spec)` per instance.
    pub fn expanded_blocks(&self) -> Vec<(usize, usize, &BlockSpec)> {
        let mut out = Vec::new();
        let mut c_in = self.c1.channels;
        for (i, spec) in self.blocks.iter().enumerate() {
            for _ in 0..spec.repeat {
                out.push((i, c_in, spec));
                c_in = spec.channels;
            }
        }
        out
    }

    fn standard(name: &str, blocks: Vec<BlockSpec>, dropout: f64) -> Self {
        ModelConfig {
            name: name.to_string(),
            input_features: 64,
            vocabulary: Vocabulary::english().symbols_string(),
            dropout,
            c1: PrologueSpec {
                kernel: 33,
                channels: 256,
                stride: 2,
                separable: true,
            },
            blocks,
            c2: C2Spec {
                kernel: 87,
                channels: 512,
                separable: true,
            },
            c3: C3Spec { channels: 1024 },
            c4: C4Spec { dilation: 2 },
        }
    }

    fn librispeech_blocks(repeat: usize, groups: usize) -> Vec<BlockSpec> {
        [(33, 256), (39, 256), (51, 512), (63, 512), (75, 512)]
            .into_iter()
            .map(|(kernel, channels)| BlockSpec {
                modules: 5,
                kernel,
                channels,
                repeat,
                groups,
                separable: true,
            })
            .collect()
    }

    /// 5 blocks x 5 modules, 6.7 M parameters.
    pub fn quartznet_5x5() -> Self {
        Self::standard("quartznet5x5", Self::librispeech_blocks(1, 1), 0.0)
    }

    /// 10 blocks x 5 modules, 12.8 M parameters.
    pub fn quartznet_10x5() -> Self {
        Self::standard("quartznet10x5", Self::librispeech_blocks(2, 1), 0.0)
    }

    /// 15 blocks x 5 modules, 18.9 M parameters.
    pub fn quartznet_15x5() -> Self {
        Self::standard("quartznet15x5", Self::librispeech_blocks(3, 1), 0.0)
    }

    /// 15x5 with grouped pointwise convolutions: 12.1 M at g=2, 8.7 M at g=4.
    pub fn quartznet_15x5_grouped(groups: usize) -> Self {
        Self::standard(
            &format!("quartznet15x5_g{groups}"),
            Self::librispeech_blocks(3, groups),
            0.0,
        )
    }

    /// The 5x3 recipe: 6.4 M parameters, dropout 0.2.
    pub fn wsj_5x3() -> Self {
        let blocks = [(63, 512), (63, 512), (75, 512), (75, 512), (75, 512)]
            .into_iter()
            .map(|(kernel, channels)| BlockSpec {
                modules: 3,
                kernel,
                channels,
                repeat: 1,
                groups: 1,
                separable: true,
            })
            .collect();
        Self::standard("wsj5x3", blocks, 0.2)
    }

    /// Minimal 1x1 smoke-test architecture (~11 k parameters).
    pub fn tiny_1x1() -> Self {
        ModelConfig {
            name: "tiny1x1".to_string(),
            input_features: 64,
            vocabulary: Vocabulary::english().symbols_string(),
            dropout: 0.0,
            c1: PrologueSpec {
                kernel: 9,
                channels: 32,
                stride: 2,
                separable: true,
            },
            blocks: vec![BlockSpec {
                modules: 1,
                kernel: 9,
                channels: 32,
                repeat: 1,
                groups: 1,
                separable: true,
            }],
            c2: C2Spec {
                kernel: 9,
                channels: 32,
                separable: true,
            },
            c3: C3Spec { channels: 64 },
            c4: C4Spec { dilation: 2 },
        }
    }
}

/// NovoGrad, schedule and loop settings carried in a config file's
/// `training` section. Defaults follow the published 5x3 recipe where the
/// architecture tables leave them open.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub warmup_steps: usize,
    /// Cosine horizon; defaults to epochs * batches when absent.
    pub total_steps: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    /// Steps between checkpoints; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub augment: AugmentSpec,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 10,
            batch_size: 32,
            lr: 0.05,
            lr_min: 0.0,
            warmup_steps: 1000,
            total_steps: None,
            beta1: 0.95,
            beta2: 0.5,
            weight_decay: 0.001,
            grad_clip: 1.0,
            checkpoint_every: 0,
            augment: AugmentSpec::default(),
        }
    }
}

/// Top-level config document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub config_version: u32,
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
}

impl ConfigFile {
    pub fn new(model: ModelConfig, training: TrainingConfig) -> Self {
        ConfigFile {
            config_version: CONFIG_VERSION,
            model,
            training,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ConfigFile =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        if cfg.config_version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config_version {} is not supported (expected {CONFIG_VERSION})",
                cfg.config_version
            )));
        }
        cfg.model.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Apply a `dotted.key=value` override. The key must already exist in
    /// the serialized document and the value must parse as the same JSON
    /// type; the patched document is re-validated.
    pub fn with_override(&self, spec: &str) -> Result<Self> {
        let (key, value) = spec.split_once('=').ok_or_else(|| {
            Error::Config(format!("override {spec:?} must look like dotted.key=value"))
        })?;
        let mut doc: serde_json::Value = serde_json::to_value(self)?;
        let mut node = &mut doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let child = match node {
                serde_json::Value::Object(map) => map.get_mut(*part),
                serde_json::Value::Array(items) => part
                    .parse::<usize>()
                    .ok()
                    .and_then(|idx| items.get_mut(idx)),
                _ => None,
            };
            node = child.ok_or_else(|| {
                Error::Config(format!(
                    "override key {key:?} has no field {:?}",
                    parts[..=i].join(".")
                ))
            })?;
        }
        let new_value: serde_json::Value = match node {
            serde_json::Value::String(_) => serde_json::Value::String(value.to_string()),
            _ => serde_json::from_str(value)
                .map_err(|e| Error::Config(format!("override value {value:?}: {e}")))?,
        };
        let same_kind = matches!(
            (&*node, &new_value),
            (serde_json::Value::Number(_), serde_json::Value::Number(_))
                | (serde_json::Value::Bool(_), serde_json::Value::Bool(_))
                | (serde_json::Value::String(_), serde_json::Value::String(_))
                | (serde_json::Value::Array(_), serde_json::Value::Array(_))
                | (serde_json::Value::Null, _)
        );
        if !same_kind {
            return Err(Error::Config(format!(
                "override {key:?} changes the value type"
            )));
        }
        *node = new_value;
        let patched: ConfigFile = serde_json::from_value(doc)
            .map_err(|e| Error::Config(format!("override produces invalid config: {e}")))?;
        patched.model.validate()?;
        Ok(patched)
    }
}
