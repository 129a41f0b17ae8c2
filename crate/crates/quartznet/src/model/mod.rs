//! Config-driven acoustic model: builder, forward pass to CTC log
//! probabilities, parameter profiler and checkpoints.

mod checkpoint;
mod config;
mod profile;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, RawCheckpoint, TrainerState};
pub use config::{
    BlockSpec, C2Spec, C3Spec, C4Spec, ConfigFile, ModelConfig, PrologueSpec, TrainingConfig,
    CONFIG_VERSION,
};
pub use profile::{
    count_params, round_millions, separable_module_count, tds_param_count, LayerCount,
    ParamReport,
};

use crate::ctc::Vocabulary;
use crate::error::{Error, Result};
use crate::nn::{
    log_softmax_channels, BatchNorm1d, Conv1d, ConvKind, ConvModule, Mode, ModuleConv,
    ResidualBlock,
};
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

/// Swap `[B, C, T]` to `[B, T, C]`.
fn to_time_major<E: Element>(x: &Tensor<E>) -> Tensor<E> {
    let shape = x.shape().to_vec();
    let (batch, channels, t) = (shape[0], shape[1], shape[2]);
    let mut out = vec![E::ZERO; x.numel()];
    {
        let xd = x.data();
        for b in 0..batch {
            for c in 0..channels {
                for ti in 0..t {
                    out[(b * t + ti) * channels + c] = xd[(b * channels + c) * t + ti];
                }
            }
        }
    }
    Tensor::from_op(
        vec![batch, t, channels],
        out,
        vec![x.clone()],
        move |g, parents, sink| {
            let mut gx = vec![E::ZERO; g.len()];
            for b in 0..batch {
                for c in 0..channels {
                    for ti in 0..t {
                        gx[(b * channels + c) * t + ti] = g[(b * t + ti) * channels + c];
                    }
                }
            }
            sink.add(&parents[0], gx);
        },
    )
}

/// An instantiated network with its parameter registry.
pub struct AcousticModel<E: Element> {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub seed: u64,
    c1: ConvModule<E>,
    blocks: Vec<ResidualBlock<E>>,
    c2: ConvModule<E>,
    c3: ConvModule<E>,
    c4: Conv1d<E>,
    mode: Mode,
}

impl<E: Element> AcousticModel<E> {
    /// Deterministically initialize a network from a config and seed.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let vocab = config.vocab()?;
        let mut rng = Rng::derive(seed, "init", 0);

        let c1 = if config.c1.separable {
            ConvModule::separable(
                config.c1.kernel,
                config.input_features,
                config.c1.channels,
                config.c1.stride,
                1,
                1,
                &mut rng,
            )?
        } else {
            ConvModule::plain(
                config.c1.kernel,
                config.input_features,
                config.c1.channels,
                config.c1.stride,
                1,
                &mut rng,
            )?
        };

        let mut blocks = Vec::new();
        for (_, c_in, spec) in config.expanded_blocks() {
            blocks.push(ResidualBlock::new(
                spec.modules,
                spec.kernel,
                c_in,
                spec.channels,
                spec.groups,
                spec.separable,
                config.dropout,
                &mut rng,
            )?);
        }
        let last_c = config
            .expanded_blocks()
            .last()
            .map(|(_, _, s)| s.channels)
            .unwrap_or(config.c1.channels);

        let c2 = if config.c2.separable {
            ConvModule::separable(config.c2.kernel, last_c, config.c2.channels, 1, 1, 1, &mut rng)?
        } else {
            ConvModule::plain(config.c2.kernel, last_c, config.c2.channels, 1, 1, &mut rng)?
        };
        let c3 = ConvModule::plain(1, config.c2.channels, config.c3.channels, 1, 1, &mut rng)?;
        let c4 = Conv1d::new(
            ConvKind::Pointwise {
                groups: 1,
                shuffle: false,
            },
            1,
            config.c3.channels,
            config.labels(),
            1,
            config.c4.dilation,
            true,
            &mut rng,
        )?;

        Ok(AcousticModel {
            config: config.clone(),
            vocab,
            seed,
            c1,
            blocks,
            c2,
            c3,
            c4,
            mode: Mode::Train,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Re-initialize only the output projection (for fine-tuning onto a new
    /// label inventory).
    pub fn reinit_head(&mut self, seed: u64) -> Result<()> {
        let mut rng = Rng::derive(seed, "reinit-head", 0);
        self.c4 = Conv1d::new(
            ConvKind::Pointwise {
                groups: 1,
                shuffle: false,
            },
            1,
            self.config.c3.channels,
            self.config.labels(),
            1,
            self.config.c4.dilation,
            true,
            &mut rng,
        )?;
        Ok(())
    }

    pub fn out_time(&self, t_in: usize) -> usize {
        t_in.div_ceil(self.config.c1.stride)
    }

    pub fn out_lengths(&self, lengths: &[usize]) -> Vec<usize> {
        lengths.iter().map(|&l| self.out_time(l)).collect()
    }

    /// Forward pass: `[B, F, T]` features to (`[B, T_out, V]` log
    /// probabilities, output lengths). Dropout draws from `rng` in train
    /// mode when the config enables it.
    pub fn forward(
        &self,
        feats: &Tensor<E>,
        lengths: &[usize],
        mut rng: Option<&mut Rng>,
    ) -> Result<(Tensor<E>, Vec<usize>)> {
        let shape = feats.shape();
        if shape.len() != 3 || shape[1] != self.config.input_features {
            return Err(Error::Shape(format!(
                "expected [B, {}, T] features, got {shape:?}",
                self.config.input_features
            )));
        }
        if lengths.len() != shape[0] {
            return Err(Error::Shape(format!(
                "{} lengths for batch {}",
                lengths.len(),
                shape[0]
            )));
        }
        if lengths.iter().any(|&l| l == 0 || l > shape[2]) {
            return Err(Error::Contract(
                "utterance lengths must be in 1..=T".into(),
            ));
        }
        let mode = self.mode;
        let apply_dropout = self.config.dropout > 0.0 && mode == Mode::Train;
        if apply_dropout && rng.is_none() {
            return Err(Error::Contract(
                "dropout is enabled but no dropout rng was provided".into(),
            ));
        }
        let dropout_p = self.config.dropout;
        let post_relu = |x: Tensor<E>, rng: &mut Option<&mut Rng>| -> Tensor<E> {
            let y = x.relu();
            if apply_dropout {
                crate::nn::dropout(&y, dropout_p, rng.as_deref_mut().unwrap())
            } else {
                y
            }
        };

        let (x, lens) = self.c1.forward(feats, Some(lengths), mode)?;
        let mut x = post_relu(x, &mut rng);
        let lens = lens.expect("lengths flow through");

        for block in &self.blocks {
            x = block.forward(&x, Some(&lens), mode, rng.as_deref_mut())?;
        }

        let (x2, _) = self.c2.forward(&x, Some(&lens), mode)?;
        let x2 = post_relu(x2, &mut rng);
        let (x3, _) = self.c3.forward(&x2, Some(&lens), mode)?;
        let x3 = post_relu(x3, &mut rng);
        let logits = self.c4.forward(&x3)?;
        let log_probs = to_time_major(&log_softmax_channels(&logits)?);
        Ok((log_probs, lens))
    }

    /// Named parameter registry in a stable order (weights, biases, batch
    /// norm gamma/beta; running stats are buffers, see [`Self::bn_layers`]).
    pub fn params(&self) -> Vec<(String, Tensor<E>)> {
        let mut out = Vec::new();
        collect_module(&mut out, "c1", &self.c1);
        for (i, block) in self.blocks.iter().enumerate() {
            let prefix = format!("b{}", i + 1);
            for (j, module) in block.modules.iter().enumerate() {
                collect_module(&mut out, &format!("{prefix}.m{}", j + 1), module);
            }
            out.push((format!("{prefix}.skip.weight"), block.skip_conv.weight.clone()));
            out.push((format!("{prefix}.skip.bn.gamma"), block.skip_bn.gamma.clone()));
            out.push((format!("{prefix}.skip.bn.beta"), block.skip_bn.beta.clone()));
        }
        collect_module(&mut out, "c2", &self.c2);
        collect_module(&mut out, "c3", &self.c3);
        out.push(("c4.weight".into(), self.c4.weight.clone()));
        if let Some(bias) = &self.c4.bias {
            out.push(("c4.bias".into(), bias.clone()));
        }
        out
    }

    /// Batch norm layers with their registry prefixes, for checkpointing
    /// running statistics.
    pub fn bn_layers(&self) -> Vec<(String, &BatchNorm1d<E>)> {
        let mut out: Vec<(String, &BatchNorm1d<E>)> = Vec::new();
        out.push(("c1.bn".into(), &self.c1.bn));
        for (i, block) in self.blocks.iter().enumerate() {
            let prefix = format!("b{}", i + 1);
            for (j, module) in block.modules.iter().enumerate() {
                out.push((format!("{prefix}.m{}.bn", j + 1), &module.bn));
            }
            out.push((format!("{prefix}.skip.bn"), &block.skip_bn));
        }
        out.push(("c2.bn".into(), &self.c2.bn));
        out.push(("c3.bn".into(), &self.c3.bn));
        out
    }

    /// Total parameters from the registry (the profiler's independent
    /// cross-check).
    pub fn registry_param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn zero_grads(&self) {
        for (_, p) in self.params() {
            p.zero_grad();
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|(_, p)| p.all_finite())
    }
}

fn collect_module<E: Element>(
    out: &mut Vec<(String, Tensor<E>)>,
    prefix: &str,
    module: &ConvModule<E>,
) {
    match &module.conv {
        ModuleConv::Separable(t) => {
            out.push((format!("{prefix}.dw.weight"), t.depthwise.weight.clone()));
            out.push((format!("{prefix}.pw.weight"), t.pointwise.weight.clone()));
        }
        ModuleConv::Plain(c) => {
            out.push((format!("{prefix}.weight"), c.weight.clone()));
            if let Some(b) = &c.bias {
                out.push((format!("{prefix}.bias"), b.clone()));
            }
        }
    }
    out.push((format!("{prefix}.bn.gamma"), module.bn.gamma.clone()));
    out.push((format!("{prefix}.bn.beta"), module.bn.beta.clone()));
}
