//! Conv/batchnorm modules and the residual block wrapper.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

use super::conv::{mask_time, Conv1d, TcsConv};
use super::dropout::dropout;
use super::norm::{BatchNorm1d, Mode};

/// The convolution inside a block module: time-channel separable for the
/// block body and the C1/C2 layers, plain for C3/C4-style projections.
#[derive(Debug)]
pub enum ModuleConv<E: Element> {
    Separable(TcsConv<E>),
    Plain(Conv1d<E>),
}

impl<E: Element> ModuleConv<E> {
    pub fn stride(&self) -> usize {
        match self {
            ModuleConv::Separable(t) => t.depthwise.stride,
            ModuleConv::Plain(c) => c.stride,
        }
    }

    pub fn c_out(&self) -> usize {
        match self {
            ModuleConv::Separable(t) => t.pointwise.c_out,
            ModuleConv::Plain(c) => c.c_out,
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        match self {
            ModuleConv::Separable(t) => t.forward(x),
            ModuleConv::Plain(c) => c.forward(x),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            ModuleConv::Separable(t) => t.param_count(),
            ModuleConv::Plain(c) => c.param_count(),
        }
    }
}

/// conv -> batch norm, with padding masked off before the convolution.
/// ReLU and dropout are applied by the caller so that a block can skip the
/// activation on its final module.
#[derive(Debug)]
pub struct ConvModule<E: Element> {
    pub conv: ModuleConv<E>,
    pub bn: BatchNorm1d<E>,
}

impl<E: Element> ConvModule<E> {
    pub fn separable(
        kernel: usize,
        c_in: usize,
        c_out: usize,
        stride: usize,
        dilation: usize,
        groups: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let shuffle = groups > 1;
        Ok(ConvModule {
            conv: ModuleConv::Separable(TcsConv::new(
                kernel, c_in, c_out, stride, dilation, groups, shuffle, rng,
            )?),
            bn: BatchNorm1d::new(c_out)?,
        })
    }

    pub fn plain(
        kernel: usize,
        c_in: usize,
        c_out: usize,
        stride: usize,
        dilation: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let conv = if kernel == 1 {
            Conv1d::pointwise(c_in, c_out, 1, false, false, rng)?
        } else {
            Conv1d::regular(kernel, c_in, c_out, stride, dilation, rng)?
        };
        Ok(ConvModule {
            conv: ModuleConv::Plain(conv),
            bn: BatchNorm1d::new(c_out)?,
        })
    }

    pub fn out_lengths(&self, lengths: &[usize]) -> Vec<usize> {
        let s = self.conv.stride();
        lengths.iter().map(|&l| l.div_ceil(s)).collect()
    }

    pub fn forward(
        &self,
        x: &Tensor<E>,
        lengths: Option<&[usize]>,
        mode: Mode,
    ) -> Result<(Tensor<E>, Option<Vec<usize>>)> {
        let masked = match lengths {
            Some(l) => mask_time(x, l)?,
            None => x.clone(),
        };
        let y = self.conv.forward(&masked)?;
        let out_lengths = lengths.map(|l| self.out_lengths(l));
        let y = self.bn.forward(&y, mode, out_lengths.as_deref())?;
        Ok((y, out_lengths))
    }

    pub fn param_count(&self) -> usize {
        self.conv.param_count() + self.bn.param_count()
    }
}

/// A QuartzNet block: R conv modules plus a projected residual connection.
///
/// The last module omits its ReLU; the skip path (1x1 conv + batch norm on
/// the block input) is added first and the final ReLU runs on the sum.
/// Dropout, when enabled, follows every ReLU.
#[derive(Debug)]
pub struct ResidualBlock<E: Element> {
    pub modules: Vec<ConvModule<E>>,
    pub skip_conv: Conv1d<E>,
    pub skip_bn: BatchNorm1d<E>,
    pub dropout_p: f64,
}

impl<E: Element> ResidualBlock<E> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        repeats: usize,
        kernel: usize,
        c_in: usize,
        c_out: usize,
        groups: usize,
        separable: bool,
        dropout_p: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if repeats == 0 {
            return Err(Error::Config("a block needs at least one module".into()));
        }
        let mut modules = Vec::with_capacity(repeats);
        for i in 0..repeats {
            let input = if i == 0 { c_in } else { c_out };
            let module = if separable {
                ConvModule::separable(kernel, input, c_out, 1, 1, groups, rng)?
            } else {
                ConvModule::plain(kernel, input, c_out, 1, 1, rng)?
            };
            modules.push(module);
        }
        Ok(ResidualBlock {
            modules,
            skip_conv: Conv1d::pointwise(c_in, c_out, 1, false, false, rng)?,
            skip_bn: BatchNorm1d::new(c_out)?,
            dropout_p,
        })
    }

    pub fn forward(
        &self,
        x: &Tensor<E>,
        lengths: Option<&[usize]>,
        mode: Mode,
        mut rng: Option<&mut Rng>,
    ) -> Result<Tensor<E>> {
        let apply_dropout = self.dropout_p > 0.0 && mode == Mode::Train;
        if apply_dropout && rng.is_none() {
            return Err(Error::Contract(
                "dropout is enabled but no dropout rng was provided".into(),
            ));
        }

        let mut body = x.clone();
        let last = self.modules.len() - 1;
        for (i, module) in self.modules.iter().enumerate() {
            let (y, _) = module.forward(&body, lengths, mode)?;
            body = if i < last {
                let activated = y.relu();
                if apply_dropout {
                    dropout(&activated, self.dropout_p, rng.as_deref_mut().unwrap())
                } else {
                    activated
                }
            } else {
                y
            };
        }

        // Pointwise skip never bleeds across time, so only the batch norm
        // needs the lengths.
        let skip = self.skip_conv.forward(x)?;
        let skip = self.skip_bn.forward(&skip, mode, lengths)?;

        let out = body.add(&skip)?.relu();
        Ok(if apply_dropout {
            dropout(&out, self.dropout_p, rng.unwrap())
        } else {
            out
        })
    }

    pub fn param_count(&self) -> usize {
        self.modules.iter().map(|m| m.param_count()).sum::<usize>()
            + self.skip_conv.param_count()
            + self.skip_bn.param_count()
    }
}
