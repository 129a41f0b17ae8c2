//! 1D convolutions: regular, depthwise, and pointwise with optional groups
//! and group shuffle.
//!
//! All convolutions use "same"-style padding chosen so that
//! `T_out = ceil(T / stride)`: total padding is `dilation * (K - 1)`, split
//! with the smaller half on the left so even kernels work too. Biases are
//! optional and off by default (batch norm follows almost every conv here).

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    Regular,
    Depthwise,
    /// Kernel-size-1 channel mixer; `groups` restricts mixing to disjoint
    /// channel groups and `shuffle` applies the group-transpose permutation
    /// to the output channels.
    Pointwise {
        groups: usize,
        shuffle: bool,
    },
}

#[derive(Debug, Clone)]
pub struct Conv1d<E: Element> {
    pub kind: ConvKind,
    pub kernel: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
    pub dilation: usize,
    /// Layout: regular `[c_out, c_in, K]`, depthwise `[c_in, K]`,
    /// pointwise `[c_out, c_in / groups]`.
    pub weight: Tensor<E>,
    pub bias: Option<Tensor<E>>,
}

/// Geometry captured by the autodiff closure.
#[derive(Debug, Clone, Copy)]
struct Geom {
    kind_groups: usize, // 1 except for grouped pointwise
    is_depthwise: bool,
    batch: usize,
    c_in: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    dilation: usize,
    pad_left: usize,
    t_in: usize,
    t_out: usize,
}

impl Geom {
    fn in_channel_range(&self, o: usize) -> (usize, usize) {
        if self.is_depthwise {
            (o, o + 1)
        } else {
            let group_out = self.c_out / self.kind_groups;
            let group_in = self.c_in / self.kind_groups;
            let g = o / group_out;
            (g * group_in, (g + 1) * group_in)
        }
    }

    fn widx(&self, o: usize, c: usize, k: usize) -> usize {
        if self.is_depthwise {
            c * self.kernel + k
        } else {
            let group_in = self.c_in / self.kind_groups;
            let c_local = c % group_in;
            (o * group_in + c_local) * self.kernel + k
        }
    }

    /// Valid output range `[t0, t1]` for a tap offset, or None when empty.
    fn t_range(&self, k: usize) -> Option<(usize, usize, isize)> {
        let offset = (k * self.dilation) as isize - self.pad_left as isize;
        let t0 = if offset < 0 {
            ((-offset) as usize).div_ceil(self.stride)
        } else {
            0
        };
        let max_in = self.t_in as isize - 1 - offset;
        if max_in < 0 {
            return None;
        }
        let t1 = (max_in as usize / self.stride).min(self.t_out.saturating_sub(1));
        if t0 > t1 {
            return None;
        }
        Some((t0, t1, offset))
    }
}

#[allow(clippy::needless_range_loop)]
fn conv_forward<E: Element>(geom: &Geom, x: &[E], w: &[E], out: &mut [E]) {
    for b in 0..geom.batch {
        let xb = b * geom.c_in * geom.t_in;
        let ob = b * geom.c_out * geom.t_out;
        for o in 0..geom.c_out {
            let out_row = &mut out[ob + o * geom.t_out..ob + (o + 1) * geom.t_out];
            let (c_lo, c_hi) = geom.in_channel_range(o);
            for c in c_lo..c_hi {
                let x_row = &x[xb + c * geom.t_in..xb + (c + 1) * geom.t_in];
                for k in 0..geom.kernel {
                    let Some((t0, t1, offset)) = geom.t_range(k) else {
                        continue;
                    };
                    let wv = w[geom.widx(o, c, k)];
                    for t in t0..=t1 {
                        let ti = (t * geom.stride) as isize + offset;
                        out_row[t] += wv * x_row[ti as usize];
                    }
                }
            }
        }
    }
}

#[allow(clippy::needless_range_loop)]
fn conv_backward_input<E: Element>(geom: &Geom, w: &[E], g: &[E], gx: &mut [E]) {
    for b in 0..geom.batch {
        let xb = b * geom.c_in * geom.t_in;
        let ob = b * geom.c_out * geom.t_out;
        for o in 0..geom.c_out {
            let g_row = &g[ob + o * geom.t_out..ob + (o + 1) * geom.t_out];
            let (c_lo, c_hi) = geom.in_channel_range(o);
            for c in c_lo..c_hi {
                let gx_row = &mut gx[xb + c * geom.t_in..xb + (c + 1) * geom.t_in];
                for k in 0..geom.kernel {
                    let Some((t0, t1, offset)) = geom.t_range(k) else {
                        continue;
                    };
                    let wv = w[geom.widx(o, c, k)];
                    for t in t0..=t1 {
                        let ti = (t * geom.stride) as isize + offset;
                        gx_row[ti as usize] += wv * g_row[t];
                    }
                }
            }
        }
    }
}

#[allow(clippy::needless_range_loop)]
fn conv_backward_weight<E: Element>(geom: &Geom, x: &[E], g: &[E], gw: &mut [E]) {
    for b in 0..geom.batch {
        let xb = b * geom.c_in * geom.t_in;
        let ob = b * geom.c_out * geom.t_out;
        for o in 0..geom.c_out {
            let g_row = &g[ob + o * geom.t_out..ob + (o + 1) * geom.t_out];
            let (c_lo, c_hi) = geom.in_channel_range(o);
            for c in c_lo..c_hi {
                let x_row = &x[xb + c * geom.t_in..xb + (c + 1) * geom.t_in];
                for k in 0..geom.kernel {
                    let Some((t0, t1, offset)) = geom.t_range(k) else {
                        continue;
                    };
                    let mut acc = E::ZERO;
                    for t in t0..=t1 {
                        let ti = (t * geom.stride) as isize + offset;
                        acc += x_row[ti as usize] * g_row[t];
                    }
                    gw[geom.widx(o, c, k)] += acc;
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
impl<E: Element> Conv1d<E> {
    fn validate(kind: ConvKind, kernel: usize, c_in: usize, c_out: usize) -> Result<()> {
        match kind {
            ConvKind::Depthwise if c_in != c_out => Err(Error::Config(format!(
                "depthwise conv needs c_in == c_out, got {c_in} vs {c_out}"
            ))),
            ConvKind::Pointwise { groups, .. } => {
                if kernel != 1 {
                    return Err(Error::Config("pointwise conv requires K = 1".into()));
                }
                if groups == 0 || !c_in.is_multiple_of(groups) || !c_out.is_multiple_of(groups) {
                    return Err(Error::Config(format!(
                        "groups {groups} must divide both c_in {c_in} and c_out {c_out}"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn weight_shape(kind: ConvKind, kernel: usize, c_in: usize, c_out: usize) -> Vec<usize> {
        match kind {
            ConvKind::Regular => vec![c_out, c_in, kernel],
            ConvKind::Depthwise => vec![c_in, kernel],
            ConvKind::Pointwise { groups, .. } => vec![c_out, c_in / groups],
        }
    }

    fn fan_in(kind: ConvKind, kernel: usize, c_in: usize) -> usize {
        match kind {
            ConvKind::Regular => c_in * kernel,
            ConvKind::Depthwise => kernel,
            ConvKind::Pointwise { groups, .. } => c_in / groups,
        }
    }

    pub fn new(
        kind: ConvKind,
        kernel: usize,
        c_in: usize,
        c_out: usize,
        stride: usize,
        dilation: usize,
        with_bias: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        if kernel == 0 || stride == 0 || dilation == 0 {
            return Err(Error::Config(
                "kernel, stride and dilation must all be >= 1".into(),
            ));
        }
        Self::validate(kind, kernel, c_in, c_out)?;
        let shape = Self::weight_shape(kind, kernel, c_in, c_out);
        let bound = 1.0 / (Self::fan_in(kind, kernel, c_in) as f64).sqrt();
        let init = Tensor::rand_uniform(&shape, -bound, bound, rng);
        let weight = Tensor::param(&shape, init.values())?;
        let bias = if with_bias {
            Some(Tensor::param(&[c_out], vec![E::ZERO; c_out])?)
        } else {
            None
        };
        Ok(Conv1d {
            kind,
            kernel,
            c_in,
            c_out,
            stride,
            dilation,
            weight,
            bias,
        })
    }

    pub fn regular(
        kernel: usize,
        c_in: usize,
        c_out: usize,
        stride: usize,
        dilation: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Self::new(
            ConvKind::Regular,
            kernel,
            c_in,
            c_out,
            stride,
            dilation,
            false,
            rng,
        )
    }

    pub fn depthwise(
        kernel: usize,
        channels: usize,
        stride: usize,
        dilation: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Self::new(
            ConvKind::Depthwise,
            kernel,
            channels,
            channels,
            stride,
            dilation,
            false,
            rng,
        )
    }

    pub fn pointwise(
        c_in: usize,
        c_out: usize,
        groups: usize,
        shuffle: bool,
        with_bias: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        Self::new(
            ConvKind::Pointwise { groups, shuffle },
            1,
            c_in,
            c_out,
            1,
            1,
            with_bias,
            rng,
        )
    }

    /// Replace the weights (tests and head re-initialization).
    pub fn set_weights(&mut self, values: Vec<E>) -> Result<()> {
        if values.len() != self.weight.numel() {
            return Err(Error::Shape(format!(
                "expected {} weights, got {}",
                self.weight.numel(),
                values.len()
            )));
        }
        self.weight.set_data(values);
        Ok(())
    }

    /// Weights plus bias; the profiler cross-checks its formulas against this.
    pub fn param_count(&self) -> usize {
        self.weight.numel() + self.bias.as_ref().map_or(0, |b| b.numel())
    }

    pub fn out_time(&self, t_in: usize) -> usize {
        t_in.div_ceil(self.stride)
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let shape = x.shape();
        if shape.len() != 3 {
            return Err(Error::Shape(format!(
                "conv1d expects [B, C, T], got {shape:?}"
            )));
        }
        if shape[1] != self.c_in {
            return Err(Error::Shape(format!(
                "conv1d expects {} input channels, got {}",
                self.c_in, shape[1]
            )));
        }
        let (batch, t_in) = (shape[0], shape[2]);
        let t_out = self.out_time(t_in);
        let pad_total = self.dilation * (self.kernel - 1);
        let geom = Geom {
            kind_groups: match self.kind {
                ConvKind::Pointwise { groups, .. } => groups,
                _ => 1,
            },
            is_depthwise: matches!(self.kind, ConvKind::Depthwise),
            batch,
            c_in: self.c_in,
            c_out: self.c_out,
            kernel: self.kernel,
            stride: self.stride,
            dilation: self.dilation,
            pad_left: pad_total / 2,
            t_in,
            t_out,
        };

        let mut out = vec![E::ZERO; batch * self.c_out * t_out];
        conv_forward(&geom, &x.data(), &self.weight.data(), &mut out);

        let mut parents = vec![x.clone(), self.weight.clone()];
        if let Some(bias) = &self.bias {
            let bv = bias.data();
            for b in 0..batch {
                for o in 0..self.c_out {
                    let base = (b * self.c_out + o) * t_out;
                    for v in &mut out[base..base + t_out] {
                        *v += bv[o];
                    }
                }
            }
            parents.push(bias.clone());
        }

        let conv_out = Tensor::from_op(
            vec![batch, self.c_out, t_out],
            out,
            parents,
            move |g, parents, sink| {
                if parents[0].needs_grad() {
                    let mut gx = vec![E::ZERO; parents[0].numel()];
                    conv_backward_input(&geom, &parents[1].data(), g, &mut gx);
                    sink.add(&parents[0], gx);
                }
                if parents[1].needs_grad() {
                    let mut gw = vec![E::ZERO; parents[1].numel()];
                    conv_backward_weight(&geom, &parents[0].data(), g, &mut gw);
                    sink.add(&parents[1], gw);
                }
                if parents.len() > 2 && parents[2].needs_grad() {
                    let mut gb = vec![E::ZERO; geom.c_out];
                    for b in 0..geom.batch {
                        for (o, acc) in gb.iter_mut().enumerate() {
                            let base = (b * geom.c_out + o) * geom.t_out;
                            for &gv in &g[base..base + geom.t_out] {
                                *acc += gv;
                            }
                        }
                    }
                    sink.add(&parents[2], gb);
                }
            },
        );

        match self.kind {
            ConvKind::Pointwise { groups, shuffle } if shuffle && groups > 1 => {
                channel_shuffle(&conv_out, groups)
            }
            _ => Ok(conv_out),
        }
    }
}

/// Destination position of channel `i` under the group-transpose shuffle:
/// `(i mod g) * (c / g) + i / g`.
pub fn shuffle_permutation(channels: usize, groups: usize) -> Vec<usize> {
    (0..channels)
        .map(|i| (i % groups) * (channels / groups) + i / groups)
        .collect()
}

/// Group shuffle: channel `i` of the input moves to `(i mod g)*(C/g) + i/g`.
/// Shuffling by `g` then by `C/g` restores the original order.
pub fn channel_shuffle<E: Element>(x: &Tensor<E>, groups: usize) -> Result<Tensor<E>> {
    let shape = x.shape();
    if shape.len() != 3 {
        return Err(Error::Shape(format!(
            "channel_shuffle expects [B, C, T], got {shape:?}"
        )));
    }
    let (batch, channels, t) = (shape[0], shape[1], shape[2]);
    if groups == 0 || channels % groups != 0 {
        return Err(Error::Config(format!(
            "groups {groups} must divide channel count {channels}"
        )));
    }
    let dest = shuffle_permutation(channels, groups);
    let mut out = vec![E::ZERO; x.numel()];
    {
        let xd = x.data();
        for b in 0..batch {
            for (i, &d) in dest.iter().enumerate() {
                let src = (b * channels + i) * t;
                let dst = (b * channels + d) * t;
                out[dst..dst + t].copy_from_slice(&xd[src..src + t]);
            }
        }
    }
    Ok(Tensor::from_op(
        shape.to_vec(),
        out,
        vec![x.clone()],
        move |g, parents, sink| {
            let mut gx = vec![E::ZERO; parents[0].numel()];
            for b in 0..batch {
                for (i, &d) in dest.iter().enumerate() {
                    let src = (b * channels + i) * t;
                    let dst = (b * channels + d) * t;
                    for j in 0..t {
                        gx[src + j] += g[dst + j];
                    }
                }
            }
            sink.add(&parents[0], gx);
        },
    ))
}

/// Zero every frame at or beyond the per-utterance valid length.
///
/// Convolutions in the model call this on their input so that activations at
/// valid frames never depend on padding content.
pub fn mask_time<E: Element>(x: &Tensor<E>, lengths: &[usize]) -> Result<Tensor<E>> {
    let shape = x.shape();
    if shape.len() != 3 {
        return Err(Error::Shape(format!(
            "mask_time expects [B, C, T], got {shape:?}"
        )));
    }
    let (batch, channels, t) = (shape[0], shape[1], shape[2]);
    if lengths.len() != batch {
        return Err(Error::Shape(format!(
            "mask_time: {} lengths for batch {batch}",
            lengths.len()
        )));
    }
    if lengths.iter().all(|&l| l >= t) {
        return Ok(x.clone());
    }
    let lens = lengths.to_vec();
    let mut out = x.values();
    for (b, len) in lens.iter().enumerate() {
        let keep = (*len).min(t);
        for c in 0..channels {
            let base = (b * channels + c) * t;
            for v in &mut out[base + keep..base + t] {
                *v = E::ZERO;
            }
        }
    }
    Ok(Tensor::from_op(
        shape.to_vec(),
        out,
        vec![x.clone()],
        move |g, parents, sink| {
            let mut gx = g.to_vec();
            for (b, len) in lens.iter().enumerate() {
                let keep = (*len).min(t);
                for c in 0..channels {
                    let base = (b * channels + c) * t;
                    for v in &mut gx[base + keep..base + t] {
                        *v = E::ZERO;
                    }
                }
            }
            sink.add(&parents[0], gx);
        },
    ))
}

/// Time-channel separable convolution: depthwise across K frames per channel,
/// then a pointwise mix across channels. Uses `K*c_in + (c_in/g)*c_out`
/// weights where the regular equivalent needs `K*c_in*c_out`.
#[derive(Debug, Clone)]
pub struct TcsConv<E: Element> {
    pub depthwise: Conv1d<E>,
    pub pointwise: Conv1d<E>,
}

impl<E: Element> TcsConv<E> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kernel: usize,
        c_in: usize,
        c_out: usize,
        stride: usize,
        dilation: usize,
        groups: usize,
        shuffle: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(TcsConv {
            depthwise: Conv1d::depthwise(kernel, c_in, stride, dilation, rng)?,
            pointwise: Conv1d::pointwise(c_in, c_out, groups, shuffle, false, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        if self.depthwise.c_out != self.pointwise.c_in {
            return Err(Error::Shape(format!(
                "tcs_conv: depthwise channels {} vs pointwise input {}",
                self.depthwise.c_out, self.pointwise.c_in
            )));
        }
        self.pointwise.forward(&self.depthwise.forward(x)?)
    }

    pub fn param_count(&self) -> usize {
        self.depthwise.param_count() + self.pointwise.param_count()
    }
}
