//! Parameter profiler: per-layer counts and rounded totals from the config
//! alone.
//!
//! Counting rules: convolution weights plus the C4 bias, batch norm gamma
//! and beta; running statistics are buffers and excluded. Separable
//! convolutions cost `K*c_in + (c_in/g)*c_out`, regular ones
//! `K*c_in*c_out`. Grouping applies only to the pointwise convolutions
//! inside block modules - not to skip projections and not to C1-C4.

use serde::Serialize;

use super::config::ModelConfig;
use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct LayerCount {
    pub name: String,
    pub detail: String,
    pub params: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamReport {
    pub model: String,
    pub layers: Vec<LayerCount>,
    pub total: usize,
    /// Total in millions, rounded half-up to one decimal.
    pub total_millions: f64,
}

/// Round-half-up to one decimal in millions.
pub fn round_millions(total: usize) -> f64 {
    ((total as f64) / 1e5 + 0.5).floor() / 10.0
}

fn separable_weights(kernel: usize, c_in: usize, c_out: usize, groups: usize) -> usize {
    kernel * c_in + (c_in / groups) * c_out
}

fn bn_params(channels: usize) -> usize {
    2 * channels
}

/// Parameter count for one block: R modules (first takes `c_in`) plus the
/// pointwise skip projection, each followed by batch norm.
fn block_params(
    modules: usize,
    kernel: usize,
    c_in: usize,
    c_out: usize,
    groups: usize,
    separable: bool,
) -> usize {
    let mut total = 0usize;
    for i in 0..modules {
        let input = if i == 0 { c_in } else { c_out };
        total += if separable {
            separable_weights(kernel, input, c_out, groups)
        } else {
            kernel * input * c_out
        };
        total += bn_params(c_out);
    }
    // Skip: ungrouped 1x1 projection + batch norm.
    total + c_in * c_out + bn_params(c_out)
}

pub fn count_params(cfg: &ModelConfig) -> Result<ParamReport> {
    cfg.validate()?;
    let mut layers = Vec::new();

    let c1_weights = if cfg.c1.separable {
        separable_weights(cfg.c1.kernel, cfg.input_features, cfg.c1.channels, 1)
    } else {
        cfg.c1.kernel * cfg.input_features * cfg.c1.channels
    };
    layers.push(LayerCount {
        name: "C1".into(),
        detail: format!(
            "K{} {}->{} stride {}",
            cfg.c1.kernel, cfg.input_features, cfg.c1.channels, cfg.c1.stride
        ),
        params: c1_weights + bn_params(cfg.c1.channels),
    });

    for (i, (spec_idx, c_in, spec)) in cfg.expanded_blocks().iter().enumerate() {
        let params = block_params(
            spec.modules,
            spec.kernel,
            *c_in,
            spec.channels,
            spec.groups,
            spec.separable,
        );
        layers.push(LayerCount {
            name: format!("B{}", i + 1),
            detail: format!(
                "group {} | {}xK{} {}->{} g{}",
                spec_idx + 1,
                spec.modules,
                spec.kernel,
                c_in,
                spec.channels,
                spec.groups
            ),
            params,
        });
    }

    let last_c = cfg
        .expanded_blocks()
        .last()
        .map(|(_, _, s)| s.channels)
        .unwrap_or(cfg.c1.channels);

    let c2_weights = if cfg.c2.separable {
        separable_weights(cfg.c2.kernel, last_c, cfg.c2.channels, 1)
    } else {
        cfg.c2.kernel * last_c * cfg.c2.channels
    };
    layers.push(LayerCount {
        name: "C2".into(),
        detail: format!("K{} {}->{}", cfg.c2.kernel, last_c, cfg.c2.channels),
        params: c2_weights + bn_params(cfg.c2.channels),
    });

    layers.push(LayerCount {
        name: "C3".into(),
        detail: format!("K1 {}->{}", cfg.c2.channels, cfg.c3.channels),
        params: cfg.c2.channels * cfg.c3.channels + bn_params(cfg.c3.channels),
    });

    let labels = cfg.labels();
    layers.push(LayerCount {
        name: "C4".into(),
        detail: format!("K1 {}->{} dilation {} (+bias)", cfg.c3.channels, labels, cfg.c4.dilation),
        params: cfg.c3.channels * labels + labels,
    });

    let total = layers.iter().map(|l| l.params).sum();
    Ok(ParamReport {
        model: cfg.name.clone(),
        layers,
        total,
        total_millions: round_millions(total),
    })
}

/// Parameters of a time-depth separable block: `k*c^2 + 2*(w*c)^2`.
pub fn tds_param_count(k: usize, w: usize, c: usize) -> usize {
    k * c * c + 2 * (w * c) * (w * c)
}

/// Per-module cost of the time-channel separable alternative for the same
/// dims: `k*c + c^2`.
pub fn separable_module_count(k: usize, c: usize) -> usize {
    k * c + c * c
}
