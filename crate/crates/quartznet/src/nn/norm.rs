//! Batch normalization over (batch, time) per channel.

use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel batch norm for `[B, C, T]` tensors.
///
/// Train mode normalizes with batch statistics and updates the running
/// estimates; eval mode normalizes with the running estimates. Statistics
/// use the biased (1/N) variance. When per-utterance lengths are given,
/// padding frames are excluded from the statistics so that padded and
/// unpadded batches of the same utterances normalize identically.
#[derive(Debug)]
pub struct BatchNorm1d<E: Element> {
    pub channels: usize,
    pub gamma: Tensor<E>,
    pub beta: Tensor<E>,
    running_mean: Mutex<Vec<E>>,
    running_var: Mutex<Vec<E>>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl<E: Element> BatchNorm1d<E> {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(BatchNorm1d {
            channels,
            gamma: Tensor::param(&[channels], vec![E::ONE; channels])?,
            beta: Tensor::param(&[channels], vec![E::ZERO; channels])?,
            running_mean: Mutex::new(vec![E::ZERO; channels]),
            running_var: Mutex::new(vec![E::ONE; channels]),
            momentum: 0.1,
            epsilon: 1e-5,
        })
    }

    pub fn running_stats(&self) -> (Vec<E>, Vec<E>) {
        (
            self.running_mean.lock().unwrap().clone(),
            self.running_var.lock().unwrap().clone(),
        )
    }

    pub fn set_running_stats(&self, mean: Vec<E>, var: Vec<E>) -> Result<()> {
        if mean.len() != self.channels || var.len() != self.channels {
            return Err(Error::Shape(format!(
                "running stats must have {} channels",
                self.channels
            )));
        }
        *self.running_mean.lock().unwrap() = mean;
        *self.running_var.lock().unwrap() = var;
        Ok(())
    }

    /// Parameters counted by the profiler (gamma + beta; running stats are
    /// buffers, not parameters).
    pub fn param_count(&self) -> usize {
        2 * self.channels
    }

    pub fn forward(
        &self,
        x: &Tensor<E>,
        mode: Mode,
        lengths: Option<&[usize]>,
    ) -> Result<Tensor<E>> {
        let shape = x.shape();
        if shape.len() != 3 || shape[1] != self.channels {
            return Err(Error::Shape(format!(
                "batchnorm expects [B, {}, T], got {shape:?}",
                self.channels
            )));
        }
        let (batch, channels, t) = (shape[0], shape[1], shape[2]);
        let valid: Vec<usize> = match lengths {
            Some(l) => {
                if l.len() != batch {
                    return Err(Error::Shape(format!(
                        "batchnorm: {} lengths for batch {batch}",
                        l.len()
                    )));
                }
                l.iter().map(|&v| v.min(t)).collect()
            }
            None => vec![t; batch],
        };
        let n_valid: usize = valid.iter().sum();

        match mode {
            Mode::Train => {
                if n_valid < 2 {
                    return Err(Error::Contract(
                        "batchnorm train mode needs more than one valid frame".into(),
                    ));
                }
                self.forward_train(x, batch, channels, t, &valid, n_valid)
            }
            Mode::Eval => self.forward_eval(x, batch, channels, t),
        }
    }

    #[allow(clippy::needless_range_loop)]
    fn forward_train(
        &self,
        x: &Tensor<E>,
        batch: usize,
        channels: usize,
        t: usize,
        valid: &[usize],
        n_valid: usize,
    ) -> Result<Tensor<E>> {
        let inv_n = E::from_f64(1.0 / n_valid as f64);
        let mut mean = vec![E::ZERO; channels];
        let mut var = vec![E::ZERO; channels];
        {
            let xd = x.data();
            for c in 0..channels {
                let mut acc = E::ZERO;
                for b in 0..batch {
                    let base = (b * channels + c) * t;
                    for &v in &xd[base..base + valid[b]] {
                        acc += v;
                    }
                }
                mean[c] = acc * inv_n;
            }
            for c in 0..channels {
                let mut acc = E::ZERO;
                for b in 0..batch {
                    let base = (b * channels + c) * t;
                    for &v in &xd[base..base + valid[b]] {
                        let d = v - mean[c];
                        acc += d * d;
                    }
                }
                var[c] = acc * inv_n;
            }
        }
        let inv_std: Vec<E> = var
            .iter()
            .map(|&v| E::ONE / (v + E::from_f64(self.epsilon)).sqrt())
            .collect();

        // Update running estimates.
        {
            let m = E::from_f64(self.momentum);
            let keep = E::ONE - m;
            let mut rm = self.running_mean.lock().unwrap();
            let mut rv = self.running_var.lock().unwrap();
            for c in 0..channels {
                rm[c] = keep * rm[c] + m * mean[c];
                rv[c] = keep * rv[c] + m * var[c];
            }
        }

        let mut out = vec![E::ZERO; x.numel()];
        {
            let xd = x.data();
            let g = self.gamma.data();
            let be = self.beta.data();
            for b in 0..batch {
                for c in 0..channels {
                    let base = (b * channels + c) * t;
                    for ti in 0..t {
                        out[base + ti] = g[c] * (xd[base + ti] - mean[c]) * inv_std[c] + be[c];
                    }
                }
            }
        }

        let mean_c = mean;
        let istd_c = inv_std;
        let valid_c = valid.to_vec();
        Ok(Tensor::from_op(
            x.shape().to_vec(),
            out,
            vec![x.clone(), self.gamma.clone(), self.beta.clone()],
            move |grad, parents, sink| {
                let xd = parents[0].data();
                let gam = parents[1].data();
                let inv_n = E::from_f64(1.0 / n_valid as f64);
                let half = E::from_f64(0.5);
                let two = E::from_f64(2.0);

                let mut g_gamma = vec![E::ZERO; channels];
                let mut g_beta = vec![E::ZERO; channels];
                let mut gx = vec![E::ZERO; xd.len()];

                for c in 0..channels {
                    let mu = mean_c[c];
                    let istd = istd_c[c];
                    // Reductions over every position (padding sees zero grad
                    // in masked training, so this stays exact either way).
                    let mut d_gamma = E::ZERO;
                    let mut d_beta = E::ZERO;
                    let mut d_var = E::ZERO;
                    let mut d_mean = E::ZERO;
                    for b in 0..batch {
                        let base = (b * channels + c) * t;
                        for ti in 0..t {
                            let gi = grad[base + ti];
                            let xc = xd[base + ti] - mu;
                            d_beta += gi;
                            d_gamma += gi * xc * istd;
                            let dxhat = gi * gam[c];
                            d_var += dxhat * xc * (-half) * istd * istd * istd;
                            d_mean += dxhat * (-istd);
                        }
                    }
                    g_gamma[c] = d_gamma;
                    g_beta[c] = d_beta;
                    for b in 0..batch {
                        let base = (b * channels + c) * t;
                        for ti in 0..t {
                            let direct = grad[base + ti] * gam[c] * istd;
                            gx[base + ti] = if ti < valid_c[b] {
                                direct
                                    + (d_var * two * (xd[base + ti] - mu) + d_mean) * inv_n
                            } else {
                                direct
                            };
                        }
                    }
                }
                sink.add(&parents[0], gx);
                sink.add(&parents[1], g_gamma);
                sink.add(&parents[2], g_beta);
            },
        ))
    }

    fn forward_eval(
        &self,
        x: &Tensor<E>,
        batch: usize,
        channels: usize,
        t: usize,
    ) -> Result<Tensor<E>> {
        let rm = self.running_mean.lock().unwrap().clone();
        let rv = self.running_var.lock().unwrap().clone();
        let istd: Vec<E> = rv
            .iter()
            .map(|&v| E::ONE / (v + E::from_f64(self.epsilon)).sqrt())
            .collect();
        let mut out = vec![E::ZERO; x.numel()];
        {
            let xd = x.data();
            let g = self.gamma.data();
            let be = self.beta.data();
            for b in 0..batch {
                for c in 0..channels {
                    let base = (b * channels + c) * t;
                    for ti in 0..t {
                        out[base + ti] = g[c] * (xd[base + ti] - rm[c]) * istd[c] + be[c];
                    }
                }
            }
        }
        let mean_c = rm;
        let istd_c = istd;
        Ok(Tensor::from_op(
            x.shape().to_vec(),
            out,
            vec![x.clone(), self.gamma.clone(), self.beta.clone()],
            move |grad, parents, sink| {
                let xd = parents[0].data();
                let gam = parents[1].data();
                let mut g_gamma = vec![E::ZERO; channels];
                let mut g_beta = vec![E::ZERO; channels];
                let mut gx = vec![E::ZERO; xd.len()];
                for c in 0..channels {
                    for b in 0..batch {
                        let base = (b * channels + c) * t;
                        for ti in 0..t {
                            let gi = grad[base + ti];
                            g_beta[c] += gi;
                            g_gamma[c] += gi * (xd[base + ti] - mean_c[c]) * istd_c[c];
                            gx[base + ti] = gi * gam[c] * istd_c[c];
                        }
                    }
                }
                sink.add(&parents[0], gx);
                sink.add(&parents[1], g_gamma);
                sink.add(&parents[2], g_beta);
            },
        ))
    }
}
