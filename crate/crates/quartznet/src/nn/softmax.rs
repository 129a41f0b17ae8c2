//! Log-softmax over the channel axis of `[B, C, T]` tensors.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// `y[b, c, t] = x[b, c, t] - logsumexp_c' x[b, c', t]`
pub fn log_softmax_channels<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    let shape = x.shape();
    if shape.len() != 3 {
        return Err(Error::Shape(format!(
            "log_softmax expects [B, C, T], got {shape:?}"
        )));
    }
    let (batch, channels, t) = (shape[0], shape[1], shape[2]);
    let mut out = vec![E::ZERO; x.numel()];
    {
        let xd = x.data();
        for b in 0..batch {
            for ti in 0..t {
                let mut mx = xd[(b * channels) * t + ti];
                for c in 1..channels {
                    let v = xd[(b * channels + c) * t + ti];
                    if v > mx {
                        mx = v;
                    }
                }
                let mut z = E::ZERO;
                for c in 0..channels {
                    z += (xd[(b * channels + c) * t + ti] - mx).exp();
                }
                let log_z = mx + z.ln();
                for c in 0..channels {
                    let i = (b * channels + c) * t + ti;
                    out[i] = xd[i] - log_z;
                }
            }
        }
    }
    let saved = out.clone();
    Ok(Tensor::from_op(
        shape.to_vec(),
        out,
        vec![x.clone()],
        move |g, parents, sink| {
            // dx[c] = g[c] - softmax[c] * sum_c' g[c']
            let mut gx = vec![E::ZERO; g.len()];
            for b in 0..batch {
                for ti in 0..t {
                    let mut gsum = E::ZERO;
                    for c in 0..channels {
                        gsum += g[(b * channels + c) * t + ti];
                    }
                    for c in 0..channels {
                        let i = (b * channels + c) * t + ti;
                        gx[i] = g[i] - saved[i].exp() * gsum;
                    }
                }
            }
            sink.add(&parents[0], gx);
        },
    ))
}
