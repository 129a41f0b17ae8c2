//! Inverted dropout with a caller-supplied seeded generator.

use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

/// Zero each value with probability `p` and scale survivors by `1/(1-p)`.
/// `p = 0` returns the input unchanged; the caller decides when dropout is
/// active (train mode only).
pub fn dropout<E: Element>(x: &Tensor<E>, p: f64, rng: &mut Rng) -> Tensor<E> {
    if p <= 0.0 {
        return x.clone();
    }
    let scale = E::from_f64(1.0 / (1.0 - p));
    let mask: Vec<E> = (0..x.numel())
        .map(|_| {
            if rng.next_f64() >= p {
                scale
            } else {
                E::ZERO
            }
        })
        .collect();
    let data = {
        let xd = x.data();
        xd.iter().zip(mask.iter()).map(|(&v, &m)| v * m).collect()
    };
    Tensor::from_op(
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        move |g, parents, sink| {
            sink.add(
                &parents[0],
                g.iter().zip(mask.iter()).map(|(&gi, &m)| gi * m).collect(),
            );
        },
    )
}
