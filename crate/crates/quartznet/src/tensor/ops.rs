//! Elementwise and reduction ops with their gradient rules.

use super::{strides, Element, Tensor};
use crate::error::{Error, Result};

fn shape_eq_check<E: Element>(a: &Tensor<E>, b: &Tensor<E>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{op}: shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl<E: Element> Tensor<E> {
    pub fn add(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        shape_eq_check(self, other, "add")?;
        let data = {
            let a = self.data();
            let b = other.data();
            a.iter().zip(b.iter()).map(|(&x, &y)| x + y).collect()
        };
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            |g, parents, sink| {
                sink.add(&parents[0], g.to_vec());
                sink.add(&parents[1], g.to_vec());
            },
        ))
    }

    pub fn sub(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        shape_eq_check(self, other, "sub")?;
        let data = {
            let a = self.data();
            let b = other.data();
            a.iter().zip(b.iter()).map(|(&x, &y)| x - y).collect()
        };
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            |g, parents, sink| {
                sink.add(&parents[0], g.to_vec());
                sink.add(&parents[1], g.iter().map(|&v| -v).collect());
            },
        ))
    }

    pub fn mul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        shape_eq_check(self, other, "mul")?;
        let data = {
            let a = self.data();
            let b = other.data();
            a.iter().zip(b.iter()).map(|(&x, &y)| x * y).collect()
        };
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            |g, parents, sink| {
                if parents[0].needs_grad() {
                    let b = parents[1].data();
                    sink.add(
                        &parents[0],
                        g.iter().zip(b.iter()).map(|(&gi, &bi)| gi * bi).collect(),
                    );
                }
                if parents[1].needs_grad() {
                    let a = parents[0].data();
                    sink.add(
                        &parents[1],
                        g.iter().zip(a.iter()).map(|(&gi, &ai)| gi * ai).collect(),
                    );
                }
            },
        ))
    }

    pub fn div(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        shape_eq_check(self, other, "div")?;
        let data = {
            let a = self.data();
            let b = other.data();
            a.iter().zip(b.iter()).map(|(&x, &y)| x / y).collect()
        };
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            |g, parents, sink| {
                let b = parents[1].data();
                if parents[0].needs_grad() {
                    sink.add(
                        &parents[0],
                        g.iter().zip(b.iter()).map(|(&gi, &bi)| gi / bi).collect(),
                    );
                }
                if parents[1].needs_grad() {
                    let a = parents[0].data();
                    sink.add(
                        &parents[1],
                        g.iter()
                            .zip(a.iter().zip(b.iter()))
                            .map(|(&gi, (&ai, &bi))| -gi * ai / (bi * bi))
                            .collect(),
                    );
                }
            },
        ))
    }

    pub fn add_scalar(&self, value: f64) -> Tensor<E> {
        let v = E::from_f64(value);
        let data = self.data().iter().map(|&x| x + v).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            |g, parents, sink| sink.add(&parents[0], g.to_vec()),
        )
    }

    pub fn mul_scalar(&self, value: f64) -> Tensor<E> {
        let v = E::from_f64(value);
        let data = self.data().iter().map(|&x| x * v).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            move |g, parents, sink| sink.add(&parents[0], g.iter().map(|&gi| gi * v).collect()),
        )
    }

    pub fn neg(&self) -> Tensor<E> {
        self.mul_scalar(-1.0)
    }

    /// ReLU with subgradient 0 at the origin.
    pub fn relu(&self) -> Tensor<E> {
        let data = self
            .data()
            .iter()
            .map(|&x| if x > E::ZERO { x } else { E::ZERO })
            .collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            |g, parents, sink| {
                let x = parents[0].data();
                sink.add(
                    &parents[0],
                    g.iter()
                        .zip(x.iter())
                        .map(|(&gi, &xi)| if xi > E::ZERO { gi } else { E::ZERO })
                        .collect(),
                );
            },
        )
    }

    /// Add a per-channel vector `bias` (shape `[C]`) to a `[B, C, T]` tensor.
    pub fn add_channel(&self, bias: &Tensor<E>) -> Result<Tensor<E>> {
        let shape = self.shape();
        if shape.len() != 3 || bias.shape() != [shape[1]] {
            return Err(Error::Shape(format!(
                "add_channel: input {:?} with bias {:?}",
                shape,
                bias.shape()
            )));
        }
        let (b, c, t) = (shape[0], shape[1], shape[2]);
        let mut data = self.values();
        {
            let bv = bias.data();
            for bi in 0..b {
                for ci in 0..c {
                    let base = (bi * c + ci) * t;
                    let add = bv[ci];
                    for v in &mut data[base..base + t] {
                        *v += add;
                    }
                }
            }
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            data,
            vec![self.clone(), bias.clone()],
            move |g, parents, sink| {
                sink.add(&parents[0], g.to_vec());
                if parents[1].needs_grad() {
                    let mut gb = vec![E::ZERO; c];
                    for bi in 0..b {
                        for (ci, acc) in gb.iter_mut().enumerate() {
                            let base = (bi * c + ci) * t;
                            for &gv in &g[base..base + t] {
                                *acc += gv;
                            }
                        }
                    }
                    sink.add(&parents[1], gb);
                }
            },
        ))
    }

    fn reduce_check(&self, axes: &[usize]) -> Result<()> {
        for &a in axes {
            if a >= self.shape().len() {
                return Err(Error::Shape(format!(
                    "reduce: axis {a} out of range for shape {:?}",
                    self.shape()
                )));
            }
        }
        Ok(())
    }

    fn reduced_shape(&self, axes: &[usize]) -> Vec<usize> {
        self.shape()
            .iter()
            .enumerate()
            .filter(|(i, _)| !axes.contains(i))
            .map(|(_, &d)| d)
            .collect()
    }

    /// Map each flat input index to the flat index of the reduced output.
    fn reduce_index_map(&self, axes: &[usize]) -> Vec<usize> {
        let shape = self.shape();
        let in_strides = strides(shape);
        let out_shape = self.reduced_shape(axes);
        let out_strides = strides(&out_shape);
        let kept: Vec<usize> = (0..shape.len()).filter(|i| !axes.contains(i)).collect();
        (0..self.numel())
            .map(|flat| {
                let mut out = 0;
                for (oi, &dim) in kept.iter().enumerate() {
                    let coord = (flat / in_strides[dim]) % shape[dim];
                    out += coord * out_strides[oi];
                }
                out
            })
            .collect()
    }

    /// Sum over the given axes (reduced axes are dropped from the shape).
    pub fn sum(&self, axes: &[usize]) -> Result<Tensor<E>> {
        self.reduce_check(axes)?;
        let out_shape = self.reduced_shape(axes);
        let map = self.reduce_index_map(axes);
        let mut data = vec![E::ZERO; out_shape.iter().product()];
        {
            let x = self.data();
            for (i, &o) in map.iter().enumerate() {
                data[o] += x[i];
            }
        }
        Ok(Tensor::from_op(
            out_shape,
            data,
            vec![self.clone()],
            move |g, parents, sink| {
                sink.add(&parents[0], map.iter().map(|&o| g[o]).collect());
            },
        ))
    }

    /// Mean over the given axes.
    pub fn mean(&self, axes: &[usize]) -> Result<Tensor<E>> {
        self.reduce_check(axes)?;
        let count: usize = axes.iter().map(|&a| self.shape()[a]).product();
        Ok(self.sum(axes)?.mul_scalar(1.0 / count as f64))
    }

    /// Max over the given axes; the gradient routes to the first argmax.
    pub fn max(&self, axes: &[usize]) -> Result<Tensor<E>> {
        self.reduce_check(axes)?;
        let out_shape = self.reduced_shape(axes);
        let map = self.reduce_index_map(axes);
        let n_out: usize = out_shape.iter().product();
        let mut data = vec![E::from_f64(f64::NEG_INFINITY); n_out];
        let mut argmax = vec![usize::MAX; n_out];
        {
            let x = self.data();
            for (i, &o) in map.iter().enumerate() {
                if argmax[o] == usize::MAX || x[i] > data[o] {
                    data[o] = x[i];
                    argmax[o] = i;
                }
            }
        }
        Ok(Tensor::from_op(
            out_shape,
            data,
            vec![self.clone()],
            move |g, parents, sink| {
                let mut gx = vec![E::ZERO; parents[0].numel()];
                for (o, &i) in argmax.iter().enumerate() {
                    gx[i] += g[o];
                }
                sink.add(&parents[0], gx);
            },
        ))
    }

    pub fn sum_all(&self) -> Result<Tensor<E>> {
        let axes: Vec<usize> = (0..self.shape().len()).collect();
        self.sum(&axes)
    }

    pub fn mean_all(&self) -> Result<Tensor<E>> {
        let axes: Vec<usize> = (0..self.shape().len()).collect();
        self.mean(&axes)
    }
}
