//! Dense tensors with shape bookkeeping and reverse-mode autodiff.
//!
//! The tensor is deliberately minimal: enough elementwise math, reductions
//! and custom primitives (convolutions, batch norm, CTC) to train the
//! acoustic models in this crate, nothing more. Storage is generic over
//! [`Element`] so the same code runs in `f64` for gradient checking and in
//! `f32` for training and checkpoints.
//!
//! Gradients flow through a dynamic graph: every op that sees an input on
//! the grad path records its parents and a backward rule. [`Tensor::backward`]
//! walks the graph in reverse topological order and accumulates `d loss / d w`
//! into every `requires_grad` leaf it can reach.

mod element;
mod ops;

pub use element::Element;

use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard};

use crate::error::{Error, Result};
use crate::rng::Rng;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static NO_GRAD: Cell<bool> = const { Cell::new(false) };
}

/// Run `f` without recording any autodiff graph (e.g. evaluation forward passes).
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let prev = NO_GRAD.with(|c| c.replace(true));
    let out = f();
    NO_GRAD.with(|c| c.set(prev));
    out
}

fn grad_recording_enabled() -> bool {
    NO_GRAD.with(|c| !c.get())
}

/// Deposits backward-pass gradient contributions for parent nodes.
///
/// Flow-through gradients live in a pass-local map keyed by node id, so a
/// second call to `backward` re-propagates from scratch and leaf gradients
/// accumulate across calls, as the contract requires.
pub struct GradSink<'a, E: Element> {
    pending: &'a mut HashMap<u64, Vec<E>>,
}

impl<E: Element> GradSink<'_, E> {
    /// Add `delta` (same shape as `parent`) to the parent's flowing gradient.
    /// No-op when the parent is off the grad path.
    pub fn add(&mut self, parent: &Tensor<E>, delta: Vec<E>) {
        if !parent.needs_grad() {
            return;
        }
        debug_assert_eq!(delta.len(), parent.numel());
        match self.pending.get_mut(&parent.id()) {
            Some(buf) => {
                for (b, d) in buf.iter_mut().zip(delta.iter()) {
                    *b += *d;
                }
            }
            None => {
                self.pending.insert(parent.id(), delta);
            }
        }
    }
}

type BackwardFn<E> = Box<dyn Fn(&[E], &[Tensor<E>], &mut GradSink<E>) + Send + Sync>;

struct Node<E: Element> {
    id: u64,
    shape: Vec<usize>,
    data: RwLock<Vec<E>>,
    grad: Mutex<Option<Vec<E>>>,
    requires_grad: bool,
    parents: Vec<Tensor<E>>,
    backward_fn: Option<BackwardFn<E>>,
}

/// Dense N-dimensional array, cheaply clonable (shared storage).
pub struct Tensor<E: Element> {
    node: Arc<Node<E>>,
}

impl<E: Element> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor {
            node: Arc::clone(&self.node),
        }
    }
}

impl<E: Element> std::fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let data = self.data();
        write!(f, "Tensor(shape={:?}", self.shape())?;
        if data.len() <= 8 {
            write!(f, ", data={:?}", &data[..])?;
        }
        write!(f, ")")
    }
}

/// Read guard over a tensor's values.
pub struct DataRef<'a, E: Element>(RwLockReadGuard<'a, Vec<E>>);

impl<E: Element> std::ops::Deref for DataRef<'_, E> {
    type Target = [E];
    fn deref(&self) -> &[E] {
        &self.0
    }
}

impl<E: Element> Tensor<E> {
    fn new_node(
        shape: Vec<usize>,
        data: Vec<E>,
        requires_grad: bool,
        parents: Vec<Tensor<E>>,
        backward_fn: Option<BackwardFn<E>>,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            node: Arc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RwLock::new(data),
                grad: Mutex::new(None),
                requires_grad,
                parents,
                backward_fn,
            }),
        }
    }

    /// Leaf tensor from raw values.
    pub fn from_vec(shape: &[usize], data: Vec<E>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} expects {} values, got {}",
                shape,
                shape.iter().product::<usize>(),
                data.len()
            )));
        }
        Ok(Self::new_node(shape.to_vec(), data, false, Vec::new(), None))
    }

    /// Leaf tensor that participates in gradient accumulation (a parameter).
    pub fn param(shape: &[usize], data: Vec<E>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} expects {} values, got {}",
                shape,
                shape.iter().product::<usize>(),
                data.len()
            )));
        }
        Ok(Self::new_node(shape.to_vec(), data, true, Vec::new(), None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::new_node(shape.to_vec(), vec![E::ZERO; n], false, Vec::new(), None)
    }

    pub fn full(shape: &[usize], value: E) -> Self {
        let n = shape.iter().product();
        Self::new_node(shape.to_vec(), vec![value; n], false, Vec::new(), None)
    }

    pub fn scalar(value: E) -> Self {
        Self::new_node(Vec::new(), vec![value], false, Vec::new(), None)
    }

    /// Leaf filled with uniform values in [lo, hi) drawn from `rng`.
    pub fn rand_uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| E::from_f64(rng.uniform(lo, hi)))
            .collect();
        Self::new_node(shape.to_vec(), data, false, Vec::new(), None)
    }

    /// Interior node produced by an op. Falls back to a plain leaf when no
    /// parent is on the grad path or grad recording is disabled.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<E>,
        parents: Vec<Tensor<E>>,
        backward_fn: impl Fn(&[E], &[Tensor<E>], &mut GradSink<E>) + Send + Sync + 'static,
    ) -> Self {
        if grad_recording_enabled() && parents.iter().any(|p| p.needs_grad()) {
            Self::new_node(shape, data, false, parents, Some(Box::new(backward_fn)))
        } else {
            Self::new_node(shape, data, false, Vec::new(), None)
        }
    }

    pub fn id(&self) -> u64 {
        self.node.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn numel(&self) -> usize {
        self.node.shape.iter().product()
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    /// On the grad path: either a parameter or derived from one.
    pub fn needs_grad(&self) -> bool {
        self.node.requires_grad || !self.node.parents.is_empty()
    }

    pub fn data(&self) -> DataRef<'_, E> {
        DataRef(self.node.data.read().unwrap())
    }

    pub fn values(&self) -> Vec<E> {
        self.node.data.read().unwrap().clone()
    }

    pub fn values_f64(&self) -> Vec<f64> {
        self.data().iter().map(|v| v.to_f64()).collect()
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> E {
        debug_assert!(self.is_scalar());
        self.node.data.read().unwrap()[0]
    }

    /// Overwrite values in place (optimizer updates). Shape must be preserved.
    pub fn set_data(&self, values: Vec<E>) {
        let mut guard = self.node.data.write().unwrap();
        assert_eq!(guard.len(), values.len(), "set_data must preserve shape");
        *guard = values;
    }

    /// Mutate values in place.
    pub fn update_data(&self, f: impl FnOnce(&mut [E])) {
        let mut guard = self.node.data.write().unwrap();
        f(&mut guard);
    }

    pub fn grad(&self) -> Option<Vec<E>> {
        self.node.grad.lock().unwrap().clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.lock().unwrap() = None;
    }

    pub fn accumulate_grad(&self, delta: &[E]) {
        let mut guard = self.node.grad.lock().unwrap();
        match guard.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta.iter()) {
                    *gi += *di;
                }
            }
            None => *guard = Some(delta.to_vec()),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data().iter().all(|v| v.is_finite())
    }

    /// Reverse-mode backward pass from a scalar loss.
    ///
    /// Every reachable `requires_grad` leaf accumulates `d self / d leaf`.
    /// Repeated calls accumulate until [`Tensor::zero_grad`] clears them.
    pub fn backward(&self) -> Result<()> {
        if !self.is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape()
            )));
        }

        // Post-order DFS for reverse topological order.
        let mut order: Vec<Tensor<E>> = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor<E>, usize)> = vec![(self.clone(), 0)];
        while let Some((t, child_idx)) = stack.pop() {
            if child_idx == 0 && !visited.insert(t.id()) {
                continue;
            }
            if child_idx < t.node.parents.len() {
                let parent = t.node.parents[child_idx].clone();
                stack.push((t.clone(), child_idx + 1));
                if !visited.contains(&parent.id()) {
                    stack.push((parent, 0));
                }
            } else {
                order.push(t);
            }
        }

        let mut pending: HashMap<u64, Vec<E>> = HashMap::new();
        pending.insert(self.id(), vec![E::ONE]);

        for t in order.iter().rev() {
            let Some(flow) = pending.remove(&t.id()) else {
                continue;
            };
            if t.node.requires_grad {
                t.accumulate_grad(&flow);
            }
            if let Some(rule) = &t.node.backward_fn {
                let mut sink = GradSink {
                    pending: &mut pending,
                };
                rule(&flow, &t.node.parents, &mut sink);
            }
        }
        Ok(())
    }
}

/// Row-major strides for a shape.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Max relative error between the analytic gradient of `f` at `x` and a
/// central finite difference with step `h`:
/// `max_i |analytic_i - numeric_i| / max(1, |numeric_i|)`.
///
/// `f` must be a pure scalar-valued function of its input.
pub fn check_gradient<E: Element>(
    f: impl Fn(&Tensor<E>) -> Result<Tensor<E>>,
    x: &[f64],
    shape: &[usize],
    h: f64,
) -> Result<f64> {
    let xt = Tensor::<E>::param(shape, x.iter().map(|&v| E::from_f64(v)).collect())?;
    let y = f(&xt)?;
    if !y.is_scalar() {
        return Err(Error::Contract(
            "check_gradient requires a scalar-valued function".into(),
        ));
    }
    y.backward()?;
    let analytic = xt
        .grad()
        .unwrap_or_else(|| vec![E::ZERO; x.len()]);

    let mut max_err = 0.0f64;
    for i in 0..x.len() {
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[i] += h;
        minus[i] -= h;
        let fp = no_grad(|| -> Result<f64> {
            let t = Tensor::<E>::from_vec(shape, plus.iter().map(|&v| E::from_f64(v)).collect())?;
            Ok(f(&t)?.item().to_f64())
        })?;
        let fm = no_grad(|| -> Result<f64> {
            let t = Tensor::<E>::from_vec(shape, minus.iter().map(|&v| E::from_f64(v)).collect())?;
            Ok(f(&t)?.item().to_f64())
        })?;
        let numeric = (fp - fm) / (2.0 * h);
        let err = (analytic[i].to_f64() - numeric).abs() / numeric.abs().max(1.0);
        if err > max_err {
            max_err = err;
        }
    }
    Ok(max_err)
}
