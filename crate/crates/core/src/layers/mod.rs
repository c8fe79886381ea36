//! Differentiable layer primitives with hand-derived backward passes.
//!
//! Each layer owns its parameters and gradient buffers. `forward` caches what
//! `backward` needs, so a layer must see `forward` before `backward`. `infer`
//! takes `&self` and is safe to share across threads once training is done.

mod activation;
mod batchnorm;
mod conv1d;
mod conv2d;
mod pool;

pub use activation::{relu, sigmoid, softmax, Relu};
pub use batchnorm::{BatchNorm, BN_EPS, BN_MOMENTUM};
pub use conv1d::Conv1d;
pub use conv2d::Conv2d;
pub use pool::MaxPool2d;

use alloc::format;
use alloc::string::String;
use rand::Rng;

use crate::math;
use crate::tensor::Tensor;

/// Train mode uses batch statistics and updates running statistics;
/// eval mode reads the running statistics only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A trainable tensor together with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Uniform in `±sqrt(6 / fan_in)`.
pub(crate) fn fan_in_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let bound = math::sqrt(6.0 / fan_in as f64);
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

/// Walks parameters and persistent buffers of a module tree.
pub trait Module {
    /// Visits every trainable parameter in a fixed order.
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param));

    /// Visits every persisted tensor (parameter values and running statistics)
    /// under a dotted name.
    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor));

    fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor));

    fn zero_grad(&mut self) {
        self.visit_params(&mut |p| p.zero_grad());
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        String::from(name)
    } else {
        format!("{prefix}.{name}")
    }
}

const LANES: usize = 8;

/// `x . y` with a fixed lane-wise summation order; the independent partial
/// sums let the loop vectorize while staying deterministic.
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0; LANES];
    let mut xs = x.chunks_exact(LANES);
    let mut ys = y.chunks_exact(LANES);
    for (xc, yc) in (&mut xs).zip(&mut ys) {
        for i in 0..LANES {
            acc[i] += xc[i] * yc[i];
        }
    }
    for (i, (&a, &b)) in xs.remainder().iter().zip(ys.remainder()).enumerate() {
        acc[i] += a * b;
    }
    acc.iter().sum()
}

/// Lane-wise sum, see [`dot`].
pub(crate) fn sum(x: &[f64]) -> f64 {
    let mut acc = [0.0; LANES];
    let mut xs = x.chunks_exact(LANES);
    for xc in &mut xs {
        for i in 0..LANES {
            acc[i] += xc[i];
        }
    }
    for (i, &a) in xs.remainder().iter().enumerate() {
        acc[i] += a;
    }
    acc.iter().sum()
}
