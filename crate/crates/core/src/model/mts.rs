//! Multi-temporal-scale module.
//!
//! Three stacked length-preserving dilated convolutions (kernel 3, dilation
//! 1, 2, 4), each followed by batch norm and ReLU. The module input and the
//! three layer outputs are concatenated along channels and fused back to the
//! instance dimension by a size-1 convolution. One output instance depends on
//! input instances within distance 1 + 2 + 4 = 7.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use super::blocks::{indexed, ConvBnRelu1d};
use crate::error::Result;
use crate::layers::{join, Conv1d, Mode, Module, Param};
use crate::tensor::Tensor;

pub const MTS_DILATIONS: [usize; 3] = [1, 2, 4];
pub const MTS_KERNEL: usize = 3;

#[derive(Debug, Clone)]
pub struct Mts {
    layers: Vec<ConvBnRelu1d>,
    fuse: Conv1d,
    channels: usize,
}

/// Concatenates `[n, c, t]` tensors along channels.
fn concat(parts: &[&Tensor]) -> Tensor {
    let (n, t) = (parts[0].dim(0), parts[0].dim(2));
    let total_c: usize = parts.iter().map(|p| p.dim(1)).sum();
    let mut out = Vec::with_capacity(n * total_c * t);
    for b in 0..n {
        for p in parts {
            let c = p.dim(1);
            out.extend_from_slice(&p.data()[b * c * t..(b + 1) * c * t]);
        }
    }
    Tensor::new(vec![n, total_c, t], out).expect("concat shape")
}

/// Splits a `[n, k * c, t]` tensor into `k` tensors of `[n, c, t]`.
fn split(x: &Tensor, pieces: usize) -> Vec<Tensor> {
    let (n, t) = (x.dim(0), x.dim(2));
    let c = x.dim(1) / pieces;
    (0..pieces)
        .map(|k| {
            let mut data = Vec::with_capacity(n * c * t);
            for b in 0..n {
                let start = (b * pieces * c + k * c) * t;
                data.extend_from_slice(&x.data()[start..start + c * t]);
            }
            Tensor::new(vec![n, c, t], data).expect("split shape")
        })
        .collect()
}

impl Mts {
    pub fn new<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Result<Self> {
        let layers = MTS_DILATIONS
            .iter()
            .map(|&r| ConvBnRelu1d::new(channels, MTS_KERNEL, r, rng))
            .collect::<Result<Vec<_>>>()?;
        let fuse = Conv1d::new(channels * (MTS_DILATIONS.len() + 1), channels, 1, 1, 0, rng)?;
        Ok(Self { layers, fuse, channels })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Largest kernel span among the dilated layers.
    pub fn min_len() -> usize {
        MTS_DILATIONS.iter().map(|r| r * (MTS_KERNEL - 1) + 1).max().unwrap_or(1)
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut maps = vec![x.clone()];
        for layer in &mut self.layers {
            let next = layer.forward(maps.last().expect("nonempty"), mode)?;
            maps.push(next);
        }
        let refs: Vec<&Tensor> = maps.iter().collect();
        self.fuse.forward(&concat(&refs))
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut maps = vec![x.clone()];
        for layer in &self.layers {
            let next = layer.infer(maps.last().expect("nonempty"))?;
            maps.push(next);
        }
        let refs: Vec<&Tensor> = maps.iter().collect();
        self.fuse.infer(&concat(&refs))
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let g = self.fuse.backward(grad)?;
        let mut parts = split(&g, self.layers.len() + 1);
        // parts[i] is the direct gradient of map i; walk the chain backwards
        let mut carry = parts.pop().expect("nonempty");
        for layer in self.layers.iter_mut().rev() {
            let through = layer.backward(&carry)?;
            let mut direct = parts.pop().expect("one part per map");
            direct.add_scaled(&through, 1.0)?;
            carry = direct;
        }
        Ok(carry)
    }
}

impl Module for Mts {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for layer in &mut self.layers {
            layer.visit_params(f);
        }
        self.fuse.visit_params(f);
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.visit_state(&indexed(prefix, "dilated", i), f);
        }
        self.fuse.visit_state(&join(prefix, "fuse"), f);
    }

    fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_state_mut(&indexed(prefix, "dilated", i), f);
        }
        self.fuse.visit_state_mut(&join(prefix, "fuse"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_split_roundtrip() {
        let a = Tensor::from_fn(&[2, 3, 4], |i| i as f64);
        let b = Tensor::from_fn(&[2, 3, 4], |i| -(i as f64));
        let c = concat(&[&a, &b]);
        assert_eq!(c.shape(), &[2, 6, 4]);
        let parts = split(&c, 2);
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn minimum_length_is_largest_span() {
        assert_eq!(Mts::min_len(), 9);
    }
}
