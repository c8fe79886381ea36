use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::math;
use crate::tensor::Tensor;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(math::sigmoid)
}

/// Softmax along `axis`, with the slice maximum subtracted first.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.rank() {
        return Err(invalid!("softmax axis {} out of range for shape {:?}", axis, x.shape()));
    }
    let len = x.dim(axis);
    let inner: usize = x.shape()[axis + 1..].iter().product();
    let outer: usize = x.shape()[..axis].iter().product();
    let mut out = x.data().to_vec();
    let mut buf = Vec::with_capacity(len);
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let max = (0..len).map(|k| out[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            buf.clear();
            buf.extend((0..len).map(|k| math::exp(out[at(k)] - max)));
            let total: f64 = buf.iter().sum();
            for (k, e) in buf.iter().enumerate() {
                out[at(k)] = e / total;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// ReLU with a cached activity mask.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Vec<bool>,
}

impl Relu {
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        self.mask = x.data().iter().map(|&v| v > 0.0).collect();
        relu(x)
    }

    pub fn backward(&self, grad: &Tensor) -> Result<Tensor> {
        if grad.len() != self.mask.len() {
            return Err(invalid!("relu gradient length {} != {}", grad.len(), self.mask.len()));
        }
        let data = grad.data().iter().zip(&self.mask).map(|(&g, &m)| if m { g } else { 0.0 }).collect();
        Tensor::new(grad.shape().to_vec(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn sigmoid_values() {
        assert_eq!(math::sigmoid(0.0), 0.5);
        assert!((math::sigmoid(2.0) - 0.880_797_08).abs() < 1e-8);
        assert!((math::sigmoid(-800.0)).is_finite());
        assert_eq!(math::sigmoid(800.0), 1.0);
    }

    #[test]
    fn softmax_uniform() {
        let y = softmax(&Tensor::full(&[10], 3.0), 0).unwrap();
        for &v in y.data() {
            assert!((v - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_survives_large_logits() {
        let x = Tensor::new(vec![2, 3], vec![1000.0, 999.0, -1000.0, 0.0, 1.0, 2.0]).unwrap();
        let y = softmax(&x, 0).unwrap();
        assert!(y.is_finite());
        for col in 0..3 {
            let s = y.get(&[0, col]) + y.get(&[1, col]);
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
