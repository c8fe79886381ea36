use alloc::vec;
use alloc::vec::Vec;

use super::{dot, join, sum, Mode, Module, Param};
use crate::error::{invalid, shape_err, Result};
use crate::math;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization over `[batch, channels, ...]`.
///
/// Statistics are taken over the batch axis and every trailing axis. The
/// running variance tracks the unbiased batch variance.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    eps: f64,
    momentum: f64,
    cache: Option<Cache>,
}

#[derive(Debug, Clone)]
struct Cache {
    mode: Mode,
    shape: Vec<usize>,
    /// Normalized input.
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor::full(&[channels], 1.0)),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    fn layout(&self, input: &Tensor) -> Result<(usize, usize, usize)> {
        if input.rank() < 2 {
            return Err(shape_err!("batchnorm needs [batch, channels, ...], got {:?}", input.shape()));
        }
        let (n, c) = (input.dim(0), input.dim(1));
        if c != self.channels() {
            return Err(shape_err!(
                "batchnorm has {} channels, input shape {:?}",
                self.channels(),
                input.shape()
            ));
        }
        let inner = input.shape()[2..].iter().product::<usize>();
        Ok((n, c, inner))
    }

    fn normalize_eval(&self, input: &Tensor) -> Result<Tensor> {
        let (n, c, inner) = self.layout(input)?;
        let mut out = input.data().to_vec();
        for ch in 0..c {
            let inv = 1.0 / math::sqrt(self.running_var.data()[ch] + self.eps);
            let scale = self.gamma.value.data()[ch] * inv;
            let shift = self.beta.value.data()[ch] - self.running_mean.data()[ch] * scale;
            for b in 0..n {
                let seg = &mut out[(b * c + ch) * inner..(b * c + ch + 1) * inner];
                seg.iter_mut().for_each(|v| *v = *v * scale + shift);
            }
        }
        Tensor::new(input.shape().to_vec(), out)
    }

    /// Eval-mode forward without caching.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        self.normalize_eval(input)
    }

    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        let (n, c, inner) = self.layout(input)?;
        if mode == Mode::Eval {
            let out = self.normalize_eval(input)?;
            let inv_std: Vec<f64> = (0..c)
                .map(|ch| 1.0 / math::sqrt(self.running_var.data()[ch] + self.eps))
                .collect();
            let mut xhat = input.data().to_vec();
            for (i, v) in xhat.iter_mut().enumerate() {
                let ch = (i / inner) % c;
                *v = (*v - self.running_mean.data()[ch]) * inv_std[ch];
            }
            self.cache = Some(Cache { mode, shape: input.shape().to_vec(), xhat, inv_std });
            return Ok(out);
        }
        if n < 2 {
            return Err(invalid!("batchnorm in train mode needs a batch of at least 2, got {}", n));
        }
        let count = (n * inner) as f64;
        let x = input.data();
        let mut xhat = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let segments = (0..n).map(|b| (b * c + ch) * inner);
            let mean = segments.clone().map(|o| sum(&x[o..o + inner])).sum::<f64>() / count;
            let var = segments
                .clone()
                .map(|o| {
                    let d: Vec<f64> = x[o..o + inner].iter().map(|v| v - mean).collect();
                    dot(&d, &d)
                })
                .sum::<f64>()
                / count;
            let inv = 1.0 / math::sqrt(var + self.eps);
            inv_std[ch] = inv;
            let (g, bta) = (self.gamma.value.data()[ch], self.beta.value.data()[ch]);
            for o in segments {
                for i in o..o + inner {
                    let h = (x[i] - mean) * inv;
                    xhat[i] = h;
                    out[i] = g * h + bta;
                }
            }
            let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
            let m = self.momentum;
            let rm = &mut self.running_mean.data_mut()[ch];
            *rm = (1.0 - m) * *rm + m * mean;
            let rv = &mut self.running_var.data_mut()[ch];
            *rv = (1.0 - m) * *rv + m * unbiased;
        }
        self.cache = Some(Cache { mode, shape: input.shape().to_vec(), xhat, inv_std });
        Tensor::new(input.shape().to_vec(), out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or_else(|| invalid!("batchnorm backward before forward"))?;
        grad_out.expect_shape(&cache.shape)?;
        let (n, c) = (cache.shape[0], cache.shape[1]);
        let inner: usize = cache.shape[2..].iter().product();
        let go = grad_out.data();
        let mut gx = vec![0.0; go.len()];
        for ch in 0..c {
            let g = self.gamma.value.data()[ch];
            let inv = cache.inv_std[ch];
            let segments = (0..n).map(|b| (b * c + ch) * inner);
            let xh = &cache.xhat;
            let sum_dy: f64 = segments.clone().map(|o| sum(&go[o..o + inner])).sum();
            let sum_dy_xhat: f64 = segments
                .clone()
                .map(|o| dot(&go[o..o + inner], &xh[o..o + inner]))
                .sum();
            self.beta.grad.data_mut()[ch] += sum_dy;
            self.gamma.grad.data_mut()[ch] += sum_dy_xhat;
            match cache.mode {
                // frozen statistics: a per-channel affine map
                Mode::Eval => {
                    for o in segments {
                        for i in o..o + inner {
                            gx[i] = go[i] * g * inv;
                        }
                    }
                }
                Mode::Train => {
                    let m = (n * inner) as f64;
                    let k = g * inv / m;
                    for o in segments {
                        for i in o..o + inner {
                            gx[i] = k * (m * go[i] - sum_dy - xh[i] * sum_dy_xhat);
                        }
                    }
                }
            }
        }
        Tensor::new(cache.shape.clone(), gx)
    }
}

impl Module for BatchNorm {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "gamma"), &self.gamma.value);
        f(&join(prefix, "beta"), &self.beta.value);
        f(&join(prefix, "running_mean"), &self.running_mean);
        f(&join(prefix, "running_var"), &self.running_var);
    }

    fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "gamma"), &mut self.gamma.value);
        f(&join(prefix, "beta"), &mut self.beta.value);
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
}
