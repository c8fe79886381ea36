//! Adam with bias-corrected moments.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::layers::{Module, Param};
use crate::math;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<(Tensor, Tensor)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, moments: Vec::new() }
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to `params` in order. Gradients are checked for
    /// finiteness before anything is modified.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        if let Some(i) = params.iter().position(|p| !p.grad.is_finite()) {
            return Err(self.non_finite(i));
        }
        self.prepare(params.len(), |moments| {
            for p in params.iter() {
                moments.push((Tensor::zeros(p.value.shape()), Tensor::zeros(p.value.shape())));
            }
        })?;
        let (lr, c1, c2) = self.advance();
        for (p, m) in params.iter_mut().zip(&mut self.moments) {
            update(p, m, &self.config, lr, c1, c2)?;
        }
        Ok(())
    }

    /// Steps every parameter of `module` in visiting order.
    pub fn step_module<M: Module + ?Sized>(&mut self, module: &mut M) -> Result<()> {
        let mut count = 0;
        let mut bad = None;
        module.visit_params(&mut |p| {
            if bad.is_none() && !p.grad.is_finite() {
                bad = Some(count);
            }
            count += 1;
        });
        if let Some(i) = bad {
            return Err(self.non_finite(i));
        }
        self.prepare(count, |moments| {
            module.visit_params(&mut |p| {
                moments.push((Tensor::zeros(p.value.shape()), Tensor::zeros(p.value.shape())))
            });
        })?;
        let (lr, c1, c2) = self.advance();
        let config = self.config;
        let mut moments = self.moments.iter_mut();
        let mut result = Ok(());
        module.visit_params(&mut |p| {
            if let (Ok(()), Some(m)) = (&result, moments.next()) {
                result = update(p, m, &config, lr, c1, c2);
            }
        });
        result
    }

    fn non_finite(&self, index: usize) -> Error {
        Error::NonFinite(format!("gradient of parameter {} at step {}", index, self.step + 1))
    }

    fn prepare(&mut self, count: usize, init: impl FnOnce(&mut Vec<(Tensor, Tensor)>)) -> Result<()> {
        if self.moments.is_empty() {
            init(&mut self.moments);
        }
        if self.moments.len() != count {
            return Err(Error::InvalidArgument(format!(
                "optimizer tracks {} parameters, got {}",
                self.moments.len(),
                count
            )));
        }
        Ok(())
    }

    /// Increments the step counter; returns `(lr, 1 - beta1^t, 1 - beta2^t)`.
    fn advance(&mut self) -> (f64, f64, f64) {
        self.step += 1;
        let t = self.step as f64;
        (
            self.config.lr,
            1.0 - math::pow(self.config.beta1, t),
            1.0 - math::pow(self.config.beta2, t),
        )
    }
}

fn update(p: &mut Param, (m, v): &mut (Tensor, Tensor), cfg: &AdamConfig, lr: f64, c1: f64, c2: f64) -> Result<()> {
    m.expect_shape(p.value.shape())?;
    let g = p.grad.data();
    let (md, vd) = (m.data_mut(), v.data_mut());
    for (i, w) in p.value.data_mut().iter_mut().enumerate() {
        md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * g[i];
        vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let m_hat = md[i] / c1;
        let v_hat = vd[i] / c2;
        *w -= lr * m_hat / (math::sqrt(v_hat) + cfg.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(value: f64, grad: f64) -> Param {
        Param { value: Tensor::scalar(value), grad: Tensor::scalar(grad) }
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = scalar_param(0.0, 1.0);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p]).unwrap();
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((p.value.data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar_param(1.5, 0.0);
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..3 {
            adam.step(&mut [&mut p]).unwrap();
        }
        assert_eq!(p.value.data()[0], 1.5);
    }

    #[test]
    fn sign_flip_flips_first_update() {
        let mut a = scalar_param(0.0, 0.3);
        let mut b = scalar_param(0.0, -0.3);
        Adam::new(AdamConfig::default()).step(&mut [&mut a]).unwrap();
        Adam::new(AdamConfig::default()).step(&mut [&mut b]).unwrap();
        assert_eq!(a.value.data()[0], -b.value.data()[0]);
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let mut p = scalar_param(2.0, f64::NAN);
        let mut adam = Adam::new(AdamConfig::default());
        assert!(matches!(adam.step(&mut [&mut p]), Err(Error::NonFinite(_))));
        assert_eq!(p.value.data()[0], 2.0);
        assert_eq!(adam.steps(), 0);
    }
}
