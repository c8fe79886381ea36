use alloc::format;
use rand::Rng;

use crate::error::Result;
use crate::layers::{join, BatchNorm, Conv1d, Conv2d, Mode, Module, Param, Relu};
use crate::tensor::Tensor;

/// Convolution, batch norm, ReLU.
#[derive(Debug, Clone)]
pub struct ConvBnRelu2d {
    pub conv: Conv2d,
    pub bn: BatchNorm,
    relu: Relu,
}

impl ConvBnRelu2d {
    pub fn new<R: Rng + ?Sized>(
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        padding: (usize, usize),
        rng: &mut R,
    ) -> Self {
        Self { conv: Conv2d::new(cin, cout, kernel, padding, rng), bn: BatchNorm::new(cout), relu: Relu::default() }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.conv.forward(x)?;
        let y = self.bn.forward(&y, mode)?;
        Ok(self.relu.forward(&y))
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(crate::layers::relu(&self.bn.infer(&self.conv.infer(x)?)?))
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let g = self.relu.backward(grad)?;
        let g = self.bn.backward(&g)?;
        self.conv.backward(&g)
    }
}

impl Module for ConvBnRelu2d {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv.visit_params(f);
        self.bn.visit_params(f);
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.conv.visit_state(&join(prefix, "conv"), f);
        self.bn.visit_state(&join(prefix, "bn"), f);
    }

    fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.conv.visit_state_mut(&join(prefix, "conv"), f);
        self.bn.visit_state_mut(&join(prefix, "bn"), f);
    }
}

/// Length-preserving dilated 1D convolution, batch norm, ReLU.
#[derive(Debug, Clone)]
pub struct ConvBnRelu1d {
    pub conv: Conv1d,
    pub bn: BatchNorm,
    relu: Relu,
}

impl ConvBnRelu1d {
    pub fn new<R: Rng + ?Sized>(channels: usize, kernel: usize, dilation: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            conv: Conv1d::same(channels, channels, kernel, dilation, rng)?,
            bn: BatchNorm::new(channels),
            relu: Relu::default(),
        })
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.conv.forward(x)?;
        let y = self.bn.forward(&y, mode)?;
        Ok(self.relu.forward(&y))
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(crate::layers::relu(&self.bn.infer(&self.conv.infer(x)?)?))
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let g = self.relu.backward(grad)?;
        let g = self.bn.backward(&g)?;
        self.conv.backward(&g)
    }
}

impl Module for ConvBnRelu1d {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv.visit_params(f);
        self.bn.visit_params(f);
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.conv.visit_state(&join(prefix, "conv"), f);
        self.bn.visit_state(&join(prefix, "bn"), f);
    }

    fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.conv.visit_state_mut(&join(prefix, "conv"), f);
        self.bn.visit_state_mut(&join(prefix, "bn"), f);
    }
}

pub(crate) fn indexed(prefix: &str, name: &str, i: usize) -> alloc::string::String {
    join(prefix, &format!("{name}{i}"))
}
