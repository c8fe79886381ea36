//! Convolutional instance generator: log-mel map to bag of instances.

use alloc::vec::Vec;
use rand::Rng;

use super::blocks::{indexed, ConvBnRelu2d};
use super::ModelConfig;
use crate::error::{shape_err, Result};
use crate::layers::{join, BatchNorm, MaxPool2d, Mode, Module, Param};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
struct Block {
    first: ConvBnRelu2d,
    second: ConvBnRelu2d,
    pool: MaxPool2d,
}

/// Input batch norm, VGG-style blocks of two 3x3 convolutions and a 2x2 max
/// pool, then a full-height convolution that collapses frequency. Output is
/// `[batch, instance_dim, m]`; column `j` is instance `j`.
#[derive(Debug, Clone)]
pub struct InstanceGenerator {
    input_bn: BatchNorm,
    blocks: Vec<Block>,
    collapse: ConvBnRelu2d,
    bands: usize,
    frames: usize,
}

impl InstanceGenerator {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let (height, _) = config.pooled_extent();
        let mut blocks = Vec::with_capacity(config.block_channels.len());
        let mut cin = 1;
        for &width in &config.block_channels {
            blocks.push(Block {
                first: ConvBnRelu2d::new(cin, width, (3, 3), (1, 1), rng),
                second: ConvBnRelu2d::new(width, width, (3, 3), (1, 1), rng),
                pool: MaxPool2d::new((2, 2)),
            });
            cin = width;
        }
        let collapse = ConvBnRelu2d::new(cin, config.instance_dim, (height, 1), (0, 0), rng);
        Ok(Self { input_bn: BatchNorm::new(1), blocks, collapse, bands: config.bands, frames: config.frames })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        x.expect_rank(4, "instance generator")?;
        if x.dim(1) != 1 || x.dim(2) != self.bands || x.dim(3) != self.frames {
            return Err(shape_err!(
                "instance generator expects [batch, 1, {}, {}], got {:?}",
                self.bands,
                self.frames,
                x.shape()
            ));
        }
        Ok(())
    }

    fn squeeze(y: Tensor) -> Result<Tensor> {
        let (n, d, m) = (y.dim(0), y.dim(1), y.dim(3));
        y.reshape(&[n, d, m])
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.check_input(x)?;
        let mut y = self.input_bn.forward(x, mode)?;
        for block in &mut self.blocks {
            y = block.first.forward(&y, mode)?;
            y = block.second.forward(&y, mode)?;
            y = block.pool.forward(&y)?;
        }
        Self::squeeze(self.collapse.forward(&y, mode)?)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut y = self.input_bn.infer(x)?;
        for block in &self.blocks {
            y = block.first.infer(&y)?;
            y = block.second.infer(&y)?;
            y = block.pool.infer(&y)?;
        }
        Self::squeeze(self.collapse.infer(&y)?)
    }

    /// Takes the gradient w.r.t. the bag `[batch, d, m]`, returns the input gradient.
    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (n, d, m) = (grad.dim(0), grad.dim(1), grad.dim(2));
        let mut g = self.collapse.backward(&grad.clone().reshape(&[n, d, 1, m])?)?;
        for block in self.blocks.iter_mut().rev() {
            g = block.pool.backward(&g)?;
            g = block.second.backward(&g)?;
            g = block.first.backward(&g)?;
        }
        self.input_bn.backward(&g)
    }
}

impl Module for InstanceGenerator {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.input_bn.visit_params(f);
        for block in &mut self.blocks {
            block.first.visit_params(f);
            block.second.visit_params(f);
        }
        self.collapse.visit_params(f);
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.input_bn.visit_state(&join(prefix, "input_bn"), f);
        for (i, block) in self.blocks.iter().enumerate() {
            let p = indexed(prefix, "block", i);
            block.first.visit_state(&join(&p, "first"), f);
            block.second.visit_state(&join(&p, "second"), f);
        }
        self.collapse.visit_state(&join(prefix, "collapse"), f);
    }

    fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.input_bn.visit_state_mut(&join(prefix, "input_bn"), f);
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let p = indexed(prefix, "block", i);
            block.first.visit_state_mut(&join(&p, "first"), f);
            block.second.visit_state_mut(&join(&p, "second"), f);
        }
        self.collapse.visit_state_mut(&join(prefix, "collapse"), f);
    }
}
