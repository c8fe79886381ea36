//! The four network variants: instance generator, optional multi-temporal
//! scale module, single- or multi-detector head, and max-pool aggregator.

mod aggregate;
mod blocks;
mod generator;
mod head;
mod mts;

pub use aggregate::{aggregate, aggregate_backward, classify, NetOutput, Prediction};
pub use blocks::{ConvBnRelu1d, ConvBnRelu2d};
pub use generator::InstanceGenerator;
pub use head::{DetectorHead, MultiDetector, SingleDetector};
pub use mts::{Mts, MTS_DILATIONS, MTS_KERNEL};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, shape_err, Error, Result};
use crate::layers::{Mode, Module, Param};
use crate::tensor::Tensor;

/// Detector stage selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Head {
    /// One detector per class, sigmoid scores.
    Single,
    /// `K` detectors per class, max over detectors, softmax over classes.
    Multi,
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Head::Single => "sd",
            Head::Multi => "md",
        })
    }
}

impl FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sd" | "single" => Ok(Head::Single),
            "md" | "multi" => Ok(Head::Multi),
            other => Err(invalid!("unknown head {:?} (expected sd or md)", other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub head: Head,
    pub mts: bool,
    /// Sub-detectors per class; ignored for [`Head::Single`].
    pub detectors: usize,
    pub classes: usize,
    /// Filters per convolutional block. Each block halves both spatial axes.
    pub block_channels: Vec<usize>,
    /// Instance vector dimension `d`.
    pub instance_dim: usize,
    pub bands: usize,
    pub frames: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            head: Head::Single,
            mts: false,
            detectors: 4,
            classes: 10,
            block_channels: vec![32, 64, 128],
            instance_dim: 256,
            bands: 40,
            frames: 500,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Full-size configuration for one of the four ablation variants.
    pub fn variant(head: Head, mts: bool) -> Self {
        Self { head, mts, ..Self::default() }
    }

    /// Small network for gradient checks and synthetic experiments.
    pub fn reduced(classes: usize, bands: usize, frames: usize) -> Self {
        Self {
            classes,
            block_channels: vec![4, 8, 16],
            instance_dim: 16,
            bands,
            frames,
            ..Self::default()
        }
    }

    pub fn with_head(mut self, head: Head, detectors: usize) -> Self {
        self.head = head;
        self.detectors = detectors;
        self
    }

    pub fn with_mts(mut self, mts: bool) -> Self {
        self.mts = mts;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Table-style model name, e.g. `CNN-MTS-MD-MIL`.
    pub fn variant_name(&self) -> &'static str {
        match (self.mts, self.head) {
            (false, Head::Single) => "CNN-MIL",
            (true, Head::Single) => "CNN-MTS-MIL",
            (false, Head::Multi) => "CNN-MD-MIL",
            (true, Head::Multi) => "CNN-MTS-MD-MIL",
        }
    }

    /// Spatial extent `(bands, frames)` after all pooling blocks.
    pub fn pooled_extent(&self) -> (usize, usize) {
        let blocks = self.block_channels.len() as u32;
        (self.bands >> blocks, self.frames >> blocks)
    }

    /// Number of instances per bag, `m`.
    pub fn instances(&self) -> usize {
        self.pooled_extent().1
    }

    /// Input frames covered by one instance step (product of time pool strides).
    pub fn instance_stride(&self) -> usize {
        1 << self.block_channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(invalid!("need at least 2 classes, got {}", self.classes));
        }
        if self.head == Head::Multi && self.detectors == 0 {
            return Err(invalid!("multi-detector head needs K >= 1"));
        }
        if self.block_channels.is_empty() || self.block_channels.contains(&0) || self.instance_dim == 0 {
            return Err(invalid!("channel widths must be positive"));
        }
        let (h, m) = self.pooled_extent();
        if h == 0 || m == 0 {
            return Err(shape_err!(
                "input {}x{} is too small for {} pooling blocks",
                self.bands,
                self.frames,
                self.block_channels.len()
            ));
        }
        if self.mts && m < Mts::min_len() {
            return Err(shape_err!("multi-temporal-scale module needs at least {} instances, got {}", Mts::min_len(), m));
        }
        Ok(())
    }
}

/// A complete MIL network.
#[derive(Debug, Clone)]
pub struct MilNet {
    config: ModelConfig,
    generator: InstanceGenerator,
    mts: Option<Mts>,
    head: DetectorHead,
    cache: Option<(Vec<usize>, usize)>,
}

impl MilNet {
    /// Builds the network with weights drawn from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let generator = InstanceGenerator::new(&config, &mut rng)?;
        let mts = if config.mts { Some(Mts::new(config.instance_dim, &mut rng)?) } else { None };
        let head = match config.head {
            Head::Single => DetectorHead::Single(SingleDetector::new(config.instance_dim, config.classes, &mut rng)?),
            Head::Multi => DetectorHead::Multi(MultiDetector::new(
                config.instance_dim,
                config.classes,
                config.detectors,
                &mut rng,
            )?),
        };
        Ok(Self { config, generator, mts, head, cache: None })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn head(&self) -> &DetectorHead {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut DetectorHead {
        &mut self.head
    }

    pub fn mts_mut(&mut self) -> Option<&mut Mts> {
        self.mts.as_mut()
    }

    /// Bag of instances `[batch, d, m]` (after the multi-scale module, if any).
    pub fn instances(&self, x: &Tensor) -> Result<Tensor> {
        let bag = self.generator.infer(x)?;
        match &self.mts {
            Some(mts) => mts.infer(&bag),
            None => Ok(bag),
        }
    }

    /// Eval-mode forward pass; takes `&self` and caches nothing.
    pub fn infer(&self, x: &Tensor) -> Result<NetOutput> {
        let scores = self.head.infer(&self.instances(x)?)?;
        aggregate(scores)
    }

    /// Eval-mode prediction for one `[bands, frames]` feature map.
    pub fn predict(&self, features: &Tensor) -> Result<Prediction> {
        let x = features.clone().reshape(&[1, 1, self.config.bands, self.config.frames])?;
        Ok(self.infer(&x)?.prediction(0))
    }

    /// Forward pass that caches activations for [`MilNet::backward`].
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<NetOutput> {
        let mut bag = self.generator.forward(x, mode)?;
        if let Some(mts) = &mut self.mts {
            bag = mts.forward(&bag, mode)?;
        }
        let out = aggregate(self.head.forward(&bag)?)?;
        self.cache = Some((out.argmax.clone(), out.instances()));
        Ok(out)
    }

    /// Back-propagates a bag-score gradient `[batch, C]`, accumulating
    /// parameter gradients. Returns the input gradient.
    pub fn backward(&mut self, grad_bag: &Tensor) -> Result<Tensor> {
        let (argmax, m) = self.cache.as_ref().ok_or_else(|| invalid!("backward before forward"))?;
        let g = aggregate_backward(grad_bag, argmax, *m)?;
        let mut g = self.head.backward(&g)?;
        if let Some(mts) = &mut self.mts {
            g = mts.backward(&g)?;
        }
        self.generator.backward(&g)
    }

    pub fn parameter_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.value.len());
        n
    }

    /// Names and shapes of every persisted tensor, in visiting order.
    pub fn state_names(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.visit_state("", &mut |name, t| out.push((String::from(name), t.shape().to_vec())));
        out
    }
}

impl Module for MilNet {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.generator.visit_params(f);
        if let Some(mts) = &mut self.mts {
            mts.visit_params(f);
        }
        self.head.visit_params(f);
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.generator.visit_state(&crate::layers::join(prefix, "generator"), f);
        if let Some(mts) = &self.mts {
            mts.visit_state(&crate::layers::join(prefix, "mts"), f);
        }
        self.head.visit_state(&crate::layers::join(prefix, "head"), f);
    }

    fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.generator.visit_state_mut(&crate::layers::join(prefix, "generator"), f);
        if let Some(mts) = &mut self.mts {
            mts.visit_state_mut(&crate::layers::join(prefix, "mts"), f);
        }
        self.head.visit_state_mut(&crate::layers::join(prefix, "head"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooled_extent_follows_floor_chain() {
        let c = ModelConfig::default();
        assert_eq!(c.pooled_extent(), (5, 62));
        let c = ModelConfig { frames: 100, ..ModelConfig::default() };
        assert_eq!(c.instances(), 12);
        assert_eq!(c.instance_stride(), 8);
    }

    #[test]
    fn variant_names() {
        assert_eq!(ModelConfig::variant(Head::Single, false).variant_name(), "CNN-MIL");
        assert_eq!(ModelConfig::variant(Head::Multi, true).variant_name(), "CNN-MTS-MD-MIL");
    }

    #[test]
    fn head_parses() {
        assert_eq!("MD".parse::<Head>().unwrap(), Head::Multi);
        assert!("xx".parse::<Head>().is_err());
    }

    #[test]
    fn rejects_single_class_and_tiny_inputs() {
        assert!(ModelConfig { classes: 1, ..ModelConfig::default() }.validate().is_err());
        assert!(ModelConfig::reduced(4, 4, 100).validate().is_err());
        assert!(ModelConfig::reduced(4, 40, 40).with_mts(true).validate().is_err());
    }

    #[test]
    fn wrong_band_count_is_rejected() {
        let net = MilNet::new(ModelConfig::reduced(3, 40, 40)).unwrap();
        assert!(net.infer(&Tensor::zeros(&[1, 1, 32, 40])).is_err());
    }

    #[test]
    fn reduced_shapes() {
        let net = MilNet::new(ModelConfig::reduced(4, 40, 100)).unwrap();
        let out = net.infer(&Tensor::zeros(&[2, 1, 40, 100])).unwrap();
        assert_eq!(out.instance_scores.shape(), &[2, 4, 12]);
        assert_eq!(out.bag_scores.shape(), &[2, 4]);
    }
}
