//! Instance detectors.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::{invalid, Result};
use crate::layers::{join, sigmoid, softmax, Conv1d, Module, Param};
use crate::tensor::Tensor;

/// One affine detector per class followed by a sigmoid; every
/// `(class, instance)` score is an independent probability.
#[derive(Debug, Clone)]
pub struct SingleDetector {
    pub conv: Conv1d,
    scores: Option<Tensor>,
}

impl SingleDetector {
    pub fn new<R: Rng + ?Sized>(dim: usize, classes: usize, rng: &mut R) -> Result<Self> {
        Ok(Self { conv: Conv1d::new(dim, classes, 1, 1, 0, rng)?, scores: None })
    }

    pub fn from_conv(conv: Conv1d) -> Self {
        Self { conv, scores: None }
    }

    pub fn infer(&self, bag: &Tensor) -> Result<Tensor> {
        Ok(sigmoid(&self.conv.infer(bag)?))
    }

    pub fn forward(&mut self, bag: &Tensor) -> Result<Tensor> {
        let s = sigmoid(&self.conv.forward(bag)?);
        self.scores = Some(s.clone());
        Ok(s)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let s = self.scores.as_ref().ok_or_else(|| invalid!("detector backward before forward"))?;
        let g = grad.zip_map(s, |g, s| g * s * (1.0 - s))?;
        self.conv.backward(&g)
    }
}

/// `K` affine sub-detectors per class. The class evidence of an instance is
/// the maximum raw sub-detector response; evidences are softmax-normalized
/// across classes. Filter `l * K + k` is sub-detector `k` of class `l`.
#[derive(Debug, Clone)]
pub struct MultiDetector {
    pub conv: Conv1d,
    classes: usize,
    k: usize,
    cache: Option<MultiCache>,
}

#[derive(Debug, Clone)]
struct MultiCache {
    /// Winning sub-detector per `(batch, class, instance)`.
    winner: Vec<usize>,
    scores: Tensor,
}

impl MultiDetector {
    pub fn new<R: Rng + ?Sized>(dim: usize, classes: usize, k: usize, rng: &mut R) -> Result<Self> {
        if k == 0 {
            return Err(invalid!("multi-detector needs K >= 1"));
        }
        Ok(Self { conv: Conv1d::new(dim, classes * k, 1, 1, 0, rng)?, classes, k, cache: None })
    }

    pub fn from_conv(conv: Conv1d, classes: usize) -> Result<Self> {
        if classes == 0 || conv.out_channels() % classes != 0 {
            return Err(invalid!("{} filters do not split into {} classes", conv.out_channels(), classes));
        }
        let k = conv.out_channels() / classes;
        Ok(Self { conv, classes, k, cache: None })
    }

    pub fn detectors(&self) -> usize {
        self.k
    }

    /// Max over sub-detectors: returns `[n, C, m]` evidence and winners.
    fn reduce(&self, responses: &Tensor) -> Result<(Tensor, Vec<usize>)> {
        let (n, m) = (responses.dim(0), responses.dim(2));
        let (c, k) = (self.classes, self.k);
        let a = responses.data();
        let mut best = vec![0.0; n * c * m];
        let mut winner = vec![0; n * c * m];
        for b in 0..n {
            for l in 0..c {
                for j in 0..m {
                    let mut top = 0;
                    let mut val = a[((b * c + l) * k) * m + j];
                    for kk in 1..k {
                        let v = a[((b * c + l) * k + kk) * m + j];
                        if v > val {
                            val = v;
                            top = kk;
                        }
                    }
                    best[(b * c + l) * m + j] = val;
                    winner[(b * c + l) * m + j] = top;
                }
            }
        }
        Ok((Tensor::new(vec![n, c, m], best)?, winner))
    }

    /// Class evidence before the softmax, `[n, C, m]`.
    pub fn evidence(&self, bag: &Tensor) -> Result<Tensor> {
        Ok(self.reduce(&self.conv.infer(bag)?)?.0)
    }

    pub fn infer(&self, bag: &Tensor) -> Result<Tensor> {
        softmax(&self.evidence(bag)?, 1)
    }

    pub fn forward(&mut self, bag: &Tensor) -> Result<Tensor> {
        let responses = self.conv.forward(bag)?;
        let (evidence, winner) = self.reduce(&responses)?;
        let scores = softmax(&evidence, 1)?;
        self.cache = Some(MultiCache { winner, scores: scores.clone() });
        Ok(scores)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or_else(|| invalid!("detector backward before forward"))?;
        grad.expect_shape(cache.scores.shape())?;
        let (n, c, m) = (grad.dim(0), grad.dim(1), grad.dim(2));
        let (y, g) = (cache.scores.data(), grad.data());
        let k = self.k;
        let mut ga = vec![0.0; n * c * k * m];
        for b in 0..n {
            for j in 0..m {
                let at = |l: usize| (b * c + l) * m + j;
                let dot: f64 = (0..c).map(|l| g[at(l)] * y[at(l)]).sum();
                for l in 0..c {
                    let d = y[at(l)] * (g[at(l)] - dot);
                    let kk = cache.winner[at(l)];
                    ga[((b * c + l) * k + kk) * m + j] = d;
                }
            }
        }
        self.conv.backward(&Tensor::new(vec![n, c * k, m], ga)?)
    }
}

#[derive(Debug, Clone)]
pub enum DetectorHead {
    Single(SingleDetector),
    Multi(MultiDetector),
}

impl DetectorHead {
    pub fn infer(&self, bag: &Tensor) -> Result<Tensor> {
        match self {
            Self::Single(h) => h.infer(bag),
            Self::Multi(h) => h.infer(bag),
        }
    }

    pub fn forward(&mut self, bag: &Tensor) -> Result<Tensor> {
        match self {
            Self::Single(h) => h.forward(bag),
            Self::Multi(h) => h.forward(bag),
        }
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        match self {
            Self::Single(h) => h.backward(grad),
            Self::Multi(h) => h.backward(grad),
        }
    }

    fn conv(&self) -> &Conv1d {
        match self {
            Self::Single(h) => &h.conv,
            Self::Multi(h) => &h.conv,
        }
    }

    fn conv_mut(&mut self) -> &mut Conv1d {
        match self {
            Self::Single(h) => &mut h.conv,
            Self::Multi(h) => &mut h.conv,
        }
    }
}

impl Module for DetectorHead {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv_mut().visit_params(f);
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.conv().visit_state(&join(prefix, "detectors"), f);
    }

    fn visit_state_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.conv_mut().visit_state_mut(&join(prefix, "detectors"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(weight: Tensor, bias: Tensor) -> Conv1d {
        Conv1d::from_weights(weight, bias, 1, 0).unwrap()
    }

    #[test]
    fn zero_single_detector_scores_half() {
        let head = SingleDetector::from_conv(conv(Tensor::zeros(&[3, 4, 1]), Tensor::zeros(&[3])));
        let s = head.infer(&Tensor::from_fn(&[2, 4, 5], |i| i as f64)).unwrap();
        assert!(s.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn basis_detector_reads_first_feature() {
        let mut w = Tensor::zeros(&[1, 4, 1]);
        w.data_mut()[0] = 1.0;
        let head = SingleDetector::from_conv(conv(w, Tensor::zeros(&[1])));
        let mut bag = Tensor::zeros(&[1, 4, 1]);
        bag.data_mut()[0] = 2.0;
        let s = head.infer(&bag).unwrap();
        assert!((s.data()[0] - 0.880_797_08).abs() < 1e-8);
    }

    #[test]
    fn zero_multi_detector_is_uniform() {
        let head = MultiDetector::from_conv(conv(Tensor::zeros(&[40, 8, 1]), Tensor::zeros(&[40])), 10).unwrap();
        assert_eq!(head.detectors(), 4);
        let s = head.infer(&Tensor::from_fn(&[1, 8, 3], |i| i as f64)).unwrap();
        assert!(s.data().iter().all(|&v| (v - 0.1).abs() < 1e-15));
    }

    #[test]
    fn evidence_is_max_over_subdetectors() {
        // one instance with a constant feature of 1: responses equal biases
        let bias = Tensor::new(vec![8], vec![0.2, 1.7, -3.0, 0.4, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let head = MultiDetector::from_conv(conv(Tensor::zeros(&[8, 1, 1]), bias), 2).unwrap();
        let e = head.evidence(&Tensor::full(&[1, 1, 1], 1.0)).unwrap();
        assert_eq!(e.data(), &[1.7, 0.0]);
    }
}
