//! Max-pool prediction aggregator.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// Batched network output.
#[derive(Debug, Clone, PartialEq)]
pub struct NetOutput {
    /// `[batch, C, m]`.
    pub instance_scores: Tensor,
    /// `[batch, C]`, the maximum over instances.
    pub bag_scores: Tensor,
    /// Instance attaining each bag score, row-major over `(batch, class)`.
    pub argmax: Vec<usize>,
}

impl NetOutput {
    pub fn batch(&self) -> usize {
        self.bag_scores.dim(0)
    }

    pub fn classes(&self) -> usize {
        self.bag_scores.dim(1)
    }

    pub fn instances(&self) -> usize {
        self.instance_scores.dim(2)
    }

    pub fn prediction(&self, index: usize) -> Prediction {
        let c = self.classes();
        Prediction {
            bag_scores: self.bag_scores.data()[index * c..(index + 1) * c].to_vec(),
            instance_scores: self.instance_scores.index_axis0(index),
            argmax: self.argmax[index * c..(index + 1) * c].to_vec(),
        }
    }

    pub fn predictions(&self) -> Vec<Prediction> {
        (0..self.batch()).map(|i| self.prediction(i)).collect()
    }
}

/// Scores for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub bag_scores: Vec<f64>,
    /// `[C, m]`.
    pub instance_scores: Tensor,
    /// Per class, the instance that attains the bag score.
    pub argmax: Vec<usize>,
}

impl Prediction {
    pub fn class(&self) -> usize {
        classify(&self.bag_scores)
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn classify(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// `Y[b, l] = max_j y[b, l, j]`, first index on ties.
pub fn aggregate(instance_scores: Tensor) -> Result<NetOutput> {
    instance_scores.expect_rank(3, "aggregate")?;
    let (n, c, m) = (instance_scores.dim(0), instance_scores.dim(1), instance_scores.dim(2));
    let mut bag = Vec::with_capacity(n * c);
    let mut argmax = Vec::with_capacity(n * c);
    for row in instance_scores.data().chunks_exact(m) {
        let j = classify(row);
        bag.push(row[j]);
        argmax.push(j);
    }
    Ok(NetOutput { bag_scores: Tensor::new(vec![n, c], bag)?, instance_scores, argmax })
}

/// Routes each bag-score gradient to the instance that won the max.
pub fn aggregate_backward(grad_bag: &Tensor, argmax: &[usize], instances: usize) -> Result<Tensor> {
    grad_bag.expect_rank(2, "aggregate backward")?;
    if grad_bag.len() != argmax.len() {
        return Err(invalid!("bag gradient has {} values, expected {}", grad_bag.len(), argmax.len()));
    }
    let (n, c) = (grad_bag.dim(0), grad_bag.dim(1));
    let mut g = vec![0.0; n * c * instances];
    for (row, (&gv, &j)) in grad_bag.data().iter().zip(argmax).enumerate() {
        g[row * instances + j] = gv;
    }
    Tensor::new(vec![n, c, instances], g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_and_argmax() {
        let out = aggregate(Tensor::new(vec![1, 1, 3], vec![0.1, 0.7, 0.3]).unwrap()).unwrap();
        assert_eq!(out.bag_scores.data(), &[0.7]);
        assert_eq!(out.argmax, vec![1]);
    }

    #[test]
    fn single_instance_is_identity() {
        let out = aggregate(Tensor::new(vec![1, 2, 1], vec![0.25, 0.5]).unwrap()).unwrap();
        assert_eq!(out.bag_scores.data(), &[0.25, 0.5]);
    }

    #[test]
    fn classify_ties_to_lowest() {
        assert_eq!(classify(&[0.2, 0.9, 0.5]), 1);
        assert_eq!(classify(&[0.5; 10]), 0);
    }

    #[test]
    fn backward_hits_argmax_only() {
        let g = aggregate_backward(&Tensor::new(vec![1, 2], vec![2.0, -1.0]).unwrap(), &[2, 0], 3).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 2.0, -1.0, 0.0, 0.0]);
    }
}
