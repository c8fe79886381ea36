//! Bag-level losses.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// Scores are clamped to `[SCORE_CLAMP, 1 - SCORE_CLAMP]` before logarithms.
pub const SCORE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// Per-class binary cross entropy with the positive term weighted by `alpha`.
    WeightedBce { alpha: f64 },
    /// `-ln` of the true-class bag score.
    CrossEntropy,
}

impl LossKind {
    /// Weighted BCE with `alpha = C - 1`, balancing one positive class
    /// against `C - 1` negatives.
    pub fn balanced(classes: usize) -> Self {
        LossKind::WeightedBce { alpha: positive_weight(classes) }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::WeightedBce { .. } => f.write_str("wbce"),
            LossKind::CrossEntropy => f.write_str("ce"),
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    /// Parses the kind only; `wbce` gets a placeholder alpha of 1.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "wbce" => Ok(LossKind::WeightedBce { alpha: 1.0 }),
            "ce" => Ok(LossKind::CrossEntropy),
            other => Err(invalid!("unknown loss {:?} (expected wbce or ce)", other)),
        }
    }
}

pub fn positive_weight(classes: usize) -> f64 {
    classes.saturating_sub(1) as f64
}

/// Loss value and its gradient with respect to the bag scores.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad: Tensor,
}

fn clamp(p: f64) -> f64 {
    p.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP)
}

/// Derivative of the clamp: zero where the score was clipped.
fn clamp_passes(p: f64) -> f64 {
    if (SCORE_CLAMP..=1.0 - SCORE_CLAMP).contains(&p) {
        1.0
    } else {
        0.0
    }
}

fn check_labels(scores: &Tensor, labels: &Tensor) -> Result<()> {
    scores.expect_rank(2, "loss scores")?;
    labels.expect_shape(scores.shape())?;
    let c = scores.dim(1);
    for (i, row) in labels.data().chunks_exact(c).enumerate() {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || zeros != c - 1 {
            return Err(invalid!("label row {} is not one-hot: {:?}", i, row));
        }
    }
    Ok(())
}

/// `L_i = -sum_l (alpha Y ln P + (1 - Y) ln(1 - P))`, averaged over the batch.
pub fn weighted_bce(scores: &Tensor, labels: &Tensor, alpha: f64) -> Result<LossOutput> {
    check_labels(scores, labels)?;
    if !(alpha > 0.0) {
        return Err(invalid!("positive weight must be > 0, got {}", alpha));
    }
    let n = scores.dim(0) as f64;
    let mut total = 0.0;
    let grad: Vec<f64> = scores
        .data()
        .iter()
        .zip(labels.data())
        .map(|(&p, &y)| {
            let q = clamp(p);
            if y == 1.0 {
                total -= alpha * math::ln(q);
                -alpha / q * clamp_passes(p) / n
            } else {
                total -= math::ln(1.0 - q);
                1.0 / (1.0 - q) * clamp_passes(p) / n
            }
        })
        .collect();
    Ok(LossOutput { loss: total / n, grad: Tensor::new(scores.shape().to_vec(), grad)? })
}

/// `-ln P[true]`, averaged over the batch.
pub fn cross_entropy(scores: &Tensor, labels: &Tensor) -> Result<LossOutput> {
    check_labels(scores, labels)?;
    let n = scores.dim(0) as f64;
    let mut total = 0.0;
    let grad: Vec<f64> = scores
        .data()
        .iter()
        .zip(labels.data())
        .map(|(&p, &y)| {
            if y == 1.0 {
                let q = clamp(p);
                total -= math::ln(q);
                -1.0 / q * clamp_passes(p) / n
            } else {
                0.0
            }
        })
        .collect();
    Ok(LossOutput { loss: total / n, grad: Tensor::new(scores.shape().to_vec(), grad)? })
}

pub fn compute(kind: LossKind, scores: &Tensor, labels: &Tensor) -> Result<LossOutput> {
    match kind {
        LossKind::WeightedBce { alpha } => weighted_bce(scores, labels, alpha),
        LossKind::CrossEntropy => cross_entropy(scores, labels),
    }
}

/// One-hot `[n, classes]` matrix.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[labels.len().max(1), classes]);
    if labels.is_empty() {
        return Err(invalid!("no labels"));
    }
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(invalid!("label {} out of range for {} classes", l, classes));
        }
        t.set(&[i, l], 1.0);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::gradcheck::grad_check;

    #[test]
    fn alpha_is_c_minus_one() {
        assert_eq!(positive_weight(10), 9.0);
        assert_eq!(LossKind::balanced(10), LossKind::WeightedBce { alpha: 9.0 });
    }

    #[test]
    fn half_scores_hand_value() {
        let scores = Tensor::full(&[1, 10], 0.5);
        let labels = one_hot(&[3], 10).unwrap();
        let out = weighted_bce(&scores, &labels, 9.0).unwrap();
        let expected = 18.0 * core::f64::consts::LN_2;
        assert!((out.loss - expected).abs() < 1e-9);
        assert!((out.loss - 12.4766).abs() < 1e-4);
    }

    #[test]
    fn perfect_prediction_has_near_zero_loss() {
        let labels = one_hot(&[1, 0], 3).unwrap();
        let scores = labels.map(|y| if y == 1.0 { 1.0 } else { 0.0 });
        let out = weighted_bce(&scores, &labels, 2.0).unwrap();
        assert!(out.loss >= 0.0 && out.loss < 1e-10);
    }

    #[test]
    fn non_one_hot_is_rejected() {
        let scores = Tensor::full(&[1, 3], 0.5);
        let labels = Tensor::new(vec![1, 3], vec![1.0, 1.0, 0.0]).unwrap();
        assert!(weighted_bce(&scores, &labels, 2.0).is_err());
        let labels = Tensor::new(vec![1, 3], vec![0.5, 0.5, 0.0]).unwrap();
        assert!(weighted_bce(&scores, &labels, 2.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let scores = Tensor::from_fn(&[3, 4], |i| 0.1 + 0.07 * i as f64);
        let labels = one_hot(&[0, 3, 2], 4).unwrap();
        for kind in [LossKind::WeightedBce { alpha: 3.0 }, LossKind::CrossEntropy] {
            let out = compute(kind, &scores, &labels).unwrap();
            let err = grad_check(|p| Ok(compute(kind, p, &labels)?.loss), &scores, &out.grad, 1e-5).unwrap();
            assert!(err < 1e-6, "{kind}: {err}");
        }
    }
}
