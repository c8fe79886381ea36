//! Accuracy, confusion matrix and per-class recall.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::LabeledSet;
use crate::error::{invalid, Result};
use crate::model::{MilNet, Prediction};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { classes, counts: vec![0; classes * classes] }
    }

    pub fn from_pairs(classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut m = Self::new(classes);
        for (t, p) in pairs {
            m.record(t, p)?;
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.classes || predicted >= self.classes {
            return Err(invalid!("class pair ({}, {}) out of range {}", truth, predicted, self.classes));
        }
        self.counts[truth * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.counts[truth * self.classes..(truth + 1) * self.classes].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|l| self.count(l, l)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    /// `counts[l, l] / row_sum(l)`, or `None` for a class with no clips.
    pub fn recall(&self, class: usize) -> Option<f64> {
        match self.row_sum(class) {
            0 => None,
            n => Some(self.count(class, class) as f64 / n as f64),
        }
    }

    pub fn recalls(&self) -> Vec<Option<f64>> {
        (0..self.classes).map(|l| self.recall(l)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub predictions: Vec<Prediction>,
}

/// Eval-mode predictions over `set`, `batch` clips at a time.
pub fn evaluate(model: &MilNet, set: &LabeledSet, batch: usize) -> Result<Evaluation> {
    if set.classes() != model.config().classes {
        return Err(invalid!("dataset has {} classes, model {}", set.classes(), model.config().classes));
    }
    let indices: Vec<usize> = (0..set.len()).collect();
    let mut confusion = ConfusionMatrix::new(set.classes());
    let mut predictions = Vec::with_capacity(set.len());
    for chunk in indices.chunks(batch.max(1)) {
        let (x, labels) = set.batch(chunk)?;
        let out = model.infer(&x)?;
        for (i, &l) in labels.iter().enumerate() {
            let p = out.prediction(i);
            confusion.record(l, p.class())?;
            predictions.push(p);
        }
    }
    Ok(Evaluation { accuracy: confusion.accuracy(), confusion, predictions })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_classifier() {
        let pairs = (0..100).map(|i| (i % 10, 0));
        let m = ConfusionMatrix::from_pairs(10, pairs).unwrap();
        assert!((m.accuracy() - 0.1).abs() < 1e-15);
        for l in 0..10 {
            assert_eq!(m.count(l, 0), 10);
            assert_eq!(m.row_sum(l), 10);
        }
        assert_eq!(m.recall(0), Some(1.0));
        assert_eq!(m.recall(3), Some(0.0));
    }

    #[test]
    fn trace_over_total_is_accuracy() {
        let pairs = [(0, 0), (0, 1), (1, 1), (2, 1), (2, 2)];
        let m = ConfusionMatrix::from_pairs(3, pairs).unwrap();
        assert_eq!(m.accuracy(), m.trace() as f64 / m.total() as f64);
        assert_eq!(m.accuracy(), 0.6);
    }

    #[test]
    fn perfect_recall() {
        let m = ConfusionMatrix::from_pairs(4, (0..12).map(|i| (i % 4, i % 4))).unwrap();
        assert!(m.recalls().iter().all(|r| *r == Some(1.0)));
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(ConfusionMatrix::new(2).record(2, 0).is_err());
    }
}
