use alloc::vec;
use alloc::vec::Vec;

use super::InstanceTruth;
use crate::error::{invalid, shape_err, Result};
use crate::model::Prediction;

/// How often the winning instance of the true class lands on a planted event.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationReport {
    /// Correctly classified clips per class (the denominators).
    pub counted: Vec<usize>,
    pub hits: Vec<usize>,
}

impl LocalizationReport {
    pub fn per_class(&self) -> Vec<Option<f64>> {
        self.hits
            .iter()
            .zip(&self.counted)
            .map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64))
            .collect()
    }

    pub fn pooled(&self) -> Option<f64> {
        let n: usize = self.counted.iter().sum();
        (n > 0).then(|| self.hits.iter().sum::<usize>() as f64 / n as f64)
    }
}

/// Localization precision over correctly classified clips. Misclassified
/// clips are left out of every denominator.
pub fn localization_score(
    predictions: &[Prediction],
    labels: &[usize],
    truth: &[InstanceTruth],
) -> Result<LocalizationReport> {
    if predictions.len() != labels.len() || predictions.len() != truth.len() {
        return Err(invalid!(
            "{} predictions, {} labels and {} truth matrices",
            predictions.len(),
            labels.len(),
            truth.len()
        ));
    }
    let classes = truth.first().map_or(0, |t| t.classes());
    let mut report = LocalizationReport { counted: vec![0; classes], hits: vec![0; classes] };
    for ((p, &label), t) in predictions.iter().zip(labels).zip(truth) {
        let m = p.instance_scores.dim(1);
        if m != t.instances() || p.bag_scores.len() != t.classes() {
            return Err(shape_err!(
                "prediction covers {}x{} but truth is {}x{}",
                p.bag_scores.len(),
                m,
                t.classes(),
                t.instances()
            ));
        }
        if p.class() != label {
            continue;
        }
        report.counted[label] += 1;
        if t.is_positive(label, p.argmax[label]) {
            report.hits[label] += 1;
        }
    }
    Ok(report)
}
