//! Plateau learning-rate decay.

/// Multiplies the learning rate by `factor` once validation accuracy has
/// failed to strictly improve for `patience` consecutive epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    best: Option<f64>,
    since_improvement: usize,
}

impl Default for PlateauScheduler {
    fn default() -> Self {
        Self::new(0.5, 3)
    }
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize) -> Self {
        Self { factor, patience: patience.max(1), best: None, since_improvement: 0 }
    }

    /// Starts from an already recorded best accuracy.
    pub fn with_best(mut self, best: f64) -> Self {
        self.best = Some(best);
        self
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn epochs_since_improvement(&self) -> usize {
        self.since_improvement
    }

    /// Records one epoch and returns the learning rate for the next.
    pub fn step(&mut self, accuracy: f64, lr: f64) -> f64 {
        if self.best.is_none_or(|b| accuracy > b) {
            self.best = Some(accuracy);
            self.since_improvement = 0;
            return lr;
        }
        self.since_improvement += 1;
        if self.since_improvement >= self.patience {
            self.since_improvement = 0;
            lr * self.factor
        } else {
            lr
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn trace(s: &mut PlateauScheduler, accs: &[f64]) -> Vec<f64> {
        let mut lr = 1.0;
        accs.iter()
            .map(|&a| {
                lr = s.step(a, lr);
                lr
            })
            .collect()
    }

    #[test]
    fn halves_after_three_flat_epochs() {
        let mut s = PlateauScheduler::default().with_best(0.5);
        assert_eq!(trace(&mut s, &[0.5, 0.5, 0.5, 0.5]), [1.0, 1.0, 0.5, 0.5]);
    }

    #[test]
    fn improving_sequence_keeps_rate() {
        let mut s = PlateauScheduler::default();
        assert!(trace(&mut s, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).iter().all(|&lr| lr == 1.0));
    }

    #[test]
    fn counter_trace() {
        let mut s = PlateauScheduler::default();
        assert_eq!(trace(&mut s, &[0.5, 0.6, 0.5, 0.5, 0.5]), [1.0, 1.0, 1.0, 1.0, 0.5]);
        assert_eq!(s.epochs_since_improvement(), 0);
    }
}
