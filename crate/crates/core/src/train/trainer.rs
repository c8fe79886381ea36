//! Mini-batch training with best-epoch retention.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{evaluate, loss, Adam, AdamConfig, LossKind, PlateauScheduler};
use crate::data::LabeledSet;
use crate::error::{invalid, Error, Result};
use crate::layers::{Mode, Module};
use crate::model::{MilNet, ModelConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub decay: f64,
    pub patience: usize,
    /// `None` selects weighted BCE with `alpha = C - 1`.
    pub loss: Option<LossKind>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { epochs: 50, batch_size: 256, adam: AdamConfig::default(), decay: 0.5, patience: 3, loss: None }
    }
}

impl TrainOptions {
    pub fn loss_for(&self, classes: usize) -> LossKind {
        self.loss.unwrap_or_else(|| LossKind::balanced(classes))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    /// Rate used during this epoch.
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<EpochRecord>,
    /// Weights from the epoch with the highest validation accuracy.
    pub best: MilNet,
    pub best_epoch: usize,
    pub best_accuracy: f64,
    /// The requested batch size exceeded the training set and was reduced.
    pub batch_clamped: bool,
}

/// Splits a shuffled order into batches of `size`. A trailing batch of one
/// clip is folded into the previous batch, since batch statistics need two.
pub fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let size = size.max(1);
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() >= 2 && out.last().map_or(false, |b| b.len() == 1) {
        out.pop();
        let start = order.len() - size - 1;
        *out.last_mut().expect("at least one batch") = &order[start..];
    }
    out
}

pub fn train(config: ModelConfig, train: &LabeledSet, val: &LabeledSet, opts: &TrainOptions) -> Result<TrainOutcome> {
    train_with(config, train, val, opts, |_| {})
}

/// Trains a fresh network; `on_epoch` sees each record as it is produced.
///
/// Weight initialization and the per-epoch shuffles both derive from
/// `config.seed`, so equal inputs give bit-identical logs and weights.
pub fn train_with(
    config: ModelConfig,
    train: &LabeledSet,
    val: &LabeledSet,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    if train.len() < 2 {
        return Err(Error::EmptyDataset(alloc::format!("training needs at least 2 clips, got {}", train.len())));
    }
    if val.is_empty() {
        return Err(Error::EmptyDataset(alloc::string::String::from("validation set is empty")));
    }
    if opts.epochs == 0 {
        return Err(invalid!("epochs must be positive"));
    }
    if train.classes() != config.classes || val.classes() != config.classes {
        return Err(invalid!(
            "model has {} classes, datasets {} / {}",
            config.classes,
            train.classes(),
            val.classes()
        ));
    }
    if train.feature_shape() != (config.bands, config.frames) {
        return Err(invalid!(
            "features are {:?}, model expects ({}, {})",
            train.feature_shape(),
            config.bands,
            config.frames
        ));
    }
    let batch_clamped = opts.batch_size > train.len();
    let batch_size = opts.batch_size.clamp(2, train.len());
    if batch_clamped {
        log::warn!("batch size {} exceeds {} training clips; using {}", opts.batch_size, train.len(), batch_size);
    }

    let kind = opts.loss_for(config.classes);
    let mut shuffler = ChaCha8Rng::seed_from_u64(config.seed);
    shuffler.set_stream(1);
    let mut model = MilNet::new(config)?;
    let mut adam = Adam::new(opts.adam);
    let mut scheduler = PlateauScheduler::new(opts.decay, opts.patience);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(opts.epochs);
    let mut best: Option<(MilNet, usize, f64)> = None;

    for epoch in 1..=opts.epochs {
        order.shuffle(&mut shuffler);
        let lr = adam.lr();
        let mut loss_sum = 0.0;
        for batch in batches(&order, batch_size) {
            let (x, labels) = train.batch(batch)?;
            model.zero_grad();
            let out = model.forward(&x, Mode::Train)?;
            let targets = loss::one_hot(&labels, model.config().classes)?;
            let l = loss::compute(kind, &out.bag_scores, &targets)?;
            if !l.loss.is_finite() {
                return Err(Error::NonFinite(alloc::format!("training loss in epoch {epoch}")));
            }
            model.backward(&l.grad)?;
            adam.step_module(&mut model)?;
            loss_sum += l.loss * batch.len() as f64;
        }
        let accuracy = evaluate(&model, val, batch_size)?.accuracy;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_accuracy: accuracy,
            learning_rate: lr,
        };
        on_epoch(&record);
        log.push(record);
        if best.as_ref().is_none_or(|(_, _, acc)| accuracy > *acc) {
            best = Some((model.clone(), epoch, accuracy));
        }
        let next = scheduler.step(accuracy, lr);
        adam.set_lr(next);
    }

    let (best, best_epoch, best_accuracy) = best.expect("at least one epoch");
    Ok(TrainOutcome { log, best, best_epoch, best_accuracy, batch_clamped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_singleton_is_folded() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.len(), 2);
        assert_eq!(b[0], &[0, 1, 2, 3]);
        assert_eq!(b[1], &[4, 5, 6, 7, 8]);
        let b = batches(&order, 3);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), [3, 3, 3]);
        let b = batches(&order[..7], 3);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), [3, 4]);
    }
}
