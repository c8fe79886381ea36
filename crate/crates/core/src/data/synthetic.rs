//! Synthetic scenes in log-mel feature space with exact instance labels.
//!
//! Every class owns one or more event templates that occupy their own
//! frequency slot, and a pool of common templates is shared by all classes.
//! A clip of class `l` is Gaussian background noise plus at least one
//! distinct event of class `l` plus common events. Distinct events of other
//! classes never appear, so every clip is positive for its own class through
//! at least one instance and negative for every other class.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LabeledSet;
use crate::error::{invalid, Result};
use crate::math;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    /// Distinct templates per class.
    pub events_per_class: usize,
    /// Templates in the shared pool.
    pub common_templates: usize,
    pub bands: usize,
    pub frames: usize,
    /// Pooling stages of the target network; instance `j` covers frames
    /// `[s * j, s * (j + 1))` with `s = 2^pool_stages`.
    pub pool_stages: usize,
    /// Inclusive range of distinct events per clip.
    pub distinct_per_clip: (usize, usize),
    /// Inclusive range of common events per clip.
    pub common_per_clip: (usize, usize),
    /// Inclusive range of event durations in frames.
    pub event_frames: (usize, usize),
    pub noise: f64,
    pub amplitude: f64,
    pub overlap: bool,
    pub train_clips: usize,
    pub val_clips: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 4,
            events_per_class: 1,
            common_templates: 2,
            bands: 40,
            frames: 100,
            pool_stages: 3,
            distinct_per_clip: (1, 1),
            common_per_clip: (1, 2),
            event_frames: (12, 24),
            noise: 0.5,
            amplitude: 3.0,
            overlap: true,
            train_clips: 240,
            val_clips: 120,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn instance_stride(&self) -> usize {
        1 << self.pool_stages
    }

    pub fn instances(&self) -> usize {
        self.frames >> self.pool_stages
    }

    fn template_count(&self) -> usize {
        self.classes * self.events_per_class + self.common_templates
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(invalid!("classification needs at least 2 classes, got {}", self.classes));
        }
        if self.events_per_class == 0 {
            return Err(invalid!("each class needs at least one distinct event template"));
        }
        let (dmin, dmax) = self.distinct_per_clip;
        if dmin == 0 {
            return Err(invalid!("every clip must contain at least one distinct event of its class"));
        }
        if dmin > dmax || self.common_per_clip.0 > self.common_per_clip.1 {
            return Err(invalid!("event count ranges must satisfy min <= max"));
        }
        if self.common_per_clip.1 > 0 && self.common_templates == 0 {
            return Err(invalid!("common events requested but the common pool is empty"));
        }
        let (emin, emax) = self.event_frames;
        if emin == 0 || emin > emax {
            return Err(invalid!("event duration range {:?} is invalid", self.event_frames));
        }
        if self.instances() == 0 {
            return Err(invalid!("{} frames leave no instances after {} pooling stages", self.frames, self.pool_stages));
        }
        let span = self.instances() * self.instance_stride();
        if emax > span {
            return Err(invalid!("events of {} frames do not fit in the {} frames covered by instances", emax, span));
        }
        if self.bands / self.template_count() == 0 {
            return Err(invalid!("{} bands cannot hold {} disjoint templates", self.bands, self.template_count()));
        }
        if !(self.noise >= 0.0) || !(self.amplitude > 0.0) {
            return Err(invalid!("noise must be >= 0 and amplitude > 0"));
        }
        if !self.overlap {
            let events = dmax + self.common_per_clip.1;
            if events * emax > span {
                return Err(invalid!("{} non-overlapping events of up to {} frames cannot fit", events, emax));
            }
        }
        Ok(())
    }
}

/// Which instances of a clip overlap a planted distinct event, per class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceTruth {
    classes: usize,
    instances: usize,
    positive: Vec<bool>,
}

impl InstanceTruth {
    pub fn new(classes: usize, instances: usize) -> Self {
        Self { classes, instances, positive: vec![false; classes * instances] }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn instances(&self) -> usize {
        self.instances
    }

    pub fn is_positive(&self, class: usize, instance: usize) -> bool {
        self.positive[class * self.instances + instance]
    }

    pub fn set_positive(&mut self, class: usize, instance: usize) {
        self.positive[class * self.instances + instance] = true;
    }

    pub fn positives(&self, class: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.instances).filter(move |&j| self.is_positive(class, j))
    }

    pub fn count(&self, class: usize) -> usize {
        self.positives(class).count()
    }

    /// Classes with at least one positive instance.
    pub fn active_classes(&self) -> Vec<usize> {
        (0..self.classes).filter(|&l| self.count(l) > 0).collect()
    }

    /// Marks the instances of `class` whose window an event on frames
    /// `[start, start + duration)` covers entirely, or overlaps by at least
    /// half of the event duration.
    pub fn mark_event(&mut self, class: usize, start: usize, duration: usize, stride: usize) {
        let end = start + duration;
        for j in 0..self.instances {
            let (lo, hi) = (j * stride, (j + 1) * stride);
            let overlap = end.min(hi).saturating_sub(start.max(lo));
            if overlap == stride || 2 * overlap >= duration {
                self.set_positive(class, j);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    fn stream(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub data: LabeledSet,
    pub truth: Vec<InstanceTruth>,
}

/// Frequency slot and per-band gains of one template.
#[derive(Debug, Clone)]
struct Template {
    first_band: usize,
    gains: Vec<f64>,
}

fn templates(spec: &SyntheticSpec) -> Vec<Template> {
    let count = spec.template_count();
    let width = spec.bands / count;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(u64::MAX);
    let mut slots: Vec<usize> = (0..count).collect();
    slots.shuffle(&mut rng);
    slots
        .into_iter()
        .map(|slot| Template {
            first_band: slot * width,
            gains: (0..width).map(|_| spec.amplitude * rng.random_range(0.6..1.0)).collect(),
        })
        .collect()
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller; 1 - u keeps the log argument in (0, 1]
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    math::sqrt(-2.0 * math::ln(1.0 - u)) * math::cos(core::f64::consts::TAU * v)
}

fn clip_rng(spec: &SyntheticSpec, split: Split, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream((split.stream() << 32) | index as u64);
    rng
}

/// Label of clip `index`; cycling through classes keeps splits balanced.
pub fn clip_label(spec: &SyntheticSpec, index: usize) -> usize {
    index % spec.classes
}

fn place<R: Rng + ?Sized>(
    rng: &mut R,
    taken: &mut Vec<(usize, usize)>,
    duration: usize,
    span: usize,
    overlap: bool,
) -> Result<usize> {
    for _ in 0..1000 {
        let start = rng.random_range(0..=span - duration);
        let end = start + duration;
        if overlap || taken.iter().all(|&(s, e)| end <= s || start >= e) {
            taken.push((start, end));
            return Ok(start);
        }
    }
    Err(invalid!("could not place a {}-frame event without overlap", duration))
}

/// Generates clip `index` of a split: features `[bands, frames]`, label, truth.
pub fn generate_clip(spec: &SyntheticSpec, split: Split, index: usize) -> Result<(Tensor, usize, InstanceTruth)> {
    spec.validate()?;
    let pool = templates(spec);
    clip_with(spec, &pool, split, index)
}

fn clip_with(
    spec: &SyntheticSpec,
    pool: &[Template],
    split: Split,
    index: usize,
) -> Result<(Tensor, usize, InstanceTruth)> {
    let mut rng = clip_rng(spec, split, index);
    let label = clip_label(spec, index);
    let (bands, frames) = (spec.bands, spec.frames);
    let stride = spec.instance_stride();
    let span = spec.instances() * stride;
    let mut x = Tensor::from_fn(&[bands, frames], |_| spec.noise * gaussian(&mut rng));
    let mut truth = InstanceTruth::new(spec.classes, spec.instances());
    let mut taken = Vec::new();

    let paint = |x: &mut Tensor, t: &Template, start: usize, duration: usize| {
        for (k, &g) in t.gains.iter().enumerate() {
            let row = (t.first_band + k) * frames;
            for v in &mut x.data_mut()[row + start..row + start + duration] {
                *v += g;
            }
        }
    };

    let distinct = rng.random_range(spec.distinct_per_clip.0..=spec.distinct_per_clip.1);
    for _ in 0..distinct {
        let which = rng.random_range(0..spec.events_per_class);
        let duration = rng.random_range(spec.event_frames.0..=spec.event_frames.1);
        let start = place(&mut rng, &mut taken, duration, span, spec.overlap)?;
        paint(&mut x, &pool[label * spec.events_per_class + which], start, duration);
        truth.mark_event(label, start, duration, stride);
    }
    let common = rng.random_range(spec.common_per_clip.0..=spec.common_per_clip.1);
    let offset = spec.classes * spec.events_per_class;
    for _ in 0..common {
        let which = rng.random_range(0..spec.common_templates);
        let duration = rng.random_range(spec.event_frames.0..=spec.event_frames.1);
        let start = place(&mut rng, &mut taken, duration, frames, spec.overlap)?;
        paint(&mut x, &pool[offset + which], start, duration);
    }
    Ok((x, label, truth))
}

pub fn class_names(classes: usize) -> Vec<String> {
    (0..classes).map(|l| format!("class{l}")).collect()
}

/// Generates one split of `spec`.
pub fn generate_split(spec: &SyntheticSpec, split: Split) -> Result<SyntheticSet> {
    spec.validate()?;
    let pool = templates(spec);
    let n = match split {
        Split::Train => spec.train_clips,
        Split::Val => spec.val_clips,
    };
    let mut ids = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for i in 0..n {
        let (x, l, t) = clip_with(spec, &pool, split, i)?;
        ids.push(format!("{}-{:05}", split.name(), i));
        features.push(x);
        labels.push(l);
        truth.push(t);
    }
    Ok(SyntheticSet { data: LabeledSet::new(ids, features, labels, class_names(spec.classes))?, truth })
}

/// Train and validation splits; the two splits draw from disjoint streams.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(SyntheticSet, SyntheticSet)> {
    Ok((generate_split(spec, Split::Train)?, generate_split(spec, Split::Val)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_distinct_events_rejected() {
        let spec = SyntheticSpec { distinct_per_clip: (0, 1), ..SyntheticSpec::default() };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn single_class_rejected() {
        assert!(SyntheticSpec { classes: 1, ..SyntheticSpec::default() }.validate().is_err());
    }

    #[test]
    fn event_longer_than_clip_rejected() {
        let spec = SyntheticSpec { event_frames: (12, 97), ..SyntheticSpec::default() };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn mark_event_rules() {
        let mut t = InstanceTruth::new(1, 12);
        // [2, 14): 6 frames in window 0 and 6 in window 1, half of 12 each
        t.mark_event(0, 2, 12, 8);
        assert_eq!(t.positives(0).collect::<Vec<_>>(), [0, 1]);
        let mut t = InstanceTruth::new(1, 12);
        // [1, 16): window 1 is covered, window 0 holds 7 < 7.5
        t.mark_event(0, 1, 15, 8);
        assert_eq!(t.positives(0).collect::<Vec<_>>(), [1]);
        let mut t = InstanceTruth::new(1, 12);
        t.mark_event(0, 4, 30, 8);
        assert_eq!(t.positives(0).collect::<Vec<_>>(), [1, 2, 3]);
    }

    #[test]
    fn same_seed_and_index_is_identical() {
        let spec = SyntheticSpec::default();
        let a = generate_clip(&spec, Split::Train, 7).unwrap();
        let b = generate_clip(&spec, Split::Train, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_clip(&spec, Split::Val, 7).unwrap();
        assert_ne!(a.0, c.0);
    }
}
