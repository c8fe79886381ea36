//! Labeled feature sets, the synthetic scene generator and the instance
//! localization score.

mod dataset;
mod localization;
mod synthetic;

pub use dataset::LabeledSet;
pub use localization::{localization_score, LocalizationReport};
pub use synthetic::{class_names, clip_label, generate_clip, generate_split, generate_synthetic, InstanceTruth, Split, SyntheticSet, SyntheticSpec};
