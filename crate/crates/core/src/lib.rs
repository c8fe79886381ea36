//! Multi-instance learning networks for acoustic scene classification.
//!
//! A log-mel spectrogram is mapped by a convolutional instance generator to a
//! bag of instance vectors, each instance is scored by per-class detectors, and
//! the bag score for a class is the maximum over its instance scores. The
//! instance that attains the maximum localizes the event that triggered the
//! decision.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, audio input and
//! the command line live in the `milscene` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod math;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use layers::{Mode, Param};
pub use model::{Head, MilNet, ModelConfig, NetOutput, Prediction};
pub use tensor::Tensor;
