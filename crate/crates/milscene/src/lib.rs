//! Audio front end, file formats and command implementations for
//! `milscene-core`.
//!
//! The `milscene` binary is a thin clap wrapper around [`commands`]; each
//! command is also callable from Rust.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod container;
pub mod error;
pub mod features;
pub mod frontend;
pub mod meta;
pub mod plot;
pub mod report;
pub mod wav;

pub use error::{Error, Result};
