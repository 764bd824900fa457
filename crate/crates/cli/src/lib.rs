//! IO, file formats, pipeline orchestration, and the command-line surface
//! for the dataset refinement toolkit. Everything deterministic in
//! `dataforge-core` stays deterministic here: identical configs and seeds
//! produce byte-identical output files.

pub mod checkpoint;
pub mod cli;
mod error;
pub mod idx;
pub mod pgm;
pub mod pipeline;
pub mod store;
pub mod svg;

pub use error::{Error, Result};
