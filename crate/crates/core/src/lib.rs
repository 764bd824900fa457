//! Core algorithms for refining noisy, imbalanced grayscale classification
//! datasets: influence-based valuation over an SGD trajectory, contrastive
//! Siamese embeddings, neighborhood cleansing rules, and augmentation policy
//! search. Everything in this crate is pure, seeded, and deterministic; file
//! formats and orchestration live in the companion `dataforge-cli` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod augment;
pub mod cleanse;
pub mod contrastive;
pub mod dataset;
mod error;
mod math;
mod mlp;
pub mod nnet;
pub mod projection;
pub mod rng;
pub mod valuation;

pub use error::Error;

pub type Result<T> = core::result::Result<T, Error>;

/// The single intensity convention used at module boundaries into the
/// models: black (0) maps to 0.0, white (255) maps to 1.0.
#[inline]
pub fn pixel_to_real(v: u8) -> f64 {
    f64::from(v) / 255.0
}
