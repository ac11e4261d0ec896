//! Shoebox image-source room simulation with frequency-dependent walls and
//! directional sources and receivers, randomized two-microphone dataset
//! generation, an SRP-PHAT direction-of-arrival baseline and the evaluation
//! statistics used to compare localization runs.

// `!(x > 0.0)` style checks also reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod directivity;
pub mod doa;
pub mod error;
pub mod fft;
pub mod geometry;
pub mod ism;
pub mod materials;
pub mod metrics;
pub mod parallel;
pub mod records;
pub mod resample;
pub mod rng;
pub mod scenario;
pub mod speech;
pub mod wav;

pub use error::{Error, Result};
pub use geometry::{ImageSource, Shoebox, Surface, Vec3};
