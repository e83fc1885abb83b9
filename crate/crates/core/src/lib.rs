//! Simulation and analysis toolkit for audio-band balanced homodyne detection.
//!
//! The crate models a two-port homodyne detector down to its noise floor:
//! the linearized photocurrent response of both diodes ([`fields`]), the
//! stationary and transient noise sources that corrupt low-frequency
//! measurements ([`noise`], [`electronics`], [`pointing`], [`scatter`]),
//! the squeezed-vacuum source driving the signal port ([`squeezing`]), and
//! the spectrum-analyzer methodology used to measure it all ([`spectral`]).
//! [`scenario`] and [`engine`] tie the pieces together behind a config file
//! and two execution paths: a fast analytic noise budget and a time-domain
//! Monte-Carlo run.

pub mod consts;
pub mod electronics;
pub mod engine;
pub mod error;
pub mod fields;
pub mod noise;
pub mod pointing;
pub mod scatter;
pub mod scenario;
pub mod spectral;
pub mod squeezing;

pub use error::{Error, Result};
