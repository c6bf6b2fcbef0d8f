//! Quantitative microwave imaging of 2D dielectric scenes (TM polarization)
//! with joint estimation of per-transmitter calibration factors.
//!
//! The crate is organised bottom-up:
//!
//! - [`domain`]: imaging grid, sensors, frequencies, contrast maps and scenes.
//! - [`forward`]: Method-of-Moments discretisation of the volume integral
//!   equation, state-equation solver and radiation to receivers.
//! - [`subspace`]: SVD of the receiver operator and the dominant current.
//! - [`calibration`]: conjugate-gradient estimation of the calibration factors.
//! - [`inversion`]: the augmented cost, alternating minimisation driver and
//!   the normalized squared error metric.
//! - [`surrogate`]: a small fully connected network that replaces the exact
//!   forward solve inside the inversion loop.
//! - [`io`]: dataset bundles, Fresnel-style text import, run configuration,
//!   run records and rendering.
//! - [`pipeline`]: the config-driven stages used by the command-line tool.

pub mod calibration;
pub mod domain;
mod error;
pub mod forward;
pub mod inversion;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod rng;
pub mod special;
pub mod subspace;
pub mod surrogate;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Time-harmonic convention used by every field in the crate.
pub const CONVENTION: &str = "exp(+jwt)";
