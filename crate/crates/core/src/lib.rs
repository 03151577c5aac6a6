//! Joint geometric and probabilistic constellation shaping for a
//! single-span coherent fiber link.
//!
//! The crate trains a jointly shaped constellation by gradient descent
//! through a closed-form NLIN surrogate channel, builds Maxwell-Boltzmann
//! and uniform QAM baselines, and validates everything against a
//! dual-polarization Manakov split-step simulator with kernel-density
//! mutual-information estimation.

pub mod constellation;
pub mod error;
pub mod metrics;
pub mod nlin;
pub mod pipeline;
pub mod quadrature;
pub mod rxdsp;
pub mod ssfm;
pub mod trainer;

pub use constellation::{
    entropy_bits, make_qam, maxwell_boltzmann, mb_lambda_for_entropy, normalize_power,
    optimize_mb_lambda, qam_grid, Constellation,
};
pub use error::{Error, Result};
pub use nlin::{
    ase_variance, channel_apply, fit_chi, nlin_variance, normalized_noise_variance, posterior,
    CalibrationFile, ChiFit, ChiProbe, LinkParams, NlinCoeffs,
};
pub use ssfm::{FieldGrid, SsfmConfig};
pub use trainer::{TrainConfig, TrainState};
