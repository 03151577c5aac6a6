use thiserror::Error;

/// Errors produced by the shaping toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("degenerate constellation: {0}")]
    DegenerateConstellation(String),

    #[error("unsupported QAM order {0}: expected a perfect-square power of 4 (4, 16, 64, 256, ...)")]
    UnsupportedQamOrder(usize),

    #[error("Maxwell-Boltzmann lambda must be nonnegative, got {0}")]
    NegativeLambda(f64),

    #[error("noise variance must be nonnegative, got {0}")]
    NegativeVariance(f64),

    #[error("unphysical NLIN variance {variance} at power {power_w} W")]
    UnphysicalVariance { variance: f64, power_w: f64 },

    #[error("chi fit underdetermined: {0}")]
    Underdetermined(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("aliasing: {0}")]
    Aliasing(String),

    #[error(
        "peak nonlinear phase {phase:.3e} rad per step exceeds cap {cap:.3e} rad; \
         reduce step_km or enable adaptive stepping"
    )]
    NonlinearPhaseCap { phase: f64, cap: f64 },

    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
