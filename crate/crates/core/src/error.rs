use thiserror::Error;

/// Errors raised across the analytic and simulation engines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "UE-count truncation point exceeds the cap of {cap} (epsilon = {epsilon}); \
         use the upper-bound method for this sparse regime"
    )]
    KmaxExceedsCap { cap: usize, epsilon: f64 },

    #[error("quadrature did not converge: best estimate {value:e} with error {error:e}")]
    Quadrature { value: f64, error: f64 },

    #[error(
        "alternating binomial sum is numerically unstable at r = {r_km} km \
         (largest term {max_term:e})"
    )]
    Instability { r_km: f64, max_term: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
