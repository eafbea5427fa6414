use thiserror::Error;

/// Errors raised by model construction, measure setup, and estimation.
#[derive(Debug, Error)]
pub enum GrfError {
    /// The field model is structurally invalid (bad domain, non-positive
    /// noise scale, mean peak outside the domain, ...).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A covariance matrix could not be factorized even after the jitter
    /// escalation policy was exhausted.
    #[error("ill-conditioned covariance: factorization failed at jitter {jitter:.3e}")]
    IllConditioned { jitter: f64 },

    /// The threshold is too small for the tail regime: the defining equation
    /// for `u` has no root on the search bracket.
    #[error("threshold b = {b} too small: no admissible root for u (bracket [{lo}, {hi}])")]
    ThresholdTooSmall { b: f64, lo: f64, hi: f64 },

    /// Importance-sampling tuning parameters outside their admissible ranges.
    #[error("invalid tuning: {0}")]
    InvalidTuning(String),

    /// An argument outside its documented range (replicate counts, lattice
    /// resolution, accuracy targets, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A ratio estimator received no replicates in the conditioning event.
    #[error("insufficient hits: {hits} of {n} replicates landed in the event")]
    InsufficientHits { hits: usize, n: usize },

    /// An internal identity that should hold by construction failed at
    /// runtime; indicates a bug rather than a user error.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, GrfError>;
