use thiserror::Error;

/// Errors raised by the simulation and verification routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SipError {
    #[error("empty sample")]
    EmptySample,

    #[error("non-finite value")]
    NonFinite,

    #[error("nonpositive value in rate fit")]
    NonPositiveInRateFit,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("Q not integrable: {0}")]
    NotIntegrable(String),

    #[error("state at atom zero")]
    StateAtAtom,

    #[error("no kernel oracle for {0}")]
    NoKernelOracle(String),

    #[error("truncation insufficient: tail bound {bound:.3e} exceeds tolerance {tol:.3e}")]
    TruncationInsufficient { bound: f64, tol: f64 },

    #[error("resonant frequency at k = {k}")]
    ResonantFrequency { k: i64 },

    #[error("precision exhausted: continued fraction is only reliable up to depth {safe_depth}")]
    PrecisionExhausted { safe_depth: usize },

    #[error("precision loss: |k| = {k} is beyond the safe range {safe}")]
    PrecisionLoss { k: u128, safe: u128 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("non-continuous conditional law (atom of mass {mass:.3e} at {at})")]
    NonContinuousLaw { at: f64, mass: f64 },

    #[error("rejection sampler efficiency {efficiency:.3e} below floor {floor:.3e}; tabulate the law instead")]
    RejectionEfficiency { efficiency: f64, floor: f64 },

    #[error("missing ingredient curves: {}", .0.join(", "))]
    MissingIngredient(Vec<String>),

    #[error("Newton iteration did not converge in cell {cell}")]
    NewtonFailure { cell: usize },

    #[error("quadrature did not reach tolerance (estimate {estimate:.3e}, error {error:.3e})")]
    Quadrature { estimate: f64, error: f64 },
}

pub type Result<T> = std::result::Result<T, SipError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> SipError {
    SipError::InvalidParameter { name, reason: reason.into() }
}
