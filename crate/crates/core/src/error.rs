use thiserror::Error;

use crate::field::EnergyViolation;

/// Errors raised by the estimation and bound computations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("photon budget violated: {}", format_violations(.0))]
    ConstraintViolation(Vec<EnergyViolation>),

    /// The vacuum has no defined phase, so ψ/χ and every photon-number quantity
    /// built from them are undefined.
    #[error("undefined phase: {0}")]
    UndefinedPhase(String),

    #[error("Fock truncation {truncation} leaves Poisson tail mass {tail_mass:.3e} (> {limit:.0e})")]
    TruncationTooSmall {
        truncation: usize,
        tail_mass: f64,
        limit: f64,
    },

    #[error("Fisher information {0} is not positive; no finite bound")]
    NonPositiveFisher(f64),

    #[error("parameter not estimable: {0}")]
    NotEstimable(String),

    #[error("no interior likelihood maximum in [{lo}, {hi}]: maximum at {at} ({side} edge)")]
    NoInteriorMaximum {
        lo: f64,
        hi: f64,
        at: f64,
        side: &'static str,
    },

    #[error("zero parameter derivative: alignment phase ψ is undefined")]
    ZeroDerivative,

    #[error("degenerate denominator in {0}: total destructive interference")]
    DegenerateDenominator(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Well-formed input that nevertheless admits no estimate (vacuum, zero
    /// information, flat likelihood).
    pub fn is_non_estimable(&self) -> bool {
        matches!(
            self,
            Error::UndefinedPhase(_)
                | Error::NonPositiveFisher(_)
                | Error::NotEstimable(_)
                | Error::NoInteriorMaximum { .. }
        )
    }
}

fn format_violations(v: &[EnergyViolation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
