use thiserror::Error;

/// Errors raised by the phase-space, sampling and Fock-space engines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("mode index {index} out of range for a {n_modes}-mode state")]
    ModeOutOfRange { index: usize, n_modes: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("covariance violates the uncertainty relation (min eigenvalue of cov + iΩ/4 is {0:e})")]
    Unphysical(f64),

    #[error("matrix is not symplectic (‖SᵀΩS − Ω‖_F = {0:e})")]
    NotSymplectic(f64),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(
        "λ^-n conjugation overflows: λ = {lambda} with up to {max_photons} photons gives growth {growth:e} > 1e12; \
         lower the cutoff or raise λ"
    )]
    ConjugationOverflow {
        lambda: f64,
        max_photons: usize,
        growth: f64,
    },

    #[error(
        "transformed witness is unbounded: λ = {lambda} lies outside the admissible window ({lower:.6}, 1) \
         for energy scale N ≈ {energy_scale:.4}"
    )]
    OutsideDampingWindow {
        lambda: f64,
        lower: f64,
        energy_scale: f64,
    },

    #[error("coherent probe |α| = {amplitude} is inadequately truncated at cutoff {cutoff} (deficit {deficit:e} > 1e-10)")]
    CutoffInadequate {
        amplitude: f64,
        cutoff: usize,
        deficit: f64,
    },

    #[error("underdetermined reconstruction: {rows} probe settings for {unknowns} unknowns")]
    Underdetermined { rows: usize, unknowns: usize },

    #[error("ill-conditioned design matrix (condition number {0:e} > 1e12)")]
    IllConditioned(f64),

    #[error("no finite balancing κ: {0}")]
    NoBalancingKappa(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite, got {value}")))
    }
}
