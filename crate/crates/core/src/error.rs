use crate::linalg::LinalgError;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{what} = {value} lies outside [{lo}, {hi}]")]
    Domain { what: &'static str, value: f64, lo: f64, hi: f64 },

    #[error("realization violates beta* - beta = i(T2 - T1) D^-1 (T2 - T1)*: residual {residual:.3e} exceeds {tol:.3e}")]
    IdentityViolated { residual: f64, tol: f64 },

    #[error("operator is not invertible on [0, {length}] (U22(a) reciprocal condition {rcond:.3e})")]
    Singular { length: f64, rcond: f64 },

    #[error("lambda = {lambda} is a pole (eigenvalue of beta)")]
    Pole { lambda: Complex64 },

    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_range(what: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
    // A few ulps of slack so grid endpoints computed in floating point are accepted.
    let slack = 8.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(1.0);
    if value.is_finite() && value >= lo - slack && value <= hi + slack {
        Ok(())
    } else {
        Err(Error::Domain { what, value, lo, hi })
    }
}
