//! Asymptotic error bounds: trace estimates, the Satterthwaite degrees of
//! freedom and the one-sided confidence bound on the integrated squared
//! error.

mod chi2;
mod traces;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chi2::chi2_quantile;
pub use traces::{trace_sigma, trace_sigma_sq, trace_sigma_from_moments, trace_sigma_sq_pairwise, traces, TraceEstimates};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferError {
    #[error("trace estimates need at least 2 families, got {0}")]
    TooFewFamilies(usize),
    #[error("{0}")]
    BadArgument(String),
    #[error("all family counts are identical; the covariance estimate is zero")]
    Degenerate,
    #[error("integer overflow in trace accumulation")]
    Overflow,
}

/// Report of the bound `ISE <= U_n / (n m^2)` at confidence `1 - alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiReport {
    pub n: u64,
    pub m: u32,
    pub h: f64,
    pub alpha: f64,
    pub tr_sigma: f64,
    pub tr_sigma_sq: f64,
    /// `(tr Sigma)^2 / tr Sigma^2`.
    pub dof: f64,
    pub u_n: f64,
    /// Upper end of `[0, U_n / (n m^2)]`.
    pub bound: f64,
}

/// `U_n = (tr Sigma^2 / tr Sigma) chi2_alpha((tr Sigma)^2 / tr Sigma^2)` and
/// the interval endpoint `U_n / (n m^2)`.
pub fn upper_confidence_bound(t: &TraceEstimates, h: f64, alpha: f64) -> Result<CiReport, InferError> {
    if !(t.tr_sigma > 0.0 && t.tr_sigma_sq > 0.0) {
        return Err(InferError::Degenerate);
    }
    let dof = t.tr_sigma * t.tr_sigma / t.tr_sigma_sq;
    let scale = t.tr_sigma_sq / t.tr_sigma;
    let u_n = scale * chi2_quantile(dof, alpha)?;
    let m = f64::from(t.m);
    Ok(CiReport {
        n: t.n,
        m: t.m,
        h,
        alpha,
        tr_sigma: t.tr_sigma,
        tr_sigma_sq: t.tr_sigma_sq,
        dof,
        u_n,
        bound: u_n / (t.n as f64 * m * m),
    })
}
