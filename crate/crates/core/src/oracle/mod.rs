//! Exact and brute-force references: closed-form pmfs of the linear
//! examples and dense truncated-generator computations.

mod closed_form;
mod cme;
mod dense;

use thiserror::Error;

use crate::model::State;

pub use closed_form::{immigration_death_pmf, yule_pmf};
pub use cme::{cme_solve, joint_prob_bruteforce, CmeOptions, CmeSolution, JointProb, StateBox, TruncatedGenerator};
pub use dense::{dense_sample_covariance, mixture_quantile, DenseSigma};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("invalid state box: {0}")]
    BadBox(String),
    #[error("reaction {reaction} has an invalid intensity at {state:?}")]
    InvalidIntensity { reaction: usize, state: State },
    #[error("probability defect {defect:e} exceeds bound {bound:e}; enlarge the box")]
    DefectExceeded { defect: f64, bound: f64 },
    #[error("branch window h = {h} outside [0, {t}]")]
    BadWindow { h: f64, t: f64 },
}
