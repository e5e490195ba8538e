//! Choice of the branch count `m` and window `h` by minimizing the
//! approximate cost-variance product `f_hat` built from a pilot ensemble.

mod nelder_mead;
mod objective;
mod skellam;
mod tune;

use thiserror::Error;

use crate::model::LatticeError;
use crate::simulate::SimulationError;

pub use nelder_mead::{nelder_mead, NelderMeadResult};
pub use objective::{budget_to_n, joint_prob_estimate, objective_fhat, Objective, PilotEnsemble, DEFAULT_PILOT_SIZE};
pub(crate) use objective::kahan_sum;
pub use skellam::{skellam_pmf, skellam_table};
pub use tune::{build_lattice, tune, PilotSummary, StartResult, TuneConfig, TuneResult};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("pilot of {0} path(s): ñ ≥ 2 required")]
    PilotTooSmall(usize),
    #[error("pilot paths must span [0, {0}]")]
    PilotWindow(f64),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("budget {budget} is below the expected cost of one family ({cost})")]
    BudgetTooSmall { budget: f64, cost: f64 },
}
