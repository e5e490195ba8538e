//! Classical and conditional Monte Carlo pmf estimates, family counts and
//! integrated squared error.

mod experiment;
mod pmf;
mod run;

use thiserror::Error;

use crate::simulate::SimulationError;

pub use experiment::{
    mise_at, mise_ratio_experiment, replicate_seed, ExperimentConfig, MiseSummary, RatioCell, RatioTable,
};
pub use pmf::{
    ise, marginalize, IseTarget, project, read_counts_csv, union_support, write_counts_csv, EmpiricalPmf, MassFunction, Pmf,
    PmfMeta, SparseCounts, Support,
};
pub use run::{classical_mc, conditional_mc, conditional_mc_budget, McRun, RunOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error("{0}")]
    InvalidParameter(String),
    #[error("budget not reached after {families} families ({events} events)")]
    BudgetUnreachable { families: u64, events: u64 },
}
