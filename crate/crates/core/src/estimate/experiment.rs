use serde::Serialize;

use super::pmf::IseTarget;
use super::run::{conditional_mc_budget, RunOptions};
use super::EstimateError;
use crate::model::ReactionNetwork;
use crate::simulate::SeedSpec;

/// Setup of a MISE-ratio experiment: classical MC against conditional MC at
/// each grid point, all runs stopping at the same simulated-event budget.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Events each run may consume before it stops.
    pub budget: f64,
    pub grid: Vec<(u32, f64)>,
    pub replicates: u32,
    pub opts: RunOptions,
}

/// Mean and standard error of the ISE over replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MiseSummary {
    pub mise: f64,
    pub se: f64,
    pub mean_families: f64,
    pub mean_events: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioCell {
    pub m: u32,
    pub h: f64,
    pub cmc: MiseSummary,
    /// MISE_MC / MISE_CMC(m, h).
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioTable {
    pub classical: MiseSummary,
    pub cells: Vec<RatioCell>,
}

impl RatioTable {
    /// The cell with the largest ratio.
    pub fn best(&self) -> Option<&RatioCell> {
        self.cells.iter().max_by(|a, b| a.ratio.total_cmp(&b.ratio))
    }
}

/// Replicate `r` of a setting indexed by `cell` (0 is classical).
pub fn replicate_seed(seed: SeedSpec, cell: u64, r: u64) -> SeedSpec {
    seed.child(cell).child(r)
}

/// Mean ISE of `replicates` budget-matched runs at `(m, h)`.
#[allow(clippy::too_many_arguments)]
pub fn mise_at(
    network: &ReactionNetwork,
    budget: f64,
    m: u32,
    h: f64,
    replicates: u32,
    target: &IseTarget,
    seed: SeedSpec,
    cell: u64,
    opts: &RunOptions,
) -> Result<MiseSummary, EstimateError> {
    if replicates == 0 {
        return Err(EstimateError::InvalidParameter("at least one replicate is required".into()));
    }
    let mut ises = Vec::with_capacity(replicates as usize);
    let (mut fams, mut events) = (0.0, 0.0);
    for r in 0..u64::from(replicates) {
        let run = conditional_mc_budget(network, budget, m, h, replicate_seed(seed, cell, r), opts)?;
        ises.push(target.ise(&run.pmf));
        fams += run.counts.len() as f64;
        events += run.events as f64;
    }
    let k = f64::from(replicates);
    let mise = ises.iter().sum::<f64>() / k;
    let se = if replicates > 1 {
        (ises.iter().map(|v| (v - mise).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
    } else {
        f64::NAN
    };
    Ok(MiseSummary {
        mise,
        se,
        mean_families: fams / k,
        mean_events: events / k,
    })
}

/// Empirical MISE_MC / MISE_CMC(m, h) over a grid of `(m, h)`.
pub fn mise_ratio_experiment(
    network: &ReactionNetwork,
    cfg: &ExperimentConfig,
    target: &IseTarget,
    seed: SeedSpec,
) -> Result<RatioTable, EstimateError> {
    if cfg.grid.is_empty() {
        return Err(EstimateError::InvalidParameter("empty (m, h) grid".into()));
    }
    let classical = mise_at(network, cfg.budget, 1, 0.0, cfg.replicates, target, seed, 0, &cfg.opts)?;
    let mut cells = Vec::with_capacity(cfg.grid.len());
    for (c, &(m, h)) in cfg.grid.iter().enumerate() {
        let cmc = mise_at(network, cfg.budget, m, h, cfg.replicates, target, seed, c as u64 + 1, &cfg.opts)?;
        cells.push(RatioCell {
            m,
            h,
            cmc,
            ratio: classical.mise / cmc.mise,
        });
    }
    Ok(RatioTable { classical, cells })
}
