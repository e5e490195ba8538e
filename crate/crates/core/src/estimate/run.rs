use std::collections::BTreeMap;

use rayon::prelude::*;

use super::pmf::{project, EmpiricalPmf, SparseCounts};
use super::EstimateError;
use crate::model::{ReactionNetwork, State};
use crate::simulate::{Domain, FamilyStream, SeedSpec, SimulationError, Simulator, DEFAULT_MAX_JUMPS};

/// Families simulated per parallel batch in budget-driven runs. Only affects
/// wasted work past the stopping point, never the result.
const BUDGET_BATCH: u64 = 512;

/// Families per parallel chunk in fixed-size runs, bounding the memory held
/// before pooling.
const CHUNK: u64 = 1 << 16;

/// Knobs shared by every Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Stream domain; classical path i and conditional family i share a
    /// trunk stream within one domain.
    pub domain: Domain,
    /// Estimate the marginal over these coordinates only.
    pub marginal_dims: Option<Vec<usize>>,
    pub max_jumps: u64,
    /// Hard cap on families in budget-driven runs.
    pub max_families: u64,
    /// Keep the per-family counts in the output; large reference runs
    /// turn this off and keep only the pooled pmf and moments.
    pub keep_counts: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            domain: Domain::Estimate,
            marginal_dims: None,
            max_jumps: DEFAULT_MAX_JUMPS,
            max_families: 100_000_000,
            keep_counts: true,
        }
    }
}

/// Output of a Monte Carlo run: the pooled pmf, the per-family counts and
/// the number of simulated events (trunk plus branch jumps).
#[derive(Debug, Clone, PartialEq)]
pub struct McRun {
    pub pmf: EmpiricalPmf,
    /// Empty unless `keep_counts` was set.
    pub counts: Vec<SparseCounts>,
    /// `sum_i M_i^T M_i`.
    pub family_sq_sum: u128,
    pub events: u64,
}

fn family(
    sim: &mut Simulator<'_>,
    i: u64,
    m: u32,
    h: f64,
    seed: SeedSpec,
    opts: &RunOptions,
) -> Result<(SparseCounts, u64), SimulationError> {
    let net = sim.network();
    let t = net.horizon();
    let stream = FamilyStream::new(seed, opts.domain, i);
    let trunk = sim.simulate_to(net.initial_state(), 0.0, t - h, &mut stream.trunk())?;
    let (ends, jumps) = sim.branch_from(&trunk.state, t, h, m, &stream)?;
    let counts = match &opts.marginal_dims {
        Some(dims) => SparseCounts::from_states(ends.iter().map(|x| project(x, dims))),
        None => SparseCounts::from_states(ends),
    };
    Ok((counts, trunk.jumps + jumps))
}

fn families(
    network: &ReactionNetwork,
    range: std::ops::Range<u64>,
    m: u32,
    h: f64,
    seed: SeedSpec,
    opts: &RunOptions,
) -> Result<Vec<(SparseCounts, u64)>, SimulationError> {
    range
        .into_par_iter()
        .map_init(
            || Simulator::new(network).with_max_jumps(opts.max_jumps),
            |sim, i| family(sim, i, m, h, seed, opts),
        )
        .collect()
}

fn check_params(network: &ReactionNetwork, m: u32, h: f64, opts: &RunOptions) -> Result<(), EstimateError> {
    let t = network.horizon();
    if m == 0 {
        return Err(EstimateError::InvalidParameter("m must be at least 1".into()));
    }
    if !(0.0..=t).contains(&h) {
        return Err(EstimateError::InvalidParameter(format!("h = {h} outside [0, {t}]")));
    }
    let d = network.num_species();
    if let Some(&i) = opts.marginal_dims.iter().flatten().find(|&&i| i >= d) {
        return Err(EstimateError::InvalidParameter(format!("marginal coordinate {i} out of range")));
    }
    Ok(())
}

/// Pools families in index order.
struct Accumulator {
    pooled: BTreeMap<State, u64>,
    counts: Vec<SparseCounts>,
    n: u64,
    family_sq_sum: u128,
    events: u64,
}

impl Accumulator {
    fn new() -> Self {
        Self {
            pooled: BTreeMap::new(),
            counts: Vec::new(),
            n: 0,
            family_sq_sum: 0,
            events: 0,
        }
    }

    fn push(&mut self, (c, events): (SparseCounts, u64), keep: bool) {
        for (x, k) in c.entries() {
            *self.pooled.entry(x.clone()).or_default() += u64::from(*k);
        }
        self.family_sq_sum += u128::from(c.norm_sq());
        self.events += events;
        self.n += 1;
        if keep {
            self.counts.push(c);
        }
    }

    fn finish(self, m: u32, h: f64, seed: SeedSpec, opts: &RunOptions) -> McRun {
        let pmf = EmpiricalPmf::from_pooled(self.pooled, self.n, m, h)
            .with_seed(seed)
            .with_marginal_dims(opts.marginal_dims.clone());
        McRun {
            pmf,
            counts: self.counts,
            family_sq_sum: self.family_sq_sum,
            events: self.events,
        }
    }
}

/// Conditional Monte Carlo with `n` families of `m` branches over the last
/// `h` time units. With `h = 0` the output equals [`classical_mc`] under the
/// same seed and domain.
pub fn conditional_mc(
    network: &ReactionNetwork,
    n: u64,
    m: u32,
    h: f64,
    seed: SeedSpec,
    opts: &RunOptions,
) -> Result<McRun, EstimateError> {
    if n == 0 {
        return Err(EstimateError::InvalidParameter("n must be at least 1".into()));
    }
    check_params(network, m, h, opts)?;
    let mut acc = Accumulator::new();
    let mut start = 0;
    while start < n {
        let end = n.min(start + CHUNK);
        for part in families(network, start..end, m, h, seed, opts)? {
            acc.push(part, opts.keep_counts);
        }
        start = end;
    }
    Ok(acc.finish(m, h, seed, opts))
}

/// Classical Monte Carlo over `n` independent paths.
pub fn classical_mc(network: &ReactionNetwork, n: u64, seed: SeedSpec, opts: &RunOptions) -> Result<McRun, EstimateError> {
    conditional_mc(network, n, 1, 0.0, seed, opts)
}

/// Simulates families in index order until the cumulative event count
/// reaches `budget`; the family that crosses the budget is kept.
pub fn conditional_mc_budget(
    network: &ReactionNetwork,
    budget: f64,
    m: u32,
    h: f64,
    seed: SeedSpec,
    opts: &RunOptions,
) -> Result<McRun, EstimateError> {
    if !(budget.is_finite() && budget > 0.0) {
        return Err(EstimateError::InvalidParameter(format!("budget must be positive, got {budget}")));
    }
    check_params(network, m, h, opts)?;
    let mut acc = Accumulator::new();
    let mut start = 0u64;
    loop {
        if start >= opts.max_families {
            return Err(EstimateError::BudgetUnreachable {
                families: start,
                events: acc.events,
            });
        }
        let end = (start + BUDGET_BATCH).min(opts.max_families);
        for part in families(network, start..end, m, h, seed, opts)? {
            acc.push(part, opts.keep_counts);
            if acc.events as f64 >= budget {
                return Ok(acc.finish(m, h, seed, opts));
            }
        }
        start = end;
    }
}
