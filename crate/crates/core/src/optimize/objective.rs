use std::cell::RefCell;
use std::collections::HashMap;

use rayon::prelude::*;

use super::skellam::skellam_table;
use super::OptimizeError;
use crate::model::ReactionNetwork;
use crate::simulate::{Domain, Path, SeedSpec, Simulator};

/// Default pilot size.
pub const DEFAULT_PILOT_SIZE: usize = 500;

/// Independent recorded paths on `[0, t]` from which the tuner estimates
/// intensity integrals and the branch coincidence probability.
#[derive(Debug, Clone)]
pub struct PilotEnsemble {
    network: ReactionNetwork,
    paths: Vec<Path>,
}

impl PilotEnsemble {
    /// Simulates `n_tilde` paths, path `i` driven by the pilot stream `i`.
    pub fn simulate(network: &ReactionNetwork, n_tilde: usize, seed: SeedSpec, max_jumps: u64) -> Result<Self, OptimizeError> {
        if n_tilde < 2 {
            return Err(OptimizeError::PilotTooSmall(n_tilde));
        }
        let t = network.horizon();
        let paths = (0..n_tilde as u64)
            .into_par_iter()
            .map_init(
                || Simulator::new(network).with_max_jumps(max_jumps),
                |sim, i| sim.simulate_path(network.initial_state(), 0.0, t, &mut seed.stream(Domain::Pilot, i, 0)),
            )
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            network: network.clone(),
            paths,
        })
    }

    pub fn from_paths(network: &ReactionNetwork, paths: Vec<Path>) -> Result<Self, OptimizeError> {
        if paths.len() < 2 {
            return Err(OptimizeError::PilotTooSmall(paths.len()));
        }
        let t = network.horizon();
        if paths.iter().any(|p| p.t0() != 0.0 || p.t1() != t) {
            return Err(OptimizeError::PilotWindow(t));
        }
        Ok(Self {
            network: network.clone(),
            paths,
        })
    }

    pub fn network(&self) -> &ReactionNetwork {
        &self.network
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.network.horizon()
    }

    /// Pilot average of `Lambda_0` over `[a, b]`.
    pub fn mean_integral(&self, a: f64, b: f64) -> f64 {
        let sum: f64 = self
            .paths
            .iter()
            .map(|p| p.total_intensity_integral(a, b).expect("window inside pilot range"))
            .sum();
        sum / self.paths.len() as f64
    }

    /// Pilot average of `Lambda_r` over `[0, t]`, per reaction.
    pub fn mean_reaction_integrals(&self) -> Vec<f64> {
        let t = self.horizon();
        (0..self.network.num_reactions())
            .map(|r| {
                self.paths.iter().map(|p| p.intensity_integral(r, 0.0, t).unwrap()).sum::<f64>() / self.paths.len() as f64
            })
            .collect()
    }
}

/// Kahan summation in the given order.
pub(crate) fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Skellam estimate of `P(X_11(t) = X_12(t))`: the pilot average of
/// `sum_{k in lattice} prod_r P(K_r = k_r | Lambda_r^{t-h,t})`.
pub fn joint_prob_estimate(pilot: &PilotEnsemble, lattice: &[Vec<i64>], h: f64) -> f64 {
    let t = pilot.horizon();
    assert!((0.0..=t).contains(&h), "h outside [0, t]");
    if h == 0.0 {
        return 1.0;
    }
    let nr = pilot.network.num_reactions();
    let kmax: Vec<usize> = (0..nr)
        .map(|r| lattice.iter().map(|k| k[r].unsigned_abs() as usize).max().unwrap_or(0))
        .collect();
    let per_path: Vec<f64> = pilot
        .paths
        .par_iter()
        .map(|path| {
            let tables: Vec<Vec<f64>> = (0..nr)
                .map(|r| skellam_table(path.intensity_integral(r, t - h, t).unwrap().max(0.0), kmax[r]))
                .collect();
            kahan_sum(lattice.iter().map(|k| {
                k.iter()
                    .zip(&tables)
                    .map(|(kr, tab)| tab[kr.unsigned_abs() as usize])
                    .product::<f64>()
            }))
        })
        .collect();
    kahan_sum(per_path) / pilot.len() as f64
}

/// Expected events needed for `n` families: `n (I_{0,t-h} + m I_{t-h,t})`.
pub fn budget_to_n(pilot: &PilotEnsemble, m: u32, h: f64, budget: f64) -> Result<u64, OptimizeError> {
    let t = pilot.horizon();
    let cost = pilot.mean_integral(0.0, t - h) + f64::from(m) * pilot.mean_integral(t - h, t);
    let n = (budget / cost).floor();
    if !n.is_finite() || n < 1.0 {
        return Err(OptimizeError::BudgetTooSmall { budget, cost });
    }
    Ok(n as u64)
}

/// The tuner's objective `f_hat(m, h)` over one pilot ensemble and lattice,
/// with the coincidence estimate memoized per `h`.
pub struct Objective<'a> {
    pilot: &'a PilotEnsemble,
    lattice: &'a [Vec<i64>],
    full: f64,
    cache: RefCell<HashMap<u64, f64>>,
}

impl<'a> Objective<'a> {
    pub fn new(pilot: &'a PilotEnsemble, lattice: &'a [Vec<i64>]) -> Self {
        let t = pilot.horizon();
        Self {
            pilot,
            lattice,
            full: pilot.mean_integral(0.0, t),
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn pilot(&self) -> &PilotEnsemble {
        self.pilot
    }

    pub fn lattice(&self) -> &[Vec<i64>] {
        self.lattice
    }

    /// Number of distinct `h` at which the coincidence estimate was computed.
    pub fn evaluations(&self) -> usize {
        self.cache.borrow().len()
    }

    pub fn phat(&self, h: f64) -> f64 {
        if let Some(v) = self.cache.borrow().get(&h.to_bits()) {
            return *v;
        }
        let v = joint_prob_estimate(self.pilot, self.lattice, h);
        self.cache.borrow_mut().insert(h.to_bits(), v);
        v
    }

    /// `((1/m) I_{0,t-h} + I_{t-h,t}) (1 + (m - 1) P_hat(h))`.
    /// Equals `f_hat(1, 0)` exactly when `m = 1` or `h = 0`.
    pub fn fhat(&self, m: f64, h: f64) -> f64 {
        if m == 1.0 || h == 0.0 {
            return self.full;
        }
        let t = self.pilot.horizon();
        let trunk = self.pilot.mean_integral(0.0, t - h);
        let tail = self.pilot.mean_integral(t - h, t);
        (trunk / m + tail) * (1.0 + (m - 1.0) * self.phat(h))
    }

    /// `f_hat(1, 0)`, the classical estimator's value.
    pub fn fhat_classical(&self) -> f64 {
        self.full
    }
}

/// One-off evaluation of `f_hat(m, h)`.
pub fn objective_fhat(pilot: &PilotEnsemble, lattice: &[Vec<i64>], m: f64, h: f64) -> f64 {
    Objective::new(pilot, lattice).fhat(m, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin, integer_nullspace_basis, nullspace_lattice, DEFAULT_LATTICE_CAP};
    use crate::optimize::skellam_pmf;

    fn lattice(net: &ReactionNetwork, c: u32) -> Vec<Vec<i64>> {
        let basis = integer_nullspace_basis(&net.stoichiometry(), None);
        nullspace_lattice(&basis, net.num_reactions(), c, DEFAULT_LATTICE_CAP).unwrap()
    }

    #[test]
    fn pilot_size_is_checked() {
        let net = builtin("birth").unwrap();
        let err = PilotEnsemble::simulate(&net, 1, SeedSpec::new(1), 1000).unwrap_err();
        assert_eq!(err.to_string(), "pilot of 1 path(s): ñ ≥ 2 required");
    }

    #[test]
    fn zero_window_is_certain() {
        let net = builtin("lotka-volterra").unwrap();
        let pilot = PilotEnsemble::simulate(&net, 20, SeedSpec::new(2), u64::MAX).unwrap();
        assert_eq!(joint_prob_estimate(&pilot, &lattice(&net, 4), 0.0), 1.0);
        for h in [0.01, 0.1, 1.0, 4.0] {
            let p = joint_prob_estimate(&pilot, &lattice(&net, 4), h);
            assert!(p > 0.0 && p <= 1.0, "{p}");
        }
    }

    #[test]
    fn birth_specialization() {
        let net = builtin("birth").unwrap();
        let pilot = PilotEnsemble::simulate(&net, 50, SeedSpec::new(3), u64::MAX).unwrap();
        let lat = lattice(&net, 4);
        assert_eq!(lat, vec![vec![0]]);
        let h = 0.3;
        let want: f64 = pilot
            .paths()
            .iter()
            .map(|p| skellam_pmf(0, p.intensity_integral(0, 2.0 - h, 2.0).unwrap()))
            .sum::<f64>()
            / 50.0;
        assert!((joint_prob_estimate(&pilot, &lat, h) - want).abs() < 1e-14);
    }

    #[test]
    fn objective_identities() {
        let net = builtin("birth-death").unwrap();
        let pilot = PilotEnsemble::simulate(&net, 40, SeedSpec::new(4), u64::MAX).unwrap();
        let lat = lattice(&net, 4);
        let obj = Objective::new(&pilot, &lat);
        let base = obj.fhat(1.0, 0.0);
        assert!((base - obj.fhat_classical()).abs() < 1e-9 * base);
        for m in [1.0, 3.5, 40.0] {
            assert!((obj.fhat(m, 0.0) - base).abs() < 1e-9 * base);
        }
        for h in [0.1, 0.7, 2.0] {
            assert!((obj.fhat(1.0, h) - base).abs() < 1e-9 * base);
        }
        assert!(obj.fhat(1e9, 0.5) > 1e3 * base);
        // pilot order does not matter
        let mut rev = pilot.paths().to_vec();
        rev.reverse();
        let pilot2 = PilotEnsemble::from_paths(&net, rev).unwrap();
        let a = objective_fhat(&pilot, &lat, 7.0, 0.4);
        let b = objective_fhat(&pilot2, &lat, 7.0, 0.4);
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn budget_conversion() {
        let net = builtin("birth-death").unwrap();
        let pilot = PilotEnsemble::simulate(&net, 40, SeedSpec::new(5), u64::MAX).unwrap();
        let full = pilot.mean_integral(0.0, 2.0);
        assert_eq!(budget_to_n(&pilot, 1, 0.0, 1000.0 * full + 1e-6).unwrap(), 1000);
        let one = pilot.mean_integral(0.0, 1.5) + 10.0 * pilot.mean_integral(1.5, 2.0);
        assert_eq!(budget_to_n(&pilot, 10, 0.5, one * (1.0 + 1e-12)).unwrap(), 1);
        assert!(budget_to_n(&pilot, 10, 0.5, one * 0.5).is_err());
    }
}
