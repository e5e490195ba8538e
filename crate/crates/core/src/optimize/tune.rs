use serde::Serialize;

use super::nelder_mead::nelder_mead;
use super::objective::{Objective, PilotEnsemble};
use super::OptimizeError;
use crate::model::{integer_nullspace_basis, nullspace_lattice, ReactionNetwork, DEFAULT_LATTICE_CAP};

#[derive(Debug, Clone, PartialEq)]
pub struct TuneConfig {
    /// Lattice coefficients range over `-c..=c`.
    pub coeff_bound: u32,
    pub lattice_cap: usize,
    /// Restrict the stoichiometry to these rows when estimating a marginal.
    pub marginal_rows: Option<Vec<usize>>,
    pub start_m: Vec<f64>,
    /// Starting windows as fractions of `t`.
    pub start_h: Vec<f64>,
    pub max_iter: usize,
    /// Points of the reported `P_hat(h)` curve on `[0, t]`.
    pub curve_points: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            coeff_bound: 4,
            lattice_cap: DEFAULT_LATTICE_CAP,
            marginal_rows: None,
            start_m: vec![2.0, 16.0, 128.0],
            start_h: vec![0.02, 0.1, 0.4],
            max_iter: 500,
            curve_points: 41,
        }
    }
}

/// The finite nullspace subset the coincidence estimate sums over.
pub fn build_lattice(network: &ReactionNetwork, cfg: &TuneConfig) -> Result<Vec<Vec<i64>>, OptimizeError> {
    let basis = integer_nullspace_basis(&network.stoichiometry(), cfg.marginal_rows.as_deref());
    Ok(nullspace_lattice(&basis, network.num_reactions(), cfg.coeff_bound, cfg.lattice_cap)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartResult {
    pub m0: f64,
    pub h0: f64,
    pub m: f64,
    pub h: f64,
    pub fhat: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PilotSummary {
    pub n_tilde: usize,
    /// Mean of `Lambda_0` over `[0, t]`.
    pub mean_total_integral: f64,
    pub mean_reaction_integrals: Vec<f64>,
    pub lattice_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneResult {
    pub m_star: u32,
    pub h_star: f64,
    /// Unrounded minimizer.
    pub m_real: f64,
    pub h_real: f64,
    pub fhat_at_optimum: f64,
    /// `f_hat(1, 0)`.
    pub fhat_at_classical: f64,
    /// True when no candidate beat classical Monte Carlo.
    pub fell_back: bool,
    /// `(h, P_hat(h))` samples.
    pub phat_curve: Vec<(f64, f64)>,
    pub starts: Vec<StartResult>,
    pub pilot: PilotSummary,
}

impl TuneResult {
    /// `f_hat(1, 0) / f_hat(m_star, h_star)`, at least 1.
    pub fn predicted_gain(&self) -> f64 {
        self.fhat_at_classical / self.fhat_at_optimum
    }
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Minimizes `f_hat` over `m >= 1`, `0 <= h <= t` by multistart Nelder-Mead
/// in `m = 1 + e^u`, `h = t logistic(v)`, then rounds `m`.
pub fn tune(pilot: &PilotEnsemble, lattice: &[Vec<i64>], cfg: &TuneConfig) -> TuneResult {
    let t = pilot.horizon();
    let obj = Objective::new(pilot, lattice);
    let to_mh = |x: [f64; 2]| (1.0 + x[0].clamp(-40.0, 30.0).exp(), t * logistic(x[1].clamp(-40.0, 40.0)));
    let diam = |pts: &[[f64; 2]; 3], k: usize| {
        let v = pts.map(|p| {
            let (m, h) = to_mh(p);
            if k == 0 {
                m
            } else {
                h
            }
        });
        v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - v.iter().fold(f64::INFINITY, |a, &b| a.min(b))
    };
    let mut starts = Vec::new();
    for &m0 in &cfg.start_m {
        for &hf in &cfg.start_h {
            let x0 = [(m0 - 1.0).ln(), (hf / (1.0 - hf)).ln()];
            let r = nelder_mead(
                |x| {
                    let (m, h) = to_mh(x);
                    obj.fhat(m, h)
                },
                x0,
                [0.5, 0.5],
                cfg.max_iter,
                |pts| diam(pts, 0) < 0.5 && diam(pts, 1) < 1e-3 * t,
            );
            let (m, h) = to_mh(r.x);
            starts.push(StartResult {
                m0,
                h0: hf * t,
                m,
                h,
                fhat: r.fx,
                iterations: r.iterations,
                converged: r.converged,
            });
        }
    }
    let classical = obj.fhat_classical();
    let best = starts.iter().min_by(|a, b| a.fhat.total_cmp(&b.fhat));
    let (m_real, h_real) = best.map_or((1.0, 0.0), |s| (s.m, s.h));
    let lo = m_real.floor().clamp(1.0, f64::from(u32::MAX));
    let hi = m_real.ceil().clamp(1.0, f64::from(u32::MAX));
    let m_round = if obj.fhat(hi, h_real) < obj.fhat(lo, h_real) { hi } else { lo };
    // one branch makes the window irrelevant
    let (mut m_star, mut h_star) = if m_round == 1.0 { (1.0, 0.0) } else { (m_round, h_real) };
    let mut fopt = obj.fhat(m_star, h_star);
    let fell_back = fopt.is_nan() || fopt > classical;
    if fell_back {
        m_star = 1.0;
        h_star = 0.0;
        fopt = classical;
    }
    let points = cfg.curve_points.max(2);
    let phat_curve = (0..points)
        .map(|i| {
            let h = t * i as f64 / (points - 1) as f64;
            (h, obj.phat(h))
        })
        .collect();
    TuneResult {
        m_star: m_star as u32,
        h_star,
        m_real,
        h_real,
        fhat_at_optimum: fopt,
        fhat_at_classical: classical,
        fell_back,
        phat_curve,
        starts,
        pilot: PilotSummary {
            n_tilde: pilot.len(),
            mean_total_integral: classical,
            mean_reaction_integrals: pilot.mean_reaction_integrals(),
            lattice_size: lattice.len(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin, parse_model};
    use crate::optimize::objective_fhat;
    use crate::simulate::SeedSpec;

    #[test]
    fn frozen_network_keeps_classical_value() {
        let net = parse_model("species: X\ninit: X=10\nt: 2\nX -> 2X @ 0\n").unwrap();
        let pilot = PilotEnsemble::simulate(&net, 10, SeedSpec::new(1), 100).unwrap();
        let lat = build_lattice(&net, &TuneConfig::default()).unwrap();
        let r = tune(&pilot, &lat, &TuneConfig::default());
        assert_eq!(r.fhat_at_optimum, r.fhat_at_classical);
    }

    #[test]
    fn birth_death_tuning_is_sane() {
        let net = builtin("birth-death").unwrap();
        let pilot = PilotEnsemble::simulate(&net, 200, SeedSpec::new(2), u64::MAX).unwrap();
        let cfg = TuneConfig::default();
        let lat = build_lattice(&net, &cfg).unwrap();
        let r = tune(&pilot, &lat, &cfg);
        assert!(r.m_star >= 1);
        assert!((0.0..=2.0).contains(&r.h_star));
        assert!(r.fhat_at_optimum <= r.fhat_at_classical);
        let direct = objective_fhat(&pilot, &lat, f64::from(r.m_star), r.h_star);
        assert!((direct - r.fhat_at_optimum).abs() <= 1e-12 * direct);
        assert_eq!(r.starts.len(), 9);
        assert_eq!(r.phat_curve.len(), 41);
        assert_eq!(r.phat_curve[0], (0.0, 1.0));
        // the unrounded optimum is at least as good as every start's result
        let best = r.starts.iter().map(|s| s.fhat).fold(f64::INFINITY, f64::min);
        assert!(objective_fhat(&pilot, &lat, r.m_real, r.h_real) <= best * (1.0 + 1e-12));
    }
}
