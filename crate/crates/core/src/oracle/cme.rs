//! Truncated-generator solutions of the chemical master equation on a box of
//! states, by uniformization.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::OracleError;
use crate::estimate::Pmf;
use crate::model::{ReactionNetwork, State};

/// Hyper-rectangle `lower <= x <= upper` (componentwise, inclusive).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateBox {
    lower: Vec<i64>,
    upper: Vec<i64>,
    strides: Vec<usize>,
    len: usize,
}

impl StateBox {
    pub fn new(lower: Vec<i64>, upper: Vec<i64>) -> Result<Self, OracleError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(OracleError::BadBox("bounds must have equal, non-zero length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| *l < 0 || l > u) {
            return Err(OracleError::BadBox("need 0 <= lower <= upper".into()));
        }
        let mut strides = vec![0; lower.len()];
        let mut len = 1usize;
        for i in (0..lower.len()).rev() {
            strides[i] = len;
            len = len
                .checked_mul((upper[i] - lower[i] + 1) as usize)
                .ok_or_else(|| OracleError::BadBox("box too large".into()))?;
        }
        Ok(Self {
            lower,
            upper,
            strides,
            len,
        })
    }

    /// `{0..=upper}` in one dimension.
    pub fn range(upper: i64) -> Result<Self, OracleError> {
        Self::new(vec![0], vec![upper])
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| l <= v && v <= u)
    }

    /// Position of `x` in lexicographic order, if inside.
    pub fn index(&self, x: &[i64]) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        Some(x.iter().zip(&self.lower).zip(&self.strides).map(|((v, l), s)| (v - l) as usize * s).sum())
    }

    pub fn state(&self, mut idx: usize) -> State {
        self.strides
            .iter()
            .zip(&self.lower)
            .map(|(s, l)| {
                let q = idx / s;
                idx %= s;
                l + q as i64
            })
            .collect()
    }

    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.len).map(|i| self.state(i))
    }
}

/// Generator restricted to a box. Transitions leaving the box stay on the
/// diagonal, so lost mass shows up as a defect.
#[derive(Debug, Clone)]
pub struct TruncatedGenerator {
    state_box: StateBox,
    // -(total exit rate) per state
    diag: Vec<f64>,
    // incoming transitions, CSR by target state
    offsets: Vec<usize>,
    sources: Vec<u32>,
    rates: Vec<f64>,
}

impl TruncatedGenerator {
    pub fn new(network: &ReactionNetwork, state_box: &StateBox) -> Result<Self, OracleError> {
        if state_box.dim() != network.num_species() {
            return Err(OracleError::BadBox("box dimension does not match the network".into()));
        }
        let n = state_box.len();
        let mut diag = vec![0.0; n];
        let mut incoming: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        let mut y = vec![0i64; state_box.dim()];
        for (i, x) in state_box.states().enumerate() {
            for (r, reaction) in network.reactions().iter().enumerate() {
                let rate = network.intensity(r, &x);
                if !(rate.is_finite() && rate >= 0.0) {
                    return Err(OracleError::InvalidIntensity { reaction: r, state: x });
                }
                if rate == 0.0 {
                    continue;
                }
                diag[i] -= rate;
                for ((yi, xi), z) in y.iter_mut().zip(&x).zip(reaction.zeta()) {
                    *yi = xi + z;
                }
                if let Some(j) = state_box.index(&y) {
                    if j != i {
                        incoming[j].push((i as u32, rate));
                    } else {
                        diag[i] += rate;
                    }
                }
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let (mut sources, mut rates) = (Vec::new(), Vec::new());
        offsets.push(0);
        for list in incoming {
            for (s, r) in list {
                sources.push(s);
                rates.push(r);
            }
            offsets.push(sources.len());
        }
        Ok(Self {
            state_box: state_box.clone(),
            diag,
            offsets,
            sources,
            rates,
        })
    }

    pub fn state_box(&self) -> &StateBox {
        &self.state_box
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.diag.iter().fold(0.0, |a, d| a.max(-d))
    }

    /// `out = p + Q^T p / lambda`, one step of the uniformized chain.
    fn step(&self, p: &[f64], lambda: f64, out: &mut [f64]) {
        for j in 0..p.len() {
            let mut inflow = 0.0;
            for k in self.offsets[j]..self.offsets[j + 1] {
                inflow += self.rates[k] * p[self.sources[k] as usize];
            }
            out[j] = p[j] + (self.diag[j] * p[j] + inflow) / lambda;
        }
    }

    /// `p0 exp(Q s)` by uniformization, truncating the Poisson series once
    /// the neglected weight is below `tail`.
    pub fn propagate(&self, p0: &[f64], s: f64, tail: f64) -> Vec<f64> {
        let lambda = self.max_exit_rate();
        if s == 0.0 || lambda == 0.0 {
            return p0.to_vec();
        }
        let lt = lambda * s;
        let mut v = p0.to_vec();
        let mut next = vec![0.0; v.len()];
        let mut out = vec![0.0; v.len()];
        let mut log_w = -lt;
        let mut weight_sum = 0.0;
        let hard_stop = (lt + 60.0 * lt.sqrt() + 60.0) as u64;
        let mut k = 0u64;
        loop {
            let w = log_w.exp();
            if w > 0.0 {
                weight_sum += w;
                for (o, x) in out.iter_mut().zip(&v) {
                    *o += w * x;
                }
            }
            if (k as f64 >= lt && 1.0 - weight_sum <= tail) || k >= hard_stop {
                break;
            }
            k += 1;
            log_w += lt.ln() - (k as f64).ln();
            self.step(&v, lambda, &mut next);
            std::mem::swap(&mut v, &mut next);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmeOptions {
    /// Largest acceptable `1 - sum p`.
    pub defect_bound: f64,
    /// Neglected Poisson weight in the uniformization series.
    pub poisson_tail: f64,
}

impl Default for CmeOptions {
    fn default() -> Self {
        Self {
            defect_bound: 1e-8,
            poisson_tail: 1e-14,
        }
    }
}

/// A pmf on a box with its certified missing mass.
#[derive(Debug, Clone, PartialEq)]
pub struct CmeSolution {
    pub state_box: StateBox,
    pub probs: Vec<f64>,
    pub defect: f64,
}

impl CmeSolution {
    pub fn prob(&self, x: &[i64]) -> f64 {
        self.state_box.index(x).map_or(0.0, |i| self.probs[i])
    }

    /// Sparse pmf of the states with positive probability.
    pub fn to_pmf(&self) -> Pmf {
        Pmf::from_pairs(
            self.probs
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(i, p)| (self.state_box.state(i), *p)),
        )
    }
}

fn point_mass(state_box: &StateBox, x0: &[i64]) -> Result<Vec<f64>, OracleError> {
    let i = state_box
        .index(x0)
        .ok_or_else(|| OracleError::BadBox(format!("initial state {x0:?} outside the box")))?;
    let mut p = vec![0.0; state_box.len()];
    p[i] = 1.0;
    Ok(p)
}

fn defect_of(p: &[f64]) -> f64 {
    (1.0 - p.iter().sum::<f64>()).max(0.0)
}

/// The time-`t` pmf from the point mass at `x0`, restricted to `state_box`.
pub fn cme_solve(
    network: &ReactionNetwork,
    state_box: &StateBox,
    x0: &[i64],
    t: f64,
    opts: &CmeOptions,
) -> Result<CmeSolution, OracleError> {
    let gen = TruncatedGenerator::new(network, state_box)?;
    let p0 = point_mass(state_box, x0)?;
    let probs = gen.propagate(&p0, t, opts.poisson_tail);
    let defect = defect_of(&probs);
    if defect > opts.defect_bound {
        return Err(OracleError::DefectExceeded {
            defect,
            bound: opts.defect_bound,
        });
    }
    Ok(CmeSolution {
        state_box: state_box.clone(),
        probs,
        defect,
    })
}

/// Two branches sharing a trunk: `A = sum_y p_{t-h}(y) q_h(y, .) q_h(y, .)^T`
/// with `q_h(y, .)` the time-`h` pmf from `y`.
#[derive(Debug, Clone)]
pub struct JointProb {
    pub state_box: StateBox,
    pub a: DMatrix<f64>,
    /// The time-`t` pmf, the row sums of `A`.
    pub p_t: Vec<f64>,
    /// `P(X_11(t) = X_12(t))`, the trace of `A`.
    pub joint: f64,
    pub defect: f64,
}

pub fn joint_prob_bruteforce(
    network: &ReactionNetwork,
    state_box: &StateBox,
    x0: &[i64],
    t: f64,
    h: f64,
    opts: &CmeOptions,
) -> Result<JointProb, OracleError> {
    if !(0.0..=t).contains(&h) {
        return Err(OracleError::BadWindow { h, t });
    }
    let gen = TruncatedGenerator::new(network, state_box)?;
    let p0 = point_mass(state_box, x0)?;
    let trunk = gen.propagate(&p0, t - h, opts.poisson_tail);
    let n = state_box.len();
    let starts: Vec<usize> = (0..n).filter(|&y| trunk[y] > 0.0).collect();
    let branches: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|&y| {
            let mut e = vec![0.0; n];
            e[y] = 1.0;
            gen.propagate(&e, h, opts.poisson_tail)
        })
        .collect();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut p_t = vec![0.0; n];
    for (&y, q) in starts.iter().zip(&branches) {
        let w = trunk[y];
        let nz: Vec<usize> = (0..n).filter(|&i| q[i] != 0.0).collect();
        for &i in &nz {
            p_t[i] += w * q[i];
            let wi = w * q[i];
            for &j in &nz {
                a[(i, j)] += wi * q[j];
            }
        }
    }
    let defect = defect_of(&p_t);
    if defect > opts.defect_bound {
        return Err(OracleError::DefectExceeded {
            defect,
            bound: opts.defect_bound,
        });
    }
    let joint = a.trace();
    Ok(JointProb {
        state_box: state_box.clone(),
        a,
        p_t,
        joint,
        defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin, parse_model};
    use crate::oracle::{immigration_death_pmf, yule_pmf};

    fn tv(a: &[f64], b: &[f64]) -> f64 {
        0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
    }

    #[test]
    fn box_indexing() {
        let b = StateBox::new(vec![1, 0], vec![3, 4]).unwrap();
        assert_eq!(b.len(), 15);
        for (i, x) in b.states().enumerate() {
            assert_eq!(b.index(&x), Some(i));
        }
        assert_eq!(b.state(0), vec![1, 0]);
        assert_eq!(b.state(5), vec![2, 0]);
        assert_eq!(b.index(&[0, 0]), None);
        assert!(StateBox::new(vec![2], vec![1]).is_err());
    }

    #[test]
    fn frozen_network_keeps_point_mass() {
        let net = parse_model("species: X\ninit: X=10\nt: 2\nX -> 2X @ 0\n").unwrap();
        let sol = cme_solve(&net, &StateBox::range(20).unwrap(), &[10], 2.0, &CmeOptions::default()).unwrap();
        assert_eq!(sol.prob(&[10]), 1.0);
    }

    #[test]
    fn yule_against_closed_form() {
        let net = builtin("birth").unwrap();
        let b = StateBox::new(vec![10], vec![600]).unwrap();
        let sol = cme_solve(&net, &b, &[10], 2.0, &CmeOptions::default()).unwrap();
        let exact: Vec<f64> = (10..=600).map(|k| yule_pmf(10, 2.0, k)).collect();
        assert!(tv(&sol.probs, &exact) <= 1e-7);

        let b1 = StateBox::new(vec![1], vec![400]).unwrap();
        let sol = cme_solve(&net, &b1, &[1], 1.0, &CmeOptions::default()).unwrap();
        for k in 1..=400u64 {
            assert!((sol.prob(&[k as i64]) - yule_pmf(1, 1.0, k)).abs() < 1e-8);
        }
    }

    #[test]
    fn immigration_death_against_closed_form() {
        let net = builtin("birth-death").unwrap();
        let b = StateBox::range(300).unwrap();
        let sol = cme_solve(&net, &b, &[100], 2.0, &CmeOptions::default()).unwrap();
        let exact: Vec<f64> = (0..=300).map(|k| immigration_death_pmf(100, 50.0, 1.0, 2.0, k)).collect();
        assert!(tv(&sol.probs, &exact) <= 1e-8);
        assert!(sol.probs.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn defect_grows_and_is_enforced() {
        let net = builtin("birth").unwrap();
        let b = StateBox::new(vec![10], vec![80]).unwrap();
        let loose = CmeOptions {
            defect_bound: 1.0,
            ..CmeOptions::default()
        };
        let mut last = 0.0;
        for t in [0.2, 0.5, 1.0, 1.5] {
            let d = cme_solve(&net, &b, &[10], t, &loose).unwrap().defect;
            assert!(d >= last);
            last = d;
        }
        assert!(matches!(
            cme_solve(&net, &b, &[10], 2.0, &CmeOptions::default()),
            Err(OracleError::DefectExceeded { .. })
        ));
    }

    #[test]
    fn joint_probability_limits() {
        let net = builtin("birth-death").unwrap();
        let b = StateBox::range(200).unwrap();
        let opts = CmeOptions::default();
        let zero = joint_prob_bruteforce(&net, &b, &[100], 2.0, 0.0, &opts).unwrap();
        assert!((zero.joint - 1.0).abs() < 1e-9);
        for i in 0..b.len() {
            assert!((zero.a[(i, i)] - zero.p_t[i]).abs() < 1e-15);
        }
        let full = joint_prob_bruteforce(&net, &b, &[100], 2.0, 2.0, &opts).unwrap();
        let sum_sq: f64 = full.p_t.iter().map(|p| p * p).sum();
        assert!((full.joint - sum_sq).abs() < 1e-12);
        // continuity and monotone decrease on a 0.01 grid
        let mut last = joint_prob_bruteforce(&net, &b, &[100], 2.0, 0.2, &opts).unwrap().joint;
        for k in 21..=30 {
            let j = joint_prob_bruteforce(&net, &b, &[100], 2.0, 0.01 * k as f64, &opts).unwrap().joint;
            assert!(j < last && last - j < 0.01, "{last} -> {j}");
            last = j;
        }
    }
}
