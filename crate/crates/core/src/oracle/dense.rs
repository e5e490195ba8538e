//! Dense covariance references for small state sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::estimate::SparseCounts;
use crate::model::State;

/// `Sigma = m diag(p) + m(m-1) A - m^2 p p^T` with its spectrum.
#[derive(Debug, Clone)]
pub struct DenseSigma {
    pub sigma: DMatrix<f64>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
}

impl DenseSigma {
    pub fn new(p: &[f64], a: &DMatrix<f64>, m: f64) -> Self {
        let p = DVector::from_column_slice(p);
        let sigma = DMatrix::from_diagonal(&(&p * m)) + a * (m * (m - 1.0)) - &p * p.transpose() * (m * m);
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let mut eigenvalues: Vec<f64> = SymmetricEigen::new(sigma.clone()).eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Self { sigma, eigenvalues }
    }

    pub fn trace(&self) -> f64 {
        self.sigma.trace()
    }

    pub fn trace_sq(&self) -> f64 {
        self.sigma.iter().map(|v| v * v).sum()
    }
}

/// The `1 - alpha` quantile of `sum_l lambda_l Z_l^2` by simulation.
pub fn mixture_quantile<R: Rng + ?Sized>(eigenvalues: &[f64], alpha: f64, samples: usize, rng: &mut R) -> f64 {
    let top = eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l));
    let lams: Vec<f64> = eigenvalues.iter().copied().filter(|&l| l > 1e-12 * top).collect();
    let mut draws: Vec<f64> = (0..samples)
        .map(|_| {
            lams.iter()
                .map(|l| {
                    let z: f64 = rng.sample(StandardNormal);
                    l * z * z
                })
                .sum()
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    let idx = (((1.0 - alpha) * samples as f64).ceil() as usize).clamp(1, samples) - 1;
    draws[idx]
}

/// Sample covariance `1/(n-1) sum (M_i - M_bar)(M_i - M_bar)^T` over the
/// union of observed states (sorted).
pub fn dense_sample_covariance(counts: &[SparseCounts]) -> (Vec<State>, DMatrix<f64>) {
    let mut states: Vec<State> = counts.iter().flat_map(|c| c.entries().iter().map(|(x, _)| x.clone())).collect();
    states.sort();
    states.dedup();
    let n = counts.len();
    let k = states.len();
    let mut rows = DMatrix::<f64>::zeros(n, k);
    for (i, c) in counts.iter().enumerate() {
        for (x, v) in c.entries() {
            let j = states.binary_search(x).unwrap();
            rows[(i, j)] = f64::from(*v);
        }
    }
    let mean = rows.row_mean();
    for mut r in rows.row_iter_mut() {
        r -= &mean;
    }
    let cov = rows.transpose() * &rows / (n as f64 - 1.0);
    (states, cov)
}
