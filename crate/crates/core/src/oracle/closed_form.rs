//! Closed-form pmfs of the two linear example networks.

use statrs::distribution::{Binomial, Discrete, Poisson};
use statrs::function::gamma::ln_gamma;

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// P(X(t) = k) for the pure-birth process `X -> 2X` at unit rate from `x0`:
/// `C(k-1, x0-1) e^{-x0 t} (1 - e^{-t})^{k-x0}`.
pub fn yule_pmf(x0: u64, t: f64, k: u64) -> f64 {
    assert!(x0 >= 1, "yule_pmf needs x0 >= 1");
    if k < x0 {
        return 0.0;
    }
    if t == 0.0 {
        return if k == x0 { 1.0 } else { 0.0 };
    }
    let j = (k - x0) as f64;
    let ln_q = (-(-t).exp_m1()).ln();
    let ln_p = ln_choose(k - 1, x0 - 1) - x0 as f64 * t + if j > 0.0 { j * ln_q } else { 0.0 };
    ln_p.exp()
}

/// P(X(t) = k) for `0 -> X` at rate `kappa` and `X -> 0` at per-capita rate
/// `gamma`, started at `x0`: Binomial(x0, e^{-gamma t}) convolved with
/// Poisson((kappa / gamma)(1 - e^{-gamma t})).
pub fn immigration_death_pmf(x0: u64, kappa: f64, gamma: f64, t: f64, k: u64) -> f64 {
    if t == 0.0 {
        return if k == x0 { 1.0 } else { 0.0 };
    }
    let survive = (-gamma * t).exp();
    let mean = kappa / gamma * -(-gamma * t).exp_m1();
    let binom = Binomial::new(survive, x0).expect("valid binomial");
    if mean <= 0.0 {
        return binom.pmf(k);
    }
    let pois = Poisson::new(mean).expect("valid Poisson");
    (0..=k.min(x0)).map(|j| binom.pmf(j) * pois.pmf(k - j)).sum()
}
