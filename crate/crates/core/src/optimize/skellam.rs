//! Skellam(mu, mu) probabilities `e^{-2 mu} I_|k|(2 mu)`.
//!
//! The exponentially scaled Bessel values come from Miller's backward
//! recurrence, normalized with `e^x = I_0(x) + 2 sum_{k>=1} I_k(x)`. This is
//! stable for every argument and never forms `e^x` itself.

/// `P(K = k)` for `K` the difference of two independent Poisson(mu).
pub fn skellam_pmf(k: i64, mu: f64) -> f64 {
    let k = k.unsigned_abs() as usize;
    skellam_table(mu, k)[k]
}

/// `P(K = k)` for `k = 0..=kmax` (the pmf is symmetric in `k`).
pub fn skellam_table(mu: f64, kmax: usize) -> Vec<f64> {
    assert!(mu.is_finite() && mu >= 0.0, "Skellam parameter must be finite and non-negative");
    let mut out = vec![0.0; kmax + 1];
    if mu == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let x = 2.0 * mu;
    // I_k(x) / I_0(x) ~ exp(-k^2 / 2x), negligible past sqrt(80 x)
    let start = kmax + (80.0 * x).sqrt().ceil() as usize + 40;
    let (mut above, mut cur) = (0.0f64, 1e-300f64);
    let mut sum = 0.0;
    for k in (1..=start).rev() {
        // cur = I_k, above = I_{k+1}, up to a common factor
        if k <= kmax {
            out[k] = cur;
        }
        sum += 2.0 * cur;
        let below = above + 2.0 * k as f64 / x * cur;
        above = cur;
        cur = below;
        if cur > 1e250 {
            let s = 1e-250;
            cur *= s;
            above *= s;
            sum *= s;
            for v in out.iter_mut() {
                *v *= s;
            }
        }
    }
    out[0] = cur;
    sum += cur;
    for v in out.iter_mut() {
        *v /= sum;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::ln_gamma;

    /// Direct convolution series `sum_j e^{-2mu} mu^{2j+k} / (j! (j+k)!)`.
    fn series(k: i64, mu: f64) -> f64 {
        let k = k.unsigned_abs() as f64;
        let terms: Vec<f64> = (0..100_000)
            .map(|j| {
                let j = j as f64;
                -2.0 * mu + (2.0 * j + k) * mu.ln() - ln_gamma(j + 1.0) - ln_gamma(j + k + 1.0)
            })
            .collect();
        let top = terms.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        top.exp() * terms.iter().map(|t| (t - top).exp()).sum::<f64>()
    }

    #[test]
    fn degenerate_parameter() {
        assert_eq!(skellam_pmf(0, 0.0), 1.0);
        assert_eq!(skellam_pmf(3, 0.0), 0.0);
        assert_eq!(skellam_pmf(-1, 0.0), 0.0);
    }

    #[test]
    fn value_at_one() {
        let want = series(0, 1.0);
        assert!((want - 0.308_508).abs() < 1e-6);
        assert!((skellam_pmf(0, 1.0) - want).abs() < 1e-15);
    }

    #[test]
    fn matches_convolution_series() {
        for mu in [1e-8, 1e-3, 0.1, 0.5, 2.0, 7.5, 30.0, 100.0, 1000.0, 5000.0] {
            for k in [0i64, 1, -2, 5, 17, 60] {
                let want = series(k, mu);
                let got = skellam_pmf(k, mu);
                // lgamma of large arguments limits the reference itself
                let rel = if mu > 50.0 { 1e-8 } else { 1e-11 };
                assert!((got - want).abs() <= rel * want + 1e-300, "mu {mu} k {k}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn table_sums_to_one() {
        for mu in [0.0f64, 0.2, 3.0, 50.0, 700.0, 1e4] {
            let kk = (2.0 * mu + 10.0 * mu.sqrt() + 20.0).ceil() as usize;
            let t = skellam_table(mu, kk);
            let total = t[0] + 2.0 * t[1..].iter().sum::<f64>();
            assert!((1.0 - 1e-10..=1.0 + 1e-12).contains(&total), "mu {mu}: {total}");
        }
    }

    proptest::proptest! {
        #[test]
        fn symmetric_and_bounded(mu in 0.0f64..2e4, k in -200i64..200) {
            let a = skellam_pmf(k, mu);
            let b = skellam_pmf(-k, mu);
            proptest::prop_assert_eq!(a, b);
            proptest::prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn normalized_over_wide_range(mu in 0.0f64..1e4) {
            let kk = (2.0 * mu + 10.0 * mu.sqrt() + 20.0).ceil() as usize;
            let t = skellam_table(mu, kk);
            let total = t[0] + 2.0 * t[1..].iter().sum::<f64>();
            proptest::prop_assert!(total >= 1.0 - 1e-10);
        }
    }
}
