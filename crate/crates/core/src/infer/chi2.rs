use statrs::function::gamma::{gamma_lr, ln_gamma};

use super::InferError;

/// The `1 - alpha` quantile of the chi-square law with real `dof`:
/// `x` with `P(dof/2, x/2) = 1 - alpha`, by bracketing and safeguarded Newton.
pub fn chi2_quantile(dof: f64, alpha: f64) -> Result<f64, InferError> {
    if !(dof.is_finite() && dof > 0.0) {
        return Err(InferError::BadArgument(format!("degrees of freedom must be positive, got {dof}")));
    }
    if !(alpha.is_finite() && (0.0..=1.0).contains(&alpha)) {
        return Err(InferError::BadArgument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if alpha == 1.0 {
        return Ok(0.0);
    }
    if alpha == 0.0 {
        return Ok(f64::INFINITY);
    }
    let k = dof / 2.0;
    let target = 1.0 - alpha;
    let cdf = |x: f64| gamma_lr(k, x / 2.0);
    let ln_norm = k * std::f64::consts::LN_2 + ln_gamma(k);
    let pdf = |x: f64| ((k - 1.0) * x.ln() - x / 2.0 - ln_norm).exp();
    let (mut lo, mut hi) = (0.0f64, dof.max(1.0));
    while cdf(hi) < target {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = cdf(x) - target;
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = pdf(x);
        let newton = x - f / d;
        let next = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 1e-14 * x.max(1e-300) || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        let q1 = chi2_quantile(1.0, 0.05).unwrap();
        assert!((q1 - 1.959_963_984_540_054f64.powi(2)).abs() < 1e-9);
        let q2 = chi2_quantile(2.0, 0.05).unwrap();
        assert!((q2 + 2.0 * 0.05f64.ln()).abs() < 1e-10);
        assert_eq!(chi2_quantile(3.0, 1.0).unwrap(), 0.0);
        assert!(chi2_quantile(0.0, 0.05).is_err());
        assert!(chi2_quantile(f64::NAN, 0.05).is_err());
        assert!(chi2_quantile(2.0, 1.5).is_err());
    }

    #[test]
    fn inverts_the_cdf() {
        for dof in [0.3, 1.0, 2.7, 10.0, 55.5, 400.0, 1e4] {
            for alpha in [0.5, 0.1, 0.05, 0.01, 1e-6] {
                let x = chi2_quantile(dof, alpha).unwrap();
                let back = gamma_lr(dof / 2.0, x / 2.0);
                assert!((back - (1.0 - alpha)).abs() < 1e-10, "dof {dof} alpha {alpha}: {back}");
            }
        }
    }
}
