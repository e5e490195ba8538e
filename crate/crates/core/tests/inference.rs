use condmc::estimate::{conditional_mc, RunOptions};
use condmc::infer::{chi2_quantile, traces, upper_confidence_bound, TraceEstimates};
use condmc::model::builtin;
use condmc::oracle::{joint_prob_bruteforce, mixture_quantile, CmeOptions, DenseSigma, StateBox};
use condmc::simulate::SeedSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn exact_sigma(m: u32, h: f64) -> DenseSigma {
    let net = builtin("birth-death").unwrap();
    let bx = StateBox::range(250).unwrap();
    let jp = joint_prob_bruteforce(&net, &bx, net.initial_state(), net.horizon(), h, &CmeOptions::default()).unwrap();
    DenseSigma::new(&jp.p_t, &jp.a, f64::from(m))
}

#[test]
fn trace_estimates_converge_to_exact_covariance() {
    let (m, h) = (8, 0.2);
    let sigma = exact_sigma(m, h);
    let net = builtin("birth-death").unwrap();
    let run = conditional_mc(&net, 20_000, m, h, SeedSpec::new(21), &RunOptions::default()).unwrap();
    let t = traces(&run.counts).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / b;
    assert!(rel(t.tr_sigma, sigma.trace()) < 0.02, "{} vs {}", t.tr_sigma, sigma.trace());
    assert!(rel(t.tr_sigma_sq, sigma.trace_sq()) < 0.05, "{} vs {}", t.tr_sigma_sq, sigma.trace_sq());
}

#[test]
fn satterthwaite_matches_mixture_quantile() {
    for (m, h) in [(4, 0.1), (16, 0.08), (20, 0.5)] {
        let sigma = exact_sigma(m, h);
        let exact = TraceEstimates {
            n: 1000,
            m,
            tr_sigma: sigma.trace(),
            tr_sigma_sq: sigma.trace_sq(),
        };
        let ci = upper_confidence_bound(&exact, h, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = mixture_quantile(&sigma.eigenvalues, 0.05, 200_000, &mut rng);
        let rel = (ci.u_n - q).abs() / q;
        assert!(rel < 0.03, "(m, h) = ({m}, {h}): U = {} vs mixture quantile {q}", ci.u_n);
    }
}

#[test]
fn single_eigenvalue_reduces_to_chi_square() {
    let t = TraceEstimates {
        n: 10,
        m: 2,
        tr_sigma: 3.0,
        tr_sigma_sq: 9.0,
    };
    let ci = upper_confidence_bound(&t, 0.1, 0.05).unwrap();
    assert!((ci.dof - 1.0).abs() < 1e-12);
    assert!((ci.u_n - 3.0 * chi2_quantile(1.0, 0.05).unwrap()).abs() < 1e-12);
    assert!((ci.bound - ci.u_n / 40.0).abs() < 1e-15);
}
