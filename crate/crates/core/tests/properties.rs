use condmc::estimate::{classical_mc, conditional_mc, MassFunction, RunOptions, SparseCounts};
use condmc::infer::{chi2_quantile, trace_sigma_sq_pairwise, traces};
use condmc::model::builtin;
use condmc::simulate::{simulate_path, Domain, SeedSpec};
use proptest::prelude::*;

fn counts_strategy() -> impl Strategy<Value = Vec<SparseCounts>> {
    (1u32..6, 2usize..30).prop_flat_map(|(m, n)| {
        prop::collection::vec(prop::collection::vec(0i64..8, m as usize), n)
            .prop_map(|fams| fams.into_iter().map(|f| SparseCounts::from_states(f.into_iter().map(|x| vec![x]))).collect())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_and_pairwise_traces_agree(counts in counts_strategy()) {
        let fast = traces(&counts).unwrap();
        let pair = trace_sigma_sq_pairwise(&counts).unwrap();
        prop_assert!(fast.tr_sigma >= 0.0 && fast.tr_sigma_sq >= 0.0);
        prop_assert!((fast.tr_sigma_sq - pair).abs() <= 1e-9 * pair.max(1.0));
        // tr(S^2) <= (tr S)^2 for positive semidefinite S
        prop_assert!(fast.tr_sigma_sq <= fast.tr_sigma * fast.tr_sigma * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn conditional_runs_pool_all_branches(seed in any::<u64>(), n in 1u64..40, m in 1u32..12, hf in 0.0f64..1.0) {
        let net = builtin("birth-death").unwrap();
        let h = hf * net.horizon();
        let run = conditional_mc(&net, n, m, h, SeedSpec::new(seed), &RunOptions::default()).unwrap();
        prop_assert_eq!(run.counts.len() as u64, n);
        prop_assert!(run.counts.iter().all(|c| c.m() == m));
        prop_assert_eq!(run.pmf.total_count(), n * u64::from(m));
        prop_assert!((run.pmf.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_window_is_classical(seed in any::<u64>(), n in 1u64..30) {
        let net = builtin("lotka-volterra").unwrap();
        let s = SeedSpec::new(seed);
        let a = classical_mc(&net, n, s, &RunOptions::default()).unwrap();
        let b = conditional_mc(&net, n, 1, 0.0, s, &RunOptions::default()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn path_integrals_are_additive(seed in any::<u64>(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let net = builtin("toggle").unwrap();
        let t = net.horizon();
        let (lo, hi) = if a < b { (a * t, b * t) } else { (b * t, a * t) };
        let mut rng = SeedSpec::new(seed).stream(Domain::Auxiliary, 0, 0);
        let p = simulate_path(&net, net.initial_state(), 0.0, t, &mut rng).unwrap();
        let whole = p.total_intensity_integral(0.0, t).unwrap();
        let split = p.total_intensity_integral(0.0, lo).unwrap()
            + p.total_intensity_integral(lo, hi).unwrap()
            + p.total_intensity_integral(hi, t).unwrap();
        prop_assert!((whole - split).abs() <= 1e-9 * whole.max(1.0));
        let by_reaction: f64 = (0..net.num_reactions()).map(|r| p.intensity_integral(r, lo, hi).unwrap()).sum();
        prop_assert!((by_reaction - p.total_intensity_integral(lo, hi).unwrap()).abs() <= 1e-9 * by_reaction.max(1.0));
        prop_assert_eq!(p.jumps_in(0.0, t), p.num_jumps());
        prop_assert!(p.state_at(hi).unwrap().iter().all(|&v| v >= 0));
    }

    #[test]
    fn chi2_quantile_is_monotone(dof in 0.2f64..500.0, a in 0.001f64..0.5) {
        let q1 = chi2_quantile(dof, a).unwrap();
        let q2 = chi2_quantile(dof, a / 2.0).unwrap();
        prop_assert!(q1 > 0.0 && q2 > q1);
    }
}
