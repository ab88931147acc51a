mod common;

use abscreen_core::stopping::{
    hypergeom_cdf, simulate_until_stop, statistical_stop, statistical_test, FixedOrder, StopRule, StoppingConfig,
};
use proptest::prelude::*;

#[test]
fn cdf_matches_rational_oracle_exhaustively_to_60() {
    for pool in 0..=60u64 {
        for successes in 0..=pool {
            for draws in (0..=pool).step_by(3) {
                for k in 0..=successes.min(draws) {
                    let got = hypergeom_cdf(k, pool, successes, draws).unwrap();
                    let want = common::to_f64(&common::hypergeom_cdf_exact(k, pool, successes, draws));
                    assert!(
                        (got - want).abs() < 1e-12,
                        "{k} {pool} {successes} {draws}: {got} vs {want}"
                    );
                }
            }
        }
    }
}

#[test]
fn hand_example_against_oracle() {
    let traj: Vec<bool> = std::iter::repeat_n(true, 18)
        .chain(std::iter::repeat_n(false, 381))
        .chain(std::iter::once(true))
        .chain(std::iter::repeat_n(false, 100))
        .collect();
    let from_traj = statistical_stop(&traj, 1000, 0.95, 0.95).unwrap();
    assert_eq!(
        (from_traj.relevant_found, from_traj.screened, from_traj.window),
        (19, 500, 100)
    );

    let t = statistical_test(19, 500, 100, 1000, 0.95, 0.95).unwrap();
    assert_eq!((t.null_remaining, t.pool), (2, 600));
    let want = common::to_f64(&common::hypergeom_cdf_exact(0, 600, 2, 100));
    assert!((t.p_value - want).abs() < 1e-12);
    assert!((want - 500.0 * 499.0 / (600.0 * 599.0)).abs() < 1e-15);
    assert!(!t.stop);
    assert_eq!(t, from_traj);
}

#[test]
fn impossible_null_rejects() {
    // 50 found with target 0.5 needs 101 relevant under the null, more than exist
    let t = statistical_test(50, 60, 10, 100, 0.5, 0.95).unwrap();
    assert!(t.null_remaining > t.pool);
    assert_eq!((t.p_value, t.stop), (0.0, true));
    let t = statistical_test(100, 100, 0, 100, 0.95, 0.95).unwrap();
    assert_eq!(t.p_value, 1.0);
}

#[test]
fn statistical_rule_terminates() {
    for seed in 0..50 {
        let traj = common::noisy_ranking(seed, 300, 0.05, 1.0);
        let config = StoppingConfig {
            rule: StopRule::Statistical,
            ..StoppingConfig::default()
        };
        let out = simulate_until_stop(&traj, &mut FixedOrder::new((0..300).collect()), &config).unwrap();
        assert!(out.screened <= 300);
    }
}

proptest! {
    #[test]
    fn cdf_matches_oracle_up_to_200(pool in 0u64..=200, a in 0.0f64..=1.0, b in 0.0f64..=1.0, c in 0.0f64..=1.0) {
        let successes = (a * pool as f64) as u64;
        let draws = (b * pool as f64) as u64;
        let k = (c * successes.min(draws) as f64) as u64;
        let got = hypergeom_cdf(k, pool, successes, draws).unwrap();
        let want = common::to_f64(&common::hypergeom_cdf_exact(k, pool, successes, draws));
        prop_assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn p_value_non_increasing_in_window(r in 1u64..40, before in 0u64..400, extra in 0u64..400) {
        let n = 1000u64;
        let screened_before = r + before;
        let mut last = f64::INFINITY;
        for w in 0..=extra.min(n - screened_before) {
            let t = statistical_test(r, screened_before + w, w, n, 0.95, 0.95).unwrap();
            prop_assert!(t.null_remaining >= 1);
            prop_assert!(t.p_value <= last + 1e-15);
            last = t.p_value;
        }
    }

    #[test]
    fn consecutive_is_monotone(prefix in proptest::collection::vec(any::<bool>(), 0..60), n in 1usize..20, tail in 0usize..30) {
        let mut traj = prefix;
        let mut was = abscreen_core::stopping::consecutive_stop(&traj, n);
        for _ in 0..tail {
            traj.push(false);
            let now = abscreen_core::stopping::consecutive_stop(&traj, n);
            prop_assert!(!was || now);
            was = now;
        }
    }
}
