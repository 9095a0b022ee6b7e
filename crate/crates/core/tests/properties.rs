//! Invariants over randomly drawn problems.

mod common;

use common::random_problem;
use gbridge::bridge::verify_commutation;
use gbridge::oracle::mc_pushforward;
use gbridge::random::{random_spd, rng};
use gbridge::schrodinger_bridge;
use gbridge::sinkhorn::{error_report, gibbs_products, riccati_crosscheck, run_sinkhorn};
use gbridge::spd::{bures_wasserstein, geometric_mean, loewner_le, spectral_norm};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn geometric_mean_solves_riccati(seed in any::<u64>(), d in 1usize..6) {
        let mut g = rng(seed);
        let (u, v) = (random_spd(&mut g, d, 0.2), random_spd(&mut g, d, 0.2));
        let x = geometric_mean(&u, &v).unwrap();
        let lhs = x.matrix() * u.inverse().matrix() * x.matrix();
        let scale = 1.0 + spectral_norm(v.matrix());
        prop_assert!(spectral_norm(&(lhs - v.matrix())) <= 1e-9 * scale);
    }

    #[test]
    fn bures_wasserstein_is_a_metric_on_pairs(seed in any::<u64>(), d in 1usize..6) {
        let mut g = rng(seed);
        let (u, v) = (random_spd(&mut g, d, 0.2), random_spd(&mut g, d, 0.2));
        let uv = bures_wasserstein(&u, &v).unwrap();
        prop_assert!(uv >= -1e-12);
        prop_assert!((uv - bures_wasserstein(&v, &u).unwrap()).abs() <= 1e-9 * (1.0 + uv));
        // the distance is a square root, so roundoff in BW² shows up as its root
        prop_assert!(bures_wasserstein(&u, &u).unwrap().powi(2) <= 1e-12 * (1.0 + u.trace()));
    }

    #[test]
    fn bridge_pins_both_marginals(seed in any::<u64>(), d in 1usize..6) {
        let p = random_problem(seed, d);
        prop_assert!(schrodinger_bridge(&p).unwrap().marginal_residual <= 1e-9);
        prop_assert!(verify_commutation(&p).unwrap().max_residual() <= 1e-8);
    }

    #[test]
    fn sinkhorn_invariants(seed in any::<u64>(), d in 1usize..5) {
        let t = run_sinkhorn(&random_problem(seed, d), 12).unwrap();
        let c = riccati_crosscheck(&t).unwrap();
        prop_assert!(c.marginal_pinning <= 1e-9, "{c:?}");
        prop_assert!(c.gain_identity <= 1e-9, "{c:?}");
        prop_assert!(c.loewner_violation <= 1e-9, "{c:?}");
        prop_assert!(c.envelope_violation <= 1e-9, "{c:?}");
        prop_assert!(c.bayes_residual.iter().all(|r| *r <= 1e-9), "{c:?}");
    }

    #[test]
    fn gibbs_loops_fix_the_marginals(seed in any::<u64>(), d in 1usize..5) {
        let t = run_sinkhorn(&random_problem(seed, d), 10).unwrap();
        for g in gibbs_products(&t).unwrap() {
            prop_assert!(g.mu_fixed_point_residual <= 1e-9, "{g:?}");
            prop_assert!(g.eta_fixed_point_residual.unwrap_or(0.0) <= 1e-9, "{g:?}");
            prop_assert!(g.loop_identity_residual <= 1e-9, "{g:?}");
            prop_assert!(g.floquet_norm <= g.floquet_bound * (1.0 + 1e-9), "{g:?}");
        }
    }

    #[test]
    fn certified_bounds_dominate_errors(seed in any::<u64>(), d in 1usize..5) {
        let t = run_sinkhorn(&random_problem(seed, d), 16).unwrap();
        let rep = error_report(&t, 2.0).unwrap();
        for row in rep.even.iter().chain(&rep.odd) {
            for (actual, bound) in row.certified_pairs() {
                prop_assert!(actual <= bound * (1.0 + 1e-9) + 1e-13, "{row:?}");
            }
        }
    }

    #[test]
    fn loewner_order_is_reflexive(seed in any::<u64>(), d in 1usize..6) {
        let mut g = rng(seed);
        let u = random_spd(&mut g, d, 0.2);
        prop_assert!(loewner_le(u.matrix(), u.matrix(), 1e-12));
        prop_assert!(loewner_le(u.matrix(), &(u.matrix() * 2.0), 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn monte_carlo_is_deterministic_per_seed(seed in any::<u64>(), d in 1usize..4) {
        let p = random_problem(seed, d);
        let s = schrodinger_bridge(&p).unwrap().params.relaxed();
        let a = mc_pushforward(&p.eta, &s, &p.mu, 500, seed).unwrap();
        let b = mc_pushforward(&p.eta, &s, &p.mu, 500, seed).unwrap();
        prop_assert_eq!(a.mean, b.mean);
        prop_assert_eq!(a.cov, b.cov);
    }
}
