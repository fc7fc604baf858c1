//! Randomized checks of solver invariants.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saddlekit::catalog::{self, sample_finite_strategy};
use saddlekit::continuous_game::{probe_coercivity, truncate, EndReport, RadiusSchedule};
use saddlekit::matrix_game::{best_pure_response, solve_lp, MatrixGame};
use saddlekit::measures::{expected_payoff, sharp_search, MixedStrategy, Player};
use saddlekit::search::{SearchBudget, SearchHints};
use saddlekit::turnbased::{minimax, worst_loss, SolveSettings};
use saddlekit::{parse, Domain, Expr};

fn matrix(seed: u64, m: usize, n: usize) -> MatrixGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..m).map(|_| (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect()).collect();
    MatrixGame::from_rows(rows).unwrap()
}

fn hints(points: &[Option<f64>]) -> SearchHints {
    SearchHints {
        window: None,
        extra_points: points.iter().flatten().copied().collect(),
    }
}

fn sharp_with(c: &Expr, p: &MixedStrategy, b: &Domain, extra: &[Option<f64>]) -> (f64, Option<f64>) {
    let out = sharp_search(c, p, b, &SearchBudget::default(), &hints(extra)).unwrap();
    (out.value.to_f64(), out.argbest)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn lp_solutions_are_probability_vectors_with_small_residuals(seed in any::<u64>(), m in 1usize..7, n in 1usize..7) {
        let g = matrix(seed, m, n);
        let s = solve_lp(&g, 1e-9).unwrap();
        for p in [&s.row_strategy, &s.col_strategy] {
            prop_assert!(p.iter().all(|&w| w >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        }
        prop_assert!(s.gap <= 1e-9 * 10.0);
        let (_, sharp) = best_pure_response(&g, &s.row_strategy, Player::B).unwrap();
        let (_, flat) = best_pure_response(&g, &s.col_strategy, Player::A).unwrap();
        prop_assert!(flat <= sharp + 1e-12);
        prop_assert!(sharp - flat <= 2e-8);
    }

    #[test]
    fn lp_value_is_shift_and_scale_equivariant(seed in any::<u64>(), alpha in 0.1f64..10.0, beta in -20.0f64..20.0) {
        let g = matrix(seed, 4, 3);
        let s = solve_lp(&g, 1e-9).unwrap();
        let h = g.affine(alpha, beta);
        let t = solve_lp(&h, 1e-9).unwrap();
        prop_assert!((t.value - (alpha * s.value + beta)).abs() <= 1e-8);
        let (upper, lower) = h.duality_bounds(&s.row_strategy, &s.col_strategy);
        prop_assert!(upper - lower <= 1e-9 * alpha.max(1.0) * 10.0);
    }

    #[test]
    fn lp_value_is_antisymmetric_under_swap(seed in any::<u64>(), m in 1usize..6, n in 1usize..6) {
        let g = matrix(seed, m, n);
        let v = solve_lp(&g, 1e-9).unwrap().value;
        let w = solve_lp(&g.swapped(), 1e-9).unwrap().value;
        prop_assert!((v + w).abs() <= 1e-9);
    }

    #[test]
    fn pure_replies_are_as_good_as_mixed_ones(seed in any::<u64>()) {
        let g = matrix(seed, 5, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let raw: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let row: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let (_, pure) = best_pure_response(&g, &row, Player::B).unwrap();
        let reply: Vec<f64> = {
            let r: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
            let t: f64 = r.iter().sum();
            r.iter().map(|w| w / t).collect()
        };
        let mixed: f64 = g.col_payoffs(&row).iter().zip(&reply).map(|(p, q)| p * q).sum();
        prop_assert!(mixed <= pure + 1e-7);
    }

    #[test]
    fn expected_payoff_is_affine_in_the_first_strategy(game in 0usize..9, seed in any::<u64>(), k in 1usize..4) {
        let g = &catalog::games()[game];
        let alpha = [0.25, 0.5, 0.75][k - 1];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p1 = sample_finite_strategy(&g.a_domain, &mut rng, 4);
        let p2 = sample_finite_strategy(&g.a_domain, &mut rng, 4);
        let q = sample_finite_strategy(&g.b_domain, &mut rng, 4);
        let mix = MixedStrategy::mixture(alpha, &p1, &p2).unwrap();
        let lhs = expected_payoff(&g.payoff, &mix, &q).unwrap().finite().unwrap();
        let e1 = expected_payoff(&g.payoff, &p1, &q).unwrap().finite().unwrap();
        let e2 = expected_payoff(&g.payoff, &p2, &q).unwrap().finite().unwrap();
        prop_assert!((lhs - (alpha * e1 + (1.0 - alpha) * e2)).abs() <= 1e-9);
    }

    #[test]
    fn worst_loss_is_midpoint_convex(game in 0usize..9, seed in any::<u64>()) {
        let g = &catalog::games()[game];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p1 = sample_finite_strategy(&g.a_domain, &mut rng, 4);
        let p2 = sample_finite_strategy(&g.a_domain, &mut rng, 4);
        let mid = MixedStrategy::mixture(0.5, &p1, &p2).unwrap();
        let (vm, am) = sharp_with(&g.payoff, &mid, &g.b_domain, &[]);
        let (v1, _) = sharp_with(&g.payoff, &p1, &g.b_domain, &[am]);
        let (v2, _) = sharp_with(&g.payoff, &p2, &g.b_domain, &[am]);
        prop_assert!(vm <= 0.5 * (v1 + v2) + 1e-7, "{} > {}", vm, 0.5 * (v1 + v2));
    }

    #[test]
    fn sequential_minimax_matches_sampled_worst_losses(game in 0usize..5, state in 0usize..4, kappa in -5.0f64..5.0) {
        let entry = &catalog::sequential_games()[game];
        let (g, x) = (&entry.game, entry.states[state]);
        let budget = SearchBudget::default();
        let rec = minimax(g, x, &budget, &SolveSettings::default()).unwrap();
        let v = rec.v_sharp.finite().unwrap();
        let best = rec.worst_loss_samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        prop_assert!(v <= best + 1e-9);
        prop_assert!(best - v <= 1e-6);
        prop_assert!(!rec.argmin_a_set.is_empty());
        for &a in &rec.argmin_a_set {
            let w = worst_loss(g, x, a, &budget).unwrap().finite().unwrap();
            prop_assert!((w - v).abs() <= 1e-6);
        }
        let mut shifted = g.clone();
        shifted.f = parse(&format!("({}) + {}", g.f, kappa)).unwrap();
        let w = minimax(&shifted, x, &budget, &SolveSettings::default()).unwrap().v_sharp.finite().unwrap();
        prop_assert!((w - v - kappa).abs() <= 1e-9);
    }

    #[test]
    fn confirmed_growth_means_increasing_probes(k in 0.1f64..5.0, p in -3.0f64..3.0, m in -2.0f64..2.0) {
        let c = parse(&format!("{k}*(a-({p}))^2 + {m}*a - b^2")).unwrap();
        let cert = probe_coercivity(&c, &Domain::RealLine, &Domain::RealLine, &[0.0], &RadiusSchedule::default());
        prop_assert!(cert.confirmed());
        for end in [&cert.lower, &cert.upper] {
            if let Some(EndReport::GrowthConfirmed { samples }) = end {
                prop_assert!(samples.len() >= 4);
            }
        }
        let lambda = c.eval_ab(cert.a_ref, cert.anchor_b0).unwrap() + 10.0;
        let t = truncate(&c, &cert, lambda).unwrap();
        let (lo, hi) = t.a_box;
        prop_assert!(lo < hi);
        // Exact roots of k(a-p)^2 + m a = lambda.
        let (qa, qb, qc) = (k, m - 2.0 * k * p, k * p * p - lambda);
        let disc = (qb * qb - 4.0 * qa * qc).sqrt();
        let (r1, r2) = ((-qb - disc) / (2.0 * qa), (-qb + disc) / (2.0 * qa));
        prop_assert!(lo <= r1 + 1e-9 && hi >= r2 - 1e-9, "{:?} vs ({r1}, {r2})", t.a_box);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1200))]

    #[test]
    fn guaranteed_gain_never_exceeds_worst_loss(game in 0usize..9, seed in any::<u64>()) {
        let g = &catalog::games()[game];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pa = sample_finite_strategy(&g.a_domain, &mut rng, 4);
        let pb = sample_finite_strategy(&g.b_domain, &mut rng, 4);
        let budget = SearchBudget::default();
        let sharp = saddlekit::measures::c_sharp(&g.payoff, &pa, &g.b_domain, &budget).unwrap().to_f64();
        let flat = saddlekit::measures::c_flat(&g.payoff, &pb, &g.a_domain, &budget).unwrap().to_f64();
        let mid = expected_payoff(&g.payoff, &pa, &pb).unwrap().finite().unwrap();
        prop_assert!(flat <= sharp + 1e-7);
        prop_assert!(flat <= mid + 1e-7 && mid <= sharp + 1e-7);
    }
}
