//! Solver outputs checked against independent reference computations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saddlekit::catalog;
use saddlekit::continuous_game::{solve_report, RefinementBudget};
use saddlekit::matrix_game::{best_pure_response, solve_fictitious_play, solve_lp, MatrixGame};
use saddlekit::measures::{expected_payoff, flat_search, MixedStrategy, Player, Ratio};
use saddlekit::search::{SearchBudget, SearchHints};
use saddlekit::{parse, Domain, Expr};

/// Value of a 2x2 game from its pure saddle or the equalizing mixture.
fn two_by_two_oracle(m: [[f64; 2]; 2]) -> f64 {
    let upper = m.iter().map(|r| r[0].max(r[1])).fold(f64::INFINITY, f64::min);
    let lower = (0..2).map(|j| m[0][j].min(m[1][j])).fold(f64::NEG_INFINITY, f64::max);
    if upper == lower {
        return upper;
    }
    let [[a, b], [c, d]] = m;
    (a * d - b * c) / (a + d - b - c)
}

fn random_game(rng: &mut ChaCha8Rng, m: usize, n: usize) -> MatrixGame {
    let rows = (0..m).map(|_| (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect()).collect();
    MatrixGame::from_rows(rows).unwrap()
}

#[test]
fn lp_matches_support_enumeration_on_two_by_two_games() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let g = random_game(&mut rng, 2, 2);
        let m = [[g.get(0, 0), g.get(0, 1)], [g.get(1, 0), g.get(1, 1)]];
        let lp = solve_lp(&g, 1e-9).unwrap();
        let want = two_by_two_oracle(m);
        assert!((lp.value - want).abs() <= 1e-9, "{m:?}: {} vs {want}", lp.value);
    }
}

#[test]
fn lp_matches_fictitious_play_on_five_by_five_games() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let g = random_game(&mut rng, 5, 5);
        let lp = solve_lp(&g, 1e-9).unwrap();
        let fp = solve_fictitious_play(&g, 200_000);
        assert!((lp.value - fp.value).abs() <= 1e-2, "{} vs {}", lp.value, fp.value);
        let (_, sharp) = best_pure_response(&g, &lp.row_strategy, Player::B).unwrap();
        let (_, flat) = best_pure_response(&g, &lp.col_strategy, Player::A).unwrap();
        assert!(sharp - lp.value <= 1e-8 && lp.value - flat <= 1e-8);
    }
}

fn timing_payoff() -> Expr {
    parse("6^a*4^b*[b<a] - 6^b*4^a*[a<b]").unwrap()
}

#[test]
fn timing_game_closed_form_and_guaranteed_gain() {
    let c = timing_payoff();
    let pb = MixedStrategy::geometric(Ratio::rational(1, 12).unwrap());
    let closed = |a: f64| 5.5 * 6f64.powf(a) - 27.5 * 2f64.powf(a);
    for a in 1..=6 {
        let v = expected_payoff(&c, &MixedStrategy::point(a as f64), &pb).unwrap().finite().unwrap();
        assert!((v - closed(a as f64)).abs() <= 1e-9 * closed(a as f64).abs());
    }
    let enumerated = (1..=50).map(|a| closed(a as f64)).fold(f64::INFINITY, f64::min);
    assert_eq!(enumerated, -22.0);
    let ints = Domain::integers(1, None).unwrap();
    let out = flat_search(&c, &pb, &ints, &SearchBudget::default(), &SearchHints::default()).unwrap();
    assert!((out.value.finite().unwrap() - enumerated).abs() <= 1e-9 * 22.0);
    assert_eq!(out.argbest, Some(1.0));
}

fn dense_value(c: &Expr, a: &Domain, b: &Domain, n: usize) -> f64 {
    let axis = |d: &Domain| -> Vec<f64> {
        if let Some(all) = d.enumerate(n) {
            return all;
        }
        (0..n).map(|k| d.lower() + (d.upper() - d.lower()) * k as f64 / (n - 1) as f64).collect()
    };
    let (rows, cols) = (axis(a), axis(b));
    let mut entries = Vec::with_capacity(rows.len() * cols.len());
    for &x in &rows {
        for &y in &cols {
            entries.push(c.eval_ab(x, y).unwrap());
        }
    }
    let g = MatrixGame::from_flat(rows.len(), cols.len(), entries, rows, cols).unwrap();
    solve_lp(&g, 1e-9).unwrap().value
}

#[test]
fn compact_games_agree_with_a_dense_grid() {
    let tol = 1e-4;
    for g in catalog::games() {
        if !(g.a_domain.is_compact() && g.b_domain.is_compact()) {
            continue;
        }
        let rep = solve_report(&g.payoff, &g.a_domain, &g.b_domain, tol, &RefinementBudget::default()).unwrap();
        assert!(rep.converged, "{}", g.name);
        let dense = dense_value(&g.payoff, &g.a_domain, &g.b_domain, 1025);
        assert!((rep.certificate.value - dense).abs() <= 3.0 * tol, "{}: {} vs {dense}", g.name, rep.certificate.value);
    }
}

#[test]
fn swapped_games_have_negated_values() {
    let tol = 1e-4;
    for g in catalog::games() {
        let budget = RefinementBudget::default();
        let v = solve_report(&g.payoff, &g.a_domain, &g.b_domain, tol, &budget).unwrap();
        let w = solve_report(&g.payoff.swapped_game(), &g.b_domain, &g.a_domain, tol, &budget).unwrap();
        assert!(v.converged && w.converged, "{}", g.name);
        assert!((v.certificate.value + w.certificate.value).abs() <= 2.0 * tol, "{}", g.name);
    }
}
