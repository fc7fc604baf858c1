//! Bundled games and families with known behavior.

use std::collections::BTreeMap;

use rand::Rng;

use crate::domain::Domain;
use crate::expr::{parse, Expr};
use crate::measures::MixedStrategy;
use crate::paramlab::{linear_grid, DeclaredFlags, GameFamily, Profile};
use crate::turnbased::{Bound, ConstraintSet, SequentialGame};

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogGame {
    pub name: &'static str,
    pub payoff: Expr,
    pub a_domain: Domain,
    pub b_domain: Domain,
}

fn game(name: &'static str, payoff: &str, a: &str, b: &str) -> CatalogGame {
    CatalogGame {
        name,
        payoff: parse(payoff).expect("catalog payoff parses"),
        a_domain: a.parse().expect("catalog domain parses"),
        b_domain: b.parse().expect("catalog domain parses"),
    }
}

/// Games with a value; all are solvable by the continuous solver.
pub fn games() -> Vec<CatalogGame> {
    vec![
        game("quadratic", "a^2-b^2", "reals", "reals"),
        game("shifted_quadratic", "(a-1)^2 - (b+2)^2 + 0.5*a*b", "reals", "reals"),
        game("quartic", "a^4 - b^2 + a*b", "reals", "interval(-1,1)"),
        game("distance", "(a-b)^2", "interval(0,1)", "interval(0,1)"),
        game("abs_distance", "abs(a-b)", "interval(-1,2)", "interval(0,1)"),
        game("capped_distance", "min(abs(a-b), 0.5)", "interval(0,1)", "interval(0,1)"),
        game("bilinear", "a*b", "interval(-1,1)", "interval(-1,1)"),
        game("tilted", "(a-0.3)^2 - (b-0.1)^2 + a*b", "interval(-1,1)", "interval(-1,1)"),
        game("pennies", "[a==b] - [a<b] - [a>b]", "set(0,1)", "set(0,1)"),
    ]
}

pub fn game_named(name: &str) -> Option<CatalogGame> {
    games().into_iter().find(|g| g.name == name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogFamily {
    pub name: &'static str,
    pub family: GameFamily,
    pub profile: Profile,
}

fn interval(lo: &str, hi: &str) -> ConstraintSet {
    let p = BTreeMap::new();
    ConstraintSet::Interval {
        lo: Bound::parse(lo, &p).expect("catalog bound parses"),
        hi: Bound::parse(hi, &p).expect("catalog bound parses"),
    }
}

fn smooth_flags() -> DeclaredFlags {
    DeclaredFlags {
        c_lsc: true,
        c_usc: true,
        a_lsc_mapping: true,
        b_lsc_mapping: true,
        b_compact: true,
        c_bounded_below: false,
        a_coercive_in_a: true,
    }
}

pub fn families() -> Vec<CatalogFamily> {
    let moving = GameFamily::new(
        linear_grid(-2.0, 2.0, 41),
        interval("-inf", "inf"),
        interval("-1", "1"),
        parse("(a-x)^2-b^2").expect("parses"),
        smooth_flags(),
    )
    .expect("valid grid");
    let separable = GameFamily::new(
        linear_grid(0.0, 1.0, 11),
        interval("-inf", "inf"),
        interval("-1", "1"),
        parse("x+a^2-b^2").expect("parses"),
        smooth_flags(),
    )
    .expect("valid grid");
    let switch = GameFamily::new(
        linear_grid(-1.0, 1.0, 41),
        interval("-inf", "inf"),
        interval("0", "1"),
        parse("a^2 + b*[x>0]").expect("parses"),
        DeclaredFlags {
            c_usc: false,
            ..smooth_flags()
        },
    )
    .expect("valid grid");
    vec![
        CatalogFamily {
            name: "moving_target",
            family: moving,
            profile: Profile::Continuity,
        },
        CatalogFamily {
            name: "separable",
            family: separable,
            profile: Profile::Continuity,
        },
        CatalogFamily {
            name: "switch",
            family: switch,
            profile: Profile::Lsc,
        },
    ]
}

pub fn family_named(name: &str) -> Option<CatalogFamily> {
    families().into_iter().find(|f| f.name == name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogSequential {
    pub name: &'static str,
    pub game: SequentialGame,
    /// States used by tests and examples.
    pub states: Vec<f64>,
}

fn points(exprs: &[&str]) -> ConstraintSet {
    ConstraintSet::Points(exprs.iter().map(|e| parse(e).expect("catalog point parses")).collect())
}

fn sequential(name: &'static str, f: &str, phi_a: ConstraintSet, phi_b: ConstraintSet, states: &[f64]) -> CatalogSequential {
    CatalogSequential {
        name,
        game: SequentialGame {
            x_domain: Domain::from_bounds(f64::NEG_INFINITY, f64::INFINITY).expect("real line"),
            phi_a,
            phi_b,
            f: parse(f).expect("catalog payoff parses"),
        },
        states: states.to_vec(),
    }
}

pub fn sequential_games() -> Vec<CatalogSequential> {
    vec![
        sequential("separable", "x+a^2-b^2", interval("-inf", "inf"), interval("-1", "1"), &[0.0, 1.0, 2.0, 3.5]),
        sequential("moving_target", "(a-x)^2-b^2", interval("-inf", "inf"), interval("-1", "1"), &[-2.0, 0.0, 1.5, 3.0]),
        sequential("switch", "a^2 + b*[x>0]", interval("-inf", "inf"), interval("0", "1"), &[-1.0, 0.0, 0.5, 1.0]),
        sequential("coupled", "(a-x)^2 + a*b", interval("x-1", "x+1"), interval("a-1", "a"), &[-1.0, 0.0, 0.7, 2.0]),
        sequential("finite", "abs(a-b) + x*a", points(&["0", "1", "2"]), points(&["a-1", "a+x", "2"]), &[0.25, 0.5, 1.0, 1.5]),
    ]
}

pub fn sequential_named(name: &str) -> Option<CatalogSequential> {
    sequential_games().into_iter().find(|g| g.name == name)
}

/// A random finite-support strategy with up to `max_atoms` atoms in `domain`.
/// Unbounded ends are sampled within 3 of the domain's reference point.
pub fn sample_finite_strategy<R: Rng>(domain: &Domain, rng: &mut R, max_atoms: usize) -> MixedStrategy {
    let k = rng.gen_range(1..=max_atoms.max(1));
    let listed = domain.enumerate(64);
    let r = domain.reference_point();
    let lo = if domain.lower().is_finite() { domain.lower() } else { r - 3.0 };
    let hi = if domain.upper().is_finite() { domain.upper() } else { lo.max(r) + 3.0 };
    let atoms: Vec<(f64, f64)> = (0..k)
        .map(|_| {
            let p = match &listed {
                Some(pts) => pts[rng.gen_range(0..pts.len())],
                None if domain.is_discrete() => domain.clamp(rng.gen_range(lo..=hi).round()),
                None => rng.gen_range(lo..=hi),
            };
            (p, rng.gen_range(0.05..1.0))
        })
        .collect();
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    MixedStrategy::finite(atoms.into_iter().map(|(p, w)| (p, w / total))).expect("normalized")
}
