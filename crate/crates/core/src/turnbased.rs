//! One-step games with perfect information: Player I picks `a` in `A(x)`,
//! then Player II, seeing `a`, picks `b` in `B(x, a)`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::domain::{Domain, DomainError};
use crate::expr::{parse_with_params, Bindings, EvalError, Expr, ParseError, Var};
use crate::matrix_game::{solve_lp, MatrixGame};
use crate::measures::{ExtendedPayoff, MeasureError};
use crate::search::{self, SearchBudget, SearchError, SearchHints, SearchOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TurnError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("a = {a} lies outside A({x})")]
    OutOfConstraint { x: f64, a: f64 },
    #[error("constraint set is empty at x = {x}")]
    EmptyConstraint { x: f64 },
    #[error("x = {x} lies outside the state domain")]
    OutsideStateDomain { x: f64 },
    #[error("search budget exhausted; best so far {best} at {at}")]
    BudgetExhausted { best: f64, at: f64 },
}

impl From<SearchError<EvalError>> for TurnError {
    fn from(e: SearchError<EvalError>) -> Self {
        match e {
            SearchError::Objective(e) => TurnError::Eval(e),
            SearchError::BudgetExhausted { best, at } => TurnError::BudgetExhausted { best, at },
        }
    }
}

impl From<SearchError<TurnError>> for TurnError {
    fn from(e: SearchError<TurnError>) -> Self {
        match e {
            SearchError::Objective(e) => e,
            SearchError::BudgetExhausted { best, at } => TurnError::BudgetExhausted { best, at },
        }
    }
}

impl search::SampleFailure for TurnError {
    fn overflow(&self) -> Option<crate::expr::OverflowSign> {
        match self {
            TurnError::Eval(EvalError::Overflow(s)) => Some(*s),
            _ => None,
        }
    }
}

impl From<TurnError> for MeasureError {
    fn from(e: TurnError) -> Self {
        match e {
            TurnError::Eval(e) => MeasureError::Eval(e),
            TurnError::BudgetExhausted { best, at } => MeasureError::BudgetExhausted { best, at },
            other => MeasureError::NonNormalized(other.to_string()),
        }
    }
}

/// Endpoint of a constraint interval.
#[derive(Debug, Clone, PartialEq)]
pub enum Bound {
    NegInf,
    PosInf,
    Expr(Expr),
}

impl Bound {
    /// `-inf`, `inf` or an expression.
    pub fn parse(text: &str, params: &BTreeMap<String, f64>) -> Result<Bound, ParseError> {
        match text.trim() {
            "-inf" => Ok(Bound::NegInf),
            "inf" | "+inf" => Ok(Bound::PosInf),
            t => Ok(Bound::Expr(parse_with_params(t, params)?)),
        }
    }

    fn value(&self, env: &Bindings) -> Result<f64, EvalError> {
        match self {
            Bound::NegInf => Ok(f64::NEG_INFINITY),
            Bound::PosInf => Ok(f64::INFINITY),
            Bound::Expr(e) => e.eval(env),
        }
    }
}

/// A set depending on the state (and, for Player II, on `a`).
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSet {
    Fixed(Domain),
    Interval { lo: Bound, hi: Bound },
    /// Finitely many expression-valued points.
    Points(Vec<Expr>),
}

impl ConstraintSet {
    pub fn at(&self, env: &Bindings) -> Result<Domain, TurnError> {
        let x = env.x.unwrap_or(f64::NAN);
        match self {
            ConstraintSet::Fixed(d) => Ok(d.clone()),
            ConstraintSet::Interval { lo, hi } => {
                let (l, h) = (lo.value(env)?, hi.value(env)?);
                if l > h || l == f64::INFINITY || h == f64::NEG_INFINITY {
                    return Err(TurnError::EmptyConstraint { x });
                }
                Ok(Domain::from_bounds(l, h)?)
            }
            ConstraintSet::Points(pts) => {
                let vals = pts.iter().map(|p| p.eval(env)).collect::<Result<Vec<f64>, _>>()?;
                Domain::finite_set(vals).map_err(|_| TurnError::EmptyConstraint { x })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialGame {
    pub x_domain: Domain,
    pub phi_a: ConstraintSet,
    pub phi_b: ConstraintSet,
    /// Loss of Player I, over `(x, a, b)`.
    pub f: Expr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveSettings {
    pub tie_tol: f64,
    /// Worst-loss samples kept per record.
    pub keep_samples: usize,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            tie_tol: 1e-6,
            keep_samples: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimaxRecord {
    pub x: f64,
    pub v_sharp: ExtendedPayoff,
    /// One representative per cluster of near-minimizers.
    pub argmin_a_set: Vec<f64>,
    pub argmin_a_clusters: Vec<(f64, f64)>,
    /// Thinned `(a, worst_loss(a))` samples.
    pub worst_loss_samples: Vec<(f64, f64)>,
    pub argmax_b_for_best_a: Vec<f64>,
    pub argmax_b_clusters: Vec<(f64, f64)>,
}

fn window_of(domain: &Domain, budget: &SearchBudget) -> (f64, f64) {
    search::default_window(domain, &SearchHints::default(), budget.window_half_width)
}

fn inner_search(g: &SequentialGame, x: f64, a: f64, budget: &SearchBudget) -> Result<(Domain, SearchOutcome), TurnError> {
    let b_dom = g.phi_b.at(&Bindings { x: Some(x), a: Some(a), b: None })?;
    let (lo, hi) = window_of(&b_dom, budget);
    let fixed = [Bindings {
        x: Some(x),
        a: Some(a),
        b: None,
    }];
    let hints = SearchHints {
        window: None,
        extra_points: search::indicator_breakpoints(&g.f, Var::B, &fixed, lo, hi, budget.grid),
    };
    let out = search::maximize(
        &b_dom,
        |b| g.f.eval(&Bindings::xab(x, a, b)).map(ExtendedPayoff::Finite),
        &hints,
        budget,
    )?;
    Ok((b_dom, out))
}

fn check_state(g: &SequentialGame, x: f64) -> Result<(), TurnError> {
    if !g.x_domain.contains_within(x, 1e-12) {
        return Err(TurnError::OutsideStateDomain { x });
    }
    Ok(())
}

/// `sup_b f(x, a, b)` over `B(x, a)`.
pub fn worst_loss(g: &SequentialGame, x: f64, a: f64, budget: &SearchBudget) -> Result<ExtendedPayoff, TurnError> {
    check_state(g, x)?;
    let a_dom = g.phi_a.at(&Bindings::x(x))?;
    if !a_dom.contains_within(a, 1e-9) {
        return Err(TurnError::OutOfConstraint { x, a });
    }
    Ok(inner_search(g, x, a, budget)?.1.value)
}

/// Near-optimal samples grouped into clusters; gaps below `merge` join.
fn clusters(samples: &[(f64, f64)], best: f64, tie_tol: f64, merge: f64, argbest: Option<f64>) -> (Vec<f64>, Vec<(f64, f64)>) {
    let mut ties: Vec<(f64, f64)> = samples.iter().copied().filter(|s| (s.1 - best).abs() <= tie_tol).collect();
    if let Some(p) = argbest {
        if !ties.iter().any(|s| s.0 == p) {
            ties.push((p, best));
        }
    }
    ties.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut reps = Vec::new();
    let mut boxes: Vec<(f64, f64)> = Vec::new();
    let mut groups: Vec<Vec<(f64, f64)>> = Vec::new();
    for s in ties {
        match boxes.last_mut() {
            Some(bx) if s.0 - bx.1 < merge => {
                bx.1 = s.0;
                groups.last_mut().expect("parallel").push(s);
            }
            _ => {
                boxes.push((s.0, s.0));
                groups.push(vec![s]);
            }
        }
    }
    for grp in &groups {
        let pick = match argbest.filter(|p| grp.iter().any(|s| s.0 == *p)) {
            Some(p) => p,
            None => grp
                .iter()
                .min_by(|p, q| (p.1 - best).abs().total_cmp(&(q.1 - best).abs()))
                .expect("nonempty")
                .0,
        };
        reps.push(pick);
    }
    (reps, boxes)
}

fn merge_width(domain: &Domain, budget: &SearchBudget) -> f64 {
    if domain.is_discrete() {
        return 1.5;
    }
    let (lo, hi) = window_of(domain, budget);
    2.0 * (hi - lo) / (budget.grid.max(2) - 1) as f64
}

fn thin(samples: &[(f64, f64)], keep: usize) -> Vec<(f64, f64)> {
    if samples.len() <= keep || keep < 2 {
        return samples.to_vec();
    }
    (0..keep).map(|k| samples[k * (samples.len() - 1) / (keep - 1)]).collect()
}

/// `inf_a sup_b f(x, a, b)` with the solution sets of both movers.
pub fn minimax(g: &SequentialGame, x: f64, budget: &SearchBudget, settings: &SolveSettings) -> Result<MinimaxRecord, TurnError> {
    check_state(g, x)?;
    let a_dom = g.phi_a.at(&Bindings::x(x))?;
    let outer = search::minimize(
        &a_dom,
        |a| inner_search(g, x, a, budget).map(|(_, o)| o.value),
        &SearchHints::default(),
        budget,
    )?;
    let mut record = MinimaxRecord {
        x,
        v_sharp: outer.value,
        argmin_a_set: Vec::new(),
        argmin_a_clusters: Vec::new(),
        worst_loss_samples: thin(&outer.samples, settings.keep_samples),
        argmax_b_for_best_a: Vec::new(),
        argmax_b_clusters: Vec::new(),
    };
    if let ExtendedPayoff::Finite(v) = outer.value {
        let (reps, boxes) = clusters(&outer.samples, v, settings.tie_tol, merge_width(&a_dom, budget), outer.argbest);
        record.argmin_a_set = reps;
        record.argmin_a_clusters = boxes;
        if let Some(a_best) = outer.argbest {
            let (b_dom, inner) = inner_search(g, x, a_best, budget)?;
            if let ExtendedPayoff::Finite(w) = inner.value {
                let (reps, boxes) = clusters(&inner.samples, w, settings.tie_tol, merge_width(&b_dom, budget), inner.argbest);
                record.argmax_b_for_best_a = reps;
                record.argmax_b_clusters = boxes;
            }
        }
    }
    Ok(record)
}

/// Records for many states, computed in parallel and returned in input order.
pub fn minimax_batch(
    g: &SequentialGame,
    xs: &[f64],
    budget: &SearchBudget,
    settings: &SolveSettings,
) -> Vec<Result<MinimaxRecord, TurnError>> {
    xs.par_iter().map(|&x| minimax(g, x, budget, settings)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PureSufficiencyReport {
    pub x: f64,
    pub v_sharp: f64,
    pub samples: usize,
    /// Largest excess of a mixed reply of II over the pure worst loss.
    pub max_violation_b: f64,
    /// Largest shortfall of a mixed choice of I below the pure minimax.
    pub max_violation_a: f64,
    /// LP value of the flattened game when every set is finite and small.
    pub lp_value: Option<f64>,
    pub passed: bool,
}

const SUFFICIENCY_TOL: f64 = 1e-7;
const DISCRETE_POINTS: usize = 101;
const MAX_POLICIES: usize = 4096;

fn discretize(domain: &Domain, budget: &SearchBudget) -> Vec<f64> {
    if let Some(all) = domain.enumerate(DISCRETE_POINTS) {
        return all;
    }
    let (lo, hi) = window_of(domain, budget);
    let mut pts: Vec<f64> = (0..DISCRETE_POINTS)
        .map(|k| domain.clamp(lo + (hi - lo) * k as f64 / (DISCRETE_POINTS - 1) as f64))
        .collect();
    pts.dedup();
    pts
}

fn random_mixture(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, f64)> {
    let k = rng.gen_range(1..=n.min(5));
    let mut atoms: Vec<(usize, f64)> = (0..k).map(|_| (rng.gen_range(0..n), rng.gen_range(0.01..1.0))).collect();
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    for a in &mut atoms {
        a.1 /= total;
    }
    atoms
}

/// Samples mixed strategies of both movers on discretized constraint sets and
/// measures how far any of them improves on the pure optimum.
pub fn check_pure_sufficiency(
    g: &SequentialGame,
    x: f64,
    n_mixed_samples: usize,
    seed: u64,
    budget: &SearchBudget,
) -> Result<PureSufficiencyReport, TurnError> {
    let record = minimax(g, x, budget, &SolveSettings::default())?;
    let v = match record.v_sharp {
        ExtendedPayoff::Finite(v) => v,
        _ => return Err(TurnError::BudgetExhausted { best: record.v_sharp.to_f64(), at: x }),
    };
    let a_dom = g.phi_a.at(&Bindings::x(x))?;
    let a_pts = discretize(&a_dom, budget);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Vec<Option<f64>> = vec![None; a_pts.len()];
    let (mut vb, mut va) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..n_mixed_samples {
        let i = rng.gen_range(0..a_pts.len());
        let a = a_pts[i];
        let (b_dom, inner) = inner_search(g, x, a, budget)?;
        let pure = inner.value.to_f64();
        worst[i] = Some(pure);
        let b_pts = discretize(&b_dom, budget);
        let mix = random_mixture(&mut rng, b_pts.len());
        let mut mixed = 0.0;
        for (j, w) in &mix {
            mixed += w * g.f.eval(&Bindings::xab(x, a, b_pts[*j]))?;
        }
        if pure.is_finite() {
            vb = vb.max(mixed - pure);
        }
        let mix = random_mixture(&mut rng, a_pts.len());
        let mut mixed = 0.0;
        for (k, w) in &mix {
            let wl = match worst[*k] {
                Some(v) => v,
                None => {
                    let v = inner_search(g, x, a_pts[*k], budget)?.1.value.to_f64();
                    worst[*k] = Some(v);
                    v
                }
            };
            mixed += w * wl;
        }
        if mixed.is_finite() {
            va = va.max(v - mixed);
        }
    }
    let lp_value = flattened_lp(g, x)?;
    let lp_ok = lp_value.is_none_or(|lp| (lp - v).abs() <= 1e-9 * v.abs().max(1.0));
    Ok(PureSufficiencyReport {
        x,
        v_sharp: v,
        samples: n_mixed_samples,
        max_violation_b: vb.max(0.0),
        max_violation_a: va.max(0.0),
        lp_value,
        passed: vb <= SUFFICIENCY_TOL && va <= SUFFICIENCY_TOL && lp_ok,
    })
}

/// Value of the simultaneous game in which II commits to a reply policy
/// `a -> b` in advance; it equals the pure minimax for finite sets.
fn flattened_lp(g: &SequentialGame, x: f64) -> Result<Option<f64>, TurnError> {
    let a_dom = g.phi_a.at(&Bindings::x(x))?;
    let Some(a_pts) = a_dom.enumerate(64) else { return Ok(None) };
    let mut replies = Vec::with_capacity(a_pts.len());
    let mut count: usize = 1;
    for &a in &a_pts {
        let b_dom = g.phi_b.at(&Bindings { x: Some(x), a: Some(a), b: None })?;
        let Some(b_pts) = b_dom.enumerate(64) else { return Ok(None) };
        count = count.saturating_mul(b_pts.len());
        if count > MAX_POLICIES {
            return Ok(None);
        }
        replies.push(b_pts);
    }
    let mut rows = vec![Vec::with_capacity(count); a_pts.len()];
    for p in 0..count {
        let mut rest = p;
        for (i, &a) in a_pts.iter().enumerate() {
            let choices = &replies[i];
            let b = choices[rest % choices.len()];
            rest /= choices.len();
            rows[i].push(g.f.eval(&Bindings::xab(x, a, b))?);
        }
    }
    let game = MatrixGame::from_rows(rows).map_err(|_| TurnError::EmptyConstraint { x })?;
    Ok(solve_lp(&game, 1e-9).ok().map(|s| s.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn interval(lo: &str, hi: &str) -> ConstraintSet {
        let p = BTreeMap::new();
        ConstraintSet::Interval {
            lo: Bound::parse(lo, &p).unwrap(),
            hi: Bound::parse(hi, &p).unwrap(),
        }
    }

    fn game(f: &str, a: ConstraintSet, b: ConstraintSet) -> SequentialGame {
        SequentialGame {
            x_domain: Domain::RealLine,
            phi_a: a,
            phi_b: b,
            f: parse(f).unwrap(),
        }
    }

    #[test]
    fn worst_loss_examples() {
        let budget = SearchBudget::default();
        let g = game("x+a^2-b^2", interval("-inf", "inf"), interval("-1", "1"));
        assert_eq!(worst_loss(&g, 1.0, 2.0, &budget).unwrap(), ExtendedPayoff::Finite(5.0));
        let g = game("x+a^2-b^2", interval("-inf", "inf"), interval("-inf", "inf"));
        assert_eq!(worst_loss(&g, 0.5, -1.0, &budget).unwrap(), ExtendedPayoff::Finite(1.5));
        let g = game("a+b", interval("-inf", "inf"), interval("0", "inf"));
        assert_eq!(worst_loss(&g, 0.0, 0.0, &budget).unwrap(), ExtendedPayoff::PlusInfinity);
        let g = game("a+b", interval("0", "1"), interval("0", "1"));
        assert!(matches!(worst_loss(&g, 0.0, 2.0, &budget), Err(TurnError::OutOfConstraint { .. })));
    }

    #[test]
    fn minimax_examples() {
        let budget = SearchBudget::default();
        let settings = SolveSettings::default();
        let g = game("x+a^2-b^2", interval("-inf", "inf"), interval("-1", "1"));
        let r = minimax(&g, 2.0, &budget, &settings).unwrap();
        assert_eq!(r.v_sharp, ExtendedPayoff::Finite(2.0));
        assert_eq!(r.argmin_a_set, vec![0.0]);
        assert_eq!(r.argmax_b_for_best_a, vec![0.0]);

        let g = game("(a-x)^2-b^2", interval("-inf", "inf"), interval("-1", "1"));
        let r = minimax(&g, 3.0, &budget, &settings).unwrap();
        assert!(r.v_sharp.finite().unwrap().abs() < 1e-9);
        assert_eq!(r.argmin_a_set.len(), 1);
        assert!((r.argmin_a_set[0] - 3.0).abs() < 1e-4);

        let g = game("a^2 + b*[x>0]", interval("-inf", "inf"), interval("0", "1"));
        assert_eq!(minimax(&g, -1.0, &budget, &settings).unwrap().v_sharp, ExtendedPayoff::Finite(0.0));
        assert_eq!(minimax(&g, 0.0, &budget, &settings).unwrap().v_sharp, ExtendedPayoff::Finite(0.0));
        assert_eq!(minimax(&g, 0.05, &budget, &settings).unwrap().v_sharp, ExtendedPayoff::Finite(1.0));
    }

    #[test]
    fn dependent_constraint() {
        // II must answer inside [a - 1, a]; the best reply is b = a - 1.
        let g = game("(a-b)^2 + x", interval("0", "2"), interval("a-1", "a"));
        let r = minimax(&g, 0.5, &SearchBudget::default(), &SolveSettings::default()).unwrap();
        assert_eq!(r.v_sharp, ExtendedPayoff::Finite(1.5));
    }

    #[test]
    fn point_constraints() {
        let p = BTreeMap::new();
        let two = ConstraintSet::Points(vec![parse("x").unwrap(), parse("-x").unwrap()]);
        let g = game("a*b", two, interval("0", "1"));
        let r = minimax(&g, 1.0, &SearchBudget::default(), &SolveSettings::default()).unwrap();
        assert_eq!(r.v_sharp, ExtendedPayoff::Finite(0.0));
        assert_eq!(r.argmin_a_set, vec![-1.0]);
        assert_eq!(Bound::parse("inf", &p).unwrap(), Bound::PosInf);
    }

    #[test]
    fn pure_sufficiency() {
        let budget = SearchBudget::default();
        let g = game("x+a^2-b^2", interval("-inf", "inf"), interval("-1", "1"));
        let rep = check_pure_sufficiency(&g, 2.0, 100, 7, &budget).unwrap();
        assert!(rep.passed, "{rep:?}");
        let fin = game(
            "(a-b)^2 - a",
            ConstraintSet::Fixed(Domain::finite_set(vec![0.0, 1.0, 2.0]).unwrap()),
            ConstraintSet::Fixed(Domain::finite_set(vec![0.0, 2.0]).unwrap()),
        );
        let rep = check_pure_sufficiency(&fin, 0.0, 50, 1, &budget).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert_eq!(rep.lp_value.map(|v| (v - rep.v_sharp).abs() < 1e-9), Some(true));
        let one = game(
            "a+b",
            ConstraintSet::Fixed(Domain::finite_set(vec![1.0]).unwrap()),
            ConstraintSet::Fixed(Domain::finite_set(vec![3.0]).unwrap()),
        );
        let rep = check_pure_sufficiency(&one, 0.0, 10, 1, &budget).unwrap();
        assert_eq!(rep.v_sharp, 4.0);
        assert_eq!(rep.lp_value, Some(4.0));
    }

    #[test]
    fn constant_shift() {
        let budget = SearchBudget::default();
        let settings = SolveSettings::default();
        let g = game("(a-x)^2 - b^2 + a*b", interval("-3", "3"), interval("-1", "1"));
        let h = game("(a-x)^2 - b^2 + a*b + 2.5", interval("-3", "3"), interval("-1", "1"));
        let v = minimax(&g, 0.4, &budget, &settings).unwrap().v_sharp.finite().unwrap();
        let w = minimax(&h, 0.4, &budget, &settings).unwrap().v_sharp.finite().unwrap();
        assert!((w - v - 2.5).abs() < 1e-9);
    }
}
