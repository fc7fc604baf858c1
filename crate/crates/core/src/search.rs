//! One-dimensional extremum search over an action domain.
//!
//! Continuous domains are sampled on a uniform grid over a finite window,
//! then along doubling radii on each unbounded end; the best grid cells are
//! polished by golden-section search. Integer ranges are enumerated near
//! their finite end and scanned along doubling offsets beyond it. A
//! monotone, non-decelerating trend along an end scan is read as divergence.

use thiserror::Error;

use crate::domain::Domain;
use crate::expr::{Bindings, EvalError, Expr, OverflowSign, Var};
use crate::measures::ExtendedPayoff;

/// Sampling effort for a single search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchBudget {
    /// Uniform grid points across the finite window.
    pub grid: usize,
    /// Half-width of the default window on unbounded domains.
    pub window_half_width: f64,
    /// Radii sampled per unbounded end.
    pub doublings: u32,
    pub golden_iters: usize,
    /// Number of best grid cells polished by golden section.
    pub refine_cells: usize,
    /// Integers enumerated next to the finite end of an unbounded range.
    pub int_window: usize,
    /// Discrete domains up to this size are searched exhaustively.
    pub max_enumerate: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            grid: 257,
            window_half_width: 4.0,
            doublings: 48,
            golden_iters: 40,
            refine_cells: 3,
            int_window: 64,
            max_enumerate: 4096,
        }
    }
}

impl SearchBudget {
    /// Same shape with roughly `factor` times the sampling effort.
    pub fn denser(&self, factor: usize) -> SearchBudget {
        SearchBudget {
            grid: (self.grid - 1) * factor + 1,
            golden_iters: self.golden_iters + 20,
            refine_cells: self.refine_cells + 2,
            int_window: self.int_window * factor,
            ..self.clone()
        }
    }
}

/// Caller knowledge that sharpens a search.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchHints {
    /// Finite window to grid instead of the default one.
    pub window: Option<(f64, f64)>,
    /// Points always sampled (support points, breakpoints, previous optima).
    pub extra_points: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// `Finite`, or the infinity in the search direction.
    pub value: ExtendedPayoff,
    pub argbest: Option<f64>,
    /// Every finite sample taken, sorted by point.
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError<E> {
    #[error(transparent)]
    Objective(E),
    /// Still improving at the largest radius; `best` is the best value seen.
    #[error("search budget exhausted before the extremum was bracketed (best so far {best} at {at})")]
    BudgetExhausted { best: f64, at: f64 },
}

/// Lets the search read overflow signals out of an objective's errors.
pub trait SampleFailure {
    fn overflow(&self) -> Option<OverflowSign>;
}

impl SampleFailure for EvalError {
    fn overflow(&self) -> Option<OverflowSign> {
        match self {
            EvalError::Overflow(s) => Some(*s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sense {
    Max,
    Min,
}

enum Sample {
    Score(f64),
    Unbounded,
    Skip,
}

struct Run<'f, F> {
    f: &'f mut F,
    sense: Sense,
    samples: Vec<(f64, f64)>,
    best: Option<(f64, f64)>,
}

impl<F, E> Run<'_, F>
where
    F: FnMut(f64) -> Result<ExtendedPayoff, E>,
    E: SampleFailure,
{
    fn score_of(&self, v: f64) -> f64 {
        match self.sense {
            Sense::Max => v,
            Sense::Min => -v,
        }
    }

    fn sample(&mut self, t: f64) -> Result<Sample, E> {
        let (good, bad) = match self.sense {
            Sense::Max => (ExtendedPayoff::PlusInfinity, ExtendedPayoff::MinusInfinity),
            Sense::Min => (ExtendedPayoff::MinusInfinity, ExtendedPayoff::PlusInfinity),
        };
        match (self.f)(t) {
            Ok(ExtendedPayoff::Finite(v)) => {
                let s = self.score_of(v);
                self.samples.push((t, v));
                if self.best.is_none_or(|(_, b)| s > b) {
                    self.best = Some((t, s));
                }
                Ok(Sample::Score(s))
            }
            Ok(v) if v == good => Ok(Sample::Unbounded),
            Ok(v) if v == bad => Ok(Sample::Skip),
            Ok(_) => Ok(Sample::Skip),
            Err(e) => match e.overflow() {
                Some(OverflowSign::Positive) if self.sense == Sense::Max => Ok(Sample::Unbounded),
                Some(OverflowSign::Negative) if self.sense == Sense::Min => Ok(Sample::Unbounded),
                Some(_) => Ok(Sample::Skip),
                None => Err(e),
            },
        }
    }

    fn unbounded(&self, at: f64) -> SearchOutcome {
        let value = match self.sense {
            Sense::Max => ExtendedPayoff::PlusInfinity,
            Sense::Min => ExtendedPayoff::MinusInfinity,
        };
        let mut samples = self.samples.clone();
        samples.sort_by(|p, q| p.0.total_cmp(&q.0));
        SearchOutcome {
            value,
            argbest: Some(at),
            samples,
        }
    }
}

/// Outcome of scanning one unbounded end.
enum EndScan {
    Settled,
    Diverges,
    StillRising,
}

fn judge_end(scores: &[f64]) -> EndScan {
    if scores.len() < 5 {
        return EndScan::Settled;
    }
    let tail = &scores[scores.len() - 5..];
    let incs: Vec<f64> = tail.windows(2).map(|w| w[1] - w[0]).collect();
    if incs.iter().all(|d| *d > 0.0) {
        if incs.windows(2).all(|w| w[1] >= 0.9 * w[0]) {
            return EndScan::Diverges;
        }
        let last = tail[4];
        if incs[3] > 1e-6 * last.abs().max(1.0) {
            return EndScan::StillRising;
        }
    }
    EndScan::Settled
}

pub fn maximize<F, E>(
    domain: &Domain,
    f: F,
    hints: &SearchHints,
    budget: &SearchBudget,
) -> Result<SearchOutcome, SearchError<E>>
where
    F: FnMut(f64) -> Result<ExtendedPayoff, E>,
    E: SampleFailure,
{
    search(domain, f, hints, budget, Sense::Max)
}

pub fn minimize<F, E>(
    domain: &Domain,
    f: F,
    hints: &SearchHints,
    budget: &SearchBudget,
) -> Result<SearchOutcome, SearchError<E>>
where
    F: FnMut(f64) -> Result<ExtendedPayoff, E>,
    E: SampleFailure,
{
    search(domain, f, hints, budget, Sense::Min)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || lo == hi {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect()
}

pub(crate) fn default_window(domain: &Domain, hints: &SearchHints, half: f64) -> (f64, f64) {
    let (lo, hi) = (domain.lower(), domain.upper());
    let (wlo, whi) = match hints.window {
        Some((a, b)) if a.is_finite() && b.is_finite() && a <= b => (a, b),
        _ => match (lo.is_finite(), hi.is_finite()) {
            (true, true) => (lo, hi),
            (true, false) => (lo, lo + 2.0 * half),
            (false, true) => (hi - 2.0 * half, hi),
            (false, false) => (-half, half),
        },
    };
    let wlo = wlo.clamp(lo, hi);
    let whi = whi.clamp(lo, hi);
    if wlo <= whi {
        (wlo, whi)
    } else {
        (whi, wlo)
    }
}

fn search<F, E>(
    domain: &Domain,
    mut f: F,
    hints: &SearchHints,
    budget: &SearchBudget,
    sense: Sense,
) -> Result<SearchOutcome, SearchError<E>>
where
    F: FnMut(f64) -> Result<ExtendedPayoff, E>,
    E: SampleFailure,
{
    let mut run = Run {
        f: &mut f,
        sense,
        samples: Vec::new(),
        best: None,
    };
    let mut points: Vec<f64> = Vec::new();
    let mut end_scans: Vec<Vec<(f64, f64)>> = Vec::new();
    let discrete = domain.is_discrete();

    if let Some(all) = domain.enumerate(budget.max_enumerate) {
        points = all;
    } else {
        match domain {
            Domain::FiniteSet(v) => points = v.clone(),
            Domain::IntegerRange { lo, hi } => {
                let lo_f = *lo as f64;
                let hi_f = hi.map_or(f64::INFINITY, |h| h as f64);
                let head_end = (lo_f + budget.int_window as f64 - 1.0).min(hi_f);
                let mut t = lo_f;
                while t <= head_end {
                    points.push(t);
                    t += 1.0;
                }
                if let Some((wlo, whi)) = hints.window {
                    let (wlo, whi) = (wlo.ceil().max(lo_f), whi.floor().min(hi_f));
                    if whi >= wlo {
                        points.extend(linspace(wlo, whi, budget.grid).into_iter().map(f64::round));
                    }
                }
                if hi.is_some() {
                    points.extend(linspace(lo_f, hi_f, budget.grid).into_iter().map(f64::round));
                }
            }
            _ => {
                let (wlo, whi) = default_window(domain, hints, budget.window_half_width);
                points = linspace(wlo, whi, budget.grid);
            }
        }
    }
    for p in &hints.extra_points {
        if p.is_finite() {
            let q = domain.clamp(*p);
            if discrete && !domain.contains(q) {
                continue;
            }
            points.push(q);
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup();

    for &t in &points {
        match run.sample(t).map_err(SearchError::Objective)? {
            Sample::Unbounded => return Ok(run.unbounded(t)),
            Sample::Score(_) | Sample::Skip => {}
        }
    }

    // Unbounded ends.
    let mut still_rising = false;
    let (lo, hi) = (domain.lower(), domain.upper());
    let core_lo = points.first().copied().unwrap_or(0.0);
    let core_hi = points.last().copied().unwrap_or(0.0);
    let width = if discrete {
        budget.int_window as f64
    } else {
        (core_hi - core_lo).max(1.0)
    };
    for (dir, unbounded) in [(-1.0, lo == f64::NEG_INFINITY), (1.0, hi == f64::INFINITY)] {
        if !unbounded {
            continue;
        }
        let anchor = if dir < 0.0 { core_lo } else { core_hi };
        let mut scan = Vec::new();
        let mut scores = Vec::new();
        for k in 0..budget.doublings {
            let mut t = anchor + dir * width * 2f64.powi(k as i32);
            if discrete {
                t = t.round();
                if t.abs() > 9.0e15 {
                    break;
                }
            }
            match run.sample(t).map_err(SearchError::Objective)? {
                Sample::Unbounded => return Ok(run.unbounded(t)),
                Sample::Skip => break,
                Sample::Score(s) => {
                    scan.push((t, s));
                    scores.push(s);
                }
            }
        }
        match judge_end(&scores) {
            EndScan::Diverges => {
                let at = scan.last().map_or(anchor, |p| p.0);
                return Ok(run.unbounded(at));
            }
            EndScan::StillRising => still_rising = true,
            EndScan::Settled => {}
        }
        end_scans.push(scan);
    }

    // Polish the best cells.
    let mut ordered: Vec<(f64, f64)> = run
        .samples
        .iter()
        .map(|&(t, v)| (t, run.score_of(v)))
        .collect();
    ordered.sort_by(|p, q| p.0.total_cmp(&q.0));
    ordered.dedup_by(|p, q| p.0 == q.0);
    let mut ranked: Vec<usize> = (0..ordered.len()).collect();
    ranked.sort_by(|&i, &j| ordered[j].1.total_cmp(&ordered[i].1).then(i.cmp(&j)));
    for &i in ranked.iter().take(budget.refine_cells) {
        let left = if i > 0 { ordered[i - 1].0 } else { ordered[i].0 };
        let right = if i + 1 < ordered.len() { ordered[i + 1].0 } else { ordered[i].0 };
        if right <= left {
            continue;
        }
        if discrete {
            refine_discrete(&mut run, domain, left, right, budget)?;
        } else {
            refine_golden(&mut run, left, right, budget.golden_iters)?;
        }
    }

    let mut samples = std::mem::take(&mut run.samples);
    samples.sort_by(|p, q| p.0.total_cmp(&q.0));
    match run.best {
        None => Ok(SearchOutcome {
            value: ExtendedPayoff::Undefined,
            argbest: None,
            samples,
        }),
        Some((at, score)) => {
            let best = match sense {
                Sense::Max => score,
                Sense::Min => -score,
            };
            if still_rising {
                return Err(SearchError::BudgetExhausted { best, at });
            }
            Ok(SearchOutcome {
                value: ExtendedPayoff::Finite(best),
                argbest: Some(at),
                samples,
            })
        }
    }
}

fn refine_golden<F, E>(run: &mut Run<'_, F>, lo: f64, hi: f64, iters: usize) -> Result<(), SearchError<E>>
where
    F: FnMut(f64) -> Result<ExtendedPayoff, E>,
    E: SampleFailure,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let score = |run: &mut Run<'_, F>, t: f64| -> Result<f64, SearchError<E>> {
        Ok(match run.sample(t).map_err(SearchError::Objective)? {
            Sample::Score(s) => s,
            Sample::Unbounded => f64::INFINITY,
            Sample::Skip => f64::NEG_INFINITY,
        })
    };
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = score(run, c)?;
    let mut fd = score(run, d)?;
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = score(run, c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = score(run, d)?;
        }
    }
    Ok(())
}

fn refine_discrete<F, E>(
    run: &mut Run<'_, F>,
    domain: &Domain,
    lo: f64,
    hi: f64,
    budget: &SearchBudget,
) -> Result<(), SearchError<E>>
where
    F: FnMut(f64) -> Result<ExtendedPayoff, E>,
    E: SampleFailure,
{
    if let Domain::FiniteSet(_) = domain {
        return Ok(());
    }
    let (mut a, mut b) = (lo.ceil(), hi.floor());
    let mut evals = 0;
    while b - a > 8.0 && evals < 2 * budget.golden_iters {
        let c = (a + (b - a) * 0.381_966_011_250_105).round();
        let d = (a + (b - a) * 0.618_033_988_749_895).round();
        let sc = match run.sample(c).map_err(SearchError::Objective)? {
            Sample::Score(s) => s,
            Sample::Unbounded => return Ok(()),
            Sample::Skip => f64::NEG_INFINITY,
        };
        let sd = match run.sample(d).map_err(SearchError::Objective)? {
            Sample::Score(s) => s,
            Sample::Unbounded => return Ok(()),
            Sample::Skip => f64::NEG_INFINITY,
        };
        evals += 2;
        if sc >= sd {
            b = d;
        } else {
            a = c;
        }
    }
    let mut t = a;
    while t <= b {
        run.sample(t).map_err(SearchError::Objective)?;
        t += 1.0;
    }
    Ok(())
}

/// Points along `var` in `[lo, hi]` where some indicator of `expr` flips,
/// for each of the given bindings of the remaining variables. Each crossing
/// contributes its bisected location and two close neighbors.
pub fn indicator_breakpoints(
    expr: &Expr,
    var: Var,
    fixed: &[Bindings],
    lo: f64,
    hi: f64,
    samples: usize,
) -> Vec<f64> {
    const CAP: usize = 256;
    let conditions = expr.indicator_conditions();
    if conditions.is_empty() || !(lo < hi) {
        return Vec::new();
    }
    let grid = linspace(lo, hi, samples.max(3));
    let mut out = Vec::new();
    for env in fixed {
        for (lhs, rhs) in &conditions {
            let g = |t: f64| -> Option<f64> {
                let mut e = *env;
                match var {
                    Var::X => e.x = Some(t),
                    Var::A => e.a = Some(t),
                    Var::B => e.b = Some(t),
                }
                let d = lhs.eval(&e).ok()? - rhs.eval(&e).ok()?;
                d.is_finite().then_some(d)
            };
            let vals: Vec<Option<f64>> = grid.iter().map(|&t| g(t)).collect();
            for i in 0..grid.len() {
                if vals[i] == Some(0.0) {
                    push_crossing(&mut out, grid[i]);
                }
                if i + 1 == grid.len() {
                    break;
                }
                let (Some(gl), Some(gr)) = (vals[i], vals[i + 1]) else {
                    continue;
                };
                if gl.signum() * gr.signum() < 0.0 {
                    let (mut a, mut b) = (grid[i], grid[i + 1]);
                    for _ in 0..64 {
                        let m = 0.5 * (a + b);
                        match g(m) {
                            Some(0.0) => {
                                a = m;
                                b = m;
                                break;
                            }
                            Some(gm) if gm.signum() == gl.signum() => a = m,
                            _ => b = m,
                        }
                    }
                    push_crossing(&mut out, 0.5 * (a + b));
                }
            }
            if out.len() >= CAP {
                break;
            }
        }
    }
    out.retain(|t| *t >= lo && *t <= hi);
    out.sort_by(f64::total_cmp);
    out.dedup();
    out.truncate(CAP);
    out
}

fn push_crossing(out: &mut Vec<f64>, t: f64) {
    let eps = 1e-9 * t.abs().max(1.0);
    out.extend([t - eps, t, t + eps]);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn objective(src: &str) -> impl FnMut(f64) -> Result<ExtendedPayoff, EvalError> {
        let e = parse(src).unwrap();
        move |t| e.eval_ab(t, 0.0).map(ExtendedPayoff::Finite)
    }

    fn fin(o: &SearchOutcome) -> f64 {
        o.value.finite().expect("finite")
    }

    #[test]
    fn concave_maximum_on_real_line() {
        let o = maximize(&Domain::RealLine, objective("-(a-1.3)^2 + 2"), &SearchHints::default(), &SearchBudget::default())
            .unwrap();
        assert!((fin(&o) - 2.0).abs() < 1e-12);
        assert!((o.argbest.unwrap() - 1.3).abs() < 1e-5);
    }

    #[test]
    fn optimum_outside_default_window_is_found() {
        let o = minimize(&Domain::RealLine, objective("(a-37.2)^2"), &SearchHints::default(), &SearchBudget::default())
            .unwrap();
        assert!(fin(&o) < 1e-10, "{:?}", o.value);
    }

    #[test]
    fn linear_growth_diverges() {
        let d = Domain::interval(0.0, f64::INFINITY).unwrap();
        let o = maximize(&d, objective("a"), &SearchHints::default(), &SearchBudget::default()).unwrap();
        assert_eq!(o.value, ExtendedPayoff::PlusInfinity);
        let o = maximize(&Domain::RealLine, objective("log(1+abs(a))"), &SearchHints::default(), &SearchBudget::default())
            .unwrap();
        assert_eq!(o.value, ExtendedPayoff::PlusInfinity);
        let o = minimize(&Domain::RealLine, objective("a^3"), &SearchHints::default(), &SearchBudget::default()).unwrap();
        assert_eq!(o.value, ExtendedPayoff::MinusInfinity);
    }

    #[test]
    fn bounded_increasing_tail_settles() {
        let o = maximize(&Domain::RealLine, objective("-1/(1+a^2)"), &SearchHints::default(), &SearchBudget::default())
            .unwrap();
        let v = fin(&o);
        assert!(v <= 0.0 && v > -1e-20);
    }

    #[test]
    fn overflowing_growth_is_divergence() {
        let d = Domain::integers(1, None).unwrap();
        let o = maximize(&d, objective("6^a"), &SearchHints::default(), &SearchBudget::default()).unwrap();
        assert_eq!(o.value, ExtendedPayoff::PlusInfinity);
        let o = minimize(&d, objective("6^a"), &SearchHints::default(), &SearchBudget::default()).unwrap();
        assert_eq!(fin(&o), 6.0);
    }

    #[test]
    fn finite_sets_and_ranges_are_enumerated() {
        let d = Domain::finite_set(vec![-2.0, 0.5, 3.0]).unwrap();
        let o = maximize(&d, objective("-(a-0.4)^2"), &SearchHints::default(), &SearchBudget::default()).unwrap();
        assert_eq!(o.argbest, Some(0.5));
        let r = Domain::integers(-5, Some(5)).unwrap();
        let o = minimize(&r, objective("(a-2.2)^2"), &SearchHints::default(), &SearchBudget::default()).unwrap();
        assert_eq!(o.argbest, Some(2.0));
    }

    #[test]
    fn integer_minimum_beyond_head_window() {
        let d = Domain::integers(1, None).unwrap();
        let o = minimize(&d, objective("(a-300)^2"), &SearchHints::default(), &SearchBudget::default()).unwrap();
        assert_eq!(o.argbest, Some(300.0));
    }

    #[test]
    fn jump_located_with_breakpoints() {
        let e = parse("b*[b<1] ").unwrap();
        let bps = indicator_breakpoints(&e, Var::B, &[Bindings::ab(0.0, 0.0)], -4.0, 4.0, 33);
        assert!(bps.iter().any(|t| (t - 1.0).abs() < 1e-12));
        let mut f = |t: f64| e.eval_ab(0.0, t).map(ExtendedPayoff::Finite);
        let hints = SearchHints {
            window: None,
            extra_points: bps,
        };
        let o = maximize(&Domain::interval(-4.0, 4.0).unwrap(), &mut f, &hints, &SearchBudget::default()).unwrap();
        assert!((fin(&o) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn domain_errors_propagate() {
        let r = maximize(&Domain::interval(-1.0, 1.0).unwrap(), objective("1/a"), &SearchHints::default(), &SearchBudget::default());
        assert!(matches!(r, Err(SearchError::Objective(EvalError::DivisionByZero))));
    }
}
