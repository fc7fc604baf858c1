//! Games on infinite action sets, solved by truncating to level sets of the
//! payoff and refining a grid until the duality gap of the discrete solution,
//! measured against the full domains, falls below tolerance.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::domain::Domain;
use crate::expr::{EvalError, Expr, OverflowSign};
use crate::matrix_game::{solve_lp, MatrixError, MatrixGame, MatrixSolution};
use crate::measures::{flat_search, sharp_search, ExtendedPayoff, MeasureError, MixedStrategy, Player};
use crate::search::{SearchBudget, SearchHints};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContinuousError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("no growth certificate for player {side:?}; the payoff does not look inf-compact on that side")]
    CoercivityUnavailable { side: Player },
    #[error("level {lambda} is below the payoff everywhere on the probe range")]
    LambdaTooSmall { lambda: f64 },
    #[error("refinement budget exhausted with duality gap {:e}", best.eps)]
    BudgetExhausted { best: Box<SaddleCertificate> },
}

/// Finding about one unbounded end of the action domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EndReport {
    GrowthConfirmed { samples: Vec<(f64, f64)> },
    GrowthRefuted { counter: (f64, f64), samples: Vec<(f64, f64)> },
    Inconclusive { samples: Vec<(f64, f64)> },
}

impl EndReport {
    pub fn confirmed(&self) -> bool {
        matches!(self, EndReport::GrowthConfirmed { .. })
    }
}

/// Evidence that `a -> c(a, b0)` grows without bound along every unbounded
/// end of the domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoercivityCertificate {
    pub anchor_b0: f64,
    pub a_ref: f64,
    pub domain: Domain,
    /// `None` when that end is finite.
    pub lower: Option<EndReport>,
    pub upper: Option<EndReport>,
    pub radii: Vec<f64>,
}

impl CoercivityCertificate {
    pub fn confirmed(&self) -> bool {
        self.lower.as_ref().is_none_or(EndReport::confirmed) && self.upper.as_ref().is_none_or(EndReport::confirmed)
    }
}

/// Probe radii `start * 2^k`, `k = 0..doublings`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusSchedule {
    pub start: f64,
    pub doublings: u32,
}

impl Default for RadiusSchedule {
    fn default() -> Self {
        RadiusSchedule {
            start: 1.0,
            doublings: 40,
        }
    }
}

impl RadiusSchedule {
    pub fn radii(&self) -> Vec<f64> {
        (0..self.doublings).map(|k| self.start * 2f64.powi(k as i32)).collect()
    }
}

/// Successive increases needed after the last decrease.
const GROWTH_RUN: usize = 4;

fn sample_growth(c: &Expr, b0: f64, points: &[f64]) -> EndReport {
    let mut samples = Vec::with_capacity(points.len());
    for &a in points {
        match c.eval_ab(a, b0) {
            Ok(v) => samples.push((a, v)),
            Err(EvalError::Overflow(OverflowSign::Positive)) => samples.push((a, f64::INFINITY)),
            Err(EvalError::Overflow(OverflowSign::Negative)) => {
                return EndReport::GrowthRefuted {
                    counter: (a, f64::NEG_INFINITY),
                    samples,
                }
            }
            Err(_) => return EndReport::Inconclusive { samples },
        }
        if samples.last().is_some_and(|s| s.1 == f64::INFINITY) {
            break;
        }
    }
    judge_growth(samples)
}

fn judge_growth(samples: Vec<(f64, f64)>) -> EndReport {
    let n = samples.len();
    if n < 2 {
        return EndReport::Inconclusive { samples };
    }
    let mut run = 0;
    for k in (1..n).rev() {
        if samples[k].1 > samples[k - 1].1 {
            run += 1;
        } else {
            break;
        }
    }
    if run == 0 {
        return EndReport::GrowthRefuted {
            counter: samples[n - 1],
            samples,
        };
    }
    if run < GROWTH_RUN {
        return EndReport::Inconclusive { samples };
    }
    if samples[n - 1].1 == f64::INFINITY {
        return EndReport::GrowthConfirmed { samples };
    }
    // Increments must not collapse the way they do for a bounded limit.
    let incs: Vec<f64> = samples[n - GROWTH_RUN - 1..].windows(2).map(|w| w[1].1 - w[0].1).collect();
    if incs.windows(2).all(|w| w[1] >= 0.5 * w[0]) {
        EndReport::GrowthConfirmed { samples }
    } else {
        EndReport::Inconclusive { samples }
    }
}

fn end_points(domain: &Domain, a_ref: f64, radii: &[f64], downward: bool) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(radii.len());
    for r in radii {
        let a = domain.clamp(if downward { a_ref - r } else { a_ref + r });
        if out.last() != Some(&a) {
            out.push(a);
        }
    }
    out
}

/// Picks the first candidate `b0` along which `c(., b0)` grows on every
/// unbounded end of `a_domain`.
pub fn probe_coercivity(
    c: &Expr,
    a_domain: &Domain,
    b_domain: &Domain,
    candidates_b0: &[f64],
    radii: &RadiusSchedule,
) -> CoercivityCertificate {
    let a_ref = a_domain.reference_point();
    let rs = radii.radii();
    let fallback = b_domain.reference_point();
    let candidates: Vec<f64> = if candidates_b0.is_empty() {
        vec![fallback]
    } else {
        candidates_b0.iter().map(|b| b_domain.clamp(*b)).collect()
    };
    let mut first = None;
    for &b0 in &candidates {
        let lower = (!a_domain.lower().is_finite()).then(|| sample_growth(c, b0, &end_points(a_domain, a_ref, &rs, true)));
        let upper = (!a_domain.upper().is_finite()).then(|| sample_growth(c, b0, &end_points(a_domain, a_ref, &rs, false)));
        let cert = CoercivityCertificate {
            anchor_b0: b0,
            a_ref,
            domain: a_domain.clone(),
            lower,
            upper,
            radii: rs.clone(),
        };
        if cert.confirmed() {
            return cert;
        }
        first.get_or_insert(cert);
    }
    first.expect("at least one candidate")
}

/// Default anchors: the reference point, then `0`, `1`, `-1`.
pub fn default_anchors(domain: &Domain) -> Vec<f64> {
    let mut out = Vec::new();
    for v in [domain.reference_point(), 0.0, 1.0, -1.0] {
        let v = domain.clamp(v);
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelTruncation {
    pub lambda: f64,
    pub a_box: (f64, f64),
    /// `[b0, b0]` from [`truncate`]; the solver replaces it with the
    /// truncation of the swapped game, or the hull of a compact B domain.
    pub b_box: (f64, f64),
}

const BISECTION_STEPS: usize = 64;

/// Samples used to locate the level set: a dense grid near the reference
/// point and the growth radii on either side.
fn level_samples(cert: &CoercivityCertificate) -> Vec<f64> {
    let d = &cert.domain;
    let mut pts: Vec<f64> = (0..=64).map(|k| d.clamp(cert.a_ref - 1.0 + k as f64 / 32.0)).collect();
    for r in &cert.radii {
        pts.push(d.clamp(cert.a_ref - r));
        pts.push(d.clamp(cert.a_ref + r));
    }
    if d.lower().is_finite() {
        pts.push(d.lower());
    }
    if d.upper().is_finite() {
        pts.push(d.upper());
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn level_value(c: &Expr, a: f64, b0: f64) -> Result<f64, ContinuousError> {
    match c.eval_ab(a, b0) {
        Ok(v) => Ok(v),
        Err(EvalError::Overflow(OverflowSign::Positive)) => Ok(f64::INFINITY),
        Err(e) => Err(e.into()),
    }
}

/// Boundary of `{c(., b0) <= lambda}` between an inside point and an outside one.
fn bisect_level(c: &Expr, b0: f64, lambda: f64, mut inside: f64, mut outside: f64, discrete: bool) -> Result<f64, ContinuousError> {
    for _ in 0..BISECTION_STEPS {
        if discrete && (outside - inside).abs() <= 1.0 {
            break;
        }
        let mid = 0.5 * (inside + outside);
        let mid = if discrete { mid.round() } else { mid };
        if mid == inside || mid == outside {
            break;
        }
        if level_value(c, mid, b0)? <= lambda {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    Ok(inside)
}

/// Box containing the level set `{a : c(a, b0) <= lambda}` over the probe range.
pub fn truncate(c: &Expr, cert: &CoercivityCertificate, lambda: f64) -> Result<LevelTruncation, ContinuousError> {
    let pts = level_samples(cert);
    let b0 = cert.anchor_b0;
    let mut inside = Vec::with_capacity(pts.len());
    for &a in &pts {
        inside.push(level_value(c, a, b0)? <= lambda);
    }
    let first = inside.iter().position(|v| *v);
    let last = inside.iter().rposition(|v| *v);
    let (Some(first), Some(last)) = (first, last) else {
        return Err(ContinuousError::LambdaTooSmall { lambda });
    };
    let discrete = cert.domain.is_discrete();
    let lo = if cert.domain.lower().is_finite() || first == 0 {
        if cert.domain.lower().is_finite() {
            cert.domain.lower()
        } else {
            pts[0]
        }
    } else {
        bisect_level(c, b0, lambda, pts[first], pts[first - 1], discrete)?
    };
    let hi = if cert.domain.upper().is_finite() || last == pts.len() - 1 {
        if cert.domain.upper().is_finite() {
            cert.domain.upper()
        } else {
            pts[pts.len() - 1]
        }
    } else {
        bisect_level(c, b0, lambda, pts[last], pts[last + 1], discrete)?
    };
    Ok(LevelTruncation {
        lambda,
        a_box: (lo, hi),
        b_box: (b0, b0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleCertificate {
    #[serde(rename = "piA")]
    pub pi_a: MixedStrategy,
    #[serde(rename = "piB")]
    pub pi_b: MixedStrategy,
    pub value: f64,
    pub eps: f64,
    /// `c_sharp(piA) - value`.
    pub sharp_minus_value: f64,
    /// `value - c_flat(piB)`.
    pub value_minus_flat: f64,
    pub sharp: ExtendedPayoff,
    pub flat: ExtendedPayoff,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementBudget {
    pub max_refine: usize,
    pub n0: usize,
    pub n_max: usize,
    /// Overrides the first truncation level of both players.
    pub lambda0: Option<f64>,
    #[serde(skip)]
    pub search: SearchBudget,
    #[serde(skip)]
    pub radii: RadiusSchedule,
}

impl Default for RefinementBudget {
    fn default() -> Self {
        RefinementBudget {
            max_refine: 12,
            n0: 33,
            n_max: 1025,
            lambda0: None,
            search: SearchBudget::default(),
            radii: RadiusSchedule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lambda_a: Option<f64>,
    pub lambda_b: Option<f64>,
    pub a_box: (f64, f64),
    pub b_box: (f64, f64),
    pub grid: (usize, usize),
    pub lp_value: f64,
    pub eps: f64,
    /// Smallest gap over this and all earlier iterations.
    pub best_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub certificate: SaddleCertificate,
    pub converged: bool,
    pub tol: f64,
    pub iterations: Vec<IterationRecord>,
    pub a_coercivity: Option<CoercivityCertificate>,
    pub b_coercivity: Option<CoercivityCertificate>,
}

/// Per-player state of the truncation schedule.
struct Side {
    domain: Domain,
    cert: Option<CoercivityCertificate>,
    c_side: Expr,
    base: f64,
    offset: f64,
    lambda0: Option<f64>,
    extra: Vec<f64>,
}

const MAX_EXTRA: usize = 256;

impl Side {
    fn lambda(&self) -> Option<f64> {
        self.cert.as_ref()?;
        Some(match self.lambda0 {
            Some(l0) => l0 + (self.offset - 1.0),
            None => self.base + self.offset,
        })
    }

    fn grow(&mut self) {
        self.offset = 2.0 * self.offset + 1.0;
    }

    fn current_box(&self) -> Result<(f64, f64), ContinuousError> {
        match (&self.cert, self.lambda()) {
            (Some(cert), Some(lambda)) => Ok(truncate(&self.c_side, cert, lambda)?.a_box),
            _ => Ok((self.domain.lower(), self.domain.upper())),
        }
    }

    fn push_extra(&mut self, p: f64) {
        if self.domain.contains(p) && !self.extra.contains(&p) {
            self.extra.push(p);
            if self.extra.len() > MAX_EXTRA {
                self.extra.remove(0);
            }
        }
    }
}

fn widen(domain: &Domain, (lo, hi): (f64, f64), tol: f64) -> (f64, f64) {
    if lo < hi || domain.is_discrete() {
        return (lo, hi);
    }
    (domain.clamp(lo - tol), domain.clamp(hi + tol))
}

/// Grid points of `domain` inside `bx` with about `n` points, plus `extra`.
fn axis_points(domain: &Domain, bx: (f64, f64), n: usize, extra: &[f64], max_enumerate: usize) -> Vec<f64> {
    let mut pts = match domain.enumerate(max_enumerate) {
        Some(all) if all.len() <= n.max(2) * 4 => all,
        _ => match domain {
            Domain::FiniteSet(all) => {
                let inside: Vec<f64> = all.iter().copied().filter(|p| *p >= bx.0 && *p <= bx.1).collect();
                thin(&inside, n)
            }
            Domain::IntegerRange { .. } => {
                let lo = bx.0.ceil() as i64;
                let hi = bx.1.floor() as i64;
                let count = (hi - lo + 1).max(1) as usize;
                if count <= n {
                    (lo..=hi).map(|k| k as f64).collect()
                } else {
                    (0..n)
                        .map(|k| (lo as f64 + (hi - lo) as f64 * k as f64 / (n - 1) as f64).round())
                        .collect()
                }
            }
            _ => {
                if bx.0 == bx.1 {
                    vec![bx.0]
                } else {
                    let step = (bx.1 - bx.0) / (n - 1) as f64;
                    (0..n).map(|k| if k == n - 1 { bx.1 } else { bx.0 + step * k as f64 }).collect()
                }
            }
        },
    };
    pts.extend(extra.iter().copied());
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn thin(pts: &[f64], n: usize) -> Vec<f64> {
    if pts.len() <= n {
        return pts.to_vec();
    }
    (0..n).map(|k| pts[k * (pts.len() - 1) / (n - 1)]).collect()
}

fn assemble(c: &Expr, rows: &[f64], cols: &[f64]) -> Result<MatrixGame, ContinuousError> {
    let n = cols.len();
    let mut entries = vec![0.0; rows.len() * n];
    entries
        .par_chunks_mut(n)
        .zip(rows.par_iter())
        .try_for_each(|(out, &a)| -> Result<(), EvalError> {
            for (slot, &b) in out.iter_mut().zip(cols) {
                *slot = c.eval_ab(a, b)?;
            }
            Ok(())
        })?;
    Ok(MatrixGame::from_flat(rows.len(), n, entries, rows.to_vec(), cols.to_vec())?)
}

fn lp_or_best(g: &MatrixGame) -> Result<MatrixSolution, ContinuousError> {
    match solve_lp(g, 1e-9) {
        Ok(s) => Ok(s),
        Err(MatrixError::NumericalFailure { best, .. }) => Ok(*best),
        Err(e) => Err(e.into()),
    }
}

/// Evaluates both strategies against the full domains. Grid points join the
/// search so the reported bounds dominate the discrete ones.
fn certify(
    c: &Expr,
    pi_a: MixedStrategy,
    pi_b: MixedStrategy,
    lp_value: f64,
    a_domain: &Domain,
    b_domain: &Domain,
    grids: (&[f64], &[f64]),
    windows: ((f64, f64), (f64, f64)),
    budget: &SearchBudget,
) -> Result<(SaddleCertificate, Option<f64>, Option<f64>), ContinuousError> {
    let b_hints = SearchHints {
        window: Some(windows.1),
        extra_points: grids.1.to_vec(),
    };
    let a_hints = SearchHints {
        window: Some(windows.0),
        extra_points: grids.0.to_vec(),
    };
    let sharp = sharp_search(c, &pi_a, b_domain, budget, &b_hints)?;
    let flat = flat_search(c, &pi_b, a_domain, budget, &a_hints)?;
    let (s, f) = (sharp.value.to_f64(), flat.value.to_f64());
    let eps = if s.is_nan() || f.is_nan() { f64::INFINITY } else { (s - f).max(0.0) };
    let value = if s.is_finite() && f.is_finite() { lp_value.clamp(f.min(s), s.max(f)) } else { lp_value };
    let cert = SaddleCertificate {
        pi_a,
        pi_b,
        value,
        eps,
        sharp_minus_value: s - value,
        value_minus_flat: value - f,
        sharp: sharp.value,
        flat: flat.value,
    };
    Ok((cert, flat.argbest, sharp.argbest))
}

fn coercivity_for(
    c: &Expr,
    own: &Domain,
    other: &Domain,
    side: Player,
    radii: &RadiusSchedule,
) -> Result<Option<CoercivityCertificate>, ContinuousError> {
    if own.is_compact() {
        return Ok(None);
    }
    let cert = probe_coercivity(c, own, other, &default_anchors(other), radii);
    if !cert.confirmed() {
        return Err(ContinuousError::CoercivityUnavailable { side });
    }
    Ok(Some(cert))
}

/// Runs the truncate-grid-solve-certify loop and reports every iteration.
pub fn solve_report(
    c: &Expr,
    a_domain: &Domain,
    b_domain: &Domain,
    tol: f64,
    budget: &RefinementBudget,
) -> Result<SolveReport, ContinuousError> {
    let swapped = c.swapped_game();
    let a_cert = coercivity_for(c, a_domain, b_domain, Player::A, &budget.radii)?;
    let b_cert = coercivity_for(&swapped, b_domain, a_domain, Player::B, &budget.radii)?;
    let base = |cert: &Option<CoercivityCertificate>, f: &Expr| -> Result<f64, ContinuousError> {
        match cert {
            Some(k) => Ok(f.eval_ab(k.a_ref, k.anchor_b0)?),
            None => Ok(0.0),
        }
    };
    let mut sa = Side {
        domain: a_domain.clone(),
        base: base(&a_cert, c)?,
        cert: a_cert.clone(),
        c_side: c.clone(),
        offset: 1.0,
        lambda0: budget.lambda0,
        extra: Vec::new(),
    };
    let mut sb = Side {
        domain: b_domain.clone(),
        base: base(&b_cert, &swapped)?,
        cert: b_cert.clone(),
        c_side: swapped,
        offset: 1.0,
        lambda0: budget.lambda0,
        extra: Vec::new(),
    };

    let mut n = budget.n0.max(2);
    let mut iterations = Vec::new();
    let mut best: Option<SaddleCertificate> = None;
    let mut converged = false;
    for iteration in 0..budget.max_refine.max(1) {
        let a_box = widen(a_domain, grow_until_valid(&mut sa)?, tol);
        let b_box = widen(b_domain, grow_until_valid(&mut sb)?, tol);
        let rows = axis_points(a_domain, a_box, n, &sa.extra, budget.search.max_enumerate);
        let cols = axis_points(b_domain, b_box, n, &sb.extra, budget.search.max_enumerate);
        let game = assemble(c, &rows, &cols)?;
        let lp = lp_or_best(&game)?;
        let pi_a = MixedStrategy::from_weights(&rows, &lp.row_strategy, 1e-12)?;
        let pi_b = MixedStrategy::from_weights(&cols, &lp.col_strategy, 1e-12)?;
        let (cert, a_star, b_star) = certify(
            c,
            pi_a,
            pi_b,
            lp.value,
            a_domain,
            b_domain,
            (&rows, &cols),
            (a_box, b_box),
            &budget.search,
        )?;
        let eps = cert.eps;
        if best.as_ref().is_none_or(|b| eps < b.eps) {
            best = Some(cert);
        }
        let best_eps = best.as_ref().map_or(f64::INFINITY, |b| b.eps);
        log::debug!("iteration {iteration}: grid {}x{}, eps {eps:e}", rows.len(), cols.len());
        iterations.push(IterationRecord {
            iteration,
            lambda_a: sa.lambda(),
            lambda_b: sb.lambda(),
            a_box,
            b_box,
            grid: (rows.len(), cols.len()),
            lp_value: lp.value,
            eps,
            best_eps,
        });
        if best_eps <= tol {
            converged = true;
            break;
        }
        let outside = |p: Option<f64>, bx: (f64, f64)| p.is_some_and(|p| p < bx.0 - tol || p > bx.1 + tol);
        let (a_out, b_out) = (outside(a_star, a_box), outside(b_star, b_box));
        if a_out && sa.cert.is_some() {
            sa.grow();
        }
        if b_out && sb.cert.is_some() {
            sb.grow();
        }
        if !a_out && !b_out {
            if n >= budget.n_max {
                sa.grow();
                sb.grow();
            }
            n = (2 * n - 1).min(budget.n_max);
        }
        if let Some(a) = a_star {
            sa.push_extra(a);
        }
        if let Some(b) = b_star {
            sb.push_extra(b);
        }
    }
    Ok(SolveReport {
        certificate: best.expect("at least one iteration"),
        converged,
        tol,
        iterations,
        a_coercivity: a_cert,
        b_coercivity: b_cert,
    })
}

fn grow_until_valid(side: &mut Side) -> Result<(f64, f64), ContinuousError> {
    for _ in 0..64 {
        match side.current_box() {
            Ok(b) => return Ok(b),
            Err(ContinuousError::LambdaTooSmall { .. }) => side.grow(),
            Err(e) => return Err(e),
        }
    }
    side.current_box()
}

/// Solves the game to duality gap `tol`, returning the certificate.
pub fn solve(
    c: &Expr,
    a_domain: &Domain,
    b_domain: &Domain,
    tol: f64,
    budget: &RefinementBudget,
) -> Result<SaddleCertificate, ContinuousError> {
    let report = solve_report(c, a_domain, b_domain, tol, budget)?;
    if report.converged {
        Ok(report.certificate)
    } else {
        Err(ContinuousError::BudgetExhausted {
            best: Box::new(report.certificate),
        })
    }
}

/// Recomputes both bounds of the certificate with a denser search.
pub fn verify_saddle(
    c: &Expr,
    cert: &SaddleCertificate,
    a_domain: &Domain,
    b_domain: &Domain,
    tol: f64,
) -> Result<bool, ContinuousError> {
    if tol == f64::INFINITY {
        return Ok(true);
    }
    let budget = SearchBudget::default().denser(4);
    let support = |p: &MixedStrategy| SearchHints {
        window: None,
        extra_points: p.atoms().map(|a| a.iter().map(|x| x.point).collect()).unwrap_or_default(),
    };
    let sharp = sharp_search(c, &cert.pi_a, b_domain, &budget, &support(&cert.pi_b))?.value;
    let flat = flat_search(c, &cert.pi_b, a_domain, &budget, &support(&cert.pi_a))?.value;
    match (sharp, flat) {
        (ExtendedPayoff::Finite(s), ExtendedPayoff::Finite(f)) => Ok(s - f <= tol),
        _ => Ok(false),
    }
}
