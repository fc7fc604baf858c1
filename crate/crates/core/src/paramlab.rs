//! Parametric families of games `{A(x), B(x), c(x, ., .)}`: the value
//! function over a grid of states and its semicontinuity diagnostics.

use std::cell::RefCell;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::continuous_game::{probe_coercivity, solve_report, EndReport, RadiusSchedule, RefinementBudget, SolveReport};
use crate::domain::Domain;
use crate::expr::{Bindings, EvalError, Expr, Var};
use crate::measures::{Atom, MixedStrategy};
use crate::turnbased::{ConstraintSet, TurnError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("x grid must be strictly increasing and nonempty")]
    BadGrid,
    #[error("strategy cluster is empty")]
    EmptyCluster,
    #[error(transparent)]
    Constraint(#[from] TurnError),
    #[error("declared assumption {assumption} is refuted: {detail}")]
    AssumptionRefuted { assumption: String, detail: String },
}

/// Structural properties asserted by the author of a family.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeclaredFlags {
    pub c_lsc: bool,
    pub c_usc: bool,
    #[serde(alias = "A_lsc_mapping")]
    pub a_lsc_mapping: bool,
    #[serde(alias = "B_lsc_mapping")]
    pub b_lsc_mapping: bool,
    #[serde(alias = "B_compact")]
    pub b_compact: bool,
    pub c_bounded_below: bool,
    #[serde(alias = "A_coercive_in_a")]
    pub a_coercive_in_a: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameFamily {
    pub x_grid: Vec<f64>,
    /// Endpoints may depend on `x` only.
    pub a_set: ConstraintSet,
    pub b_set: ConstraintSet,
    pub c: Expr,
    pub flags: DeclaredFlags,
}

impl GameFamily {
    pub fn new(x_grid: Vec<f64>, a_set: ConstraintSet, b_set: ConstraintSet, c: Expr, flags: DeclaredFlags) -> Result<Self, ParamError> {
        if x_grid.is_empty() || x_grid.windows(2).any(|w| !(w[0] < w[1])) || x_grid.iter().any(|x| !x.is_finite()) {
            return Err(ParamError::BadGrid);
        }
        Ok(GameFamily {
            x_grid,
            a_set,
            b_set,
            c,
            flags,
        })
    }

    pub fn a_at(&self, x: f64) -> Result<Domain, ParamError> {
        Ok(self.a_set.at(&Bindings::x(x))?)
    }

    pub fn b_at(&self, x: f64) -> Result<Domain, ParamError> {
        Ok(self.b_set.at(&Bindings::x(x))?)
    }

    pub fn payoff_at(&self, x: f64) -> Expr {
        self.c.substitute(Var::X, x)
    }
}

/// Evenly spaced `n` points from `lo` to `hi`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| if k == n - 1 { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub description: String,
    /// `(x, a, b, value)` along the probing sequence.
    pub sequence: Vec<(f64, f64, f64, f64)>,
    pub limit: (f64, f64, f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AssumptionStatus {
    DeclaredAndUnrefuted,
    Refuted { witness: Witness },
    NotDeclared,
    StructurallySatisfied,
}

impl AssumptionStatus {
    pub fn is_refuted(&self) -> bool {
        matches!(self, AssumptionStatus::Refuted { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructuralReport {
    /// Lower semicontinuity of `c` with inf-compactness in `a`.
    pub a1: AssumptionStatus,
    /// Upper semicontinuity of `c` with sup-compactness in `b`.
    pub a2: AssumptionStatus,
    /// Lower semicontinuity of the mapping `x -> A(x)`.
    pub a3: AssumptionStatus,
    /// Lower semicontinuity of the mapping `x -> B(x)`.
    pub a4: AssumptionStatus,
    pub b_compact: AssumptionStatus,
    /// A-lower semicontinuity of `(x, a) -> B(x)`; holds because `B` ignores `a`.
    pub a_lsc: AssumptionStatus,
}

impl StructuralReport {
    pub fn entries(&self) -> [(&'static str, &AssumptionStatus); 6] {
        [
            ("A1", &self.a1),
            ("A2", &self.a2),
            ("A3", &self.a3),
            ("A4", &self.a4),
            ("B_compact", &self.b_compact),
            ("A_lsc", &self.a_lsc),
        ]
    }
}

const PROBE_TOL: f64 = 1e-6;
const SEQUENCE_STEPS: i32 = 30;

fn status(declared: bool, refutation: Option<Witness>) -> AssumptionStatus {
    match (refutation, declared) {
        (Some(witness), _) => AssumptionStatus::Refuted { witness },
        (None, true) => AssumptionStatus::DeclaredAndUnrefuted,
        (None, false) => AssumptionStatus::NotDeclared,
    }
}

fn sample_points(domain: &Domain, count: usize) -> Vec<f64> {
    if let Some(all) = domain.enumerate(count) {
        return all;
    }
    let (lo, hi) = (domain.lower(), domain.upper());
    let (lo, hi) = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (lo, hi),
        (true, false) => (lo, lo + 2.0),
        (false, true) => (hi - 2.0, hi),
        (false, false) => (-1.0, 1.0),
    };
    let mut pts: Vec<f64> = linear_grid(lo, hi, count).into_iter().map(|p| domain.clamp(p)).collect();
    pts.dedup();
    pts
}

fn states(fam: &GameFamily, probes: usize) -> Vec<f64> {
    let n = fam.x_grid.len();
    if n <= probes {
        return fam.x_grid.clone();
    }
    (0..probes).map(|k| fam.x_grid[k * (n - 1) / (probes - 1).max(1)]).collect()
}

/// Values along `x + s 2^-k` compared with the value at `x`. Returns a witness
/// when the sequence converges to something strictly below (`lower = true`)
/// or above the value at the limit point.
fn semicontinuity_probe(fam: &GameFamily, x: f64, a: f64, b: f64, lower: bool) -> Option<Witness> {
    let at = |x: f64, a: f64, b: f64| fam.c.eval(&Bindings::xab(x, a, b)).ok();
    let h = fam.x_grid.windows(2).map(|w| w[1] - w[0]).fold(1.0f64, f64::min).max(1e-3);
    let limit = at(x, a, b)?;
    for s in [1.0, -1.0] {
        let mut seq = Vec::new();
        for k in 0..SEQUENCE_STEPS {
            let xn = x + s * h * 2f64.powi(-k);
            let (Ok(ad), Ok(bd)) = (fam.a_at(xn), fam.b_at(xn)) else { break };
            let (an, bn) = (ad.clamp(a), bd.clamp(b));
            let Some(v) = at(xn, an, bn) else { break };
            seq.push((xn, an, bn, v));
        }
        if seq.len() < 4 {
            continue;
        }
        let tail: Vec<f64> = seq[seq.len() - 3..].iter().map(|t| t.3).collect();
        let settled = tail.iter().all(|v| (v - tail[2]).abs() <= PROBE_TOL * (1.0 + v.abs()));
        let gap = tail[2] - limit;
        let tol = 1e3 * PROBE_TOL * (1.0 + limit.abs());
        let broken = if lower { gap < -tol } else { gap > tol };
        if settled && broken {
            let kind = if lower { "lower" } else { "upper" };
            return Some(Witness {
                description: format!(
                    "c along x_n -> {x} {} with (a, b) = ({a}, {b}) tends to {} but c at the limit is {limit}; {kind} semicontinuity fails",
                    if s > 0.0 { "from above" } else { "from below" },
                    tail[2]
                ),
                sequence: thin4(&seq, 8),
                limit: (x, a, b, limit),
            });
        }
    }
    None
}

fn thin4(seq: &[(f64, f64, f64, f64)], keep: usize) -> Vec<(f64, f64, f64, f64)> {
    if seq.len() <= keep {
        return seq.to_vec();
    }
    (0..keep).map(|k| seq[k * (seq.len() - 1) / (keep - 1)]).collect()
}

fn semicontinuity_refutation(fam: &GameFamily, xs: &[f64], lower: bool) -> Option<Witness> {
    for &x in xs {
        let (Ok(ad), Ok(bd)) = (fam.a_at(x), fam.b_at(x)) else { continue };
        for a in sample_points(&ad, 5) {
            for b in sample_points(&bd, 5) {
                if let Some(w) = semicontinuity_probe(fam, x, a, b, lower) {
                    return Some(w);
                }
            }
        }
    }
    None
}

fn growth_refutation(fam: &GameFamily, xs: &[f64], a_side: bool) -> Option<Witness> {
    for &x in xs {
        let (Ok(ad), Ok(bd)) = (fam.a_at(x), fam.b_at(x)) else { continue };
        let c = fam.payoff_at(x);
        let (own, other, game) = if a_side { (&ad, &bd, c) } else { (&bd, &ad, c.swapped_game()) };
        if own.is_compact() {
            continue;
        }
        for anchor in sample_points(other, 3) {
            let cert = probe_coercivity(&game, own, other, &[anchor], &RadiusSchedule::default());
            for end in [&cert.lower, &cert.upper].into_iter().flatten() {
                if let EndReport::GrowthRefuted { counter, samples } = end {
                    let fixed = if a_side { "b" } else { "a" };
                    let moving = if a_side { "a" } else { "b" };
                    let sign = if a_side { 1.0 } else { -1.0 };
                    let pack = |(t, v): (f64, f64)| {
                        if a_side {
                            (x, t, anchor, sign * v)
                        } else {
                            (x, anchor, t, sign * v)
                        }
                    };
                    return Some(Witness {
                        description: format!(
                            "at x = {x}, {fixed} = {anchor}: c stays {} along growing |{moving}|, so its level sets are unbounded",
                            if a_side { "bounded above" } else { "bounded below" }
                        ),
                        sequence: samples.iter().rev().take(8).rev().map(|s| pack(*s)).collect(),
                        limit: pack(*counter),
                    });
                }
            }
        }
    }
    None
}

/// Looks for a jump of an endpoint that would shrink the set in the limit.
fn mapping_refutation(fam: &GameFamily, xs: &[f64], a_side: bool) -> Option<Witness> {
    let bounds = |x: f64| -> Option<(f64, f64)> {
        let d = if a_side { fam.a_at(x).ok()? } else { fam.b_at(x).ok()? };
        Some((d.lower(), d.upper()))
    };
    let h = fam.x_grid.windows(2).map(|w| w[1] - w[0]).fold(1.0f64, f64::min).max(1e-3);
    for &x in xs {
        let Some((lo, hi)) = bounds(x) else { continue };
        for s in [1.0, -1.0] {
            let seq: Vec<(f64, f64, f64)> = (0..SEQUENCE_STEPS)
                .filter_map(|k| {
                    let xn = x + s * h * 2f64.powi(-k);
                    bounds(xn).map(|(l, u)| (xn, l, u))
                })
                .collect();
            let Some(&(_, l, u)) = seq.last() else { continue };
            let tol = 1e-3 * (1.0 + lo.abs().max(hi.abs()).min(1e12));
            if l > lo + tol || u < hi - tol {
                let name = if a_side { "A" } else { "B" };
                return Some(Witness {
                    description: format!("{name}(x_n) = [{l}, {u}] misses part of {name}({x}) = [{lo}, {hi}] as x_n -> {x}"),
                    sequence: thin4(&seq.iter().map(|t| (t.0, t.1, t.2, f64::NAN)).collect::<Vec<_>>(), 8),
                    limit: (x, lo, hi, f64::NAN),
                });
            }
        }
    }
    None
}

/// Probes each structural assumption on up to `probes` states of the grid.
pub fn classify_assumptions(fam: &GameFamily, probes: usize) -> StructuralReport {
    let xs = states(fam, probes.max(2));
    let f = &fam.flags;
    let a1 = semicontinuity_refutation(fam, &xs, true).or_else(|| growth_refutation(fam, &xs, true));
    let a2 = semicontinuity_refutation(fam, &xs, false).or_else(|| growth_refutation(fam, &xs, false));
    let compact = xs.iter().find_map(|&x| match fam.b_at(x) {
        Ok(d) if !d.is_compact() => Some(Witness {
            description: format!("B({x}) = {d} is not compact"),
            sequence: Vec::new(),
            limit: (x, f64::NAN, f64::NAN, f64::NAN),
        }),
        _ => None,
    });
    StructuralReport {
        a1: status(f.c_lsc && f.a_coercive_in_a, a1),
        a2: status(f.c_usc, a2),
        a3: status(f.a_lsc_mapping, mapping_refutation(fam, &xs, true)),
        a4: status(f.b_lsc_mapping, mapping_refutation(fam, &xs, false)),
        b_compact: status(f.b_compact, compact),
        a_lsc: AssumptionStatus::StructurallySatisfied,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Lower semicontinuity of the value: needs A1 and A4.
    Lsc,
    /// Continuity of the value and of the solution sets: needs A1 to A4 and compact B.
    Continuity,
}

impl std::str::FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> Result<Profile, String> {
        match s {
            "lsc" => Ok(Profile::Lsc),
            "continuity" => Ok(Profile::Continuity),
            other => Err(format!("unknown profile `{other}`; expected lsc or continuity")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategySummary {
    pub support: (f64, f64),
    /// Heaviest atoms, at most five.
    pub top_atoms: Vec<(f64, f64)>,
}

fn summarize(p: &MixedStrategy) -> Option<StrategySummary> {
    let atoms = p.atoms()?;
    let mut top: Vec<(f64, f64)> = atoms.iter().map(|a| (a.point, a.weight)).collect();
    top.sort_by(|p, q| q.1.total_cmp(&p.1).then(p.0.total_cmp(&q.0)));
    top.truncate(5);
    Some(StrategySummary {
        support: (atoms[0].point, atoms[atoms.len() - 1].point),
        top_atoms: top,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub x: f64,
    pub v: Option<f64>,
    pub eps: Option<f64>,
    pub gap_a: Option<f64>,
    pub gap_b: Option<f64>,
    pub converged: bool,
    pub a_box: Option<(f64, f64)>,
    pub strategy_a: Option<StrategySummary>,
    pub strategy_b: Option<StrategySummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail { at: Vec<f64>, witnesses: Vec<String> },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub lsc: Verdict,
    pub continuity: Verdict,
    /// Grid states whose lsc flag was cleared by an approaching sequence.
    pub lsc_false_alarms: Vec<f64>,
    pub usc_violations: Vec<f64>,
    pub multifunction_usc_violations: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub profile: Profile,
    pub tol: f64,
    pub diag_tol: f64,
    pub jump_tol: f64,
    pub set_tol: f64,
    pub assumptions: StructuralReport,
    pub records: Vec<SweepRecord>,
    pub diagnostics: Diagnostics,
}

impl SweepReport {
    /// The check selected by the profile passed and every state converged.
    pub fn profile_passed(&self) -> bool {
        match self.profile {
            Profile::Lsc => self.diagnostics.lsc.passed(),
            Profile::Continuity => self.diagnostics.lsc.passed() && self.diagnostics.continuity.passed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub profile: Profile,
    pub probes: usize,
    pub budget: RefinementBudget,
    /// Bisection steps used to confirm a jump.
    pub bisections: usize,
    /// Longest approaching sequence used to confirm an lsc flag.
    pub refinements: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            profile: Profile::Lsc,
            probes: 9,
            budget: RefinementBudget::default(),
            bisections: 24,
            refinements: 24,
        }
    }
}

fn solve_at(fam: &GameFamily, x: f64, tol: f64, budget: &RefinementBudget) -> Result<SolveReport, String> {
    let a = fam.a_at(x).map_err(|e| e.to_string())?;
    let b = fam.b_at(x).map_err(|e| e.to_string())?;
    solve_report(&fam.payoff_at(x), &a, &b, tol, budget).map_err(|e| e.to_string())
}

fn record_of(x: f64, r: Result<SolveReport, String>) -> SweepRecord {
    match r {
        Ok(rep) => {
            let c = &rep.certificate;
            SweepRecord {
                x,
                v: Some(c.value),
                eps: Some(c.eps),
                gap_a: Some(c.sharp_minus_value),
                gap_b: Some(c.value_minus_flat),
                converged: rep.converged,
                a_box: rep.iterations.last().map(|it| it.a_box),
                strategy_a: summarize(&c.pi_a),
                strategy_b: summarize(&c.pi_b),
                error: None,
            }
        }
        Err(e) => SweepRecord {
            x,
            v: None,
            eps: None,
            gap_a: None,
            gap_b: None,
            converged: false,
            a_box: None,
            strategy_a: None,
            strategy_b: None,
            error: Some(e),
        },
    }
}

/// Distance from the support of `s1` to the support of `s2`: the largest
/// distance from an atom of `s1` to the nearest atom of `s2`, ignoring the
/// farthest atoms of `s1` as long as their total mass stays within 0.01.
pub fn set_distance(s1: &[Atom], s2: &[Atom]) -> Result<f64, ParamError> {
    if s1.is_empty() || s2.is_empty() {
        return Err(ParamError::EmptyCluster);
    }
    let mut d: Vec<(f64, f64)> = s1
        .iter()
        .map(|a| {
            let near = s2.iter().map(|b| (a.point - b.point).abs()).fold(f64::INFINITY, f64::min);
            (near, a.weight)
        })
        .collect();
    d.sort_by(|p, q| q.0.total_cmp(&p.0));
    let mut excluded = 0.0;
    for (dist, w) in d {
        if excluded + w <= 0.01 {
            excluded += w;
            continue;
        }
        return Ok(dist);
    }
    Ok(0.0)
}

/// Solves every state of the grid, then runs the diagnostics in grid order.
pub fn sweep(fam: &GameFamily, tol: f64, settings: &SweepSettings) -> Result<SweepReport, ParamError> {
    let assumptions = classify_assumptions(fam, settings.probes);
    let required: &[&str] = match settings.profile {
        Profile::Lsc => &["A1", "A4"],
        Profile::Continuity => &["A1", "A2", "A3", "A4", "B_compact"],
    };
    let declared = |name: &str| {
        let f = &fam.flags;
        match name {
            "A1" => f.c_lsc && f.a_coercive_in_a,
            "A2" => f.c_usc,
            "A3" => f.a_lsc_mapping,
            "A4" => f.b_lsc_mapping,
            "B_compact" => f.b_compact,
            _ => false,
        }
    };
    for (name, st) in assumptions.entries() {
        if let (true, true, AssumptionStatus::Refuted { witness }) = (required.contains(&name), declared(name), st) {
            return Err(ParamError::AssumptionRefuted {
                assumption: name.to_string(),
                detail: witness.description.clone(),
            });
        }
    }

    let budget = &settings.budget;
    let records: Vec<SweepRecord> = fam
        .x_grid
        .par_iter()
        .map(|&x| record_of(x, solve_at(fam, x, tol, budget)))
        .collect();

    let diag_tol = 5.0 * tol;
    let jump_tol = 10.0 * tol;
    let h_min = fam.x_grid.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let set_tol = 0.05 + if h_min.is_finite() { 2.0 * h_min } else { 0.0 };
    let cache: RefCell<BTreeMap<u64, Option<f64>>> = RefCell::new(BTreeMap::new());
    for r in &records {
        cache.borrow_mut().insert(r.x.to_bits(), r.v);
    }
    let value = |x: f64| -> Option<f64> {
        if let Some(v) = cache.borrow().get(&x.to_bits()) {
            return *v;
        }
        let v = solve_at(fam, x, tol, budget).ok().map(|r| r.certificate.value);
        cache.borrow_mut().insert(x.to_bits(), v);
        v
    };

    let n = records.len();
    let mut lsc_at = Vec::new();
    let mut lsc_witnesses = Vec::new();
    let mut false_alarms = Vec::new();
    let mut usc = Vec::new();
    for i in 0..n {
        let Some(v) = records[i].v else { continue };
        let x = records[i].x;
        for j in [i.wrapping_sub(1), i + 1] {
            if j >= n {
                continue;
            }
            let Some(w) = records[j].v else { continue };
            let xn = records[j].x;
            if w > v + diag_tol && !usc.contains(&x) {
                usc.push(x);
            }
            if w >= v - diag_tol {
                continue;
            }
            let mut last = (xn, Some(w));
            let mut persistent = true;
            for k in 1..=settings.refinements {
                let t = x + (xn - x) * 0.5f64.powi(k as i32);
                last = (t, value(t));
                if last.1.is_none_or(|vt| vt >= v - diag_tol) {
                    persistent = false;
                    break;
                }
            }
            if persistent {
                if !lsc_at.contains(&x) {
                    lsc_at.push(x);
                }
                lsc_witnesses.push(format!(
                    "v({x}) = {v} but v({}) = {} along the sequence approaching {x}",
                    last.0,
                    last.1.unwrap_or(f64::NAN)
                ));
            } else if !false_alarms.contains(&x) {
                false_alarms.push(x);
            }
        }
    }
    let lsc = if lsc_at.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail {
            at: lsc_at,
            witnesses: lsc_witnesses,
        }
    };

    let mut jump_at: Vec<f64> = Vec::new();
    let mut jump_witnesses = Vec::new();
    for i in 0..n.saturating_sub(1) {
        let (Some(vl), Some(vr)) = (records[i].v, records[i + 1].v) else { continue };
        if (vr - vl).abs() <= jump_tol {
            continue;
        }
        let (mut l, mut r) = ((records[i].x, vl), (records[i + 1].x, vr));
        let mut persisted = true;
        for _ in 0..settings.bisections {
            let m = 0.5 * (l.0 + r.0);
            let Some(vm) = value(m) else {
                persisted = false;
                break;
            };
            if (vm - l.1).abs() >= (r.1 - vm).abs() {
                r = (m, vm);
            } else {
                l = (m, vm);
            }
            if (r.1 - l.1).abs() <= jump_tol {
                persisted = false;
                break;
            }
        }
        if persisted {
            let mid = 0.5 * (l.0 + r.0);
            let nearest = if (mid - records[i].x).abs() <= (records[i + 1].x - mid).abs() {
                records[i].x
            } else {
                records[i + 1].x
            };
            if !jump_at.contains(&nearest) {
                jump_at.push(nearest);
            }
            jump_witnesses.push(format!(
                "v jumps from {} to {} across [{}, {}]",
                l.1, r.1, l.0, r.0
            ));
        }
    }
    let continuity = if jump_at.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail {
            at: jump_at,
            witnesses: jump_witnesses,
        }
    };

    let supports: Vec<Option<Vec<Atom>>> = records
        .iter()
        .map(|r| {
            r.strategy_a
                .as_ref()
                .map(|s| s.top_atoms.iter().map(|&(point, weight)| Atom { point, weight }).collect())
        })
        .collect();
    let mut multi = Vec::new();
    for i in 0..n {
        for j in [i.wrapping_sub(1), i + 1] {
            if j >= n {
                continue;
            }
            if let (Some(near), Some(here)) = (&supports[j], &supports[i]) {
                if let Ok(d) = set_distance(near, here) {
                    if d > set_tol {
                        multi.push((records[i].x, records[j].x, d));
                    }
                }
            }
        }
    }

    Ok(SweepReport {
        profile: settings.profile,
        tol,
        diag_tol,
        jump_tol,
        set_tol,
        assumptions,
        records,
        diagnostics: Diagnostics {
            lsc,
            continuity,
            lsc_false_alarms: false_alarms,
            usc_violations: usc,
            multifunction_usc_violations: multi,
        },
    })
}

impl From<EvalError> for ParamError {
    fn from(e: EvalError) -> Self {
        ParamError::Constraint(TurnError::Eval(e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::turnbased::Bound;

    fn interval(lo: &str, hi: &str) -> ConstraintSet {
        let p = BTreeMap::new();
        ConstraintSet::Interval {
            lo: Bound::parse(lo, &p).unwrap(),
            hi: Bound::parse(hi, &p).unwrap(),
        }
    }

    fn all_flags() -> DeclaredFlags {
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

    fn family(c: &str, b: ConstraintSet, grid: Vec<f64>, flags: DeclaredFlags) -> GameFamily {
        GameFamily::new(grid, interval("-inf", "inf"), b, parse(c).unwrap(), flags).unwrap()
    }

    #[test]
    fn set_distance_examples() {
        let d0 = [Atom { point: 0.0, weight: 1.0 }];
        let d1 = [Atom { point: 1.0, weight: 1.0 }];
        let split = [Atom { point: 0.0, weight: 0.5 }, Atom { point: 2.0, weight: 0.5 }];
        assert_eq!(set_distance(&d0, &d0).unwrap(), 0.0);
        assert_eq!(set_distance(&d0, &d1).unwrap(), 1.0);
        assert_eq!(set_distance(&split, &d0).unwrap(), 2.0);
        let tiny = [Atom { point: 0.0, weight: 0.995 }, Atom { point: 9.0, weight: 0.005 }];
        assert_eq!(set_distance(&tiny, &d0).unwrap(), 0.0);
        assert_eq!(set_distance(&[], &d0), Err(ParamError::EmptyCluster));
    }

    #[test]
    fn classification_examples() {
        let fam = family("x+a^2-b^2", interval("-1", "1"), linear_grid(0.0, 1.0, 11), all_flags());
        let rep = classify_assumptions(&fam, 5);
        for (name, st) in [("A1", &rep.a1), ("A2", &rep.a2), ("A3", &rep.a3), ("A4", &rep.a4)] {
            assert_eq!(*st, AssumptionStatus::DeclaredAndUnrefuted, "{name}");
        }
        assert_eq!(rep.a_lsc, AssumptionStatus::StructurallySatisfied);

        let lsc = family("a^2 + b*[x>0]", interval("0", "1"), linear_grid(-1.0, 1.0, 41), all_flags());
        let rep = classify_assumptions(&lsc, 41);
        assert!(rep.a2.is_refuted(), "{:?}", rep.a2);
        assert!(!rep.a1.is_refuted());
        assert!(!rep.a4.is_refuted());

        let widening = family("a^2-b^2", interval("0", "1+abs(x)"), linear_grid(-1.0, 1.0, 5), all_flags());
        assert_eq!(classify_assumptions(&widening, 5).a4, AssumptionStatus::DeclaredAndUnrefuted);
        let jumping = family("a^2-b^2", interval("0", "1+[x>0]"), linear_grid(-1.0, 1.0, 5), all_flags());
        assert!(!classify_assumptions(&jumping, 5).a4.is_refuted());
        let shrinking = family("a^2-b^2", interval("0", "2-[x>0]"), linear_grid(-1.0, 1.0, 5), all_flags());
        assert!(classify_assumptions(&shrinking, 5).a4.is_refuted());
    }

    #[test]
    fn separable_family_sweep() {
        let fam = family("x+a^2-b^2", interval("-1", "1"), linear_grid(0.0, 1.0, 11), all_flags());
        let settings = SweepSettings {
            profile: Profile::Continuity,
            ..SweepSettings::default()
        };
        let rep = sweep(&fam, 1e-4, &settings).unwrap();
        for r in &rep.records {
            assert!((r.v.unwrap() - r.x).abs() <= 2e-4, "{r:?}");
        }
        assert!(rep.diagnostics.continuity.passed());
        assert!(rep.profile_passed());
    }

    #[test]
    fn indicator_family_sweep() {
        let mut flags = all_flags();
        flags.c_usc = false;
        let fam = family("a^2 + b*[x>0]", interval("0", "1"), linear_grid(-1.0, 1.0, 41), flags);
        let rep = sweep(&fam, 1e-4, &SweepSettings::default()).unwrap();
        assert!(rep.diagnostics.lsc.passed(), "{:?}", rep.diagnostics.lsc);
        assert_eq!(
            rep.diagnostics.continuity,
            Verdict::Fail {
                at: vec![0.0],
                witnesses: match &rep.diagnostics.continuity {
                    Verdict::Fail { witnesses, .. } => witnesses.clone(),
                    Verdict::Pass => vec![],
                }
            }
        );
    }

    #[test]
    fn declared_refuted_flag_blocks_sweep() {
        let fam = family("a^2 + b*[x>0]", interval("0", "1"), linear_grid(-1.0, 1.0, 41), all_flags());
        let settings = SweepSettings {
            profile: Profile::Continuity,
            ..SweepSettings::default()
        };
        assert!(matches!(sweep(&fam, 1e-4, &settings), Err(ParamError::AssumptionRefuted { .. })));
    }
}
