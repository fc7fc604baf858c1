//! Mixed strategies and expected payoffs.
//!
//! The expected payoff is computed as the sum of a nonnegative part
//! (integral of `max(c, 0)`) and a nonpositive part (integral of
//! `min(c, 0)`), each summed separately. It is defined unless the first is
//! `+inf` and the second is `-inf` at the same time.

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::domain::Domain;
use crate::expr::{Bindings, EvalError, Expr, OverflowSign, Var};
use crate::search::{self, SampleFailure, SearchBudget, SearchError, SearchHints, SearchOutcome};

/// Player I (`A`, chooses `a`, minimizes) or Player II (`B`, chooses `b`, maximizes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Player {
    A,
    B,
}

impl Player {
    pub fn opponent(self) -> Player {
        match self {
            Player::A => Player::B,
            Player::B => Player::A,
        }
    }
}

impl FromStr for Player {
    type Err = String;
    fn from_str(s: &str) -> Result<Player, String> {
        match s.trim() {
            "A" | "a" | "I" | "1" => Ok(Player::A),
            "B" | "b" | "II" | "2" => Ok(Player::B),
            other => Err(format!("unknown player `{other}`; expected A/I or B/II")),
        }
    }
}

/// A payoff on the extended real line, or `Undefined` for `(+inf) + (-inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedPayoff {
    Finite(f64),
    PlusInfinity,
    MinusInfinity,
    Undefined,
}

impl ExtendedPayoff {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedPayoff::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedPayoff::Finite(_))
    }

    pub fn neg(self) -> ExtendedPayoff {
        match self {
            ExtendedPayoff::Finite(v) => ExtendedPayoff::Finite(-v),
            ExtendedPayoff::PlusInfinity => ExtendedPayoff::MinusInfinity,
            ExtendedPayoff::MinusInfinity => ExtendedPayoff::PlusInfinity,
            ExtendedPayoff::Undefined => ExtendedPayoff::Undefined,
        }
    }

    /// Maps infinities to `f64` infinities; `Undefined` to NaN.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtendedPayoff::Finite(v) => v,
            ExtendedPayoff::PlusInfinity => f64::INFINITY,
            ExtendedPayoff::MinusInfinity => f64::NEG_INFINITY,
            ExtendedPayoff::Undefined => f64::NAN,
        }
    }
}

impl fmt::Display for ExtendedPayoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedPayoff::Finite(v) => write!(f, "{v}"),
            ExtendedPayoff::PlusInfinity => f.write_str("+inf"),
            ExtendedPayoff::MinusInfinity => f.write_str("-inf"),
            ExtendedPayoff::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for ExtendedPayoff {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtendedPayoff::Finite(v) => s.serialize_f64(*v),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("strategy is not a probability measure: {0}")]
    NonNormalized(String),
    #[error("support point {point} lies outside the action domain {domain}")]
    OutsideDomain { point: f64, domain: Domain },
    #[error("series neither converged nor diverged within {terms} terms")]
    SeriesUndecided { terms: usize },
    #[error("search budget exhausted; best so far {best} at {at}")]
    BudgetExhausted { best: f64, at: f64 },
}

impl SampleFailure for MeasureError {
    fn overflow(&self) -> Option<OverflowSign> {
        match self {
            MeasureError::Eval(EvalError::Overflow(s)) => Some(*s),
            _ => None,
        }
    }
}

impl From<SearchError<MeasureError>> for MeasureError {
    fn from(e: SearchError<MeasureError>) -> Self {
        match e {
            SearchError::Objective(e) => e,
            SearchError::BudgetExhausted { best, at } => MeasureError::BudgetExhausted { best, at },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: f64,
    pub weight: f64,
}

/// Ratio of a geometric tail, remembering an exact `p/q` when given one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratio {
    pub value: f64,
    pub exact: Option<(u64, u64)>,
}

impl Ratio {
    pub fn new(value: f64) -> Result<Ratio, MeasureError> {
        if !(value > 0.0 && value < 1.0) {
            return Err(MeasureError::NonNormalized(format!("geometric ratio {value} outside (0, 1)")));
        }
        Ok(Ratio { value, exact: None })
    }

    pub fn rational(p: u64, q: u64) -> Result<Ratio, MeasureError> {
        if q == 0 || p == 0 || p >= q {
            return Err(MeasureError::NonNormalized(format!("geometric ratio {p}/{q} outside (0, 1)")));
        }
        Ok(Ratio {
            value: p as f64 / q as f64,
            exact: Some((p, q)),
        })
    }
}

impl FromStr for Ratio {
    type Err = MeasureError;
    fn from_str(s: &str) -> Result<Ratio, MeasureError> {
        let bad = || MeasureError::NonNormalized(format!("cannot parse ratio `{s}`"));
        match s.split_once('/') {
            Some((p, q)) => Ratio::rational(p.trim().parse().map_err(|_| bad())?, q.trim().parse().map_err(|_| bad())?),
            None => Ratio::new(s.trim().parse().map_err(|_| bad())?),
        }
    }
}

/// Probability measure on an action set.
#[derive(Debug, Clone, PartialEq)]
pub enum MixedStrategy {
    /// Sorted by point, merged, weights positive and summing to one.
    FiniteSupport(Vec<Atom>),
    /// Mass `C r^k` on `k = 1, 2, ...` with `C = (1 - r) / r`.
    GeometricTail(Ratio),
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

impl MixedStrategy {
    pub fn point(p: f64) -> MixedStrategy {
        MixedStrategy::FiniteSupport(vec![Atom { point: p, weight: 1.0 }])
    }

    pub fn finite(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<MixedStrategy, MeasureError> {
        let mut atoms: Vec<Atom> = atoms.into_iter().map(|(point, weight)| Atom { point, weight }).collect();
        if atoms.is_empty() {
            return Err(MeasureError::NonNormalized("no atoms".into()));
        }
        for a in &atoms {
            if !a.point.is_finite() || !(a.weight > 0.0) || !a.weight.is_finite() {
                return Err(MeasureError::NonNormalized(format!("bad atom ({}, {})", a.point, a.weight)));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(MeasureError::NonNormalized(format!("weights sum to {total}")));
        }
        atoms.sort_by(|p, q| p.point.total_cmp(&q.point));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if last.point == a.point => last.weight += a.weight,
                _ => merged.push(a),
            }
        }
        Ok(MixedStrategy::FiniteSupport(merged))
    }

    /// Builds a finite strategy from nonnegative weights, dropping those at or
    /// below `floor` and rescaling the rest to sum to one.
    pub fn from_weights(points: &[f64], weights: &[f64], floor: f64) -> Result<MixedStrategy, MeasureError> {
        let kept: Vec<(f64, f64)> = points
            .iter()
            .zip(weights)
            .filter(|(_, w)| **w > floor)
            .map(|(p, w)| (*p, *w))
            .collect();
        let total: f64 = kept.iter().map(|a| a.1).sum();
        if kept.is_empty() || !(total > 0.0) {
            return Err(MeasureError::NonNormalized("all weights below the floor".into()));
        }
        let mut atoms: Vec<(f64, f64)> = kept.into_iter().map(|(p, w)| (p, w / total)).collect();
        let sum: f64 = atoms.iter().map(|a| a.1).sum();
        if let Some(last) = atoms.last_mut() {
            last.1 += 1.0 - sum;
        }
        MixedStrategy::finite(atoms)
    }

    pub fn geometric(ratio: Ratio) -> MixedStrategy {
        MixedStrategy::GeometricTail(ratio)
    }

    /// `alpha * p + (1 - alpha) * q` for finite strategies.
    pub fn mixture(alpha: f64, p: &MixedStrategy, q: &MixedStrategy) -> Result<MixedStrategy, MeasureError> {
        match (p, q) {
            (MixedStrategy::FiniteSupport(x), MixedStrategy::FiniteSupport(y)) if alpha > 0.0 && alpha < 1.0 => {
                let atoms = x
                    .iter()
                    .map(|a| (a.point, alpha * a.weight))
                    .chain(y.iter().map(|a| (a.point, (1.0 - alpha) * a.weight)));
                let pts: Vec<(f64, f64)> = atoms.collect();
                let points: Vec<f64> = pts.iter().map(|a| a.0).collect();
                let weights: Vec<f64> = pts.iter().map(|a| a.1).collect();
                MixedStrategy::from_weights(&points, &weights, 0.0)
            }
            _ => Err(MeasureError::NonNormalized("mixture needs two finite strategies and alpha in (0,1)".into())),
        }
    }

    pub fn atoms(&self) -> Option<&[Atom]> {
        match self {
            MixedStrategy::FiniteSupport(a) => Some(a),
            MixedStrategy::GeometricTail(_) => None,
        }
    }

    pub fn is_finite_support(&self) -> bool {
        matches!(self, MixedStrategy::FiniteSupport(_))
    }

    /// Mass at `k` for a geometric tail.
    pub fn geometric_weight(ratio: f64, k: u64) -> f64 {
        (1.0 - ratio) * ratio.powf(k as f64 - 1.0)
    }

    /// Checks the strategy against the invariants and the action domain.
    pub fn validate_in(&self, domain: &Domain) -> Result<(), MeasureError> {
        match self {
            MixedStrategy::FiniteSupport(atoms) => {
                let total: f64 = atoms.iter().map(|a| a.weight).sum();
                if (total - 1.0).abs() > WEIGHT_SUM_TOL || atoms.iter().any(|a| !(a.weight > 0.0)) {
                    return Err(MeasureError::NonNormalized(format!("weights sum to {total}")));
                }
                match atoms.iter().find(|a| !domain.contains(a.point)) {
                    Some(a) => Err(MeasureError::OutsideDomain {
                        point: a.point,
                        domain: domain.clone(),
                    }),
                    None => Ok(()),
                }
            }
            MixedStrategy::GeometricTail(_) => {
                if *domain == (Domain::IntegerRange { lo: 1, hi: None }) {
                    Ok(())
                } else {
                    Err(MeasureError::OutsideDomain {
                        point: 1.0,
                        domain: domain.clone(),
                    })
                }
            }
        }
    }
}

impl Serialize for MixedStrategy {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(2))?;
        match self {
            MixedStrategy::FiniteSupport(atoms) => {
                m.serialize_entry("kind", "finite")?;
                let pairs: Vec<[f64; 2]> = atoms.iter().map(|a| [a.point, a.weight]).collect();
                m.serialize_entry("atoms", &pairs)?;
            }
            MixedStrategy::GeometricTail(r) => {
                m.serialize_entry("kind", "geometric")?;
                match r.exact {
                    Some((p, q)) => m.serialize_entry("ratio", &format!("{p}/{q}"))?,
                    None => m.serialize_entry("ratio", &r.value)?,
                }
            }
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for MixedStrategy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<MixedStrategy, D::Error> {
        let v = Value::deserialize(d)?;
        let kind = v.get("kind").and_then(Value::as_str).ok_or_else(|| D::Error::custom("missing `kind`"))?;
        match kind {
            "finite" => {
                let atoms = v
                    .get("atoms")
                    .and_then(Value::as_array)
                    .ok_or_else(|| D::Error::custom("missing `atoms`"))?;
                let mut pairs = Vec::with_capacity(atoms.len());
                for a in atoms {
                    let pair = a.as_array().filter(|p| p.len() == 2);
                    let (p, w) = pair
                        .and_then(|p| Some((p[0].as_f64()?, p[1].as_f64()?)))
                        .ok_or_else(|| D::Error::custom("atoms must be [point, weight] pairs"))?;
                    pairs.push((p, w));
                }
                MixedStrategy::finite(pairs).map_err(D::Error::custom)
            }
            "geometric" => {
                let ratio = match v.get("ratio") {
                    Some(Value::Number(n)) => Ratio::new(n.as_f64().unwrap_or(f64::NAN)),
                    Some(Value::String(s)) => s.parse(),
                    _ => return Err(D::Error::custom("missing `ratio`")),
                };
                ratio.map(MixedStrategy::GeometricTail).map_err(D::Error::custom)
            }
            other => Err(D::Error::custom(format!("unknown strategy kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeriesStatus {
    ConvergedTo { value: f64, tail_bound: f64 },
    DivergesPlus,
    DivergesMinus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesVerdict {
    pub status: SeriesStatus,
    pub terms_used: usize,
}

impl SeriesVerdict {
    fn exact(value: f64, terms: usize) -> SeriesVerdict {
        SeriesVerdict {
            status: SeriesStatus::ConvergedTo { value, tail_bound: 0.0 },
            terms_used: terms,
        }
    }

    pub fn value(&self) -> f64 {
        match self.status {
            SeriesStatus::ConvergedTo { value, .. } => value,
            SeriesStatus::DivergesPlus => f64::INFINITY,
            SeriesStatus::DivergesMinus => f64::NEG_INFINITY,
        }
    }

    pub fn tail_bound(&self) -> f64 {
        match self.status {
            SeriesStatus::ConvergedTo { tail_bound, .. } => tail_bound,
            _ => f64::INFINITY,
        }
    }
}

/// The nonnegative and nonpositive parts of an expected payoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayoffSplit {
    pub positive: SeriesVerdict,
    pub negative: SeriesVerdict,
}

impl PayoffSplit {
    pub fn combine(&self) -> ExtendedPayoff {
        match (self.positive.status, self.negative.status) {
            (SeriesStatus::DivergesPlus, SeriesStatus::DivergesMinus) => ExtendedPayoff::Undefined,
            (SeriesStatus::DivergesPlus, _) => ExtendedPayoff::PlusInfinity,
            (_, SeriesStatus::DivergesMinus) => ExtendedPayoff::MinusInfinity,
            (p, n) => {
                let v = match (p, n) {
                    (SeriesStatus::ConvergedTo { value: a, .. }, SeriesStatus::ConvergedTo { value: b, .. }) => a + b,
                    _ => unreachable!("remaining statuses are converged"),
                };
                ExtendedPayoff::Finite(v)
            }
        }
    }

    pub fn tail_bound(&self) -> f64 {
        self.positive.tail_bound() + self.negative.tail_bound()
    }
}

/// Tuning of the series evaluation for countable supports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesConfig {
    pub tol: f64,
    pub max_terms: usize,
    /// Ratio streak needed before a geometric majorant is trusted.
    pub stable_ratios: usize,
    /// Divergence is only declared past this many terms.
    pub divergence_after: usize,
    /// Consecutive non-decaying terms that establish divergence.
    pub divergence_streak: usize,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig {
            tol: 1e-10,
            max_terms: 4000,
            stable_ratios: 5,
            divergence_after: 50,
            divergence_streak: 10,
        }
    }
}

struct PartState {
    sum: f64,
    diverged: bool,
    last: f64,
    streak: usize,
}

impl PartState {
    fn new() -> PartState {
        PartState {
            sum: 0.0,
            diverged: false,
            last: 0.0,
            streak: 0,
        }
    }

    fn push(&mut self, term: f64, k: usize, cfg: &SeriesConfig) {
        if self.diverged {
            return;
        }
        if term.is_infinite() {
            self.diverged = true;
            return;
        }
        self.sum += term;
        let m = term.abs();
        if m > 0.0 && m >= (1.0 - 1e-6) * self.last.abs() {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.last = term;
        if k > cfg.divergence_after && self.streak >= cfg.divergence_streak {
            self.diverged = true;
        }
    }
}

/// Ratio-test bookkeeping for a sequence of term magnitudes. Exact zeros are
/// bridged: the ratio across a gap is taken per step.
struct Majorant {
    last: f64,
    gap: usize,
    ratios: Vec<f64>,
}

/// Exact zeros in a row after which the remaining terms are taken as zero.
const ZERO_RUN: usize = 64;

impl Majorant {
    fn new() -> Majorant {
        Majorant {
            last: 0.0,
            gap: 0,
            ratios: Vec::new(),
        }
    }

    fn push(&mut self, m: f64, window: usize) {
        if m == 0.0 {
            self.gap += 1;
            return;
        }
        if self.last > 0.0 {
            self.ratios.push((m / self.last).powf(1.0 / (self.gap + 1) as f64));
            if self.ratios.len() > window {
                self.ratios.remove(0);
            }
        }
        self.last = m;
        self.gap = 0;
    }

    /// Bound on the sum of all later terms, once the ratios have stabilized.
    fn tail(&self, window: usize) -> Option<f64> {
        let rho = self.ratios.iter().copied().fold(0.0, f64::max);
        if self.ratios.len() >= window && rho < 1.0 {
            return Some(self.last * rho.powi(self.gap as i32 + 1) / (1.0 - rho));
        }
        if self.gap >= ZERO_RUN {
            return Some(0.0);
        }
        None
    }
}

/// Sums a series whose k-th term (k = 1, 2, ...) has a nonnegative part and a
/// nonpositive part, each possibly infinite.
pub fn split_series<F>(mut term: F, cfg: &SeriesConfig) -> Result<PayoffSplit, MeasureError>
where
    F: FnMut(u64) -> Result<(f64, f64), MeasureError>,
{
    let mut pos = PartState::new();
    let mut neg = PartState::new();
    let mut all = Majorant::new();
    let mut pos_maj = Majorant::new();
    let mut neg_maj = Majorant::new();
    let window = cfg.stable_ratios;
    for k in 1..=cfg.max_terms {
        let (p, n) = term(k as u64)?;
        debug_assert!(p >= 0.0 && n <= 0.0);
        pos.push(p, k, cfg);
        neg.push(n, k, cfg);
        all.push(p + n.abs(), window);
        pos_maj.push(p, window);
        neg_maj.push(n.abs(), window);

        let small = |tail: f64, sum: f64| tail <= cfg.tol * sum.abs().max(1.0);
        let verdict = |state: &PartState, tail: f64, plus: bool| SeriesVerdict {
            status: if state.diverged {
                if plus {
                    SeriesStatus::DivergesPlus
                } else {
                    SeriesStatus::DivergesMinus
                }
            } else {
                SeriesStatus::ConvergedTo {
                    value: state.sum,
                    tail_bound: tail,
                }
            },
            terms_used: k,
        };
        match (pos.diverged, neg.diverged) {
            (true, true) => {
                return Ok(PayoffSplit {
                    positive: verdict(&pos, 0.0, true),
                    negative: verdict(&neg, 0.0, false),
                })
            }
            (false, false) => {
                if let Some(t) = all.tail(window) {
                    if small(t, pos.sum) && small(t, neg.sum) {
                        return Ok(PayoffSplit {
                            positive: verdict(&pos, t, true),
                            negative: verdict(&neg, t, false),
                        });
                    }
                }
            }
            (true, false) => {
                if let Some(t) = neg_maj.tail(window) {
                    if small(t, neg.sum) {
                        return Ok(PayoffSplit {
                            positive: verdict(&pos, 0.0, true),
                            negative: verdict(&neg, t, false),
                        });
                    }
                }
            }
            (false, true) => {
                if let Some(t) = pos_maj.tail(window) {
                    if small(t, pos.sum) {
                        return Ok(PayoffSplit {
                            positive: verdict(&pos, t, true),
                            negative: verdict(&neg, 0.0, false),
                        });
                    }
                }
            }
        }
    }
    Err(MeasureError::SeriesUndecided { terms: cfg.max_terms })
}

fn split_value(v: f64) -> (f64, f64) {
    if v >= 0.0 {
        (v, 0.0)
    } else {
        (0.0, v)
    }
}

fn eval_payoff(c: &Expr, a: f64, b: f64) -> Result<f64, MeasureError> {
    Ok(c.eval(&Bindings::ab(a, b))?)
}

fn scaled_split(split: &PayoffSplit, w: f64) -> (f64, f64) {
    let p = match split.positive.status {
        SeriesStatus::DivergesPlus => f64::INFINITY,
        s => w * SeriesVerdict { status: s, terms_used: 0 }.value(),
    };
    let n = match split.negative.status {
        SeriesStatus::DivergesMinus => f64::NEG_INFINITY,
        s => w * SeriesVerdict { status: s, terms_used: 0 }.value(),
    };
    (p.max(0.0), n.min(0.0))
}

fn accumulate(parts: &[(f64, PayoffSplit)]) -> PayoffSplit {
    let mut pos = 0.0;
    let mut neg = 0.0;
    let mut pos_tail = 0.0;
    let mut neg_tail = 0.0;
    let mut pos_div = false;
    let mut neg_div = false;
    let mut terms = 0;
    for (w, s) in parts {
        terms += s.positive.terms_used.max(s.negative.terms_used);
        match s.positive.status {
            SeriesStatus::DivergesPlus => pos_div = true,
            SeriesStatus::ConvergedTo { value, tail_bound } => {
                pos += w * value;
                pos_tail += w * tail_bound;
            }
            SeriesStatus::DivergesMinus => unreachable!("positive part cannot diverge to -inf"),
        }
        match s.negative.status {
            SeriesStatus::DivergesMinus => neg_div = true,
            SeriesStatus::ConvergedTo { value, tail_bound } => {
                neg += w * value;
                neg_tail += w * tail_bound;
            }
            SeriesStatus::DivergesPlus => unreachable!("negative part cannot diverge to +inf"),
        }
    }
    let verdict = |div: bool, plus: bool, value: f64, tail: f64| SeriesVerdict {
        status: match (div, plus) {
            (true, true) => SeriesStatus::DivergesPlus,
            (true, false) => SeriesStatus::DivergesMinus,
            _ => SeriesStatus::ConvergedTo { value, tail_bound: tail },
        },
        terms_used: terms,
    };
    PayoffSplit {
        positive: verdict(pos_div, true, pos, pos_tail),
        negative: verdict(neg_div, false, neg, neg_tail),
    }
}

/// Both parts of the expected payoff of `c` under `(pi_a, pi_b)`.
pub fn expected_split(
    c: &Expr,
    pi_a: &MixedStrategy,
    pi_b: &MixedStrategy,
    cfg: &SeriesConfig,
) -> Result<PayoffSplit, MeasureError> {
    use MixedStrategy::{FiniteSupport as Fin, GeometricTail as Geo};
    match (pi_a, pi_b) {
        (Fin(xa), Fin(xb)) => {
            let (mut pos, mut neg) = (0.0, 0.0);
            for a in xa {
                for b in xb {
                    let (p, n) = split_value(eval_payoff(c, a.point, b.point)?);
                    pos += a.weight * b.weight * p;
                    neg += a.weight * b.weight * n;
                }
            }
            let terms = xa.len() * xb.len();
            Ok(PayoffSplit {
                positive: SeriesVerdict::exact(pos, terms),
                negative: SeriesVerdict::exact(neg, terms),
            })
        }
        (Fin(xa), Geo(r)) => {
            let mut parts = Vec::with_capacity(xa.len());
            for a in xa {
                parts.push((a.weight, geometric_inner(c, a.point, *r, cfg, Var::B)?));
            }
            Ok(accumulate(&parts))
        }
        (Geo(r), Fin(xb)) => {
            let ratio = r.value;
            split_series(
                |k| {
                    let w = MixedStrategy::geometric_weight(ratio, k);
                    let (mut p, mut n) = (0.0, 0.0);
                    for b in xb {
                        let (bp, bn) = split_value(eval_payoff(c, k as f64, b.point)?);
                        p += b.weight * bp;
                        n += b.weight * bn;
                    }
                    Ok((w * p, w * n))
                },
                cfg,
            )
        }
        (Geo(ra), Geo(rb)) => {
            let ratio = ra.value;
            split_series(
                |k| {
                    let w = MixedStrategy::geometric_weight(ratio, k);
                    let inner = geometric_inner(c, k as f64, *rb, cfg, Var::B)?;
                    Ok(scaled_split(&inner, w))
                },
                cfg,
            )
        }
    }
}

/// Series over the geometric variable `var` with the other action fixed.
fn geometric_inner(c: &Expr, fixed: f64, r: Ratio, cfg: &SeriesConfig, var: Var) -> Result<PayoffSplit, MeasureError> {
    split_series(
        |k| {
            let w = MixedStrategy::geometric_weight(r.value, k);
            let v = match var {
                Var::B => eval_payoff(c, fixed, k as f64)?,
                _ => eval_payoff(c, k as f64, fixed)?,
            };
            let (p, n) = split_value(v);
            Ok((w * p, w * n))
        },
        cfg,
    )
}

/// Expected payoff to Player II.
pub fn expected_payoff(c: &Expr, pi_a: &MixedStrategy, pi_b: &MixedStrategy) -> Result<ExtendedPayoff, MeasureError> {
    Ok(expected_split(c, pi_a, pi_b, &SeriesConfig::default())?.combine())
}

fn breakpoint_hints(
    c: &Expr,
    opponent: &MixedStrategy,
    var: Var,
    domain: &Domain,
    hints: &SearchHints,
    budget: &SearchBudget,
) -> SearchHints {
    let mut out = hints.clone();
    if let (Some(atoms), false) = (opponent.atoms(), domain.is_discrete()) {
        let (lo, hi) = search_window(domain, hints, budget);
        let fixed: Vec<Bindings> = atoms
            .iter()
            .map(|a| match var {
                Var::B => Bindings {
                    a: Some(a.point),
                    ..Default::default()
                },
                _ => Bindings {
                    b: Some(a.point),
                    ..Default::default()
                },
            })
            .collect();
        out.extra_points
            .extend(search::indicator_breakpoints(c, var, &fixed, lo, hi, budget.grid));
    }
    out
}

fn search_window(domain: &Domain, hints: &SearchHints, budget: &SearchBudget) -> (f64, f64) {
    if let Some(w) = hints.window {
        return w;
    }
    let (lo, hi) = (domain.lower(), domain.upper());
    let h = budget.window_half_width;
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (lo, hi),
        (true, false) => (lo, lo + 2.0 * h),
        (false, true) => (hi - 2.0 * h, hi),
        (false, false) => (-h, h),
    }
}

/// `sup_b c^(pi_a, b)` with the maximizing point.
pub fn sharp_search(
    c: &Expr,
    pi_a: &MixedStrategy,
    b_domain: &Domain,
    budget: &SearchBudget,
    hints: &SearchHints,
) -> Result<SearchOutcome, MeasureError> {
    let hints = breakpoint_hints(c, pi_a, Var::B, b_domain, hints, budget);
    let cfg = SeriesConfig::default();
    let f = |b: f64| expected_split(c, pi_a, &MixedStrategy::point(b), &cfg).map(|s| s.combine());
    Ok(search::maximize(b_domain, f, &hints, budget)?)
}

/// `inf_a c^(a, pi_b)` with the minimizing point.
pub fn flat_search(
    c: &Expr,
    pi_b: &MixedStrategy,
    a_domain: &Domain,
    budget: &SearchBudget,
    hints: &SearchHints,
) -> Result<SearchOutcome, MeasureError> {
    let hints = breakpoint_hints(c, pi_b, Var::A, a_domain, hints, budget);
    let cfg = SeriesConfig::default();
    let f = |a: f64| expected_split(c, &MixedStrategy::point(a), pi_b, &cfg).map(|s| s.combine());
    Ok(search::minimize(a_domain, f, &hints, budget)?)
}

/// Worst expected loss of Player I's strategy: `sup` over pure `b`.
pub fn c_sharp(c: &Expr, pi_a: &MixedStrategy, b_domain: &Domain, budget: &SearchBudget) -> Result<ExtendedPayoff, MeasureError> {
    Ok(sharp_search(c, pi_a, b_domain, budget, &SearchHints::default())?.value)
}

/// Guaranteed expected gain of Player II's strategy: `inf` over pure `a`.
pub fn c_flat(c: &Expr, pi_b: &MixedStrategy, a_domain: &Domain, budget: &SearchBudget) -> Result<ExtendedPayoff, MeasureError> {
    Ok(flat_search(c, pi_b, a_domain, budget, &SearchHints::default())?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SafeReason {
    FiniteSupport,
    /// The nonnegative part is bounded over all opposing pure actions.
    PositivePartBounded,
    /// The nonpositive part is bounded below over all opposing pure actions.
    NegativePartBounded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", content = "detail")]
pub enum SafetyVerdict {
    Safe(SafeReason),
    /// An opposing strategy against which the expected payoff is undefined.
    UnsafeWitness(MixedStrategy),
    Inconclusive,
}

pub const DEFAULT_PROBES: usize = 64;

/// Probe points of a domain ordered by growing distance from its reference
/// point, grouped into doubling levels.
fn probe_levels(domain: &Domain, probes: usize) -> Vec<Vec<f64>> {
    if let Some(all) = domain.enumerate(probes) {
        return all.into_iter().map(|p| vec![p]).collect();
    }
    let anchor = domain.reference_point();
    let levels = (probes / 2).max(4);
    let mut out = vec![vec![anchor]];
    for k in 0..levels {
        let r = 2f64.powi(k as i32);
        let mut level = Vec::new();
        for t in [anchor - r, anchor + r] {
            let q = domain.clamp(t);
            if domain.contains(q) && !out.iter().flatten().any(|p| *p == q) && !level.contains(&q) {
                level.push(q);
            }
        }
        if level.is_empty() && domain.is_compact() {
            break;
        }
        if !level.is_empty() {
            out.push(level);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Trend {
    Bounded,
    Unbounded,
    Unclear,
}

/// Reads a running extreme (nondecreasing sequence) as bounded or not.
fn trend(running: &[f64]) -> Trend {
    if running.iter().any(|v| v.is_infinite()) {
        return Trend::Unbounded;
    }
    if running.len() < 4 {
        return Trend::Unclear;
    }
    let n = running.len();
    let tail = &running[n - 4..];
    let scale = tail[3].abs().max(1.0);
    if tail[3] - tail[0] <= 1e-9 * scale {
        return Trend::Bounded;
    }
    let incs: Vec<f64> = tail.windows(2).map(|w| w[1] - w[0]).collect();
    if incs.iter().all(|d| *d > 0.0) && incs.windows(2).all(|w| w[1] >= 0.9 * w[0]) {
        return Trend::Unbounded;
    }
    Trend::Unclear
}

/// Decides whether `pi` (a strategy of `side`) is safe: whether the expected
/// payoff is defined against every opposing strategy.
pub fn classify_safety(
    c: &Expr,
    pi: &MixedStrategy,
    side: Player,
    opponent_domain: &Domain,
    probes: usize,
) -> Result<SafetyVerdict, MeasureError> {
    if pi.is_finite_support() {
        return Ok(SafetyVerdict::Safe(SafeReason::FiniteSupport));
    }
    let cfg = SeriesConfig::default();
    let pair = |q: f64| -> Result<PayoffSplit, MeasureError> {
        let opp = MixedStrategy::point(q);
        match side {
            Player::B => expected_split(c, &opp, pi, &cfg),
            Player::A => expected_split(c, pi, &opp, &cfg),
        }
    };
    let mut pos_running = Vec::new();
    let mut neg_running = Vec::new();
    let (mut pos_sup, mut neg_inf) = (0.0f64, 0.0f64);
    let mut pos_inf_at = None;
    let mut neg_inf_at = None;
    'levels: for level in probe_levels(opponent_domain, probes) {
        for q in level {
            let split = match pair(q) {
                Ok(s) => s,
                Err(MeasureError::Eval(EvalError::Overflow(_))) | Err(MeasureError::SeriesUndecided { .. }) => {
                    break 'levels
                }
                Err(e) => return Err(e),
            };
            let p = split.positive.value();
            let n = split.negative.value();
            if p.is_infinite() && n.is_infinite() {
                return Ok(SafetyVerdict::UnsafeWitness(MixedStrategy::point(q)));
            }
            if p.is_infinite() {
                pos_inf_at.get_or_insert(q);
            }
            if n.is_infinite() {
                neg_inf_at.get_or_insert(q);
            }
            pos_sup = pos_sup.max(p);
            neg_inf = neg_inf.min(n);
        }
        pos_running.push(pos_sup);
        neg_running.push(-neg_inf);
    }
    if let (Some(p), Some(n)) = (pos_inf_at, neg_inf_at) {
        return Ok(SafetyVerdict::UnsafeWitness(MixedStrategy::finite([(p, 0.5), (n, 0.5)])?));
    }
    let pos_trend = trend(&pos_running);
    let neg_trend = trend(&neg_running);
    if pos_trend == Trend::Bounded {
        return Ok(SafetyVerdict::Safe(SafeReason::PositivePartBounded));
    }
    if neg_trend == Trend::Bounded {
        return Ok(SafetyVerdict::Safe(SafeReason::NegativePartBounded));
    }
    if *opponent_domain == (Domain::IntegerRange { lo: 1, hi: None }) {
        let candidates = [(1, 2), (1, 3), (2, 3), (3, 4), (9, 10), (1, 10), (1, 12), (99, 100)];
        for (p, q) in candidates {
            let witness = MixedStrategy::geometric(Ratio::rational(p, q)?);
            let split = match side {
                Player::B => expected_split(c, &witness, pi, &cfg),
                Player::A => expected_split(c, pi, &witness, &cfg),
            };
            match split {
                Ok(s) if s.combine() == ExtendedPayoff::Undefined => {
                    return Ok(SafetyVerdict::UnsafeWitness(witness));
                }
                Ok(_) | Err(MeasureError::SeriesUndecided { .. }) | Err(MeasureError::Eval(EvalError::Overflow(_))) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(SafetyVerdict::Inconclusive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    const TIMING: &str = "6^a*4^b*[b<a] - 6^b*4^a*[a<b]";

    fn closed_form(a: f64) -> f64 {
        5.5 * 6f64.powf(a) - 27.5 * 2f64.powf(a)
    }

    #[test]
    fn point_masses() {
        let c = parse("a^2-b^2").unwrap();
        let v = expected_payoff(&c, &MixedStrategy::point(0.0), &MixedStrategy::point(0.0)).unwrap();
        assert_eq!(v, ExtendedPayoff::Finite(0.0));
    }

    #[test]
    fn geometric_weights_sum_to_one() {
        for r in [1.0 / 12.0, 0.5, 0.9] {
            let mut total = 0.0;
            let mut k = 1;
            loop {
                let w = MixedStrategy::geometric_weight(r, k);
                total += w;
                if w < 1e-18 {
                    break;
                }
                k += 1;
            }
            assert!((total - 1.0).abs() < 1e-12, "r = {r}: {total}");
        }
        assert!((MixedStrategy::geometric_weight(1.0 / 12.0, 1) - 11.0 / 12.0).abs() < 1e-15);
        assert!((MixedStrategy::geometric_weight(0.5, 3) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn timing_game_against_geometric_tail() {
        let c = parse(TIMING).unwrap();
        let pb = MixedStrategy::geometric(Ratio::rational(1, 12).unwrap());
        let split = expected_split(&c, &MixedStrategy::point(2.0), &pb, &SeriesConfig::default()).unwrap();
        let v = split.combine().finite().unwrap();
        assert!((v - 88.0).abs() <= 1e-9 * 88.0, "{v}");
        assert!(split.tail_bound() < 1e-9 * 88.0);
        for a in 1..=6 {
            let v = expected_payoff(&c, &MixedStrategy::point(a as f64), &pb).unwrap().finite().unwrap();
            let want = closed_form(a as f64);
            assert!((v - want).abs() <= 1e-9 * want.abs(), "a = {a}: {v} vs {want}");
        }
    }

    #[test]
    fn timing_game_geometric_pair_is_undefined() {
        let c = parse(TIMING).unwrap();
        let pa = MixedStrategy::geometric(Ratio::rational(1, 2).unwrap());
        let pb = MixedStrategy::geometric(Ratio::rational(1, 12).unwrap());
        let split = expected_split(&c, &pa, &pb, &SeriesConfig::default()).unwrap();
        assert_eq!(split.positive.status, SeriesStatus::DivergesPlus);
        assert_eq!(split.negative.status, SeriesStatus::DivergesMinus);
        assert_eq!(split.combine(), ExtendedPayoff::Undefined);
    }

    #[test]
    fn sharp_examples() {
        let c = parse("a^2-b^2").unwrap();
        let budget = SearchBudget::default();
        let v = c_sharp(&c, &MixedStrategy::point(0.0), &Domain::RealLine, &budget).unwrap();
        assert_eq!(v, ExtendedPayoff::Finite(0.0));
        let v = c_sharp(&c, &MixedStrategy::point(1.0), &Domain::interval(-1.0, 1.0).unwrap(), &budget).unwrap();
        assert_eq!(v, ExtendedPayoff::Finite(1.0));
        let lin = parse("a+b").unwrap();
        let v = c_sharp(&lin, &MixedStrategy::point(0.0), &Domain::interval(0.0, f64::INFINITY).unwrap(), &budget).unwrap();
        assert_eq!(v, ExtendedPayoff::PlusInfinity);
    }

    #[test]
    fn flat_examples() {
        let c = parse("a^2-b^2").unwrap();
        let budget = SearchBudget::default();
        assert_eq!(c_flat(&c, &MixedStrategy::point(0.0), &Domain::RealLine, &budget).unwrap(), ExtendedPayoff::Finite(0.0));
        assert_eq!(
            c_flat(&c, &MixedStrategy::point(5.0), &Domain::interval(-1.0, 1.0).unwrap(), &budget).unwrap(),
            ExtendedPayoff::Finite(-25.0)
        );
        let t = parse(TIMING).unwrap();
        let pb = MixedStrategy::geometric(Ratio::rational(1, 12).unwrap());
        let o = flat_search(&t, &pb, &Domain::integers(1, None).unwrap(), &budget, &SearchHints::default()).unwrap();
        let v = o.value.finite().unwrap();
        assert!((v + 22.0).abs() < 1e-9, "{v}");
        assert_eq!(o.argbest, Some(1.0));
    }

    #[test]
    fn safety_examples() {
        let t = parse(TIMING).unwrap();
        let ints = Domain::integers(1, None).unwrap();
        let pb = MixedStrategy::geometric(Ratio::rational(1, 12).unwrap());
        match classify_safety(&t, &pb, Player::B, &ints, DEFAULT_PROBES).unwrap() {
            SafetyVerdict::UnsafeWitness(w) => {
                assert_eq!(w, MixedStrategy::geometric(Ratio::rational(1, 2).unwrap()));
            }
            other => panic!("expected witness, got {other:?}"),
        }
        let fin = MixedStrategy::finite([(1.0, 0.5), (3.0, 0.5)]).unwrap();
        assert_eq!(
            classify_safety(&t, &fin, Player::B, &ints, DEFAULT_PROBES).unwrap(),
            SafetyVerdict::Safe(SafeReason::FiniteSupport)
        );
        let q = parse("a^2-b^2").unwrap();
        let verdict = classify_safety(&q, &pb, Player::B, &Domain::RealLine, DEFAULT_PROBES).unwrap();
        assert!(matches!(verdict, SafetyVerdict::Safe(_)), "{verdict:?}");
    }

    #[test]
    fn strategy_json_shapes() {
        let s: MixedStrategy = serde_json::from_str(r#"{"kind":"finite","atoms":[[1.0,0.25],[0.0,0.75]]}"#).unwrap();
        assert_eq!(s, MixedStrategy::finite([(0.0, 0.75), (1.0, 0.25)]).unwrap());
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"{"kind":"finite","atoms":[[0.0,0.75],[1.0,0.25]]}"#);
        let g: MixedStrategy = serde_json::from_str(r#"{"kind":"geometric","ratio":"1/12"}"#).unwrap();
        assert_eq!(g, MixedStrategy::geometric(Ratio::rational(1, 12).unwrap()));
        assert_eq!(serde_json::to_string(&g).unwrap(), r#"{"kind":"geometric","ratio":"1/12"}"#);
        let d: MixedStrategy = serde_json::from_str(r#"{"kind":"geometric","ratio":0.0833333333}"#).unwrap();
        assert!(matches!(d, MixedStrategy::GeometricTail(r) if r.exact.is_none()));
        assert!(serde_json::from_str::<MixedStrategy>(r#"{"kind":"finite","atoms":[[0,0.5]]}"#).is_err());
        assert!(serde_json::from_str::<MixedStrategy>(r#"{"kind":"geometric","ratio":1.5}"#).is_err());
    }

    #[test]
    fn validation_against_domains() {
        let ints = Domain::integers(1, None).unwrap();
        let g = MixedStrategy::geometric(Ratio::new(0.5).unwrap());
        assert!(g.validate_in(&ints).is_ok());
        assert!(g.validate_in(&Domain::RealLine).is_err());
        let f = MixedStrategy::point(2.0);
        assert!(f.validate_in(&Domain::interval(0.0, 1.0).unwrap()).is_err());
        assert!(MixedStrategy::finite([(0.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(MixedStrategy::finite([(0.0, 1.5), (1.0, -0.5)]).is_err());
    }
}
