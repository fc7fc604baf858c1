//! Action domains.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("interval needs lo < hi, got ({lo}, {hi})")]
    EmptyInterval { lo: f64, hi: f64 },
    #[error("integer range needs lo <= hi, got ({lo}, {hi})")]
    EmptyIntegerRange { lo: i64, hi: i64 },
    #[error("finite set must be nonempty")]
    EmptySet,
    #[error("non-finite value {0} in a finite set")]
    NonFinite(f64),
    #[error("cannot parse domain `{0}`; expected reals, interval(lo,hi), integers(lo,hi) or set(v1,...)")]
    Syntax(String),
}

/// Action set of one player, a subset of the real line.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    RealLine,
    /// Closed interval; either end may be infinite but not both.
    Interval { lo: f64, hi: f64 },
    /// `{lo, lo+1, ..., hi}`, `hi = None` meaning unbounded above.
    IntegerRange { lo: i64, hi: Option<i64> },
    /// Sorted, duplicate-free, nonempty.
    FiniteSet(Vec<f64>),
}

impl Domain {
    pub fn interval(lo: f64, hi: f64) -> Result<Domain, DomainError> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(DomainError::EmptyInterval { lo, hi });
        }
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            Ok(Domain::RealLine)
        } else {
            Ok(Domain::Interval { lo, hi })
        }
    }

    /// Like [`Domain::interval`] but maps `lo == hi` to a one-point set.
    pub fn from_bounds(lo: f64, hi: f64) -> Result<Domain, DomainError> {
        if lo == hi && lo.is_finite() {
            Ok(Domain::FiniteSet(vec![lo]))
        } else {
            Domain::interval(lo, hi)
        }
    }

    pub fn integers(lo: i64, hi: Option<i64>) -> Result<Domain, DomainError> {
        if let Some(hi) = hi {
            if hi < lo {
                return Err(DomainError::EmptyIntegerRange { lo, hi });
            }
        }
        Ok(Domain::IntegerRange { lo, hi })
    }

    pub fn finite_set(mut values: Vec<f64>) -> Result<Domain, DomainError> {
        if values.is_empty() {
            return Err(DomainError::EmptySet);
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(DomainError::NonFinite(*bad));
        }
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(Domain::FiniteSet(values))
    }

    pub fn lower(&self) -> f64 {
        match self {
            Domain::RealLine => f64::NEG_INFINITY,
            Domain::Interval { lo, .. } => *lo,
            Domain::IntegerRange { lo, .. } => *lo as f64,
            Domain::FiniteSet(v) => v[0],
        }
    }

    pub fn upper(&self) -> f64 {
        match self {
            Domain::RealLine => f64::INFINITY,
            Domain::Interval { hi, .. } => *hi,
            Domain::IntegerRange { hi, .. } => hi.map_or(f64::INFINITY, |h| h as f64),
            Domain::FiniteSet(v) => v[v.len() - 1],
        }
    }

    pub fn is_compact(&self) -> bool {
        self.lower().is_finite() && self.upper().is_finite()
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Domain::IntegerRange { .. } | Domain::FiniteSet(_))
    }

    pub fn contains(&self, v: f64) -> bool {
        self.contains_within(v, 0.0)
    }

    /// Membership with an absolute slack for the continuous kinds.
    pub fn contains_within(&self, v: f64, slack: f64) -> bool {
        if !v.is_finite() {
            return false;
        }
        match self {
            Domain::RealLine => true,
            Domain::Interval { lo, hi } => v >= lo - slack && v <= hi + slack,
            Domain::IntegerRange { lo, hi } => {
                v.fract() == 0.0 && v >= *lo as f64 && hi.is_none_or(|h| v <= h as f64)
            }
            Domain::FiniteSet(pts) => pts.iter().any(|p| (p - v).abs() <= slack),
        }
    }

    /// Nearest point of the domain to `v`.
    pub fn clamp(&self, v: f64) -> f64 {
        match self {
            Domain::RealLine => v,
            Domain::Interval { lo, hi } => v.clamp(*lo, *hi),
            Domain::IntegerRange { .. } => v.round().clamp(self.lower(), self.upper()),
            Domain::FiniteSet(pts) => *pts
                .iter()
                .min_by(|p, q| (*p - v).abs().total_cmp(&(*q - v).abs()))
                .expect("nonempty"),
        }
    }

    /// Midpoint of the finite part of the domain, `0` when it has none.
    pub fn reference_point(&self) -> f64 {
        let (lo, hi) = (self.lower(), self.upper());
        let mid = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => 0.0,
        };
        self.clamp(mid)
    }

    /// Every point of a discrete domain, when there are at most `limit`.
    pub fn enumerate(&self, limit: usize) -> Option<Vec<f64>> {
        match self {
            Domain::FiniteSet(v) if v.len() <= limit => Some(v.clone()),
            Domain::IntegerRange { lo, hi: Some(hi) } if ((hi - lo) as u64) < limit as u64 => {
                Some((*lo..=*hi).map(|k| k as f64).collect())
            }
            _ => None,
        }
    }
}

fn fmt_bound(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::RealLine => f.write_str("reals"),
            Domain::Interval { lo, hi } => write!(f, "interval({},{})", fmt_bound(*lo), fmt_bound(*hi)),
            Domain::IntegerRange { lo, hi } => match hi {
                Some(h) => write!(f, "integers({lo},{h})"),
                None => write!(f, "integers({lo},inf)"),
            },
            Domain::FiniteSet(v) => {
                let parts: Vec<String> = v.iter().map(|p| format!("{p:?}")).collect();
                write!(f, "set({})", parts.join(","))
            }
        }
    }
}

fn parse_bound(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        t => t.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

impl FromStr for Domain {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Domain, DomainError> {
        let syntax = || DomainError::Syntax(s.to_string());
        let t = s.trim();
        if t == "reals" {
            return Ok(Domain::RealLine);
        }
        let open = t.find('(').ok_or_else(syntax)?;
        let inner = t[open + 1..].strip_suffix(')').ok_or_else(syntax)?;
        let args: Vec<&str> = inner.split(',').map(str::trim).collect();
        match &t[..open] {
            "interval" => {
                if args.len() != 2 {
                    return Err(syntax());
                }
                let lo = parse_bound(args[0]).ok_or_else(syntax)?;
                let hi = parse_bound(args[1]).ok_or_else(syntax)?;
                Domain::interval(lo, hi)
            }
            "integers" => {
                if args.len() != 2 {
                    return Err(syntax());
                }
                let lo: i64 = args[0].parse().map_err(|_| syntax())?;
                let hi = match args[1] {
                    "inf" | "+inf" => None,
                    h => Some(h.parse::<i64>().map_err(|_| syntax())?),
                };
                Domain::integers(lo, hi)
            }
            "set" => {
                let values = args
                    .iter()
                    .map(|a| a.parse::<f64>().map_err(|_| syntax()))
                    .collect::<Result<Vec<_>, _>>()?;
                Domain::finite_set(values)
            }
            _ => Err(syntax()),
        }
    }
}

impl Serialize for Domain {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Domain {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Domain, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syntax_round_trip() {
        for text in ["reals", "interval(0.0,inf)", "interval(-1.0,1.0)", "integers(1,inf)", "integers(0,5)", "set(0.0,1.0,2.5)"] {
            let d: Domain = text.parse().unwrap();
            assert_eq!(d.to_string(), text);
            assert_eq!(d.to_string().parse::<Domain>().unwrap(), d);
        }
        assert_eq!("interval(-inf,inf)".parse::<Domain>().unwrap(), Domain::RealLine);
        assert_eq!("interval(0, 1)".parse::<Domain>().unwrap(), Domain::Interval { lo: 0.0, hi: 1.0 });
    }

    #[test]
    fn invariants_enforced() {
        assert!(Domain::interval(1.0, 1.0).is_err());
        assert!(Domain::interval(2.0, 1.0).is_err());
        assert!(Domain::finite_set(vec![]).is_err());
        assert!(Domain::integers(3, Some(2)).is_err());
        assert_eq!(Domain::finite_set(vec![2.0, 1.0, 2.0]).unwrap(), Domain::FiniteSet(vec![1.0, 2.0]));
        assert_eq!(Domain::from_bounds(1.0, 1.0).unwrap(), Domain::FiniteSet(vec![1.0]));
        assert!("interval(a,b)".parse::<Domain>().is_err());
        assert!("box(0,1)".parse::<Domain>().is_err());
    }

    #[test]
    fn reference_points() {
        assert_eq!(Domain::RealLine.reference_point(), 0.0);
        assert_eq!(Domain::interval(1.0, 2.0).unwrap().reference_point(), 1.5);
        assert_eq!(Domain::interval(0.0, f64::INFINITY).unwrap().reference_point(), 0.0);
        assert_eq!(Domain::integers(1, None).unwrap().reference_point(), 1.0);
        assert_eq!(Domain::integers(1, Some(4)).unwrap().reference_point(), 3.0);
    }

    #[test]
    fn membership() {
        let ints = Domain::integers(1, None).unwrap();
        assert!(ints.contains(7.0));
        assert!(!ints.contains(0.0));
        assert!(!ints.contains(1.5));
        assert!(Domain::RealLine.contains(-1e300));
        assert!(!Domain::RealLine.contains(f64::NAN));
        assert_eq!(Domain::integers(0, Some(2)).unwrap().enumerate(10), Some(vec![0.0, 1.0, 2.0]));
    }
}
