//! The TOML game-file format.

use std::collections::BTreeMap;
use std::path::Path;

use saddlekit::expr::parse_with_params;
use saddlekit::paramlab::{linear_grid, DeclaredFlags, GameFamily, Profile};
use saddlekit::turnbased::{Bound, ConstraintSet, SequentialGame};
use saddlekit::{Domain, Expr, Var};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GameFileError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid game file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid game file: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> GameFileError {
    GameFileError::Invalid(msg.into())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    game: RawGame,
    family: Option<RawFamily>,
    sequential: Option<RawSequential>,
    flags: Option<DeclaredFlags>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGame {
    name: Option<String>,
    payoff: String,
    a_domain: Option<String>,
    b_domain: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFamily {
    x_grid: String,
    a_lo: Option<String>,
    a_hi: Option<String>,
    b_lo: Option<String>,
    b_hi: Option<String>,
    profile: Option<Profile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSequential {
    x_domain: Option<String>,
    a_lo: Option<String>,
    a_hi: Option<String>,
    a_points: Option<Vec<String>>,
    b_lo: Option<String>,
    b_hi: Option<String>,
    b_points: Option<Vec<String>>,
}

#[derive(Debug, Clone)]
pub enum Shape {
    Game { payoff: Expr, a_domain: Domain, b_domain: Domain },
    Family { family: GameFamily, profile: Option<Profile> },
    Sequential(SequentialGame),
}

impl Shape {
    pub fn kind(&self) -> &'static str {
        match self {
            Shape::Game { .. } => "game",
            Shape::Family { .. } => "family",
            Shape::Sequential(_) => "sequential",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GameFile {
    pub name: Option<String>,
    pub shape: Shape,
}

/// Parses `lo:hi:n`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    let bad = || format!("grid `{text}` is not of the form lo:hi:n");
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite()) || n == 0 || (n > 1 && !(lo < hi)) {
        return Err(bad());
    }
    Ok(linear_grid(lo, hi, n))
}

fn domain(text: &str, what: &str) -> Result<Domain, GameFileError> {
    text.parse().map_err(|e| invalid(format!("{what}: {e}")))
}

fn bound(text: &str, params: &BTreeMap<String, f64>, what: &str) -> Result<Bound, GameFileError> {
    Bound::parse(text, params).map_err(|e| invalid(format!("{what}: {e}")))
}

fn expr(text: &str, params: &BTreeMap<String, f64>, what: &str) -> Result<Expr, GameFileError> {
    parse_with_params(text, params).map_err(|e| invalid(format!("{what}: {e}")))
}

fn constraint(
    lo: &Option<String>,
    hi: &Option<String>,
    points: Option<&Vec<String>>,
    fallback: &Option<String>,
    params: &BTreeMap<String, f64>,
    side: &str,
) -> Result<ConstraintSet, GameFileError> {
    match (lo, hi, points) {
        (Some(l), Some(h), None) => Ok(ConstraintSet::Interval {
            lo: bound(l, params, &format!("{side}_lo"))?,
            hi: bound(h, params, &format!("{side}_hi"))?,
        }),
        (None, None, Some(pts)) => {
            if pts.is_empty() {
                return Err(invalid(format!("{side}_points is empty")));
            }
            let exprs = pts
                .iter()
                .map(|p| expr(p, params, &format!("{side}_points")))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ConstraintSet::Points(exprs))
        }
        (None, None, None) => match fallback {
            Some(d) => Ok(ConstraintSet::Fixed(domain(d, &format!("{side}_domain"))?)),
            None => Err(invalid(format!("no constraint for player {side}: give {side}_lo and {side}_hi or {side}_domain"))),
        },
        (Some(_), None, _) | (None, Some(_), _) => Err(invalid(format!("{side}_lo and {side}_hi must be given together"))),
        _ => Err(invalid(format!("{side}_points cannot be combined with {side}_lo/{side}_hi"))),
    }
}

impl GameFile {
    pub fn from_toml(text: &str) -> Result<GameFile, GameFileError> {
        let raw: RawFile = toml::from_str(text)?;
        let params = &raw.params;
        let payoff = expr(&raw.game.payoff, params, "payoff")?;
        let shape = match (raw.family, raw.sequential) {
            (Some(_), Some(_)) => return Err(invalid("a game file has either [family] or [sequential], not both")),
            (None, None) => {
                if payoff.uses(Var::X) {
                    return Err(invalid("payoff uses x but the file has no [family] or [sequential] section"));
                }
                let a = raw.game.a_domain.as_deref().ok_or_else(|| invalid("[game] needs a_domain"))?;
                let b = raw.game.b_domain.as_deref().ok_or_else(|| invalid("[game] needs b_domain"))?;
                Shape::Game {
                    payoff,
                    a_domain: domain(a, "a_domain")?,
                    b_domain: domain(b, "b_domain")?,
                }
            }
            (Some(f), None) => {
                let grid = parse_grid(&f.x_grid).map_err(invalid)?;
                let a_set = constraint(&f.a_lo, &f.a_hi, None, &raw.game.a_domain, params, "a")?;
                let b_set = constraint(&f.b_lo, &f.b_hi, None, &raw.game.b_domain, params, "b")?;
                let family = GameFamily::new(grid, a_set, b_set, payoff, raw.flags.unwrap_or_default())
                    .map_err(|e| invalid(e.to_string()))?;
                Shape::Family {
                    family,
                    profile: f.profile,
                }
            }
            (None, Some(s)) => {
                let x_domain = match &s.x_domain {
                    Some(d) => domain(d, "x_domain")?,
                    None => Domain::RealLine,
                };
                Shape::Sequential(SequentialGame {
                    x_domain,
                    phi_a: constraint(&s.a_lo, &s.a_hi, s.a_points.as_ref(), &raw.game.a_domain, params, "a")?,
                    phi_b: constraint(&s.b_lo, &s.b_hi, s.b_points.as_ref(), &raw.game.b_domain, params, "b")?,
                    f: payoff,
                })
            }
        };
        if raw.flags.is_some() && !matches!(shape, Shape::Family { .. }) {
            return Err(invalid("[flags] only applies to [family] files"));
        }
        Ok(GameFile {
            name: raw.game.name,
            shape,
        })
    }

    pub fn load(path: &Path) -> Result<GameFile, GameFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| GameFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        GameFile::from_toml(&text)
    }
}
