//! Finite zero-sum games: an exact simplex solver and fictitious play.

use serde::Serialize;
use thiserror::Error;

use crate::measures::Player;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("game must have at least one row and one column")]
    Empty,
    #[error("row {row} has {got} entries, expected {expected}")]
    Ragged { row: usize, got: usize, expected: usize },
    #[error("entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot parse matrix entry `{0}`")]
    Parse(String),
    #[error("duality gap {gap:e} above tolerance")]
    NumericalFailure { gap: f64, best: Box<MatrixSolution> },
}

/// Entry `(i, j)` is what Player I (rows) pays Player II (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGame {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    pub row_points: Vec<f64>,
    pub col_points: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixSolution {
    pub value: f64,
    pub row_strategy: Vec<f64>,
    pub col_strategy: Vec<f64>,
    pub gap: f64,
}

impl MatrixGame {
    pub fn new(payoff: Vec<Vec<f64>>, row_points: Vec<f64>, col_points: Vec<f64>) -> Result<MatrixGame, MatrixError> {
        let rows = payoff.len();
        let cols = payoff.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 {
            return Err(MatrixError::Empty);
        }
        let mut entries = Vec::with_capacity(rows * cols);
        for (i, row) in payoff.into_iter().enumerate() {
            if row.len() != cols {
                return Err(MatrixError::Ragged {
                    row: i,
                    got: row.len(),
                    expected: cols,
                });
            }
            entries.extend(row);
        }
        MatrixGame::from_flat(rows, cols, entries, row_points, col_points)
    }

    /// Row and column points default to `0, 1, 2, ...`.
    pub fn from_rows(payoff: Vec<Vec<f64>>) -> Result<MatrixGame, MatrixError> {
        let m = payoff.len();
        let n = payoff.first().map_or(0, Vec::len);
        MatrixGame::new(payoff, index_points(m), index_points(n))
    }

    pub fn from_flat(
        rows: usize,
        cols: usize,
        entries: Vec<f64>,
        row_points: Vec<f64>,
        col_points: Vec<f64>,
    ) -> Result<MatrixGame, MatrixError> {
        if rows == 0 || cols == 0 {
            return Err(MatrixError::Empty);
        }
        if entries.len() != rows * cols {
            return Err(MatrixError::DimensionMismatch {
                expected: rows * cols,
                got: entries.len(),
            });
        }
        if let Some(k) = entries.iter().position(|v| !v.is_finite()) {
            return Err(MatrixError::NonFinite {
                row: k / cols,
                col: k % cols,
            });
        }
        if row_points.len() != rows {
            return Err(MatrixError::DimensionMismatch {
                expected: rows,
                got: row_points.len(),
            });
        }
        if col_points.len() != cols {
            return Err(MatrixError::DimensionMismatch {
                expected: cols,
                got: col_points.len(),
            });
        }
        Ok(MatrixGame {
            rows,
            cols,
            entries,
            row_points,
            col_points,
        })
    }

    /// Reads rows separated by newlines, entries by whitespace or commas.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse_text(text: &str) -> Result<MatrixGame, MatrixError> {
        let mut rows = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|_| MatrixError::Parse(t.to_string())))
                .collect::<Result<Vec<f64>, _>>()?;
            rows.push(row);
        }
        MatrixGame::from_rows(rows)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    /// `alpha * g + beta`.
    pub fn affine(&self, alpha: f64, beta: f64) -> MatrixGame {
        MatrixGame {
            entries: self.entries.iter().map(|v| alpha * v + beta).collect(),
            ..self.clone()
        }
    }

    /// The game with the players' roles exchanged: `-transpose(g)`.
    pub fn swapped(&self) -> MatrixGame {
        let mut entries = vec![0.0; self.entries.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                entries[j * self.rows + i] = -self.get(i, j);
            }
        }
        MatrixGame {
            rows: self.cols,
            cols: self.rows,
            entries,
            row_points: self.col_points.clone(),
            col_points: self.row_points.clone(),
        }
    }

    /// `(M y)_i` for every row.
    pub fn row_payoffs(&self, col_strategy: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(col_strategy).map(|(m, y)| m * y).sum())
            .collect()
    }

    /// `(x^T M)_j` for every column.
    pub fn col_payoffs(&self, row_strategy: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, x) in row_strategy.iter().enumerate() {
            if *x == 0.0 {
                continue;
            }
            for (o, m) in out.iter_mut().zip(self.row(i)) {
                *o += x * m;
            }
        }
        out
    }

    /// Exact duality gap `max_j (x^T M)_j - min_i (M y)_i` and its two terms.
    pub fn duality_bounds(&self, row_strategy: &[f64], col_strategy: &[f64]) -> (f64, f64) {
        let upper = self.col_payoffs(row_strategy).into_iter().fold(f64::NEG_INFINITY, f64::max);
        let lower = self.row_payoffs(col_strategy).into_iter().fold(f64::INFINITY, f64::min);
        (upper, lower)
    }
}

fn index_points(n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64).collect()
}

/// Index of the best pure reply and its expected payoff. Against Player I's
/// `strategy` the reply is Player II's (argmax); against Player II's, Player
/// I's (argmin). Ties go to the lowest index.
pub fn best_pure_response(g: &MatrixGame, strategy: &[f64], side: Player) -> Result<(usize, f64), MatrixError> {
    let (values, maximize) = match side {
        Player::B => {
            check_len(strategy, g.rows)?;
            (g.col_payoffs(strategy), true)
        }
        Player::A => {
            check_len(strategy, g.cols)?;
            (g.row_payoffs(strategy), false)
        }
    };
    let mut best = 0;
    for (k, v) in values.iter().enumerate().skip(1) {
        let better = if maximize { *v > values[best] } else { *v < values[best] };
        if better {
            best = k;
        }
    }
    Ok((best, values[best]))
}

fn check_len(v: &[f64], expected: usize) -> Result<(), MatrixError> {
    if v.len() != expected {
        return Err(MatrixError::DimensionMismatch { expected, got: v.len() });
    }
    Ok(())
}

/// Degenerate pivots in a row before the entering rule switches to Bland's.
const DEGENERATE_STREAK: usize = 50;
const PIVOT_EPS: f64 = 1e-12;

struct Tableau {
    width: usize,
    /// Constraint rows followed by the objective row.
    cells: Vec<f64>,
    basis: Vec<usize>,
    constraints: usize,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.cells[r * self.width + c]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let p = self.at(pr, pc);
        let (before, rest) = self.cells.split_at_mut(pr * w);
        let (prow, after) = rest.split_at_mut(w);
        for v in prow.iter_mut() {
            *v /= p;
        }
        prow[pc] = 1.0;
        let eliminate = |row: &mut [f64]| {
            let f = row[pc];
            if f != 0.0 {
                for (v, q) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * q;
                }
                row[pc] = 0.0;
            }
        };
        before.chunks_mut(w).for_each(eliminate);
        after.chunks_mut(w).for_each(eliminate);
        self.basis[pr] = pc;
    }
}

/// Solves the game by the simplex method on the row player's program
/// `max sum(w)` subject to `M'^T w <= 1`, `w >= 0`, where `M'` is the payoff
/// shifted to be positive. Column strategies are read off the duals.
pub fn solve_lp(g: &MatrixGame, tol: f64) -> Result<MatrixSolution, MatrixError> {
    let (m, n) = (g.rows, g.cols);
    let min = g.entries.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = 1.0 - min;
    let width = m + n + 1;
    let mut cells = vec![0.0; (n + 1) * width];
    for j in 0..n {
        let row = &mut cells[j * width..(j + 1) * width];
        for i in 0..m {
            row[i] = g.get(i, j) + shift;
        }
        row[m + j] = 1.0;
        row[m + n] = 1.0;
    }
    for i in 0..m {
        cells[n * width + i] = -1.0;
    }
    let mut t = Tableau {
        width,
        cells,
        basis: (m..m + n).collect(),
        constraints: n,
    };

    let mut degenerate = 0usize;
    let max_pivots = 50 * (m + n) + 1000;
    for _ in 0..max_pivots {
        let obj = n;
        let entering = if degenerate >= DEGENERATE_STREAK {
            (0..m + n).find(|&c| t.at(obj, c) < -PIVOT_EPS)
        } else {
            let mut best: Option<(usize, f64)> = None;
            for c in 0..m + n {
                let v = t.at(obj, c);
                if v < -PIVOT_EPS && best.is_none_or(|(_, b)| v < b) {
                    best = Some((c, v));
                }
            }
            best.map(|(c, _)| c)
        };
        let Some(pc) = entering else { break };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..t.constraints {
            let a = t.at(r, pc);
            if a > PIVOT_EPS {
                let ratio = t.at(r, m + n) / a;
                let better = match leave {
                    None => true,
                    Some((lr, lratio)) => ratio < lratio || (ratio == lratio && t.basis[r] < t.basis[lr]),
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        // The feasible region lies inside a bounded box since M' > 0.
        let Some((pr, ratio)) = leave else { break };
        if ratio <= PIVOT_EPS {
            degenerate += 1;
        } else {
            degenerate = 0;
        }
        t.pivot(pr, pc);
    }

    let mut w = vec![0.0; m];
    for (r, &b) in t.basis.iter().enumerate() {
        if b < m {
            w[b] = t.at(r, m + n).max(0.0);
        }
    }
    let u: Vec<f64> = (0..n).map(|j| t.at(n, m + j).max(0.0)).collect();
    let row_strategy = normalize(&w);
    let col_strategy = normalize(&u);
    let (upper, lower) = g.duality_bounds(&row_strategy, &col_strategy);
    let gap = (upper - lower).max(0.0);
    // The simplex objective, kept inside the bounds the strategies certify.
    let objective = 1.0 / t.at(n, m + n) - shift;
    let value = if objective.is_finite() { objective.clamp(lower.min(upper), upper.max(lower)) } else { 0.5 * (upper + lower) };
    let sol = MatrixSolution {
        value,
        row_strategy,
        col_strategy,
        gap,
    };
    let scale = g.entries.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    if gap > tol * scale.max(1.0) && gap > tol {
        log::warn!("simplex finished with duality gap {gap:e}");
        return Err(MatrixError::NumericalFailure {
            gap,
            best: Box::new(sol),
        });
    }
    Ok(sol)
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if !(total > 0.0) {
        let mut out = vec![0.0; v.len()];
        out[0] = 1.0;
        return out;
    }
    v.iter().map(|x| x / total).collect()
}

/// Alternating fictitious play: each player in turn best-responds to the
/// other's empirical frequencies. The value is the midpoint of the exact
/// bounds attained by the averaged strategies.
pub fn solve_fictitious_play(g: &MatrixGame, iters: usize) -> MatrixSolution {
    let (m, n) = (g.rows, g.cols);
    let iters = iters.max(1);
    let mut row_counts = vec![0u64; m];
    let mut col_counts = vec![0u64; n];
    // Cumulative payoff of each row against the columns played so far, and
    // of each column against the rows played so far.
    let mut row_acc = vec![0.0; m];
    let mut col_acc = vec![0.0; n];
    for t in 0..iters {
        let i = if t == 0 { 0 } else { argbest(&row_acc, false) };
        row_counts[i] += 1;
        for (acc, v) in col_acc.iter_mut().zip(g.row(i)) {
            *acc += v;
        }
        let j = argbest(&col_acc, true);
        col_counts[j] += 1;
        for (k, acc) in row_acc.iter_mut().enumerate() {
            *acc += g.get(k, j);
        }
    }
    let total = iters as f64;
    let row_strategy: Vec<f64> = row_counts.iter().map(|c| *c as f64 / total).collect();
    let col_strategy: Vec<f64> = col_counts.iter().map(|c| *c as f64 / total).collect();
    let (upper, lower) = g.duality_bounds(&row_strategy, &col_strategy);
    MatrixSolution {
        value: 0.5 * (upper + lower),
        row_strategy,
        col_strategy,
        gap: (upper - lower).max(0.0),
    }
}

fn argbest(v: &[f64], maximize: bool) -> usize {
    let mut best = 0;
    for k in 1..v.len() {
        if (maximize && v[k] > v[best]) || (!maximize && v[k] < v[best]) {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn game(rows: &[&[f64]]) -> MatrixGame {
        MatrixGame::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn matching_pennies() {
        let g = game(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        let s = solve_lp(&g, 1e-9).unwrap();
        assert!(s.value.abs() < 1e-12);
        assert!(close(&s.row_strategy, &[0.5, 0.5], 1e-12));
        assert!(close(&s.col_strategy, &[0.5, 0.5], 1e-12));
        let fp = solve_fictitious_play(&g, 10_000);
        assert!(fp.value.abs() < 0.01);
    }

    #[test]
    fn two_by_two_without_saddle() {
        let g = game(&[&[3.0, 1.0], &[0.0, 2.0]]);
        let s = solve_lp(&g, 1e-9).unwrap();
        assert!((s.value - 1.5).abs() < 1e-12);
        assert!(close(&s.row_strategy, &[0.5, 0.5], 1e-12));
        assert!(close(&s.col_strategy, &[0.25, 0.75], 1e-12));
        let fp = solve_fictitious_play(&g, 100_000);
        assert!((fp.value - 1.5).abs() < 0.005, "{}", fp.value);
    }

    #[test]
    fn rock_paper_scissors() {
        let g = game(&[&[0.0, 1.0, -1.0], &[-1.0, 0.0, 1.0], &[1.0, -1.0, 0.0]]);
        let s = solve_lp(&g, 1e-9).unwrap();
        let third = 1.0 / 3.0;
        assert!(s.value.abs() < 1e-12);
        assert!(close(&s.row_strategy, &[third; 3], 1e-12));
        assert!(close(&s.col_strategy, &[third; 3], 1e-12));
    }

    #[test]
    fn one_by_one() {
        let g = game(&[&[7.0]]);
        let fp = solve_fictitious_play(&g, 1);
        assert_eq!(fp.value, 7.0);
        assert_eq!(fp.row_strategy, vec![1.0]);
        assert_eq!(fp.col_strategy, vec![1.0]);
        let s = solve_lp(&g, 1e-9).unwrap();
        assert_eq!(s.value, 7.0);
    }

    #[test]
    fn pure_saddle_and_dominance() {
        let g = game(&[&[4.0, 2.0, 5.0], &[1.0, 0.5, 0.0], &[6.0, 3.0, 8.0]]);
        let s = solve_lp(&g, 1e-9).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12, "{}", s.value);
        assert!(close(&s.row_strategy, &[0.0, 1.0, 0.0], 1e-12));
    }

    #[test]
    fn best_responses() {
        let pennies = game(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        assert_eq!(best_pure_response(&pennies, &[1.0, 0.0], Player::B).unwrap(), (0, 1.0));
        let g = game(&[&[3.0, 1.0], &[0.0, 2.0]]);
        assert_eq!(best_pure_response(&g, &[0.25, 0.75], Player::A).unwrap(), (0, 1.5));
        assert_eq!(best_pure_response(&g, &[1.0, 0.0], Player::B).unwrap(), (0, 3.0));
        assert!(matches!(
            best_pure_response(&g, &[1.0, 0.0, 0.0], Player::B),
            Err(MatrixError::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn rejects_bad_games() {
        assert_eq!(MatrixGame::from_rows(vec![]), Err(MatrixError::Empty));
        assert!(matches!(MatrixGame::from_rows(vec![vec![1.0, 2.0], vec![3.0]]), Err(MatrixError::Ragged { .. })));
        assert!(matches!(
            MatrixGame::from_rows(vec![vec![1.0, f64::NAN]]),
            Err(MatrixError::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn text_matrices() {
        let g = MatrixGame::parse_text("# pennies\n1, -1\n-1 1\n\n").unwrap();
        assert_eq!(g, game(&[&[1.0, -1.0], &[-1.0, 1.0]]));
        assert!(matches!(MatrixGame::parse_text("1 x"), Err(MatrixError::Parse(_))));
    }

    #[test]
    fn swapped_game_negates_value() {
        let g = game(&[&[3.0, 1.0, -2.0], &[0.0, 2.0, 4.0]]);
        let v = solve_lp(&g, 1e-9).unwrap().value;
        let w = solve_lp(&g.swapped(), 1e-9).unwrap().value;
        assert!((v + w).abs() < 1e-9);
    }
}
