//! Zero-sum games with possibly noncompact action sets and unbounded payoffs.
//!
//! Payoffs are expressions in the actions `a` (Player I, the minimizer),
//! `b` (Player II, the maximizer) and optionally a state `x`. The crate
//! evaluates expected payoffs of mixed strategies with countable support,
//! solves finite games exactly, computes approximate saddle points of
//! continuous games, solves one-step games with perfect information, and
//! sweeps parametric families of games.

pub mod catalog;
pub mod continuous_game;
pub mod domain;
pub mod expr;
pub mod matrix_game;
pub mod measures;
pub mod paramlab;
pub mod search;
pub mod turnbased;

pub use continuous_game::{solve, verify_saddle, CoercivityCertificate, ContinuousError, RefinementBudget, SaddleCertificate};
pub use domain::Domain;
pub use expr::{parse, Bindings, EvalError, Expr, ParseError, Var};
pub use matrix_game::{solve_fictitious_play, solve_lp, MatrixGame, MatrixSolution};
pub use measures::{expected_payoff, ExtendedPayoff, MixedStrategy, Player, Ratio, SafetyVerdict};
pub use search::{SearchBudget, SearchHints};
