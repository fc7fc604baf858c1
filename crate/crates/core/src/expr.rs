//! Payoff and bound expressions.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr      = additive ;
//! additive  = term { ("+" | "-") term } ;
//! term      = unary { ("*" | "/") unary } ;
//! unary     = "-" unary | power ;
//! power     = primary [ "^" unary ] ;          (* right associative *)
//! primary   = number
//!           | ident
//!           | ident "(" expr { "," expr } ")"
//!           | "(" expr ")"
//!           | "[" expr rel expr "]" ;
//! rel       = "<" | "<=" | ">" | ">=" | "==" ;
//! number    = digit { digit } [ "." { digit } ] [ ("e" | "E") [ "+" | "-" ] digit { digit } ] ;
//! ident     = "x" | "a" | "b" | function | parameter ;
//! function  = "abs" | "exp" | "log" | "sqrt" | "min" | "max" ;
//! ```
//!
//! `[cond]` is an indicator and evaluates to exactly `0` or `1`.  In a
//! product, an indicator that evaluates to `0` makes the whole product `0`
//! without evaluating the other factor, so `[a>0]*log(a)` is total.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Game variable: state `x`, Player I action `a`, Player II action `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X,
    A,
    B,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::A => "a",
            Var::B => "b",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Abs,
    Exp,
    Log,
    Sqrt,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "abs" => Func::Abs,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn is_variadic(self) -> bool {
        matches!(self, Func::Min | Func::Max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl Rel {
    fn symbol(self) -> &'static str {
        match self {
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Gt => ">",
            Rel::Ge => ">=",
            Rel::Eq => "==",
        }
    }

    fn holds(self, l: f64, r: f64) -> bool {
        match self {
            Rel::Lt => l < r,
            Rel::Le => l <= r,
            Rel::Gt => l > r,
            Rel::Ge => l >= r,
            Rel::Eq => l == r,
        }
    }
}

/// Expression AST.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    /// Named constant declared at parse time.
    Param { name: String, value: f64 },
    Neg(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Call { func: Func, args: Vec<Expr> },
    Indicator {
        rel: Rel,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

/// Values bound to the game variables during evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bindings {
    pub x: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
}

impl Bindings {
    pub fn ab(a: f64, b: f64) -> Self {
        Bindings {
            x: None,
            a: Some(a),
            b: Some(b),
        }
    }

    pub fn xab(x: f64, a: f64, b: f64) -> Self {
        Bindings {
            x: Some(x),
            a: Some(a),
            b: Some(b),
        }
    }

    pub fn x(x: f64) -> Self {
        Bindings {
            x: Some(x),
            ..Default::default()
        }
    }

    pub fn with_x(mut self, x: Option<f64>) -> Self {
        self.x = x;
        self
    }

    fn get(&self, v: Var) -> Option<f64> {
        match v {
            Var::X => self.x,
            Var::A => self.a,
            Var::B => self.b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverflowSign {
    Positive,
    Negative,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("variable `{}` is not bound", .0.name())]
    UnboundVariable(Var),
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("result exceeds the finite floating-point range ({0:?})")]
    Overflow(OverflowSign),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at {line}:{column}: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        offset: usize,
        line: usize,
        column: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("unknown identifier `{name}` at {line}:{column}")]
    UnknownIdentifier {
        name: String,
        offset: usize,
        line: usize,
        column: usize,
    },
}

impl ParseError {
    /// Byte offset into the source, when the error has a location.
    pub fn offset(&self) -> Option<usize> {
        match self {
            ParseError::Empty => None,
            ParseError::Syntax { offset, .. } | ParseError::UnknownIdentifier { offset, .. } => {
                Some(*offset)
            }
        }
    }
}

/// Parses with no declared parameters.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    parse_with_params(text, &BTreeMap::new())
}

/// Parses, resolving any identifier found in `params` to a named constant.
pub fn parse_with_params(text: &str, params: &BTreeMap<String, f64>) -> Result<Expr, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let tokens = lex(text)?;
    let mut p = Parser {
        src: text,
        tokens,
        pos: 0,
        params,
    };
    let e = p.expr()?;
    p.expect_end()?;
    Ok(e)
}

/// Evaluates `e` with the given variable values.
pub fn eval(e: &Expr, x: Option<f64>, a: f64, b: Option<f64>) -> Result<f64, EvalError> {
    e.eval(&Bindings { x, a: Some(a), b })
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn negated(self) -> Expr {
        Expr::Neg(Box::new(self))
    }

    pub fn eval(&self, env: &Bindings) -> Result<f64, EvalError> {
        let v = self.eval_raw(env)?;
        if v.is_finite() {
            Ok(v)
        } else if v.is_nan() {
            Err(EvalError::Overflow(OverflowSign::Indeterminate))
        } else if v > 0.0 {
            Err(EvalError::Overflow(OverflowSign::Positive))
        } else {
            Err(EvalError::Overflow(OverflowSign::Negative))
        }
    }

    /// Shorthand for a payoff `c(a, b)` without state.
    pub fn eval_ab(&self, a: f64, b: f64) -> Result<f64, EvalError> {
        self.eval(&Bindings::ab(a, b))
    }

    // Intermediate infinities are allowed here and signaled by `eval`.
    fn eval_raw(&self, env: &Bindings) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Param { value, .. } => Ok(*value),
            Expr::Var(v) => env.get(*v).ok_or(EvalError::UnboundVariable(*v)),
            Expr::Neg(e) => Ok(-e.eval_raw(env)?),
            Expr::Binary { op, lhs, rhs } => {
                if *op == BinOp::Mul {
                    for guard in [lhs, rhs] {
                        if matches!(**guard, Expr::Indicator { .. }) && guard.eval_raw(env)? == 0.0
                        {
                            return Ok(0.0);
                        }
                    }
                }
                let l = lhs.eval_raw(env)?;
                let r = rhs.eval_raw(env)?;
                match op {
                    BinOp::Add => Ok(l + r),
                    BinOp::Sub => Ok(l - r),
                    BinOp::Mul => Ok(l * r),
                    BinOp::Div => {
                        if r == 0.0 {
                            Err(EvalError::DivisionByZero)
                        } else {
                            Ok(l / r)
                        }
                    }
                    BinOp::Pow => power(l, r),
                }
            }
            Expr::Call { func, args } => {
                let first = args[0].eval_raw(env)?;
                match func {
                    Func::Abs => Ok(first.abs()),
                    Func::Exp => Ok(first.exp()),
                    Func::Log => {
                        if first > 0.0 {
                            Ok(first.ln())
                        } else {
                            Err(EvalError::DomainError(format!("log of non-positive value {first}")))
                        }
                    }
                    Func::Sqrt => {
                        if first >= 0.0 {
                            Ok(first.sqrt())
                        } else {
                            Err(EvalError::DomainError(format!("sqrt of negative value {first}")))
                        }
                    }
                    Func::Min | Func::Max => {
                        let mut acc = first;
                        for arg in &args[1..] {
                            let v = arg.eval_raw(env)?;
                            acc = if *func == Func::Min { acc.min(v) } else { acc.max(v) };
                        }
                        Ok(acc)
                    }
                }
            }
            Expr::Indicator { rel, lhs, rhs } => {
                let l = lhs.eval_raw(env)?;
                let r = rhs.eval_raw(env)?;
                if l.is_nan() || r.is_nan() {
                    return Err(EvalError::Overflow(OverflowSign::Indeterminate));
                }
                Ok(if rel.holds(l, r) { 1.0 } else { 0.0 })
            }
        }
    }

    /// True when `v` occurs anywhere in the expression.
    pub fn uses(&self, v: Var) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            if *e == Expr::Var(v) {
                found = true;
            }
        });
        found
    }

    pub fn has_indicator(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            if matches!(e, Expr::Indicator { .. }) {
                found = true;
            }
        });
        found
    }

    /// `(lhs, rhs)` of every indicator condition, in source order.
    pub fn indicator_conditions(&self) -> Vec<(&Expr, &Expr)> {
        let mut out = Vec::new();
        collect_indicators(self, &mut out);
        out
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Param { .. } => {}
            Expr::Neg(e) => e.visit(f),
            Expr::Binary { lhs, rhs, .. } | Expr::Indicator { lhs, rhs, .. } => {
                lhs.visit(f);
                rhs.visit(f);
            }
            Expr::Call { args, .. } => args.iter().for_each(|a| a.visit(f)),
        }
    }

    fn map_vars(&self, f: &impl Fn(Var) -> Expr) -> Expr {
        match self {
            Expr::Num(_) | Expr::Param { .. } => self.clone(),
            Expr::Var(v) => f(*v),
            Expr::Neg(e) => Expr::Neg(Box::new(e.map_vars(f))),
            Expr::Binary { op, lhs, rhs } => Expr::Binary {
                op: *op,
                lhs: Box::new(lhs.map_vars(f)),
                rhs: Box::new(rhs.map_vars(f)),
            },
            Expr::Call { func, args } => Expr::Call {
                func: *func,
                args: args.iter().map(|a| a.map_vars(f)).collect(),
            },
            Expr::Indicator { rel, lhs, rhs } => Expr::Indicator {
                rel: *rel,
                lhs: Box::new(lhs.map_vars(f)),
                rhs: Box::new(rhs.map_vars(f)),
            },
        }
    }

    /// Replaces every occurrence of `v` with the constant `value`.
    pub fn substitute(&self, v: Var, value: f64) -> Expr {
        self.map_vars(&|w| if w == v { Expr::Num(value) } else { Expr::Var(w) })
    }

    /// Exchanges the roles of `a` and `b`.
    pub fn swap_ab(&self) -> Expr {
        self.map_vars(&|w| match w {
            Var::A => Expr::Var(Var::B),
            Var::B => Expr::Var(Var::A),
            Var::X => Expr::Var(Var::X),
        })
    }

    /// Payoff of the game with the players' roles exchanged: `-c(b, a)`.
    pub fn swapped_game(&self) -> Expr {
        self.swap_ab().negated()
    }
}

fn collect_indicators<'e>(e: &'e Expr, out: &mut Vec<(&'e Expr, &'e Expr)>) {
    match e {
        Expr::Num(_) | Expr::Var(_) | Expr::Param { .. } => {}
        Expr::Neg(inner) => collect_indicators(inner, out),
        Expr::Binary { lhs, rhs, .. } => {
            collect_indicators(lhs, out);
            collect_indicators(rhs, out);
        }
        Expr::Indicator { lhs, rhs, .. } => {
            out.push((lhs, rhs));
            collect_indicators(lhs, out);
            collect_indicators(rhs, out);
        }
        Expr::Call { args, .. } => args.iter().for_each(|a| collect_indicators(a, out)),
    }
}

fn power(base: f64, exp: f64) -> Result<f64, EvalError> {
    if base == 0.0 && exp < 0.0 {
        return Err(EvalError::DivisionByZero);
    }
    if base < 0.0 && exp.is_finite() && exp.fract() != 0.0 {
        return Err(EvalError::DomainError(format!(
            "negative base {base} with non-integer exponent {exp}"
        )));
    }
    if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
        Ok(base.powi(exp as i32))
    } else {
        Ok(base.powf(exp))
    }
}

fn write_num(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        write!(f, "{}", v as i64)
    } else {
        write!(f, "{v:?}")
    }
}

/// Fully parenthesized rendering; reparses to an identical tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write_num(f, *v),
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Param { name, .. } => f.write_str(name),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary { op, lhs, rhs } => write!(f, "({lhs} {} {rhs})", op.symbol()),
            Expr::Call { func, args } => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Expr::Indicator { rel, lhs, rhs } => write!(f, "[{lhs} {} {rhs}]", rel.symbol()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(&'static str),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Op(s) => format!("`{s}`"),
            Tok::End => "end of input".to_string(),
        }
    }
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn syntax_error(src: &str, offset: usize, expected: &[&str], found: String) -> ParseError {
    let (line, column) = line_col(src, offset);
    ParseError::Syntax {
        offset,
        line,
        column,
        expected: expected.iter().map(|s| s.to_string()).collect(),
        found,
    }
}

const OPERATORS: [&str; 14] = [
    "<=", ">=", "==", "+", "-", "*", "/", "^", "(", ")", "[", "]", "<", ">",
];

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v: f64 = text
                .parse()
                .map_err(|_| syntax_error(src, start, &["number"], format!("`{text}`")))?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else if c == b',' {
            out.push((Tok::Op(","), i));
            i += 1;
        } else if let Some(op) = OPERATORS.iter().find(|op| src[i..].starts_with(**op)) {
            out.push((Tok::Op(op), i));
            i += op.len();
        } else {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err(syntax_error(src, i, &["expression"], format!("`{ch}`")));
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser<'s> {
    src: &'s str,
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    params: &'s BTreeMap<String, f64>,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].0.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, op: &str) -> bool {
        if matches!(self.peek(), Tok::Op(o) if *o == op) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        syntax_error(self.src, self.offset(), expected, self.peek().describe())
    }

    fn expect(&mut self, op: &str) -> Result<(), ParseError> {
        if self.eat(op) {
            Ok(())
        } else {
            Err(self.error(&[&format!("`{op}`")]))
        }
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        if *self.peek() == Tok::End {
            Ok(())
        } else {
            Err(self.error(&["operator", "end of input"]))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat("+") {
                BinOp::Add
            } else if self.eat("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat("*") {
                BinOp::Mul
            } else if self.eat("/") {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat("-") {
            Ok(self.unary()?.negated())
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.eat("^") {
            let exp = self.unary()?;
            Ok(Expr::binary(BinOp::Pow, base, exp))
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "x" => return Ok(Expr::Var(Var::X)),
                    "a" => return Ok(Expr::Var(Var::A)),
                    "b" => return Ok(Expr::Var(Var::B)),
                    _ => {}
                }
                if let Some(func) = Func::from_name(&name) {
                    self.expect("(")?;
                    let mut args = vec![self.expr()?];
                    while self.eat(",") {
                        args.push(self.expr()?);
                    }
                    self.expect(")")?;
                    let arity_ok = if func.is_variadic() { args.len() >= 2 } else { args.len() == 1 };
                    if !arity_ok {
                        let want = if func.is_variadic() { "at least 2 arguments" } else { "1 argument" };
                        return Err(syntax_error(
                            self.src,
                            offset,
                            &[want],
                            format!("{} arguments to `{}`", args.len(), func.name()),
                        ));
                    }
                    return Ok(Expr::Call { func, args });
                }
                if let Some(value) = self.params.get(&name) {
                    return Ok(Expr::Param {
                        name,
                        value: *value,
                    });
                }
                let (line, column) = line_col(self.src, offset);
                Err(ParseError::UnknownIdentifier {
                    name,
                    offset,
                    line,
                    column,
                })
            }
            Tok::Op("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Op("[") => {
                self.bump();
                let lhs = self.expr()?;
                let rel = match self.peek() {
                    Tok::Op("<") => Rel::Lt,
                    Tok::Op("<=") => Rel::Le,
                    Tok::Op(">") => Rel::Gt,
                    Tok::Op(">=") => Rel::Ge,
                    Tok::Op("==") => Rel::Eq,
                    _ => return Err(self.error(&["`<`", "`<=`", "`>`", "`>=`", "`==`"])),
                };
                self.bump();
                let rhs = self.expr()?;
                self.expect("]")?;
                Ok(Expr::Indicator {
                    rel,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                })
            }
            _ => Err(self.error(&["number", "identifier", "`(`", "`[`", "`-`"])),
        }
    }
}
