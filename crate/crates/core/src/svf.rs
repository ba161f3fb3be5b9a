//! Slowly varying functions.
//!
//! A [`SlowVaryFn`] is either a closed-form expression tree ([`Expr`]) built
//! from constants, iterated base-2 logarithms, argument shifts, real powers,
//! reciprocals and products, or an opaque handle. Every function carries the
//! left end `A` of the interval `[A, ∞)` on which it is positive and finite.
//!
//! # Expression grammar
//!
//! ```text
//! expr    := term ('*' term)*
//! term    := '1/' postfix | postfix
//! postfix := primary ( '^' number | '@+' number )*
//! primary := 'c:' number              constant c > 0
//!          | 'log'+ [unsigned number] iterated log2; a trailing number g
//!                                     is a guard: loglog4 = log2(log2(4 + x))
//!          | '(' expr ')'
//! ```
//!
//! `@+A` shifts the argument of the preceding operand: `log@+2` is
//! `log2(x + 2)`. Printing emits the canonical form (guards are printed as
//! shifts, `loglog4` prints as `loglog@+4`), and parse → print → parse is the
//! identity on trees.
//!
//! All logarithms are base 2.

use std::fmt;
use std::sync::Arc;

use crate::conjugate::NumericConjugate;
use crate::error::{Error, Result};

/// Maximum supported nesting of `log2`; depth 5 already needs `x > 2^16`.
pub const MAX_LOG_DEPTH: u32 = 5;

/// Closed-form slowly varying expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// `log2` applied `depth` times to the argument.
    IterLog(u32),
    /// `inner(x + shift)`.
    Shift(Box<Expr>, f64),
    Pow(Box<Expr>, f64),
    Recip(Box<Expr>),
    Product(Vec<Expr>),
}

/// Smallest argument `y` with `log2^{∘depth}(y) > 0`.
fn log_tower(depth: u32) -> f64 {
    let mut t = 1.0_f64;
    for _ in 1..depth {
        t = t.exp2();
    }
    t
}

/// `log2(2^s + a)` without forming `2^s` when `s` is large.
pub(crate) fn shifted_log2(s: f64, a: f64) -> Option<f64> {
    if a == 0.0 {
        return Some(s);
    }
    if s < 1000.0 {
        let y = s.exp2() + a;
        if y > 0.0 && y.is_finite() {
            Some(y.log2())
        } else {
            None
        }
    } else {
        Some(s + (a * (-s).exp2()).ln_1p() / std::f64::consts::LN_2)
    }
}

impl Expr {
    pub fn log() -> Expr {
        Expr::IterLog(1)
    }

    pub fn log_pow(p: f64) -> Expr {
        Expr::Pow(Box::new(Expr::IterLog(1)), p)
    }

    fn validate(&self) -> Result<()> {
        match self {
            Expr::Const(c) => {
                if !(c.is_finite() && *c > 0.0) {
                    return Err(Error::Parameter(format!(
                        "constant must be positive and finite, got {c}"
                    )));
                }
            }
            Expr::IterLog(d) => {
                if *d == 0 || *d > MAX_LOG_DEPTH {
                    return Err(Error::Parameter(format!(
                        "log depth must be in 1..={MAX_LOG_DEPTH}, got {d}"
                    )));
                }
            }
            Expr::Shift(e, a) => {
                if !a.is_finite() {
                    return Err(Error::Parameter("shift must be finite".into()));
                }
                e.validate()?;
            }
            Expr::Pow(e, p) => {
                if !p.is_finite() {
                    return Err(Error::Parameter("exponent must be finite".into()));
                }
                e.validate()?;
            }
            Expr::Recip(e) => e.validate()?,
            Expr::Product(fs) => {
                if fs.is_empty() {
                    return Err(Error::Parameter("empty product".into()));
                }
                for f in fs {
                    f.validate()?;
                }
            }
        }
        Ok(())
    }

    fn collect_thresholds(&self, shift: f64, out: &mut Vec<f64>) {
        match self {
            Expr::Const(_) => {}
            Expr::IterLog(d) => out.push(log_tower(*d) - shift),
            Expr::Shift(e, a) => e.collect_thresholds(shift + a, out),
            Expr::Pow(e, _) | Expr::Recip(e) => e.collect_thresholds(shift, out),
            Expr::Product(fs) => fs.iter().for_each(|f| f.collect_thresholds(shift, out)),
        }
    }

    /// Smallest power of two (at least 1) strictly above every point where an
    /// inner logarithm would become non-positive.
    pub fn natural_domain(&self) -> f64 {
        let mut th = Vec::new();
        self.collect_thresholds(0.0, &mut th);
        let need = th.into_iter().fold(f64::NEG_INFINITY, f64::max);
        let mut a = 1.0_f64;
        while a <= need {
            a *= 2.0;
        }
        a
    }

    /// Strict lower bound on admissible arguments (the domain may start
    /// anywhere above it).
    pub fn positivity_bound(&self) -> f64 {
        let mut th = Vec::new();
        self.collect_thresholds(0.0, &mut th);
        th.into_iter().fold(0.0, f64::max)
    }

    fn eval_raw(&self, x: f64) -> Option<f64> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::IterLog(d) => {
                let mut v = x;
                for _ in 0..*d {
                    if v <= 0.0 {
                        return None;
                    }
                    v = v.log2();
                }
                v
            }
            Expr::Shift(e, a) => e.eval_raw(x + a)?,
            Expr::Pow(e, p) => e.eval_raw(x)?.powf(*p),
            Expr::Recip(e) => 1.0 / e.eval_raw(x)?,
            Expr::Product(fs) => {
                let mut acc = 1.0;
                for f in fs {
                    acc *= f.eval_raw(x)?;
                }
                acc
            }
        };
        (v.is_finite() && v > 0.0).then_some(v)
    }

    /// `log2` of the value at `x = 2^s`, valid for arbitrarily large `s`.
    fn eval_log2_raw(&self, s: f64) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(c.log2()),
            Expr::IterLog(d) => {
                let mut v = s;
                for _ in 1..*d {
                    if v <= 0.0 {
                        return None;
                    }
                    v = v.log2();
                }
                (v > 0.0).then(|| v.log2())
            }
            Expr::Shift(e, a) => e.eval_log2_raw(shifted_log2(s, *a)?),
            Expr::Pow(e, p) => Some(p * e.eval_log2_raw(s)?),
            Expr::Recip(e) => Some(-e.eval_log2_raw(s)?),
            Expr::Product(fs) => {
                let mut acc = 0.0;
                for f in fs {
                    acc += f.eval_log2_raw(s)?;
                }
                Some(acc)
            }
        }
        .filter(|v| v.is_finite())
    }

    /// Products of real powers of iterated logarithms and constants, i.e.
    /// everything the grammar can build, satisfy the Bojanić–Seneta
    /// condition.
    pub fn in_bojanic_seneta_class(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::IterLog(_) => true,
            Expr::Shift(e, _) | Expr::Pow(e, _) | Expr::Recip(e) => e.in_bojanic_seneta_class(),
            Expr::Product(fs) => fs.iter().all(Expr::in_bojanic_seneta_class),
        }
    }

    /// `1/self`, simplified structurally.
    pub fn reciprocal(&self) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(1.0 / c),
            Expr::Pow(e, p) if *p == -1.0 => (**e).clone(),
            Expr::Pow(e, p) => Expr::Pow(e.clone(), -p),
            Expr::Recip(e) => (**e).clone(),
            Expr::Product(fs) => Expr::Product(fs.iter().map(Expr::reciprocal).collect()),
            other => Expr::Recip(Box::new(other.clone())),
        }
    }

    pub fn parse(s: &str) -> Result<Expr> {
        let mut p = Parser {
            s: s.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(p.err("unexpected trailing input"));
        }
        e.validate()?;
        Ok(e)
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse(format!(
            "{msg} at byte {} in `{}`",
            self.pos,
            String::from_utf8_lossy(self.s)
        ))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn starts_with(&mut self, lit: &str) -> bool {
        self.skip_ws();
        self.s[self.pos..].starts_with(lit.as_bytes())
    }

    fn eat(&mut self, lit: &str) -> bool {
        if self.starts_with(lit) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn number(&mut self, signed: bool) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let peek = |p: &Self, i: usize| p.s.get(i).copied();
        if signed && matches!(peek(self, self.pos), Some(b'+' | b'-')) {
            self.pos += 1;
        }
        let mut digits = 0;
        while matches!(peek(self, self.pos), Some(b'0'..=b'9')) {
            self.pos += 1;
            digits += 1;
        }
        if peek(self, self.pos) == Some(b'.') {
            self.pos += 1;
            while matches!(peek(self, self.pos), Some(b'0'..=b'9')) {
                self.pos += 1;
                digits += 1;
            }
        }
        if digits == 0 {
            self.pos = start;
            return Err(self.err("expected a number"));
        }
        if matches!(peek(self, self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(peek(self, self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            let mut exp_digits = 0;
            while matches!(peek(self, self.pos), Some(b'0'..=b'9')) {
                self.pos += 1;
                exp_digits += 1;
            }
            if exp_digits == 0 {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.s[start..self.pos]).expect("ascii");
        text.parse::<f64>().map_err(|_| self.err("malformed number"))
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut factors = vec![self.term()?];
        while self.eat("*") {
            factors.push(self.term()?);
        }
        Ok(if factors.len() == 1 {
            factors.pop().expect("one factor")
        } else {
            Expr::Product(factors)
        })
    }

    fn term(&mut self) -> Result<Expr> {
        if self.eat("1/") {
            Ok(Expr::Recip(Box::new(self.postfix()?)))
        } else {
            self.postfix()
        }
    }

    fn postfix(&mut self) -> Result<Expr> {
        let mut e = self.primary()?;
        loop {
            if self.eat("^") {
                let p = self.number(true)?;
                e = Expr::Pow(Box::new(e), p);
            } else if self.eat("@+") {
                let a = self.number(true)?;
                e = Expr::Shift(Box::new(e), a);
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        if self.eat("c:") {
            return Ok(Expr::Const(self.number(false)?));
        }
        if self.starts_with("log") {
            let mut depth = 0;
            while self.s[self.pos..].starts_with(b"log") {
                self.pos += 3;
                depth += 1;
            }
            let e = Expr::IterLog(depth);
            if matches!(self.s.get(self.pos), Some(b'0'..=b'9' | b'.')) {
                let g = self.number(false)?;
                return Ok(Expr::Shift(Box::new(e), g));
            }
            return Ok(e);
        }
        if self.eat("(") {
            let e = self.expr()?;
            if !self.eat(")") {
                return Err(self.err("expected `)`"));
            }
            return Ok(e);
        }
        Err(self.err("expected `c:`, `log` or `(`"))
    }
}

fn write_expr(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Product(fs) => {
            for (i, t) in fs.iter().enumerate() {
                if i > 0 {
                    f.write_str("*")?;
                }
                write_term(t, f)?;
            }
            Ok(())
        }
        _ => write_term(e, f),
    }
}

fn write_term(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Recip(inner) => {
            f.write_str("1/")?;
            write_operand(inner, f)
        }
        Expr::Product(_) => {
            f.write_str("(")?;
            write_expr(e, f)?;
            f.write_str(")")
        }
        _ => write_operand(e, f),
    }
}

fn write_operand(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Const(c) => write!(f, "c:{c}"),
        Expr::IterLog(d) => {
            for _ in 0..*d {
                f.write_str("log")?;
            }
            Ok(())
        }
        Expr::Pow(inner, p) => {
            write_operand(inner, f)?;
            write!(f, "^{p}")
        }
        Expr::Shift(inner, a) => {
            write_operand(inner, f)?;
            write!(f, "@+{a}")
        }
        Expr::Recip(_) | Expr::Product(_) => {
            f.write_str("(")?;
            write_expr(e, f)?;
            f.write_str(")")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self, f)
    }
}

type HandleFn = dyn Fn(f64) -> f64 + Send + Sync;

#[derive(Clone)]
enum Repr {
    Expr(Expr),
    Handle { name: String, f: Arc<HandleFn> },
    Numeric(Arc<NumericConjugate>),
}

/// A positive slowly varying function on `[domain_low, ∞)`.
///
/// Values are immutable and cheap to clone; evaluation is pure and may run
/// from any number of threads.
#[derive(Clone)]
pub struct SlowVaryFn {
    repr: Repr,
    domain_low: f64,
}

impl fmt::Debug for SlowVaryFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SlowVaryFn({self} on [{}, inf))", self.domain_low)
    }
}

impl fmt::Display for SlowVaryFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.repr {
            Repr::Expr(e) => write!(f, "{e}"),
            Repr::Handle { name, .. } => write!(f, "<{name}>"),
            Repr::Numeric(nc) => write!(f, "conj({})", nc.base()),
        }
    }
}

impl SlowVaryFn {
    /// Expression on its natural domain (see [`Expr::natural_domain`]).
    pub fn from_expr(expr: Expr) -> Result<Self> {
        expr.validate()?;
        let domain_low = expr.natural_domain();
        Ok(SlowVaryFn {
            repr: Repr::Expr(expr),
            domain_low,
        })
    }

    pub fn with_domain(expr: Expr, domain_low: f64) -> Result<Self> {
        expr.validate()?;
        if !(domain_low.is_finite() && domain_low > 0.0) {
            return Err(Error::Parameter(format!(
                "domain start must be positive, got {domain_low}"
            )));
        }
        let bound = expr.positivity_bound();
        if domain_low <= bound {
            return Err(Error::Parameter(format!(
                "`{expr}` is not positive at {domain_low}; the domain must start above {bound}"
            )));
        }
        Ok(SlowVaryFn {
            repr: Repr::Expr(expr),
            domain_low,
        })
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::from_expr(Expr::parse(s)?)
    }

    pub fn parse_with_domain(s: &str, domain_low: f64) -> Result<Self> {
        Self::with_domain(Expr::parse(s)?, domain_low)
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::from_expr(Expr::Const(c))
    }

    pub fn log() -> Self {
        Self::from_expr(Expr::log()).expect("log is valid")
    }

    pub fn log_pow(p: f64) -> Result<Self> {
        Self::from_expr(Expr::log_pow(p))
    }

    /// Wrap an arbitrary function. Handles are evaluated as given and never
    /// conjugated symbolically.
    pub fn handle<F>(name: &str, domain_low: f64, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        SlowVaryFn {
            repr: Repr::Handle {
                name: name.to_string(),
                f: Arc::new(f),
            },
            domain_low,
        }
    }

    pub(crate) fn numeric(nc: Arc<NumericConjugate>, domain_low: f64) -> Self {
        SlowVaryFn {
            repr: Repr::Numeric(nc),
            domain_low,
        }
    }

    pub fn domain_low(&self) -> f64 {
        self.domain_low
    }

    pub fn expr(&self) -> Option<&Expr> {
        match &self.repr {
            Repr::Expr(e) => Some(e),
            _ => None,
        }
    }

    pub fn is_numeric_conjugate(&self) -> bool {
        matches!(self.repr, Repr::Numeric(_))
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x >= self.domain_low) {
            return Err(Error::Domain {
                x,
                low: self.domain_low,
            });
        }
        let v = match &self.repr {
            Repr::Expr(e) => e.eval_raw(x),
            Repr::Handle { f, .. } => Some(f(x)),
            Repr::Numeric(nc) => Some(nc.eval(x)?),
        };
        match v {
            Some(v) if v.is_finite() && v > 0.0 => Ok(v),
            _ => Err(Error::Overflow {
                what: self.to_string(),
                x,
            }),
        }
    }

    /// `log2 L(2^s)`. Expressions are evaluated in log space and accept any
    /// finite `s`; other representations need `2^s` to be finite.
    pub fn eval_log2(&self, s: f64) -> Result<f64> {
        let x = s.exp2();
        if x < self.domain_low {
            return Err(Error::Domain {
                x,
                low: self.domain_low,
            });
        }
        match &self.repr {
            Repr::Expr(e) => e.eval_log2_raw(s).ok_or_else(|| Error::Overflow {
                what: self.to_string(),
                x,
            }),
            Repr::Numeric(nc) => nc.eval_log2(s),
            Repr::Handle { .. } => {
                if !x.is_finite() {
                    return Err(Error::Overflow {
                        what: self.to_string(),
                        x,
                    });
                }
                Ok(self.eval(x)?.log2())
            }
        }
    }

    /// `log2 L(y)` where `y = 2^s + shift`.
    pub fn eval_log2_shifted(&self, s: f64, shift: f64) -> Result<f64> {
        let t = shifted_log2(s, shift).ok_or(Error::Domain {
            x: s.exp2() + shift,
            low: self.domain_low,
        })?;
        self.eval_log2(t)
    }
}

/// A regularly varying function `x^rho L(x)`.
#[derive(Debug, Clone)]
pub struct RegVaryFn {
    pub rho: f64,
    pub l: SlowVaryFn,
}

impl RegVaryFn {
    pub fn new(rho: f64, l: SlowVaryFn) -> Self {
        RegVaryFn { rho, l }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(x.powf(self.rho) * self.l.eval(x)?)
    }

    /// Max over the grid of `|R(λx) / (λ^ρ R(x)) − 1|`.
    pub fn index_deviation(&self, lambda: f64, grid: &[f64]) -> Result<f64> {
        let target = lambda.powf(self.rho);
        grid.iter().try_fold(0.0_f64, |m, &x| {
            let r = self.eval(lambda * x)? / self.eval(x)?;
            Ok(m.max((r / target - 1.0).abs()))
        })
    }
}

/// `count` points `start, start·ratio, …`.
pub fn geometric_grid(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut x = start;
    for _ in 0..count {
        out.push(x);
        x *= ratio;
    }
    out
}

/// `2^k` for `k` in `lo..=hi`.
pub fn dyadic_grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| (k as f64).exp2()).collect()
}

/// Ratio-2 grid from the domain start spanning 64 octaves.
pub fn default_scan_grid(l: &SlowVaryFn) -> Vec<f64> {
    geometric_grid(l.domain_low(), 2.0, 65)
}

/// `max |L(λx)/L(x) − 1|` over the grid.
pub fn slow_variation_deviation(l: &SlowVaryFn, lambda: f64, grid: &[f64]) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
    }
    grid.iter().try_fold(0.0_f64, |m, &x| {
        let r = l.eval(lambda * x)? / l.eval(x)?;
        Ok(m.max((r - 1.0).abs()))
    })
}

/// Relative step of the central difference in [`log_derivative_ratio`].
pub const FD_REL_STEP: f64 = 1e-6;

/// Numeric `x L'(x) / L(x)` by a central difference with step `x·1e-6`.
pub fn log_derivative_ratio(l: &SlowVaryFn, x: f64) -> Result<f64> {
    let h = x * FD_REL_STEP;
    if !(h > 0.0) || x + h == x {
        return Err(Error::StepUnderflow { x });
    }
    let lo = l.eval(x - h).map_err(|e| match e {
        Error::Domain { .. } => Error::Domain {
            x: x - h,
            low: l.domain_low(),
        },
        other => other,
    })?;
    let hi = l.eval(x + h)?;
    let mid = l.eval(x)?;
    Ok((hi - lo) / (2.0 * h) * x / mid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// Geometric sub-steps checked inside each grid interval.
const MONOTONE_SUBSTEPS: usize = 8;

/// Smallest grid point `B` such that `h` is strictly monotone in `dir` on
/// every sampled pair in `[B, grid_end]`. Each grid interval is subdivided
/// into [`MONOTONE_SUBSTEPS`] geometric sub-steps.
pub fn monotone_threshold_by<H>(h: H, dir: Direction, grid: &[f64]) -> Result<f64>
where
    H: Fn(f64) -> Result<f64>,
{
    if grid.len() < 2 {
        return Err(Error::Parameter("scan grid needs at least two points".into()));
    }
    let ok = |a: f64, b: f64| match dir {
        Direction::Increasing => b > a,
        Direction::Decreasing => b < a,
    };
    let mut start = 0;
    for i in 0..grid.len() - 1 {
        let (x0, x1) = (grid[i], grid[i + 1]);
        let step = (x1 / x0).powf(1.0 / MONOTONE_SUBSTEPS as f64);
        let mut prev = h(x0)?;
        let mut x = x0;
        let mut monotone = true;
        for k in 1..=MONOTONE_SUBSTEPS {
            x = if k == MONOTONE_SUBSTEPS { x1 } else { x * step };
            let v = h(x)?;
            if !ok(prev, v) {
                monotone = false;
            }
            prev = v;
        }
        if !monotone {
            start = i + 1;
        }
    }
    if start >= grid.len() - 1 {
        return Err(Error::ThresholdNotFound {
            grid_end: grid[grid.len() - 1],
        });
    }
    Ok(grid[start])
}

/// Threshold beyond which `x^p L(x)` increases (or `x^{-p} L(x)` decreases).
pub fn monotone_threshold(l: &SlowVaryFn, p: f64, dir: Direction, grid: &[f64]) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::Parameter(format!("p must be positive, got {p}")));
    }
    if grid.first().is_some_and(|&g| g < l.domain_low()) {
        return Err(Error::Domain {
            x: grid[0],
            low: l.domain_low(),
        });
    }
    let sign = match dir {
        Direction::Increasing => p,
        Direction::Decreasing => -p,
    };
    // log scale keeps x^p L(x) finite for large grids
    monotone_threshold_by(|x| Ok(sign * x.ln() + l.eval(x)?.ln()), dir, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn svf(s: &str) -> SlowVaryFn {
        SlowVaryFn::parse(s).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(svf("log").eval(4.0).unwrap(), 2.0);
        assert_eq!(svf("c:3").eval(1e9).unwrap(), 3.0);
        assert_eq!(svf("log^-1").eval(16.0).unwrap(), 0.25);
    }

    #[test]
    fn eval_below_domain_is_an_error() {
        let l = svf("log");
        assert_eq!(l.domain_low(), 2.0);
        assert!(matches!(l.eval(1.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn eval_overflow_is_reported() {
        let l = svf("log^2000");
        assert!(matches!(l.eval(1e300), Err(Error::Overflow { .. })));
    }

    #[test]
    fn natural_domains() {
        assert_eq!(svf("c:2").domain_low(), 1.0);
        assert_eq!(svf("log").domain_low(), 2.0);
        assert_eq!(svf("loglog").domain_low(), 4.0);
        assert_eq!(svf("loglog4").domain_low(), 1.0);
        assert_eq!(svf("log@+2").domain_low(), 1.0);
        assert!(SlowVaryFn::parse_with_domain("loglog", 2.0).is_err());
    }

    #[test]
    fn grammar_forms() {
        assert_eq!(
            Expr::parse("loglog4").unwrap(),
            Expr::Shift(Box::new(Expr::IterLog(2)), 4.0)
        );
        assert_eq!(Expr::parse("log^-0.5").unwrap(), Expr::log_pow(-0.5));
        let e = Expr::parse("c:3 * 1/log * (loglog4)^-1.1").unwrap();
        assert_eq!(e.to_string(), "c:3*1/log*loglog@+4^-1.1");
        assert!(Expr::parse("c:-1").is_err());
        assert!(Expr::parse("log^").is_err());
        assert!(Expr::parse("exp").is_err());
        assert!(Expr::parse("log)").is_err());
    }

    #[test]
    fn log_space_matches_direct() {
        for s in ["log", "loglog4^1.1*log", "c:0.5*1/log^2@+3", "logloglog4"] {
            let l = svf(s);
            for k in [3.0, 10.0, 40.0, 200.0] {
                let direct = l.eval(f64::exp2(k)).unwrap().log2();
                let viaspace = l.eval_log2(k).unwrap();
                assert!((direct - viaspace).abs() < 1e-10, "{s} at 2^{k}");
            }
        }
        // far beyond f64: log2(log2(2^s)) = log2(s)
        assert!((svf("log").eval_log2(1e300).unwrap() - 1e300f64.log2()).abs() < 1e-9);
    }

    #[test]
    fn slow_variation_examples() {
        let grid = dyadic_grid(20, 30);
        assert_eq!(slow_variation_deviation(&svf("c:1"), 3.0, &grid).unwrap(), 0.0);
        let d = slow_variation_deviation(&svf("log"), 2.0, &grid).unwrap();
        // exactly 1/20 up to rounding
        assert!((d - 0.05).abs() < 1e-12);
        let pow = SlowVaryFn::handle("x^0.1", 1.0, |x: f64| x.powf(0.1));
        let d = slow_variation_deviation(&pow, 2.0, &dyadic_grid(100, 110)).unwrap();
        assert!((d - (0.1f64.exp2() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn log_derivative_examples() {
        assert_eq!(log_derivative_ratio(&svf("c:2"), 1e3).unwrap(), 0.0);
        let r = log_derivative_ratio(&svf("log"), 1024.0).unwrap();
        assert!((r - 1.0 / (10.0 * std::f64::consts::LN_2)).abs() < 1e-3);
        let r = log_derivative_ratio(&svf("log^2"), f64::exp2(20.0)).unwrap();
        assert!((r - 2.0 / (20.0 * std::f64::consts::LN_2)).abs() < 1e-3);
        assert!(matches!(
            log_derivative_ratio(&svf("log"), 2.0),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            log_derivative_ratio(&svf("c:1"), 0.0),
            Err(Error::StepUnderflow { .. })
        ));
    }

    #[test]
    fn monotone_threshold_examples() {
        let one = svf("c:1");
        let b = monotone_threshold(&one, 1.0, Direction::Increasing, &default_scan_grid(&one)).unwrap();
        assert_eq!(b, one.domain_low());

        let l = svf("log^-2");
        let b = monotone_threshold(&l, 1.0, Direction::Increasing, &default_scan_grid(&l)).unwrap();
        assert!(b <= 16.0 && b > 2.0, "B = {b}");

        let l = svf("log");
        let b = monotone_threshold(&l, 1.0, Direction::Decreasing, &default_scan_grid(&l)).unwrap();
        assert!(b <= 4.0, "B = {b}");
    }

    #[test]
    fn monotone_threshold_not_found() {
        let h = SlowVaryFn::handle("x^-2", 1.0, |x: f64| x.powi(-2));
        let err = monotone_threshold(&h, 1.0, Direction::Increasing, &default_scan_grid(&h));
        assert!(matches!(err, Err(Error::ThresholdNotFound { .. })));
    }

    #[test]
    fn regularly_varying_ratio() {
        let r = RegVaryFn::new(1.5, svf("log"));
        assert!((r.eval(4.0).unwrap() - 16.0).abs() < 1e-12);
        let d_near = r.index_deviation(2.0, &dyadic_grid(10, 12)).unwrap();
        let d_far = r.index_deviation(2.0, &dyadic_grid(40, 42)).unwrap();
        assert!(d_far < d_near);
    }
}
