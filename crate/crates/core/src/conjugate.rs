//! De Bruijn conjugates and asymptotic inverses of regularly varying
//! functions.
//!
//! For a slowly varying `L`, the conjugate `L̃` satisfies
//! `L(x) L̃(x L(x)) → 1` and `L̃(x) L(x L̃(x)) → 1`. Numerically,
//! `x L̃(x)` is the inverse of the eventually increasing map `y ↦ y L(y)`,
//! which is solved by bracketing and bisection in `log2` space so that
//! arguments far beyond `f64` range stay representable.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::svf::{default_scan_grid, monotone_threshold, Direction, SlowVaryFn};

/// Default relative tolerance of the inverse solver.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Iteration cap for bisection.
pub const MAX_BISECTIONS: usize = 200;
const MEMO_CAP: usize = 1 << 16;

/// Inverse of `f(x) = x^{αβ} L^α(x^β)` on its monotone tail.
///
/// The bracket start `x_B = B^{1/β}` comes from the monotone threshold `B` of
/// `y L(y)` (`f` is that map raised to `α`, composed with `x^β`).
#[derive(Debug, Clone)]
pub struct AsymptoticInverse {
    alpha: f64,
    beta: f64,
    l: SlowVaryFn,
    u_start: f64,
    /// `log2 x_B^β`; arguments of `L` are clamped here against rounding.
    s_start: f64,
    phi_start: f64,
}

impl AsymptoticInverse {
    pub fn new(alpha: f64, beta: f64, l: &SlowVaryFn) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::Parameter(format!(
                "alpha and beta must be positive, got ({alpha}, {beta})"
            )));
        }
        let b = monotone_threshold(l, 1.0, Direction::Increasing, &default_scan_grid(l))?;
        let u_start = b.log2() / beta;
        let mut inv = AsymptoticInverse {
            alpha,
            beta,
            l: l.clone(),
            u_start,
            s_start: b.log2(),
            phi_start: 0.0,
        };
        inv.phi_start = inv.phi(u_start)?;
        Ok(inv)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn l(&self) -> &SlowVaryFn {
        &self.l
    }

    /// Start of the bracket, `x_B`.
    pub fn x_start(&self) -> f64 {
        self.u_start.exp2()
    }

    /// `f(x_B)`: smallest target the solver accepts.
    pub fn t_start(&self) -> f64 {
        self.phi_start.exp2()
    }

    fn arg(&self, s: f64) -> f64 {
        if s < self.s_start && s > self.s_start - 1e-9 {
            self.s_start
        } else {
            s
        }
    }

    /// `log2 f(2^u)`.
    pub fn phi(&self, u: f64) -> Result<f64> {
        Ok(self.alpha * self.beta * u + self.alpha * self.l.eval_log2(self.arg(self.beta * u))?)
    }

    pub fn f(&self, x: f64) -> Result<f64> {
        let v = self.phi(x.log2())?.exp2();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Overflow {
                what: "x^(ab) L^a(x^b)".into(),
                x,
            })
        }
    }

    /// Offset `d` such that `u = tau/(αβ) + d` solves `log2 f(2^u) = tau`,
    /// with `|f(2^u)/2^tau − 1| ≤ tol`.
    ///
    /// Solving for the offset keeps full precision when `tau` is huge: the
    /// slowly varying part only moves the root by `O(log tau)`.
    pub fn solve_offset(&self, tau: f64, tol: f64) -> Result<f64> {
        if !(tol > 0.0) {
            return Err(Error::Parameter(format!("tol must be positive, got {tol}")));
        }
        if tau.is_nan() {
            return Err(Error::Parameter("target is NaN".into()));
        }
        let ab = self.alpha * self.beta;
        let u0 = tau / ab;
        let d_min = self.u_start - u0;
        // psi(d) = log2(f / t), increasing in d on the monotone tail
        let psi = |d: f64| -> Result<f64> {
            Ok(ab * d + self.alpha * self.l.eval_log2(self.arg(self.beta * u0 + self.beta * d))?)
        };
        let rel = |v: f64| (std::f64::consts::LN_2 * v).exp_m1().abs();
        let at_min = self.phi_start - tau;
        if at_min >= 0.0 {
            if rel(at_min) <= tol {
                return Ok(d_min);
            }
            return Err(Error::BracketFailure {
                target: tau.exp2(),
                at_start: self.t_start(),
            });
        }
        // fixed-point guess, then widen symmetrically
        let guess = match self.l.eval_log2(self.beta * u0) {
            Ok(v) => (-v / self.beta).max(d_min),
            Err(_) => d_min,
        };
        let mut w = 1.0;
        let (mut lo, mut hi);
        let mut expansions = 0;
        loop {
            lo = (guess - w).max(d_min);
            hi = guess + w;
            let lo_ok = lo == d_min || psi(lo)? <= 0.0;
            if lo_ok && psi(hi)? >= 0.0 {
                break;
            }
            w *= 2.0;
            expansions += 1;
            if expansions > 2100 || !w.is_finite() {
                return Err(Error::NonConvergence {
                    target: tau.exp2(),
                    iterations: expansions,
                });
            }
        }
        let v_hi = psi(hi)?;
        if rel(v_hi) <= tol {
            return Ok(hi);
        }
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                // bracket collapsed to adjacent floats: best representable root
                return Ok(mid);
            }
            let v = psi(mid)?;
            if rel(v) <= tol {
                return Ok(mid);
            }
            if v < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Err(Error::NonConvergence {
            target: tau.exp2(),
            iterations: MAX_BISECTIONS,
        })
    }

    /// `log2` of the solution `s` of `f(s) = 2^tau`.
    pub fn solve_log2(&self, tau: f64, tol: f64) -> Result<f64> {
        Ok(tau / (self.alpha * self.beta) + self.solve_offset(tau, tol)?)
    }

    pub fn solve(&self, t: f64, tol: f64) -> Result<f64> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Parameter(format!("target must be positive and finite, got {t}")));
        }
        let s = self.solve_log2(t.log2(), tol)?.exp2();
        if s.is_finite() {
            Ok(s)
        } else {
            Err(Error::Overflow {
                what: "asymptotic inverse".into(),
                x: t,
            })
        }
    }
}

/// Solve `x^{αβ} L^α(x^β) = t` for `x` to relative tolerance `tol` in `f`.
pub fn asymptotic_inverse(alpha: f64, beta: f64, l: &SlowVaryFn, t: f64, tol: f64) -> Result<f64> {
    AsymptoticInverse::new(alpha, beta, l)?.solve(t, tol)
}

/// Memoized numeric conjugate `L̃(x) = h(x)/x` with `h` the inverse of `y L(y)`.
#[derive(Debug)]
pub struct NumericConjugate {
    inv: AsymptoticInverse,
    tol: f64,
    memo: RwLock<HashMap<u64, f64>>,
}

impl NumericConjugate {
    pub fn new(l: &SlowVaryFn, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::Parameter(format!("tol must be positive, got {tol}")));
        }
        Ok(NumericConjugate {
            inv: AsymptoticInverse::new(1.0, 1.0, l)?,
            tol,
            memo: RwLock::new(HashMap::new()),
        })
    }

    pub fn base(&self) -> &SlowVaryFn {
        self.inv.l()
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// First argument at which the conjugate is defined.
    pub fn domain_low(&self) -> f64 {
        self.inv.t_start()
    }

    /// `log2 L̃(2^s)`.
    pub fn eval_log2(&self, s: f64) -> Result<f64> {
        let key = s.to_bits();
        if let Some(&d) = self.memo.read().expect("memo lock").get(&key) {
            return Ok(d);
        }
        let d = self.inv.solve_offset(s, self.tol)?;
        let mut memo = self.memo.write().expect("memo lock");
        if memo.len() >= MEMO_CAP {
            memo.clear();
        }
        memo.insert(key, d);
        Ok(d)
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(self.eval_log2(x.log2())?.exp2())
    }

    /// Wrap as a [`SlowVaryFn`] on `[f(x_B), ∞)`.
    pub fn into_svf(self) -> SlowVaryFn {
        let low = self.domain_low();
        SlowVaryFn::numeric(Arc::new(self), low)
    }
}

/// One numeric conjugate value `L̃(x)`.
pub fn conjugate_numeric(l: &SlowVaryFn, x: f64, tol: f64) -> Result<f64> {
    let inv = AsymptoticInverse::new(1.0, 1.0, l)?;
    Ok(inv.solve_offset(x.log2(), tol)?.exp2())
}

/// `1/L` when `L` is a closed-form expression in the Bojanić–Seneta class;
/// `None` for handles and numeric conjugates.
pub fn conjugate_symbolic(l: &SlowVaryFn) -> Option<SlowVaryFn> {
    let e = l.expr()?;
    if !e.in_bojanic_seneta_class() {
        return None;
    }
    SlowVaryFn::with_domain(e.reciprocal(), l.domain_low()).ok()
}

/// `max |(L(λ0 x)/L(x) − 1) log2 L(x)|` over the grid.
pub fn bojanic_seneta_deviation(l: &SlowVaryFn, lambda0: f64, grid: &[f64]) -> Result<f64> {
    if !(lambda0 > 1.0) {
        return Err(Error::Parameter(format!("lambda0 must exceed 1, got {lambda0}")));
    }
    grid.iter().try_fold(0.0_f64, |m, &x| {
        let lx = l.eval(x)?;
        let d = (l.eval(lambda0 * x)? / lx - 1.0) * lx.log2();
        Ok(m.max(d.abs()))
    })
}

/// Residuals of both conjugacy relations at `x`:
/// `|L(x) L̃(x L(x)) − 1|` and `|L̃(x) L(x L̃(x)) − 1|`, computed in log space.
pub fn conjugacy_residuals(l: &SlowVaryFn, lt: &SlowVaryFn, x: f64) -> Result<(f64, f64)> {
    let s = x.log2();
    let a = l.eval_log2(s)?;
    let d1 = a + lt.eval_log2(s + a)?;
    let b = lt.eval_log2(s)?;
    let d2 = b + l.eval_log2(s + b)?;
    let dev = |v: f64| (std::f64::consts::LN_2 * v).exp_m1().abs();
    Ok((dev(d1), dev(d2)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugacyPoint {
    pub x: f64,
    pub dev1: f64,
    pub dev2: f64,
}

impl ConjugacyPoint {
    pub fn max_dev(&self) -> f64 {
        self.dev1.max(self.dev2)
    }
}

/// Per-point residuals of both relations; `pass` iff both residuals at the
/// right end of the grid are at most `tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugacyReport {
    pub points: Vec<ConjugacyPoint>,
    pub tol: f64,
    pub pass: bool,
}

impl ConjugacyReport {
    pub fn last(&self) -> Option<&ConjugacyPoint> {
        self.points.last()
    }

    /// Both residual curves nonincreasing along the grid, up to `slack`.
    pub fn nonincreasing(&self, slack: f64) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].dev1 <= w[0].dev1 + slack && w[1].dev2 <= w[0].dev2 + slack)
    }
}

/// A function, its conjugate and (optionally) a verification report.
#[derive(Debug, Clone)]
pub struct ConjugatePair {
    pub l: SlowVaryFn,
    pub ltilde: SlowVaryFn,
    pub symbolic: bool,
    pub report: Option<ConjugacyReport>,
}

impl ConjugatePair {
    pub fn new(l: SlowVaryFn, ltilde: SlowVaryFn) -> Self {
        let symbolic = !ltilde.is_numeric_conjugate();
        ConjugatePair {
            l,
            ltilde,
            symbolic,
            report: None,
        }
    }

    pub fn symbolic(l: &SlowVaryFn) -> Option<Self> {
        conjugate_symbolic(l).map(|lt| ConjugatePair::new(l.clone(), lt))
    }

    pub fn numeric(l: &SlowVaryFn, tol: f64) -> Result<Self> {
        let lt = NumericConjugate::new(l, tol)?.into_svf();
        Ok(ConjugatePair::new(l.clone(), lt))
    }

    /// Symbolic when a rule applies, numeric otherwise.
    pub fn best(l: &SlowVaryFn, tol: f64) -> Result<Self> {
        match Self::symbolic(l) {
            Some(p) => Ok(p),
            None => Self::numeric(l, tol),
        }
    }

    pub fn verified(mut self, grid: &[f64], tol: f64) -> Self {
        self.report = Some(verify_conjugacy(&self, grid, tol));
        self
    }
}

/// Evaluate both conjugacy residuals along `grid`. Points where either side
/// cannot be evaluated are recorded as NaN and fail the report.
pub fn verify_conjugacy(pair: &ConjugatePair, grid: &[f64], tol: f64) -> ConjugacyReport {
    let points: Vec<ConjugacyPoint> = grid
        .iter()
        .map(|&x| {
            let (dev1, dev2) = conjugacy_residuals(&pair.l, &pair.ltilde, x).unwrap_or((f64::NAN, f64::NAN));
            ConjugacyPoint { x, dev1, dev2 }
        })
        .collect();
    let pass = points.last().is_some_and(|p| p.dev1 <= tol && p.dev2 <= tol);
    ConjugacyReport { points, tol, pass }
}

/// The pair `f(x) = x^{αβ} L^α(x^β)` and its inverse `g`, solved numerically.
#[derive(Debug, Clone)]
pub struct PowerInverse {
    inv: AsymptoticInverse,
    tol: f64,
}

impl PowerInverse {
    pub fn new(alpha: f64, beta: f64, l: &SlowVaryFn, tol: f64) -> Result<Self> {
        Ok(PowerInverse {
            inv: AsymptoticInverse::new(alpha, beta, l)?,
            tol,
        })
    }

    pub fn f(&self, x: f64) -> Result<f64> {
        self.inv.f(x)
    }

    pub fn g(&self, x: f64) -> Result<f64> {
        self.inv.solve(x, self.tol)
    }

    /// `(|f(g(x))/x − 1|, |g(f(x))/x − 1|)`.
    pub fn round_trip(&self, x: f64) -> Result<(f64, f64)> {
        let fg = self.f(self.g(x)?)? / x - 1.0;
        let gf = self.g(self.f(x)?)? / x - 1.0;
        Ok((fg.abs(), gf.abs()))
    }
}

/// `g(x) = x^{1/(αβ)} L̃^{1/β}(x^{1/α})` for a given conjugate `L̃`.
pub fn power_inverse_via_conjugate(alpha: f64, beta: f64, lt: &SlowVaryFn, x: f64) -> Result<f64> {
    let s = x.log2();
    let v = s / (alpha * beta) + lt.eval_log2(s / alpha)? / beta;
    Ok(v.exp2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svf::dyadic_grid;

    fn svf(s: &str) -> SlowVaryFn {
        SlowVaryFn::parse(s).unwrap()
    }

    #[test]
    fn inverse_examples() {
        let s = asymptotic_inverse(2.0, 1.0, &svf("c:1"), 16.0, 1e-12).unwrap();
        assert!((s - 4.0).abs() < 1e-10);
        let s = asymptotic_inverse(1.0, 1.0, &svf("log"), 24.0, 1e-12).unwrap();
        assert!((s - 8.0).abs() < 1e-10);
        let t = f64::exp2(20.0);
        let s = asymptotic_inverse(1.0, 1.0, &svf("log"), t, 1e-9).unwrap();
        assert!((s * s.log2() / t - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn inverse_bracket_failure() {
        let err = asymptotic_inverse(1.0, 1.0, &svf("log"), 1.0, 1e-9);
        assert!(matches!(err, Err(Error::BracketFailure { .. })));
    }

    #[test]
    fn numeric_conjugate_examples() {
        assert!((conjugate_numeric(&svf("c:1"), 1e6, 1e-12).unwrap() - 1.0).abs() < 1e-11);
        assert!((conjugate_numeric(&svf("c:4"), 1e6, 1e-12).unwrap() - 0.25).abs() < 1e-11);
        let l = svf("log");
        let x = f64::exp2(30.0);
        let v = conjugate_numeric(&l, x, 1e-12).unwrap();
        let r = v * l.eval(x * v).unwrap();
        assert!((r - 1.0).abs() <= 0.05);
    }

    #[test]
    fn symbolic_conjugate_rules() {
        assert_eq!(conjugate_symbolic(&svf("log")).unwrap().to_string(), "1/log");
        assert_eq!(conjugate_symbolic(&svf("log^-0.5")).unwrap().to_string(), "log^0.5");
        let c = conjugate_symbolic(&svf("c:4")).unwrap();
        assert_eq!(c.eval(10.0).unwrap(), 0.25);
        let h = SlowVaryFn::handle("h", 1.0, |_| 1.0);
        assert!(conjugate_symbolic(&h).is_none());
    }

    #[test]
    fn symbolic_power_conjugate_residual() {
        let pair = ConjugatePair::symbolic(&svf("log^-0.5")).unwrap();
        let rep = verify_conjugacy(&pair, &dyadic_grid(30, 40), 0.05);
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn bojanic_seneta_examples() {
        assert_eq!(
            bojanic_seneta_deviation(&svf("c:1"), 2.0, &dyadic_grid(1, 30)).unwrap(),
            0.0
        );
        let d20 = bojanic_seneta_deviation(&svf("log"), 2.0, &[f64::exp2(20.0)]).unwrap();
        assert!((d20 - 20f64.log2() / 20.0).abs() < 1e-12);
        let d40 = bojanic_seneta_deviation(&svf("log"), 2.0, &[f64::exp2(40.0)]).unwrap();
        assert!(d40 < d20);
        let root = SlowVaryFn::handle("x^0.5", 1.0, |x: f64| x.sqrt());
        let a = bojanic_seneta_deviation(&root, 2.0, &[f64::exp2(20.0)]).unwrap();
        let b = bojanic_seneta_deviation(&root, 2.0, &[f64::exp2(60.0)]).unwrap();
        assert!(b > 2.5 * a);
    }

    #[test]
    fn log_pair_residual_matches_closed_form() {
        let pair = ConjugatePair::symbolic(&svf("log")).unwrap();
        let rep = verify_conjugacy(&pair, &dyadic_grid(20, 40), 0.2);
        for p in &rep.points {
            let k = p.x.log2();
            // L(x) L~(x L(x)) = k / (k + log2 k)
            let expect = 1.0 - k / (k + k.log2());
            assert!((p.dev1 - expect).abs() < 1e-12);
        }
        assert!(rep.nonincreasing(0.0));
        let at30 = &rep.points[10];
        assert!(at30.dev1 <= 0.2);
    }

    #[test]
    fn numeric_pair_of_log_squared() {
        let pair = ConjugatePair::numeric(&svf("log^2"), 1e-12).unwrap();
        let rep = verify_conjugacy(&pair, &dyadic_grid(20, 40), 0.05);
        assert!(rep.pass);
    }

    #[test]
    fn closed_form_inverse_agrees_with_solver() {
        let l = svf("log");
        let lt = NumericConjugate::new(&l, 1e-13).unwrap().into_svf();
        for (a, b) in [(1.0, 1.0), (1.5, 1.0), (1.0, 2.0)] {
            let pi = PowerInverse::new(a, b, &l, 1e-13).unwrap();
            let x = f64::exp2(40.0);
            let g1 = pi.g(x).unwrap();
            let g2 = power_inverse_via_conjugate(a, b, &lt, x).unwrap();
            assert!((g1 / g2 - 1.0).abs() < 1e-9, "({a},{b}): {g1} vs {g2}");
        }
    }

    #[test]
    fn conjugate_far_out_keeps_precision() {
        // L = log: log2 L~(2^s) = -log2(s) + o(1)
        let nc = NumericConjugate::new(&svf("log"), 1e-12).unwrap();
        let s = 1e300;
        let d = nc.eval_log2(s).unwrap();
        assert!((d + s.log2()).abs() < 1e-9, "{d}");
    }

    #[test]
    fn memo_is_transparent() {
        let nc = NumericConjugate::new(&svf("log"), 1e-12).unwrap();
        let a = nc.eval(1e9).unwrap();
        let b = nc.eval(1e9).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
