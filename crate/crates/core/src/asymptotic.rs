//! Convergence of positive series and integrals from the growth of their
//! `log2` terms, by iterated Cauchy condensation.
//!
//! Let `φ_0(v) = log2 a(v)` for an eventually monotone term `a`. At level `k`
//! the model `φ_k(v) ≈ σ v + c log2 v + d` is fitted through the points
//! `V_k/4, V_k/2, V_k`:
//!
//! * `σ < −δ`: geometric decay, convergent; `σ > δ`: divergent;
//! * otherwise the terms behave like `v^c`: `c < −1` converges, `c > −1`
//!   diverges, and when `c` is within [`LOG_BAND`] of `−1` the decision is
//!   carried by a slower factor and the next level is examined:
//!   `φ_{k+1}(v) = v + φ_k(2^v)` (condensation `Σ a_n ≍ Σ 2^k a_{2^k}`).
//!
//! At moderate arguments a `log2 log2 v` term leaks into the fitted `c` with
//! the sign of the factor that eventually decides, so the band only needs to
//! absorb the case where the next level is genuinely required. At the last
//! level there is no next one and the sign of `c + 1` decides (a window of
//! `v ≤ 3.3` for a fourth level is dominated by lower-order terms).
//!
//! The horizons are chosen so that every level evaluates `φ_0` no further
//! than `10^300`; `φ_0` must therefore be computable in log space.

use crate::error::Result;

/// Far end of the fit window per level.
pub const LEVEL_HORIZONS: [f64; 3] = [1e300, 996.0, 9.96];

/// Linear coefficients within `±SLOPE_DELTA` are treated as zero.
pub const SLOPE_DELTA: f64 = 0.02;

/// Half-width of the band around `c = −1` that defers to the next level.
pub const LOG_BAND: f64 = 0.2;

/// At the last level, `c` must be below `−1 − FINAL_TOL` to converge; a
/// pure `1/v` (up to rounding) diverges.
pub const FINAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SeriesVerdict {
    Convergent,
    Divergent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LevelFit {
    pub level: usize,
    pub hi: f64,
    /// Coefficient of `v`.
    pub slope: f64,
    /// Coefficient of `log2 v`.
    pub log_coef: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CondensationReport {
    pub verdict: SeriesVerdict,
    pub fits: Vec<LevelFit>,
    pub reason: String,
}

fn eval_level<F: Fn(f64) -> Result<f64>>(phi0: &F, level: usize, v: f64) -> Result<f64> {
    if level == 0 {
        phi0(v)
    } else {
        Ok(v + eval_level(phi0, level - 1, v.exp2())?)
    }
}

fn report(verdict: SeriesVerdict, fits: Vec<LevelFit>, reason: String) -> CondensationReport {
    CondensationReport { verdict, fits, reason }
}

/// Classify `Σ 2^{φ_0(n)}` (equivalently `∫ 2^{φ_0(v)} dv`).
pub fn classify_log_terms<F: Fn(f64) -> Result<f64>>(phi0: F) -> CondensationReport {
    use SeriesVerdict::*;
    let mut fits = Vec::new();
    for (level, &hi) in LEVEL_HORIZONS.iter().enumerate() {
        let v1 = hi / 4.0;
        let mut y = [0.0; 3];
        for (i, v) in [v1, 2.0 * v1, hi].into_iter().enumerate() {
            match eval_level(&phi0, level, v) {
                Ok(t) => y[i] = t,
                Err(e) => return report(Inconclusive, fits, format!("term not computable at level {level}: {e}")),
            }
        }
        if y[2] == f64::NEG_INFINITY {
            return report(Convergent, fits, format!("terms vanish at level {level}"));
        }
        if y[2] == f64::INFINITY {
            return report(Divergent, fits, format!("terms unbounded at level {level}"));
        }
        // points v1, 2 v1, 4 v1: differences are σ v1 + c and 2 σ v1 + c
        let d1 = y[1] - y[0];
        let d2 = y[2] - y[1];
        let slope = (d2 - d1) / v1;
        let log_coef = 2.0 * d1 - d2;
        if !(slope.is_finite() && log_coef.is_finite()) {
            return report(Inconclusive, fits, format!("undefined fit at level {level}"));
        }
        fits.push(LevelFit {
            level,
            hi,
            slope,
            log_coef,
        });
        if slope < -SLOPE_DELTA {
            return report(Convergent, fits, format!("geometric decay at level {level}"));
        }
        if slope > SLOPE_DELTA {
            return report(Divergent, fits, format!("geometric growth at level {level}"));
        }
        let last = level + 1 == LEVEL_HORIZONS.len();
        let (lo, hi) = if last {
            (-1.0 - FINAL_TOL, -1.0 - FINAL_TOL)
        } else {
            (-1.0 - LOG_BAND, -1.0 + LOG_BAND)
        };
        if log_coef < lo {
            return report(
                Convergent,
                fits,
                format!("power decay faster than 1/v at level {level}"),
            );
        }
        if log_coef >= hi {
            return report(
                Divergent,
                fits,
                format!("power decay not faster than 1/v at level {level}"),
            );
        }
    }
    report(Inconclusive, fits, "undecided at every condensation level".into())
}
