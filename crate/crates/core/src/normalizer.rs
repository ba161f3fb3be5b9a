//! Normalizing sequences `b_n = n^{1/α} L̃(n^{1/α})` and Karamata tail sums.

use rayon::prelude::*;

use crate::conjugate::{ConjugatePair, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::quad::integrate_to_infinity;
use crate::svf::{Expr, SlowVaryFn};

/// `n ↦ n^{1/α} L̃(n^{1/α})` for integer `n ≥ start_index`.
#[derive(Debug, Clone)]
pub struct NormalizingSeq {
    alpha: f64,
    ltilde: SlowVaryFn,
    /// The function `L` whose conjugate is `ltilde`, when known.
    l: Option<SlowVaryFn>,
    start_index: u64,
}

impl NormalizingSeq {
    /// Sequence from a given conjugate. The start index is `⌈A^α⌉` where `A`
    /// is the conjugate's domain start, so that `n^{1/α} ≥ A`.
    pub fn new(alpha: f64, ltilde: SlowVaryFn) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
        }
        let start = ltilde.domain_low().powf(alpha).ceil().max(1.0);
        if start > u64::MAX as f64 {
            return Err(Error::Parameter("start index exceeds u64".into()));
        }
        Ok(NormalizingSeq {
            alpha,
            ltilde,
            l: None,
            start_index: start as u64,
        })
    }

    /// Sequence for `L`, using the symbolic conjugate when one exists.
    pub fn from_l(alpha: f64, l: &SlowVaryFn) -> Result<Self> {
        let pair = ConjugatePair::best(l, DEFAULT_TOL)?;
        let mut seq = Self::new(alpha, pair.ltilde)?;
        seq.l = Some(l.clone());
        Ok(seq)
    }

    /// `L = log^{-1/γ}`, `L̃ = log^{1/γ}`.
    pub fn corollary(alpha: f64, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::Parameter(format!("gamma must be positive, got {gamma}")));
        }
        Self::from_l(alpha, &SlowVaryFn::from_expr(Expr::log_pow(-1.0 / gamma))?)
    }

    /// Raise the start index (never lowers it).
    pub fn with_start_index(mut self, start: u64) -> Self {
        self.start_index = self.start_index.max(start);
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn ltilde(&self) -> &SlowVaryFn {
        &self.ltilde
    }

    pub fn l(&self) -> Option<&SlowVaryFn> {
        self.l.as_ref()
    }

    pub fn start_index(&self) -> u64 {
        self.start_index
    }

    /// `log2 b` at a real `log2 n`; used for indices beyond `u64`.
    pub fn log2_b_at(&self, log2_n: f64) -> Result<f64> {
        let s = log2_n / self.alpha;
        Ok(s + self.ltilde.eval_log2(s)?)
    }

    pub fn b_n_log2(&self, n: u64) -> Result<f64> {
        if n < self.start_index {
            return Err(Error::Index {
                n,
                start: self.start_index,
            });
        }
        self.log2_b_at((n as f64).log2())
    }

    pub fn b_n(&self, n: u64) -> Result<f64> {
        if n < self.start_index {
            return Err(Error::Index {
                n,
                start: self.start_index,
            });
        }
        let x = (n as f64).powf(1.0 / self.alpha);
        Ok(x * self.ltilde.eval(x)?)
    }

    /// `max_k b_{2^{k+1}} / b_{2^k}` for `k` in `lo..=hi`.
    pub fn dyadic_ratio_max(&self, lo: u32, hi: u32) -> Result<f64> {
        (lo..=hi).try_fold(0.0_f64, |m, k| {
            let r = self.log2_b_at((k + 1) as f64)? - self.log2_b_at(k as f64)?;
            Ok(m.max(r.exp2()))
        })
    }
}

/// `(1/α)^{1/γ} n^{1/α} log2^{1/γ}(n)`.
pub fn corollary_b_n(alpha: f64, gamma: f64, n: u64) -> f64 {
    let n = n as f64;
    (1.0 / alpha).powf(1.0 / gamma) * n.powf(1.0 / alpha) * n.log2().powf(1.0 / gamma)
}

/// Terms per parallel chunk in [`karamata_tail_sum`].
pub const SUM_CHUNK: u64 = 1 << 16;

/// Pairwise (tree) summation; the association order depends only on the
/// length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KaramataSum {
    /// Direct sum up to the horizon plus the integral remainder.
    pub numeric_sum: f64,
    pub remainder: f64,
    pub asymptotic: f64,
    pub ratio: f64,
}

/// `Σ_{k≥n} L^q(k)/k^p` against `L^q(n)/((p−1) n^{p−1})`.
///
/// Terms `n..=horizon` are summed directly in fixed-size chunks with a
/// pairwise reduction, so the value does not depend on the thread count. The
/// rest is `∫_{H+1/2}^∞ L^q(x) x^{-p} dx` (midpoint comparison).
pub fn karamata_tail_sum(p: f64, q: f64, l: &SlowVaryFn, n: u64, horizon: u64) -> Result<KaramataSum> {
    if !(p > 1.0) {
        return Err(Error::Parameter(format!("p must exceed 1, got {p}")));
    }
    if (n as f64) < l.domain_low() {
        return Err(Error::Domain {
            x: n as f64,
            low: l.domain_low(),
        });
    }
    if horizon < n {
        return Err(Error::Parameter(format!("horizon {horizon} is below n = {n}")));
    }
    let term = |k: u64| -> Result<f64> {
        let x = k as f64;
        Ok(if q == 0.0 {
            x.powf(-p)
        } else {
            l.eval(x)?.powf(q) * x.powf(-p)
        })
    };
    let chunks = (horizon - n) / SUM_CHUNK + 1;
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = n + c * SUM_CHUNK;
            let hi = (lo + SUM_CHUNK - 1).min(horizon);
            let terms = (lo..=hi).map(term).collect::<Result<Vec<f64>>>()?;
            Ok(pairwise_sum(&terms))
        })
        .collect::<Result<Vec<f64>>>()?;
    let direct = pairwise_sum(&partial);

    let h = horizon as f64 + 0.5;
    let lh2 = h.log2();
    let integrand = |u: f64| -> f64 {
        let s = lh2 + u;
        let lq = if q == 0.0 {
            0.0
        } else {
            q * l.eval_log2(s).unwrap_or(f64::NAN)
        };
        (lq + (1.0 - p) * s).exp2() * std::f64::consts::LN_2
    };
    let rem = integrate_to_infinity(integrand, 0.0, 0.0, 1e-10, 2000);
    if !rem.value.is_finite() {
        return Err(Error::Overflow {
            what: "karamata remainder".into(),
            x: h,
        });
    }
    let numeric_sum = direct + rem.value;
    let nf = n as f64;
    let lq_n = if q == 0.0 { 1.0 } else { l.eval(nf)?.powf(q) };
    let asymptotic = lq_n / ((p - 1.0) * nf.powf(p - 1.0));
    Ok(KaramataSum {
        numeric_sum,
        remainder: rem.value,
        asymptotic,
        ratio: numeric_sum / asymptotic,
    })
}

/// Default horizon `10^4 n`.
pub fn default_horizon(n: u64) -> u64 {
    n.saturating_mul(10_000)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_sequence() {
        let seq = NormalizingSeq::from_l(1.0, &SlowVaryFn::constant(1.0).unwrap()).unwrap();
        assert_eq!(seq.start_index(), 1);
        assert!((seq.b_n(7).unwrap() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn corollary_example() {
        let b = corollary_b_n(1.5, 3.0, 64);
        let expect = (2.0f64 / 3.0).powf(1.0 / 3.0) * 16.0 * 6f64.powf(1.0 / 3.0);
        assert!((b - expect).abs() < 1e-12);
        assert!((b - 25.4).abs() < 0.05);
        let seq = NormalizingSeq::corollary(1.5, 3.0).unwrap();
        assert!((seq.b_n(64).unwrap() / b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn index_below_start_is_rejected() {
        let seq = NormalizingSeq::corollary(1.5, 3.0).unwrap();
        assert_eq!(seq.start_index(), 3);
        assert!(matches!(seq.b_n(2), Err(Error::Index { n: 2, start: 3 })));
    }

    #[test]
    fn karamata_basel_tail() {
        let one = SlowVaryFn::constant(1.0).unwrap();
        let r = karamata_tail_sum(2.0, 0.0, &one, 100, 1_000_000).unwrap();
        // ψ'(100) = Σ_{k≥100} 1/k^2
        let trigamma =
            1.0 / 100.0 + 1.0 / (2.0 * 100f64.powi(2)) + 1.0 / (6.0 * 100f64.powi(3)) - 1.0 / (30.0 * 100f64.powi(5));
        assert!((r.numeric_sum - trigamma).abs() < 1e-12);
        assert!((r.ratio - 1.0).abs() < 0.01);
        let r3 = karamata_tail_sum(3.0, 0.0, &one, 100, 1_000_000).unwrap();
        assert_eq!(r3.asymptotic, 5e-5);
        assert!((r3.ratio - 1.0).abs() < 0.02);
    }

    #[test]
    fn karamata_horizon_stable() {
        let l = SlowVaryFn::log();
        let a = karamata_tail_sum(2.0, 1.0, &l, 1024, 100_000).unwrap();
        let b = karamata_tail_sum(2.0, 1.0, &l, 1024, 400_000).unwrap();
        assert!((a.numeric_sum / b.numeric_sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn karamata_rejects_p_le_one() {
        let l = SlowVaryFn::log();
        assert!(matches!(
            karamata_tail_sum(1.0, 0.0, &l, 10, 100),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn pairwise_matches_naive() {
        let xs: Vec<f64> = (1..=1000).map(|k| 1.0 / k as f64).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-12);
    }
}
