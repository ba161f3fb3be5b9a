//! The moment condition `E|X|^α L^α(|X| + A) < ∞` against the tail series
//! `Σ_{n ≥ A^α} P(|X| > b_n)`, computed by two independent classifiers.
//!
//! The series side never looks at `L`: it only sees `b_n` (through `L̃`)
//! and the law's tail.

use rand::Rng;
use serde::Serialize;

use crate::asymptotic::{classify_log_terms, CondensationReport, SeriesVerdict};
use crate::distributions::{moment_value, DistributionSpec, MomentClass, MomentReport, MomentSpec};
use crate::error::{Error, Result};
use crate::normalizer::NormalizingSeq;
use crate::rng::{par_reps, stream};
use crate::svf::{default_scan_grid, monotone_threshold, Direction, SlowVaryFn};

/// Blocks `[2^k, 2^{k+1})` up to this size are summed term by term.
pub const EXACT_BLOCK_LOG2: u32 = 14;
/// Strata per sampled block.
pub const STRATA: u64 = 1 << 12;
/// Smallest accepted horizon.
pub const MIN_HORIZON: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesBlock {
    pub k: u32,
    /// First and last index of the block (clipped to the start index and
    /// the horizon).
    pub lo: u64,
    pub hi: u64,
    pub exact: bool,
    pub block_sum: f64,
    pub partial_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesReport {
    pub verdict: SeriesVerdict,
    pub condensation: CondensationReport,
    pub horizon: u64,
    pub blocks: Vec<SeriesBlock>,
    /// Empirical index of `n ↦ P(|X| > b_n)` between consecutive full blocks:
    /// `log2(B_{k+1}/B_k) − 1`.
    pub index_estimates: Vec<(u32, f64)>,
}

/// `log2 P(|X| > 2^s)`, with the smooth envelope for regularly varying tails
/// so that lattice laws do not jitter the fit.
fn log2_tail_envelope(dist: &DistributionSpec, s: f64) -> Result<f64> {
    match dist.tail_index() {
        Some(kappa) => Ok(-kappa * s + dist.tail_correction(s)?),
        None => Ok(dist.log2_tail(s)),
    }
}

fn term(dist: &DistributionSpec, seq: &NormalizingSeq, n: u64) -> Result<f64> {
    Ok(dist.log2_tail(seq.b_n_log2(n)?).exp2())
}

fn block_sum(
    dist: &DistributionSpec,
    seq: &NormalizingSeq,
    k: u32,
    lo: u64,
    hi: u64,
    seed: u64,
) -> Result<(bool, f64)> {
    let len = hi - lo + 1;
    if k <= EXACT_BLOCK_LOG2 || len <= STRATA {
        let mut terms = Vec::with_capacity(len as usize);
        for n in lo..=hi {
            terms.push(term(dist, seq, n)?);
        }
        return Ok((true, crate::normalizer::pairwise_sum(&terms)));
    }
    // one uniformly drawn index per stratum, weighted by the stratum width
    let mut rng = stream(seed, u64::from(k));
    let mut acc = Vec::with_capacity(STRATA as usize);
    for s in 0..STRATA {
        let a = lo + len * s / STRATA;
        let b = lo + len * (s + 1) / STRATA;
        let n = rng.random_range(a..b);
        acc.push(term(dist, seq, n)? * (b - a) as f64);
    }
    Ok((false, crate::normalizer::pairwise_sum(&acc)))
}

/// Classify `Σ_{n ≥ start} P(|X| > b_n)`.
///
/// The verdict comes from the growth of `log2 P(|X| > b_v)` fitted across
/// dyadic points far out (index estimate, then condensation on the
/// boundary). Dyadic partial sums up to `horizon` are reported alongside:
/// exact within blocks up to `2^14` terms, stratified samples beyond.
pub fn tail_series_classify(
    dist: &DistributionSpec,
    seq: &NormalizingSeq,
    horizon: u64,
    seed: u64,
    workers: usize,
) -> Result<SeriesReport> {
    if horizon < MIN_HORIZON {
        return Err(Error::Parameter(format!(
            "horizon must be at least 2^16, got {horizon}"
        )));
    }
    let condensation = classify_log_terms(|v| log2_tail_envelope(dist, seq.log2_b_at(v.log2())?));
    let start = seq.start_index();
    let k0 = 63 - start.leading_zeros();
    let k1 = 63 - horizon.leading_zeros();
    let ks: Vec<u32> = (k0..=k1).collect();
    let sums = par_reps(workers, ks.len() as u64, |i| {
        let k = ks[i as usize];
        let lo = (1u64 << k).max(start);
        let hi = if k == 63 { u64::MAX } else { (1u64 << (k + 1)) - 1 }.min(horizon);
        let (exact, s) = block_sum(dist, seq, k, lo, hi, seed)?;
        Ok((k, lo, hi, exact, s))
    })?;
    let mut partial = 0.0;
    let blocks: Vec<SeriesBlock> = sums
        .into_iter()
        .map(|(k, lo, hi, exact, block_sum)| {
            partial += block_sum;
            SeriesBlock {
                k,
                lo,
                hi,
                exact,
                block_sum,
                partial_sum: partial,
            }
        })
        .collect();
    let full: Vec<&SeriesBlock> = blocks
        .iter()
        .filter(|b| b.lo == 1u64 << b.k && b.hi == (1u64 << (b.k + 1)) - 1)
        .collect();
    let index_estimates = full
        .windows(2)
        .filter(|w| w[0].block_sum > 0.0 && w[1].block_sum > 0.0)
        .map(|w| (w[0].k, (w[1].block_sum / w[0].block_sum).log2() - 1.0))
        .collect();
    Ok(SeriesReport {
        verdict: condensation.verdict,
        condensation,
        horizon,
        blocks,
        index_estimates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionVerdict {
    pub moment_side: &'static str,
    pub series_side: SeriesVerdict,
    pub agree: bool,
    /// Scanned thresholds beyond which `x L(x)` and `y L̃(y)` increase.
    pub monotone_from: (f64, f64),
    pub moment: MomentReport,
    pub series: SeriesReport,
}

fn monotone_from(l: &SlowVaryFn, what: &str) -> Result<f64> {
    monotone_threshold(l, 1.0, Direction::Increasing, &default_scan_grid(l)).map_err(|e| match e {
        Error::ThresholdNotFound { grid_end } => Error::Hypothesis(format!(
            "{what} is not increasing on any tail of the scanned range (up to {grid_end:e})"
        )),
        other => other,
    })
}

/// Run both sides and compare.
///
/// Requires `x^α L^α(x)` and `x^{1/α} L̃(x^{1/α})` to be increasing; both
/// reduce to `x L(x)` and `y L̃(y)` increasing, which is checked on the scan
/// grid (from the first point at which it holds onwards).
pub fn proposition1_check(
    dist: &DistributionSpec,
    m: &MomentSpec,
    seq: &NormalizingSeq,
    horizon: u64,
    seed: u64,
    workers: usize,
) -> Result<CriterionVerdict> {
    if (m.alpha - seq.alpha()).abs() > 1e-12 {
        return Err(Error::Hypothesis(format!(
            "moment order {} and normalizer order {} differ",
            m.alpha,
            seq.alpha()
        )));
    }
    let from_l = monotone_from(&m.l, "x^a L^a(x)")?;
    let from_lt = monotone_from(seq.ltilde(), "x^(1/a) L~(x^(1/a))")?;
    let moment = moment_value(dist, m)?;
    let series = tail_series_classify(dist, seq, horizon, seed, workers)?;
    let series_side = series.verdict;
    let agree = matches!(
        (&moment.class, series_side),
        (MomentClass::Finite { .. }, SeriesVerdict::Convergent) | (MomentClass::Infinite, SeriesVerdict::Divergent)
    );
    Ok(CriterionVerdict {
        moment_side: moment.class.label(),
        series_side,
        agree,
        monotone_from: (from_l, from_lt),
        moment,
        series,
    })
}

/// One row of the built-in agreement matrix: law, `α`, `L`, and the expected
/// moment class.
#[derive(Debug, Clone)]
pub struct MatrixCase {
    pub dist: &'static str,
    pub alpha: f64,
    pub l: &'static str,
    pub finite: bool,
}

/// Sixteen combinations spanning both outcomes, several of them on the
/// boundary `α = κ` where only the slowly varying factors decide.
pub fn agreement_matrix() -> Vec<MatrixCase> {
    let c = |dist, alpha, l, finite| MatrixCase { dist, alpha, l, finite };
    vec![
        c("rademacher", 1.0, "c:1", true),
        c("uniform", 1.5, "log^-0.3333333333333333", true),
        c("example1:1.5:3", 1.5, "log^-0.3333333333333333", true),
        c("example1:1.5:3", 1.5, "log^0.3333333333333333", false),
        c("stpetersburg", 1.0, "c:1", false),
        c("stpetersburg", 1.0, "log^-1*loglog4^-1.1", true),
        c("stpetersburg", 1.0, "log^-1*loglog4^-1", false),
        c("stpetersburg", 1.0, "log^-2", true),
        c("pareto:1.5", 1.2, "c:1", true),
        c("pareto:1.5", 1.8, "c:1", false),
        c("pareto:1.5", 1.5, "log^-1", true),
        c("pareto:1.5", 1.5, "log^-0.5", false),
        c("pareto:1.5", 1.5, "c:1", false),
        c("example1:1.2:2", 1.2, "log^-0.5", true),
        c("normal", 1.5, "log", true),
        c("example1:1.5:3", 1.2, "c:1", true),
    ]
}

impl MatrixCase {
    pub fn run(&self, horizon: u64, seed: u64, workers: usize) -> Result<CriterionVerdict> {
        let dist = DistributionSpec::parse(self.dist)?;
        let l = SlowVaryFn::parse(self.l)?;
        let m = MomentSpec::new(self.alpha, l.clone())?;
        let seq = NormalizingSeq::from_l(self.alpha, &l)?;
        proposition1_check(&dist, &m, &seq, horizon, seed, workers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_law_converges() {
        let seq = NormalizingSeq::new(1.0, SlowVaryFn::constant(1.0).unwrap()).unwrap();
        let r = tail_series_classify(&DistributionSpec::Rademacher, &seq, 1 << 16, 1, 0).unwrap();
        assert_eq!(r.verdict, SeriesVerdict::Convergent);
        assert_eq!(r.blocks.last().unwrap().partial_sum, 0.0);
    }

    #[test]
    fn st_petersburg_harmonic_blocks() {
        // b_n = n: the block [2^k, 2^{k+1}) contributes Σ 2^{-floor(log2 n)} = 1
        let seq = NormalizingSeq::new(1.0, SlowVaryFn::constant(1.0).unwrap()).unwrap();
        let r = tail_series_classify(&DistributionSpec::StPetersburg, &seq, 1 << 20, 1, 0).unwrap();
        assert_eq!(r.verdict, SeriesVerdict::Divergent);
        for b in &r.blocks {
            if b.hi == (1 << (b.k + 1)) - 1 {
                assert!((b.block_sum - 1.0).abs() < 1e-9, "{b:?}");
            }
        }
    }

    #[test]
    fn st_petersburg_with_log_normalizer_converges() {
        let lt = SlowVaryFn::parse("log*loglog4^1.1").unwrap();
        let seq = NormalizingSeq::new(1.0, lt).unwrap();
        let r = tail_series_classify(&DistributionSpec::StPetersburg, &seq, 1 << 16, 1, 0).unwrap();
        assert_eq!(r.verdict, SeriesVerdict::Convergent, "{:?}", r.condensation);
    }

    #[test]
    fn both_sides_agree_on_examples() {
        let one = SlowVaryFn::constant(1.0).unwrap();
        let seq = NormalizingSeq::from_l(1.0, &one).unwrap();
        let m = MomentSpec::new(1.0, one).unwrap();
        let v = proposition1_check(&DistributionSpec::Rademacher, &m, &seq, 1 << 16, 1, 0).unwrap();
        assert_eq!(
            (v.moment_side, v.series_side, v.agree),
            ("Finite", SeriesVerdict::Convergent, true)
        );
        let v = proposition1_check(&DistributionSpec::StPetersburg, &m, &seq, 1 << 16, 1, 0).unwrap();
        assert_eq!(
            (v.moment_side, v.series_side, v.agree),
            ("Infinite", SeriesVerdict::Divergent, true)
        );

        let ex = DistributionSpec::example1(1.5, 3.0).unwrap();
        let seq = NormalizingSeq::corollary(1.5, 3.0).unwrap();
        let m = MomentSpec::new(1.5, seq.l().unwrap().clone()).unwrap();
        let v = proposition1_check(&ex, &m, &seq, 1 << 16, 1, 0).unwrap();
        assert_eq!(
            (v.moment_side, v.series_side, v.agree),
            ("Finite", SeriesVerdict::Convergent, true)
        );
    }

    #[test]
    fn order_mismatch_is_a_hypothesis_error() {
        let one = SlowVaryFn::constant(1.0).unwrap();
        let seq = NormalizingSeq::from_l(1.5, &one).unwrap();
        let m = MomentSpec::new(1.0, one).unwrap();
        let e = proposition1_check(&DistributionSpec::Rademacher, &m, &seq, 1 << 16, 1, 0).unwrap_err();
        assert!(matches!(e, Error::Hypothesis(_)));
    }

    #[test]
    fn non_monotone_l_is_refused() {
        // x L(x) = 1/x is never increasing
        let l = SlowVaryFn::handle("decaying", 1.0, |x| 1.0 / (x * x));
        let seq = NormalizingSeq::new(1.0, SlowVaryFn::constant(1.0).unwrap()).unwrap();
        let m = MomentSpec::new(1.0, l).unwrap();
        let e = proposition1_check(&DistributionSpec::Rademacher, &m, &seq, 1 << 16, 1, 0).unwrap_err();
        assert!(matches!(e, Error::Hypothesis(_)), "{e:?}");
    }

    #[test]
    fn small_horizon_rejected() {
        let seq = NormalizingSeq::new(1.0, SlowVaryFn::constant(1.0).unwrap()).unwrap();
        assert!(tail_series_classify(&DistributionSpec::Rademacher, &seq, 1000, 1, 0).is_err());
    }
}
