//! Identically distributed sequences under negative dependence, and
//! statistical checks of the defining inequalities.
//!
//! * `na:ρ` is an equicorrelated Gaussian vector pushed through `F^{-1}∘Φ`.
//!   Gaussian vectors with nonpositive correlations are negatively associated
//!   and coordinatewise nondecreasing maps preserve that. `na:ρ:m` splits the
//!   sequence into independent blocks of length `m`, which keeps the
//!   correlation matrix positive semidefinite for any `n`.
//! * `swr` samples without replacement from an urn (negatively associated).
//! * `pnd:δ` uses a checkerboard copula on triples whose pairs are negatively
//!   dependent while the triple is not (so the sequence is pairwise ND only).

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::rng::{par_reps, stream};
use crate::stats::{ks_distance, normal_cdf, sorted};

/// Default checkerboard strength of `pnd`.
pub const DEFAULT_PND_DELTA: f64 = 0.1;
/// Quantile urn size per drawn coordinate for `swr` without explicit urn.
pub const URN_FACTOR: usize = 4;
/// Replications are split into this many seeded chunks, whatever the number
/// of workers.
const CHUNKS: u64 = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum DependenceStructure {
    Iid,
    /// Equicorrelated Gaussian copula; `block = None` correlates the whole
    /// sequence.
    NaCopula {
        rho: f64,
        block: Option<usize>,
    },
    /// Without an urn, one is built from the marginal's quantiles
    /// `F^{-1}((k − 1/2)/N)`, `N = 4n`.
    SamplingWithoutReplacement {
        urn: Option<Arc<Vec<f64>>>,
    },
    /// `P(B_i = 0, B_j = 0) = (1 − δ)/4` for the underlying bits.
    PairwiseNd {
        delta: f64,
    },
    /// Positively equicorrelated Gaussian copula. Not negatively dependent;
    /// exists so that the tests have something to reject.
    PositiveControl {
        rho: f64,
    },
}

impl fmt::Display for DependenceStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DependenceStructure::Iid => f.write_str("iid"),
            DependenceStructure::NaCopula { rho, block: None } => write!(f, "na:{rho}"),
            DependenceStructure::NaCopula { rho, block: Some(m) } => write!(f, "na:{rho}:{m}"),
            DependenceStructure::SamplingWithoutReplacement { urn: None } => f.write_str("swr"),
            DependenceStructure::SamplingWithoutReplacement { urn: Some(u) } => {
                f.write_str("swr:")?;
                for (i, v) in u.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{v}")?;
                }
                Ok(())
            }
            DependenceStructure::PairwiseNd { delta } => write!(f, "pnd:{delta}"),
            DependenceStructure::PositiveControl { rho } => write!(f, "pos:{rho}"),
        }
    }
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("invalid {what} `{s}`")))
}

impl DependenceStructure {
    /// `iid`, `na:RHO`, `na:RHO:BLOCK`, `swr`, `swr:V1,V2,...`, `pnd`,
    /// `pnd:DELTA`, `pos:RHO`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        let d = match (head.to_ascii_lowercase().as_str(), rest) {
            ("iid", None) => DependenceStructure::Iid,
            ("na", Some(r)) => match r.split_once(':') {
                Some((rho, m)) => DependenceStructure::NaCopula {
                    rho: num(rho, "rho")?,
                    block: Some(num(m, "block length")?),
                },
                None => DependenceStructure::NaCopula {
                    rho: num(r, "rho")?,
                    block: None,
                },
            },
            ("swr", None) => DependenceStructure::SamplingWithoutReplacement { urn: None },
            ("swr", Some(r)) => {
                let urn = r
                    .split(',')
                    .map(|v| num(v, "urn value"))
                    .collect::<Result<Vec<f64>>>()?;
                DependenceStructure::SamplingWithoutReplacement {
                    urn: Some(Arc::new(urn)),
                }
            }
            ("pnd", None) => DependenceStructure::PairwiseNd {
                delta: DEFAULT_PND_DELTA,
            },
            ("pnd", Some(r)) => DependenceStructure::PairwiseNd {
                delta: num(r, "delta")?,
            },
            ("pos", Some(r)) => DependenceStructure::PositiveControl { rho: num(r, "rho")? },
            _ => return Err(Error::Parse(format!("unknown dependence structure `{s}`"))),
        };
        d.validate()?;
        Ok(d)
    }

    /// Parameter checks that do not depend on the sequence length.
    pub fn validate(&self) -> Result<()> {
        match self {
            DependenceStructure::NaCopula { rho, block } => {
                if !(*rho <= 0.0 && *rho >= -1.0) {
                    return Err(Error::Parameter(format!("na needs -1 <= rho <= 0, got {rho}")));
                }
                if let Some(m) = block {
                    if *m == 0 {
                        return Err(Error::Parameter("na block length must be positive".into()));
                    }
                    check_psd(*rho, *m)?;
                }
            }
            DependenceStructure::SamplingWithoutReplacement { urn: Some(u) } => {
                if u.is_empty() || u.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Parameter("urn needs finite values".into()));
                }
            }
            DependenceStructure::PairwiseNd { delta } => {
                if !(*delta >= 0.0 && *delta <= 1.0 / 3.0) {
                    return Err(Error::Parameter(format!("pnd needs 0 <= delta <= 1/3, got {delta}")));
                }
            }
            DependenceStructure::PositiveControl { rho } if !(*rho >= 0.0 && *rho < 1.0) => {
                return Err(Error::Parameter(format!("control needs 0 <= rho < 1, got {rho}")));
            }
            _ => {}
        }
        Ok(())
    }

    /// Whether the structure is negatively associated (`Some(true)`), only
    /// pairwise negatively dependent (`Some(false)`), or neither (`None`).
    pub fn negatively_associated(&self) -> Option<bool> {
        match self {
            DependenceStructure::PairwiseNd { .. } => Some(false),
            DependenceStructure::PositiveControl { rho } if *rho > 0.0 => None,
            _ => Some(true),
        }
    }

    /// Precompute everything that is shared by all replications.
    pub fn sampler(&self, marginal: &DistributionSpec, n: usize) -> Result<SequenceSampler> {
        self.validate()?;
        if n == 0 {
            return Err(Error::Parameter("sequence length must be at least 1".into()));
        }
        let kind = match self {
            DependenceStructure::Iid => Kind::Iid,
            DependenceStructure::NaCopula { rho, block } => {
                let m = block.unwrap_or(n).min(n);
                check_psd(*rho, m)?;
                Kind::Gauss { rho: *rho, block: m }
            }
            DependenceStructure::PositiveControl { rho } => Kind::Gauss { rho: *rho, block: n },
            DependenceStructure::SamplingWithoutReplacement { urn } => {
                let urn = match urn {
                    Some(u) => u.clone(),
                    None => {
                        let big = URN_FACTOR * n;
                        let v = (0..big)
                            .map(|k| {
                                let u = (k as f64 + 0.5) / big as f64;
                                let upper = (big as f64 - k as f64 - 0.5) / big as f64;
                                marginal.quantile(u, upper)
                            })
                            .collect();
                        Arc::new(v)
                    }
                };
                if urn.len() < n {
                    return Err(Error::Parameter(format!(
                        "cannot draw {n} values without replacement from an urn of {}",
                        urn.len()
                    )));
                }
                Kind::Urn(urn)
            }
            DependenceStructure::PairwiseNd { delta } => Kind::Checkerboard { w: 3.0 * delta },
        };
        Ok(SequenceSampler {
            marginal: marginal.clone(),
            n,
            kind,
        })
    }
}

fn check_psd(rho: f64, len: usize) -> Result<()> {
    if len >= 2 {
        let min = -1.0 / (len as f64 - 1.0);
        if rho < min {
            return Err(Error::NotPsd { rho, len, min });
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Kind {
    Iid,
    Gauss { rho: f64, block: usize },
    Urn(Arc<Vec<f64>>),
    Checkerboard { w: f64 },
}

/// Read-only generator of length-`n` sequences.
#[derive(Debug, Clone)]
pub struct SequenceSampler {
    marginal: DistributionSpec,
    n: usize,
    kind: Kind,
}

/// Bit patterns `(b1, b2, b3)` of even parity (the XOR law) and the six
/// non-constant patterns.
const EVEN: [[u8; 3]; 4] = [[0, 0, 0], [0, 1, 1], [1, 0, 1], [1, 1, 0]];
const NONCONST: [[u8; 3]; 6] = [[0, 0, 1], [0, 1, 0], [1, 0, 0], [0, 1, 1], [1, 0, 1], [1, 1, 0]];

impl SequenceSampler {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn marginal(&self) -> &DistributionSpec {
        &self.marginal
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n);
        self.generate_into(rng, &mut out);
        out
    }

    /// Fill `out` (cleared first) with one sequence.
    pub fn generate_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        let n = self.n;
        match &self.kind {
            Kind::Iid => out.extend((0..n).map(|_| self.marginal.sample(rng))),
            Kind::Gauss { rho, block } => {
                let mut eps = vec![0.0; *block];
                let mut done = 0;
                while done < n {
                    let m = (*block).min(n - done);
                    for e in eps[..m].iter_mut() {
                        *e = rng.sample(StandardNormal);
                    }
                    let mean = eps[..m].iter().sum::<f64>() / m as f64;
                    let a = (1.0 - rho).sqrt();
                    let b = (1.0 + (m as f64 - 1.0) * rho).max(0.0).sqrt();
                    for &e in &eps[..m] {
                        let z = a * (e - mean) + b * mean;
                        out.push(self.marginal.quantile(normal_cdf(z), normal_cdf(-z)));
                    }
                    done += m;
                }
            }
            Kind::Urn(urn) => {
                // partial Fisher–Yates over an index permutation
                let big = urn.len();
                let mut idx: Vec<usize> = (0..big).collect();
                for i in 0..n {
                    let j = rng.random_range(i..big);
                    idx.swap(i, j);
                    out.push(urn[idx[i]]);
                }
            }
            Kind::Checkerboard { w } => {
                while out.len() < n {
                    let bits = if rng.random::<f64>() < *w {
                        NONCONST[rng.random_range(0..6)]
                    } else {
                        EVEN[rng.random_range(0..4)]
                    };
                    for b in bits {
                        if out.len() == n {
                            break;
                        }
                        let v: f64 = rng.random();
                        let (u, upper) = if b == 0 {
                            (0.5 * v, 1.0 - 0.5 * v)
                        } else {
                            (0.5 + 0.5 * v, 0.5 * (1.0 - v))
                        };
                        out.push(self.marginal.quantile(u, upper));
                    }
                }
            }
        }
    }
}

/// One sequence of length `n`.
pub fn generate_sequence<R: Rng + ?Sized>(
    structure: &DependenceStructure,
    marginal: &DistributionSpec,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(structure.sampler(marginal, n)?.generate(rng))
}

/// Split `reps` into fixed chunks `(stream, count)`.
fn chunks(reps: u64) -> Vec<(u64, u64)> {
    let k = CHUNKS.min(reps.max(1));
    (0..k).map(|c| (c, reps / k + u64::from(c < reps % k))).collect()
}

/// Marginal quantiles at 0.1, 0.25, 0.5, 0.75, 0.9.
pub fn default_grid(marginal: &DistributionSpec) -> Vec<f64> {
    let mut g: Vec<f64> = [0.1, 0.25, 0.5, 0.75, 0.9]
        .iter()
        .map(|&u| marginal.quantile(u, 1.0 - u))
        .collect();
    g.dedup();
    g
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NdCell {
    pub i: usize,
    pub j: usize,
    pub x: f64,
    pub y: f64,
    pub joint: f64,
    pub product: f64,
    pub excess: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NdReport {
    pub reps: u64,
    pub cells: Vec<NdCell>,
    /// Largest `excess / se` over the cells (`excess` itself where `se = 0`).
    pub max_z: f64,
    pub max_excess: f64,
    /// Every excess within 3 binomial standard errors of 0.
    pub pass: bool,
}

/// Estimate `P(X_i ≤ x, X_j ≤ y) − P(X_i ≤ x) P(X_j ≤ y)` over all pairs
/// `i < j` of a length-`n` sequence and the grid.
#[allow(clippy::too_many_arguments)]
pub fn pairwise_nd_test(
    structure: &DependenceStructure,
    marginal: &DistributionSpec,
    n: usize,
    grid_x: &[f64],
    grid_y: &[f64],
    reps: u64,
    seed: u64,
    workers: usize,
) -> Result<NdReport> {
    if n < 2 {
        return Err(Error::Parameter("pairwise test needs n >= 2".into()));
    }
    let sampler = structure.sampler(marginal, n)?;
    let (gx, gy) = (grid_x.len(), grid_y.len());
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let parts = chunks(reps);
    let counts = par_reps(workers, parts.len() as u64, |c| {
        let (id, count) = parts[c as usize];
        let mut rng = stream(seed, id);
        let mut mx = vec![0u64; n * gx];
        let mut my = vec![0u64; n * gy];
        let mut joint = vec![0u64; pairs.len() * gx * gy];
        let mut xs = Vec::with_capacity(n);
        for _ in 0..count {
            sampler.generate_into(&mut rng, &mut xs);
            for (k, &v) in xs.iter().enumerate() {
                for (a, &x) in grid_x.iter().enumerate() {
                    mx[k * gx + a] += u64::from(v <= x);
                }
                for (b, &y) in grid_y.iter().enumerate() {
                    my[k * gy + b] += u64::from(v <= y);
                }
            }
            for (p, &(i, j)) in pairs.iter().enumerate() {
                for (a, &x) in grid_x.iter().enumerate() {
                    if xs[i] > x {
                        continue;
                    }
                    for (b, &y) in grid_y.iter().enumerate() {
                        joint[(p * gx + a) * gy + b] += u64::from(xs[j] <= y);
                    }
                }
            }
        }
        Ok((mx, my, joint))
    })?;
    let (mut mx, mut my, mut joint) = (
        vec![0u64; n * gx],
        vec![0u64; n * gy],
        vec![0u64; pairs.len() * gx * gy],
    );
    for (a, b, c) in counts {
        mx.iter_mut().zip(a).for_each(|(s, v)| *s += v);
        my.iter_mut().zip(b).for_each(|(s, v)| *s += v);
        joint.iter_mut().zip(c).for_each(|(s, v)| *s += v);
    }
    let r = reps as f64;
    let mut cells = Vec::with_capacity(joint.len());
    let (mut max_z, mut max_excess) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (p, &(i, j)) in pairs.iter().enumerate() {
        for (a, &x) in grid_x.iter().enumerate() {
            for (b, &y) in grid_y.iter().enumerate() {
                let pj = joint[(p * gx + a) * gy + b] as f64 / r;
                let product = (mx[i * gx + a] as f64 / r) * (my[j * gy + b] as f64 / r);
                let excess = pj - product;
                let se = (pj * (1.0 - pj) / r).sqrt();
                let z = if se > 0.0 { excess / se } else { excess };
                max_z = max_z.max(z);
                max_excess = max_excess.max(excess);
                cells.push(NdCell {
                    i,
                    j,
                    x,
                    y,
                    joint: pj,
                    product,
                    excess,
                    se,
                });
            }
        }
    }
    Ok(NdReport {
        reps,
        cells,
        max_z,
        max_excess,
        pass: max_z <= 3.0,
    })
}

pub type VecFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Coordinatewise nondecreasing functions of a sub-vector.
#[derive(Clone)]
pub enum MonotoneFn {
    Constant(f64),
    Sum,
    Max,
    Min,
    /// Number of coordinates above the threshold.
    CountAbove(f64),
    Custom(String, VecFn),
}

impl fmt::Debug for MonotoneFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MonotoneFn::Constant(c) => write!(f, "Constant({c})"),
            MonotoneFn::Sum => f.write_str("Sum"),
            MonotoneFn::Max => f.write_str("Max"),
            MonotoneFn::Min => f.write_str("Min"),
            MonotoneFn::CountAbove(t) => write!(f, "CountAbove({t})"),
            MonotoneFn::Custom(name, _) => write!(f, "Custom({name})"),
        }
    }
}

impl MonotoneFn {
    pub fn apply(&self, v: &[f64]) -> f64 {
        match self {
            MonotoneFn::Constant(c) => *c,
            MonotoneFn::Sum => v.iter().sum(),
            MonotoneFn::Max => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            MonotoneFn::Min => v.iter().copied().fold(f64::INFINITY, f64::min),
            MonotoneFn::CountAbove(t) => v.iter().filter(|&&x| x > *t).count() as f64,
            MonotoneFn::Custom(_, f) => f(v),
        }
    }
}

/// `f(X_k, k ∈ a)` against `g(X_k, k ∈ b)` (0-based indices).
#[derive(Debug, Clone)]
pub struct MonotonePair {
    pub a: Vec<usize>,
    pub f: MonotoneFn,
    pub b: Vec<usize>,
    pub g: MonotoneFn,
}

impl MonotonePair {
    pub fn new(a: Vec<usize>, f: MonotoneFn, b: Vec<usize>, g: MonotoneFn) -> Self {
        MonotonePair { a, f, b, g }
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.a.is_empty() || self.b.is_empty() {
            return Err(Error::MalformedPair("index sets must be nonempty".into()));
        }
        if let Some(k) = self.a.iter().chain(&self.b).find(|&&k| k >= n) {
            return Err(Error::MalformedPair(format!(
                "index {k} outside a sequence of length {n}"
            )));
        }
        if let Some(k) = self.a.iter().find(|k| self.b.contains(k)) {
            return Err(Error::MalformedPair(format!("index {k} appears in both sets")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovEstimate {
    pub cov: f64,
    pub se: f64,
    /// `cov + 3 se`.
    pub upper: f64,
    /// `cov ≤ 3 se`.
    pub pass: bool,
}

/// Empirical `Cov(f, g)` for each pair with standard errors.
#[allow(clippy::too_many_arguments)]
pub fn na_covariance_test(
    structure: &DependenceStructure,
    marginal: &DistributionSpec,
    n: usize,
    pairs: &[MonotonePair],
    reps: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<CovEstimate>> {
    for p in pairs {
        p.check(n)?;
    }
    if reps < 2 {
        return Err(Error::Parameter("covariance test needs at least 2 replications".into()));
    }
    let sampler = structure.sampler(marginal, n)?;
    let parts = chunks(reps);
    let values = par_reps(workers, parts.len() as u64, |c| {
        let (id, count) = parts[c as usize];
        let mut rng = stream(seed, id);
        let mut xs = Vec::with_capacity(n);
        let (mut sa, mut sb) = (Vec::new(), Vec::new());
        let mut out = Vec::with_capacity(count as usize * pairs.len());
        for _ in 0..count {
            sampler.generate_into(&mut rng, &mut xs);
            for p in pairs {
                sa.clear();
                sa.extend(p.a.iter().map(|&k| xs[k]));
                sb.clear();
                sb.extend(p.b.iter().map(|&k| xs[k]));
                out.push((p.f.apply(&sa), p.g.apply(&sb)));
            }
        }
        Ok(out)
    })?;
    let all: Vec<(f64, f64)> = values.into_iter().flatten().collect();
    let np = pairs.len();
    let r = reps as f64;
    Ok((0..np)
        .map(|q| {
            let it = || all.iter().skip(q).step_by(np);
            let mf = it().map(|v| v.0).sum::<f64>() / r;
            let mg = it().map(|v| v.1).sum::<f64>() / r;
            let prods: Vec<f64> = it().map(|v| (v.0 - mf) * (v.1 - mg)).collect();
            let cov = prods.iter().sum::<f64>() / (r - 1.0);
            let mp = prods.iter().sum::<f64>() / r;
            let var = prods.iter().map(|p| (p - mp) * (p - mp)).sum::<f64>() / (r - 1.0);
            let se = (var / r).sqrt();
            CovEstimate {
                cov,
                se,
                upper: cov + 3.0 * se,
                pass: cov <= 3.0 * se,
            }
        })
        .collect())
}

/// Kolmogorov–Smirnov distance between the pooled coordinates of
/// `ceil(total / n)` sequences and the marginal.
pub fn marginal_ks(
    structure: &DependenceStructure,
    marginal: &DistributionSpec,
    n: usize,
    total: usize,
    seed: u64,
) -> Result<f64> {
    let sampler = structure.sampler(marginal, n)?;
    let mut rng = stream(seed, 0);
    let mut pooled = Vec::with_capacity(total + n);
    while pooled.len() < total {
        pooled.extend(sampler.generate(&mut rng));
    }
    let xs = sorted(&pooled);
    Ok(ks_distance(&xs, |x| marginal.cdf(x), |x| marginal.cdf_left(x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(xs: &[(f64, f64)]) -> f64 {
        let n = xs.len() as f64;
        let (ma, mb) = (
            xs.iter().map(|v| v.0).sum::<f64>() / n,
            xs.iter().map(|v| v.1).sum::<f64>() / n,
        );
        let c = xs.iter().map(|v| (v.0 - ma) * (v.1 - mb)).sum::<f64>();
        let va = xs.iter().map(|v| (v.0 - ma).powi(2)).sum::<f64>();
        let vb = xs.iter().map(|v| (v.1 - mb).powi(2)).sum::<f64>();
        c / (va * vb).sqrt()
    }

    #[test]
    fn iid_point_mass_is_zero() {
        let d = DistributionSpec::point(0.0).unwrap();
        let xs = generate_sequence(&DependenceStructure::Iid, &d, 100, &mut stream(1, 0)).unwrap();
        assert!(xs.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn swr_is_a_permutation() {
        let n = 50;
        let urn: Vec<f64> = (1..=n).map(|k| k as f64).collect();
        let s = DependenceStructure::SamplingWithoutReplacement {
            urn: Some(Arc::new(urn)),
        };
        let d = DistributionSpec::CenteredUniform;
        let mut rng = stream(2, 0);
        for _ in 0..100 {
            let xs = generate_sequence(&s, &d, n, &mut rng).unwrap();
            assert_eq!(xs.iter().sum::<f64>(), (n * (n + 1) / 2) as f64);
        }
    }

    #[test]
    fn equicorrelated_copula_correlation() {
        let s = DependenceStructure::NaCopula { rho: -0.1, block: None };
        let sampler = s.sampler(&DistributionSpec::StandardNormal, 5).unwrap();
        let mut rng = stream(3, 0);
        let pairs: Vec<(f64, f64)> = (0..100_000)
            .map(|_| {
                let v = sampler.generate(&mut rng);
                (v[1], v[3])
            })
            .collect();
        let r = corr(&pairs);
        assert!((r + 0.1).abs() <= 0.01, "{r}");
    }

    #[test]
    fn psd_violation() {
        let s = DependenceStructure::NaCopula { rho: -0.3, block: None };
        let e = s.sampler(&DistributionSpec::StandardNormal, 5).unwrap_err();
        assert!(matches!(e, Error::NotPsd { len: 5, .. }));
        // blocks of 4 are fine: -0.3 >= -1/3
        let s = DependenceStructure::NaCopula {
            rho: -0.3,
            block: Some(4),
        };
        assert!(s.sampler(&DistributionSpec::StandardNormal, 1 << 16).is_ok());
        assert!(DependenceStructure::parse("na:-0.3:5").is_err());
    }

    #[test]
    fn parse_round_trip() {
        for s in [
            "iid",
            "na:-0.1",
            "na:-0.05:21",
            "swr",
            "swr:1,2,3",
            "pnd:0.1",
            "pos:0.5",
        ] {
            let d = DependenceStructure::parse(s).unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert_eq!(
            DependenceStructure::parse("pnd").unwrap(),
            DependenceStructure::PairwiseNd { delta: 0.1 }
        );
        assert!(DependenceStructure::parse("na:0.2").is_err());
        assert!(DependenceStructure::parse("gauss").is_err());
    }

    #[test]
    fn checkerboard_pairs_are_nd_but_triples_are_not() {
        let s = DependenceStructure::PairwiseNd { delta: 0.1 };
        let sampler = s.sampler(&DistributionSpec::CenteredUniform, 3).unwrap();
        let mut rng = stream(4, 0);
        let reps = 200_000;
        let (mut pair, mut triple) = (0u32, 0u32);
        for _ in 0..reps {
            let v = sampler.generate(&mut rng);
            pair += u32::from(v[0] <= 0.0 && v[1] <= 0.0);
            triple += u32::from(v.iter().all(|&x| x <= 0.0));
        }
        let (p2, p3) = (pair as f64 / reps as f64, triple as f64 / reps as f64);
        // (1 − δ)/4 and (1 − 3δ)/4
        assert!(
            (p2 - 0.225).abs() < 4.0 * (0.225f64 * 0.775 / reps as f64).sqrt(),
            "{p2}"
        );
        assert!(
            (p3 - 0.175).abs() < 4.0 * (0.175f64 * 0.825 / reps as f64).sqrt(),
            "{p3}"
        );
        assert!(p3 > 0.125 + 0.01);
    }

    #[test]
    fn iid_passes_nd_test() {
        let d = DistributionSpec::StandardNormal;
        let g = default_grid(&d);
        let r = pairwise_nd_test(&DependenceStructure::Iid, &d, 3, &g, &g, 20_000, 9, 0).unwrap();
        assert!(r.pass, "{}", r.max_z);
        assert!(r.max_excess.abs() < 0.02);
    }

    #[test]
    fn covariance_examples() {
        let d = DistributionSpec::StandardNormal;
        let s = DependenceStructure::NaCopula { rho: -0.1, block: None };
        let pairs = [
            MonotonePair::new(vec![0], MonotoneFn::Constant(1.0), vec![1], MonotoneFn::Constant(2.0)),
            MonotonePair::new(vec![0, 1], MonotoneFn::Max, vec![2], MonotoneFn::Sum),
        ];
        let r = na_covariance_test(&s, &d, 3, &pairs, 20_000, 1, 0).unwrap();
        assert_eq!(r[0].cov, 0.0);
        assert!(r[0].pass && r[1].pass);
        assert!(r[1].cov < 0.0);
        let bad = [MonotonePair::new(vec![0, 1], MonotoneFn::Sum, vec![1], MonotoneFn::Sum)];
        assert!(matches!(
            na_covariance_test(&s, &d, 3, &bad, 100, 1, 0),
            Err(Error::MalformedPair(_))
        ));
    }

    #[test]
    fn determinism() {
        let d = DistributionSpec::example1(1.5, 3.0).unwrap();
        for s in ["iid", "na:-0.05:21", "swr", "pnd"] {
            let s = DependenceStructure::parse(s).unwrap();
            let a = generate_sequence(&s, &d, 257, &mut stream(11, 2)).unwrap();
            let b = generate_sequence(&s, &d, 257, &mut stream(11, 2)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn marginals_are_preserved() {
        let d = DistributionSpec::StandardNormal;
        for s in ["iid", "na:-0.1:11", "swr", "pnd"] {
            let st = DependenceStructure::parse(s).unwrap();
            let ks = marginal_ks(&st, &d, 1000, 200_000, 5).unwrap();
            assert!(ks <= 0.01, "{s}: {ks}");
        }
    }
}
