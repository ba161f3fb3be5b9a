//! Regular variation numerics and Monte Carlo strong-law experiments.
//!
//! Modules, bottom up:
//!
//! * [`svf`]: slowly varying functions as expression trees, slow-variation
//!   diagnostics and monotone thresholds.
//! * [`conjugate`]: de Bruijn conjugates (symbolic and numeric) and
//!   asymptotic inverses.
//! * [`normalizer`]: normalizing sequences `b_n = n^{1/α} L̃(n^{1/α})` and
//!   Karamata tail sums.
//! * [`distributions`]: St. Petersburg, the symmetric log-corrected
//!   heavy-tailed density, and simple controls.
//! * [`dependence`]: negatively associated and pairwise negatively dependent
//!   sequence generators, with statistical tests of the defining inequalities.
//! * [`criterion`]: moment-side and series-side classifiers and their
//!   agreement.
//! * [`harness`]: Monte Carlo experiments for maxima of weighted partial sums.
//! * [`cli`]: the `regvar` command-line front end.

// `!(x > 0.0)` style checks deliberately reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotic;
pub mod cli;
pub mod conjugate;
pub mod criterion;
pub mod dependence;
pub mod distributions;
pub mod error;
pub mod harness;
pub mod normalizer;
pub mod quad;
pub mod rng;
pub mod stats;
pub mod svf;

pub use error::{Error, Result};
pub use svf::{Expr, RegVaryFn, SlowVaryFn};
