//! The `regvar` command-line front end.
//!
//! One subcommand per run. Results go to `--out` (stdout when absent) as CSV
//! or JSON; `--summary` additionally writes the JSON form. Files are written
//! to a temporary sibling and renamed into place.
//!
//! A `--config FILE` of `key = value` lines supplies flag values for the
//! subcommand; flags on the command line win. `subcommand = NAME` in the file
//! selects the subcommand when none is given on the command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Serialize, Serializer};
use serde_json::{json, Value};

use crate::conjugate::{verify_conjugacy, ConjugatePair};
use crate::criterion::{agreement_matrix, proposition1_check};
use crate::dependence::{
    default_grid, marginal_ks, na_covariance_test, pairwise_nd_test, DependenceStructure, MonotoneFn, MonotonePair,
};
use crate::distributions::{moment_value, DistributionSpec, MomentSpec};
use crate::error::Error;
use crate::harness::{
    dyadic_n_grid, run_complete_convergence, run_petersburg, run_slln, ExperimentConfig, WeightScheme,
};
use crate::normalizer::{default_horizon, karamata_tail_sum, NormalizingSeq};
use crate::rng::stream;
use crate::svf::SlowVaryFn;

pub const SCHEMA_VERSION: u32 = 1;
pub const WORKERS_ENV: &str = "REGVAR_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_HYPOTHESIS: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Parse(_) => EXIT_PARSE,
        Error::Parameter(_)
        | Error::Hypothesis(_)
        | Error::Index { .. }
        | Error::NotPsd { .. }
        | Error::MalformedPair(_)
        | Error::WeightViolation { .. } => EXIT_HYPOTHESIS,
        Error::Domain { .. }
        | Error::Overflow { .. }
        | Error::StepUnderflow { .. }
        | Error::ThresholdNotFound { .. }
        | Error::BracketFailure { .. }
        | Error::NonConvergence { .. } => EXIT_NUMERIC,
    }
}

/// Comma-separated floats, kept as one flag value so that a later occurrence
/// replaces an earlier one.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatList(pub Vec<f64>);

impl FromStr for FloatList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| format!("invalid number `{t}`")))
            .collect::<Result<Vec<f64>, String>>()
            .and_then(|v| {
                if v.is_empty() {
                    Err("empty list".into())
                } else {
                    Ok(FloatList(v))
                }
            })
    }
}

impl fmt::Display for FloatList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| format!("{v:?}")).collect();
        f.write_str(&parts.join(","))
    }
}

impl Serialize for FloatList {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConjugateMode {
    Auto,
    Symbolic,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grid {
    Linear,
    Dyadic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleTest {
    None,
    Nd,
    Cov,
    Ks,
}

#[derive(Debug, Clone, PartialEq, Parser, Serialize)]
#[command(
    name = "regvar",
    version,
    about = "Regular variation numerics and strong-law experiments"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// Worker threads (0 = all cores); never changes results.
    #[arg(long, global = true, env = WORKERS_ENV, default_value_t = 0)]
    pub workers: usize,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Also write the JSON summary here.
    #[arg(long, global = true)]
    pub summary: Option<PathBuf>,
    /// `key = value` file with flag values.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    #[serde(skip)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum Command {
    /// De Bruijn conjugate of L with conjugacy residuals.
    Conjugate(ConjugateArgs),
    /// Normalizing sequence b_n = n^{1/alpha} L~(n^{1/alpha}).
    Bn(BnArgs),
    /// Karamata tail sums against their asymptotic.
    Karamata(KaramataArgs),
    /// Tail table and moment classification of a law.
    Dist(DistArgs),
    /// Dependent sequences and tests of their defining inequalities.
    Sample(SampleArgs),
    /// Moment-side and series-side classification.
    Criterion(CriterionArgs),
    /// Strong law: maxima of weighted partial sums over b_n.
    Slln(ExperimentArgs),
    /// Complete convergence: exceedance series.
    Complete(ExperimentArgs),
    /// St. Petersburg sums under three normalizations.
    Petersburg(PetersburgArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Conjugate(_) => "conjugate",
            Command::Bn(_) => "bn",
            Command::Karamata(_) => "karamata",
            Command::Dist(_) => "dist",
            Command::Sample(_) => "sample",
            Command::Criterion(_) => "criterion",
            Command::Slln(_) => "slln",
            Command::Complete(_) => "complete",
            Command::Petersburg(_) => "petersburg",
        }
    }

    fn args_value(&self) -> Value {
        let v = match self {
            Command::Conjugate(a) => serde_json::to_value(a),
            Command::Bn(a) => serde_json::to_value(a),
            Command::Karamata(a) => serde_json::to_value(a),
            Command::Dist(a) => serde_json::to_value(a),
            Command::Sample(a) => serde_json::to_value(a),
            Command::Criterion(a) => serde_json::to_value(a),
            Command::Slln(a) | Command::Complete(a) => serde_json::to_value(a),
            Command::Petersburg(a) => serde_json::to_value(a),
        };
        v.expect("argument structs serialize")
    }
}

const SUBCOMMANDS: [&str; 9] = [
    "conjugate",
    "bn",
    "karamata",
    "dist",
    "sample",
    "criterion",
    "slln",
    "complete",
    "petersburg",
];

#[derive(Debug, Clone, PartialEq, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct ConjugateArgs {
    /// Slowly varying function, e.g. `log`, `c:3`, `log^-0.5*loglog4`.
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub l: String,
    #[arg(long, value_enum, default_value_t = ConjugateMode::Auto)]
    pub mode: ConjugateMode,
    /// Grid exponents: residuals are evaluated at x = 2^k.
    #[arg(long, default_value = "10.0,20.0,30.0,40.0")]
    pub log2_x: FloatList,
    /// Residual tolerance at the last grid point.
    #[arg(long, default_value_t = 0.05)]
    pub tol: f64,
    /// Root-finding tolerance of the numeric conjugate.
    #[arg(long, default_value_t = 1e-12)]
    pub solve_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct BnArgs {
    #[arg(long)]
    pub alpha: f64,
    /// L; its conjugate is computed (symbolic when possible).
    #[arg(long = "L", conflicts_with = "ltilde")]
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub l: Option<String>,
    /// The conjugate L~ given directly.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ltilde: Option<String>,
    /// First n (defaults to the first valid index).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_min: Option<u64>,
    #[arg(long)]
    pub n_max: u64,
    /// `linear`: every n; `dyadic`: powers of two.
    #[arg(long, value_enum, default_value_t = Grid::Linear)]
    pub grid: Grid,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct KaramataArgs {
    /// Exponents `p:q`, comma-separated.
    #[arg(long, default_value = "2:0,3:0,2:1,1.5:2")]
    pub cases: String,
    #[arg(long = "L", default_value = "log")]
    #[serde(rename = "L")]
    pub l: String,
    #[arg(long, default_value_t = 1024)]
    pub n: u64,
    /// Last directly summed term (default 10^4 n).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct DistArgs {
    /// `stpetersburg`, `rademacher`, `uniform`, `normal`, `pareto:A`,
    /// `point:V`, `example1:ALPHA:GAMMA`, `table:V@P,...`.
    #[arg(long)]
    pub dist: String,
    /// Tail table at t = 2^k for k in this range.
    #[arg(long, default_value_t = 0)]
    pub t_log2_min: i32,
    #[arg(long, default_value_t = 40)]
    pub t_log2_max: i32,
    /// Moment order; with `--L`, classifies E h(|X|).
    #[arg(long, requires = "l")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long = "L", requires = "alpha")]
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub l: Option<String>,
    /// Shift A in h(x) = x^alpha L^alpha(x + A) (default: domain start of L).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift_a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct SampleArgs {
    #[arg(long, default_value = "normal")]
    pub dist: String,
    /// `iid`, `na:RHO[:BLOCK]`, `swr[:v,...]`, `pnd[:DELTA]`, `pos:RHO`.
    #[arg(long, default_value = "iid")]
    pub dep: String,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// `none` prints sequences; `nd`, `cov`, `ks` run a test.
    #[arg(long, value_enum, default_value_t = SampleTest::None)]
    pub test: SampleTest,
    /// Sequences printed, or replications of the test.
    #[arg(long, default_value_t = 1)]
    pub reps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct CriterionArgs {
    /// Run the built-in agreement matrix instead of one case.
    #[arg(long)]
    pub matrix: bool,
    #[arg(long, required_unless_present = "matrix")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dist: Option<String>,
    #[arg(long, required_unless_present = "matrix")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long = "L", required_unless_present = "matrix")]
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub l: Option<String>,
    /// Normalizer conjugate (default: conjugate of L).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ltilde: Option<String>,
    /// Shift A in h(x) = x^alpha L^alpha(x + A) (default: domain start of L).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift_a: Option<f64>,
    #[arg(long, default_value_t = 1 << 16)]
    pub horizon: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct ExperimentArgs {
    #[arg(long)]
    pub dist: String,
    #[arg(long, default_value = "iid")]
    pub dep: String,
    #[arg(long)]
    pub alpha: f64,
    /// Moment factor L (and, through its conjugate, the normalizer).
    #[arg(long = "L", required_unless_present = "gamma")]
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub l: Option<String>,
    /// Normalizer conjugate, overriding the one derived from L.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ltilde: Option<String>,
    /// Log-corrected normalizer b_n = n^{1/alpha} log2^{1/gamma}(n^{1/alpha})
    /// with L = log2^{-1/gamma}.
    #[arg(long, conflicts_with = "l")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Shift A in h(x) = x^alpha L^alpha(x + A) (default: domain start of L).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift_a: Option<f64>,
    #[arg(long, default_value_t = 8)]
    pub n_log2_min: u32,
    #[arg(long, default_value_t = 20)]
    pub n_log2_max: u32,
    #[arg(long, default_value_t = 200)]
    pub reps: u64,
    #[arg(long, default_value = "0.5,1.0,2.0")]
    pub eps: FloatList,
    /// `ones`, `signs` or `bounded:C`.
    #[arg(long, default_value = "ones")]
    pub weights: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub b_scale: f64,
    /// Extra replications for exceedance estimates at n >= tail-from.
    #[arg(long, requires = "tail_reps")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_from: Option<u64>,
    #[arg(long, requires = "tail_from")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_reps: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize)]
#[command(args_override_self = true)]
#[serde(rename_all = "kebab-case")]
pub struct PetersburgArgs {
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    #[arg(long, default_value = "iid")]
    pub dep: String,
    #[arg(long, default_value_t = 10)]
    pub n_log2_min: u32,
    #[arg(long, default_value_t = 20)]
    pub n_log2_max: u32,
    #[arg(long, default_value_t = 200)]
    pub reps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// A run as `key = value` pairs: the subcommand plus every flag value.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CliConfig {
    pub subcommand: Option<String>,
    pub entries: BTreeMap<String, String>,
}

impl CliConfig {
    /// Parse `key = value` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> crate::Result<Self> {
        let mut cfg = CliConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("config line {}: expected key = value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            let v = v.strip_prefix('"').and_then(|v| v.strip_suffix('"')).unwrap_or(v);
            if k.is_empty() {
                return Err(Error::Parse(format!("config line {}: empty key", i + 1)));
            }
            if k == "subcommand" {
                cfg.subcommand = Some(v.to_string());
            } else if cfg.entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Parse(format!("config line {}: duplicate key `{k}`", i + 1)));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Flags for the entries, in key order. `true` becomes a bare switch
    /// and `false` is omitted.
    pub fn to_args(&self) -> Vec<OsString> {
        let mut out = Vec::new();
        for (k, v) in &self.entries {
            match v.as_str() {
                "true" => out.push(format!("--{k}").into()),
                "false" => {}
                _ => {
                    out.push(format!("--{k}").into());
                    out.push(v.into());
                }
            }
        }
        out
    }

    /// The configuration of a parsed command line (output paths and the
    /// config path excluded only when `with_io` is false).
    pub fn from_cli(cli: &Cli, with_io: bool) -> Self {
        let mut entries = BTreeMap::new();
        flatten_into(&cli.command.args_value(), &mut entries);
        if with_io {
            if let Value::Object(m) = serde_json::to_value(cli).expect("cli serializes") {
                for (k, v) in m {
                    if let Some(s) = scalar(&v) {
                        entries.insert(k, s);
                    }
                }
            }
        }
        CliConfig {
            subcommand: Some(cli.command.name().to_string()),
            entries,
        }
    }

    pub fn to_cli(&self) -> crate::Result<Cli> {
        let sub = self
            .subcommand
            .as_deref()
            .ok_or_else(|| Error::Parse("config has no subcommand".into()))?;
        let mut argv: Vec<OsString> = vec!["regvar".into(), sub.into()];
        argv.extend(self.to_args());
        Cli::try_parse_from(argv).map_err(|e| Error::Parse(e.to_string()))
    }
}

impl fmt::Display for CliConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(s) = &self.subcommand {
            writeln!(f, "subcommand = {s}")?;
        }
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        other => Some(other.to_string()),
    }
}

fn flatten_into(v: &Value, out: &mut BTreeMap<String, String>) {
    if let Value::Object(m) = v {
        for (k, v) in m {
            if let Some(s) = scalar(v) {
                out.insert(k.clone(), s);
            }
        }
    }
}

/// Index of the subcommand token in `args` (program name excluded), skipping
/// the values of global flags.
fn subcommand_position(args: &[OsString]) -> Option<usize> {
    const VALUED: [&str; 5] = ["--workers", "--out", "--format", "--summary", "--config"];
    let mut i = 0;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if VALUED.contains(&a.as_ref()) {
            i += 2;
            continue;
        }
        if SUBCOMMANDS.contains(&a.as_ref()) {
            return Some(i);
        }
        if !a.starts_with('-') {
            return None;
        }
        i += 1;
    }
    None
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Splice the config file's flags in right after the subcommand, so that
/// command-line flags (which come later) override them.
pub fn expand_args(argv: Vec<OsString>) -> crate::Result<Vec<OsString>> {
    let mut it = argv.into_iter();
    let prog = it.next().unwrap_or_else(|| "regvar".into());
    let args: Vec<OsString> = it.collect();
    let Some(path) = config_path(&args) else {
        let mut out = vec![prog];
        out.extend(args);
        return Ok(out);
    };
    let cfg = CliConfig::load(&path)?;
    let mut out = vec![prog];
    match subcommand_position(&args) {
        Some(p) => {
            if let Some(s) = &cfg.subcommand {
                if args[p].to_string_lossy() != s.as_str() {
                    return Err(Error::Parse(format!(
                        "config is for `{s}` but the command line runs `{}`",
                        args[p].to_string_lossy()
                    )));
                }
            }
            out.extend(args[..=p].iter().cloned());
            out.extend(cfg.to_args());
            out.extend(args[p + 1..].iter().cloned());
        }
        None => {
            let sub = cfg
                .subcommand
                .clone()
                .ok_or_else(|| Error::Parse("no subcommand on the command line or in the config".into()))?;
            out.extend(args);
            out.push(sub.into());
            out.extend(cfg.to_args());
        }
    }
    Ok(out)
}

/// A command's results in both output forms.
pub struct Output {
    pub csv: String,
    pub json: Value,
}

fn f(x: f64) -> String {
    x.to_string()
}

fn parse_svf(s: &str) -> crate::Result<SlowVaryFn> {
    SlowVaryFn::parse(s)
}

fn moment_spec(alpha: f64, l: SlowVaryFn, shift_a: Option<f64>) -> crate::Result<MomentSpec> {
    match shift_a {
        Some(a) => MomentSpec::with_shift(alpha, l, a),
        None => MomentSpec::new(alpha, l),
    }
}

fn run_conjugate(a: &ConjugateArgs) -> crate::Result<Output> {
    let l = parse_svf(&a.l)?;
    let pair = match a.mode {
        ConjugateMode::Auto => ConjugatePair::best(&l, a.solve_tol)?,
        ConjugateMode::Symbolic => ConjugatePair::symbolic(&l)
            .ok_or_else(|| Error::Parameter(format!("no symbolic conjugate rule applies to `{l}`")))?,
        ConjugateMode::Numeric => ConjugatePair::numeric(&l, a.solve_tol)?,
    };
    let grid: Vec<f64> = a.log2_x.0.iter().map(|k| k.exp2()).collect();
    let report = verify_conjugacy(&pair, &grid, a.tol);
    let name = if pair.symbolic {
        pair.ltilde.to_string()
    } else {
        "numeric".to_string()
    };
    let mut csv = String::from("x,conjugate,ltilde,dev1,dev2\n");
    let mut points = Vec::new();
    for p in &report.points {
        let lt = pair.ltilde.eval(p.x).unwrap_or(f64::NAN);
        csv.push_str(&format!("{},{},{},{},{}\n", f(p.x), name, f(lt), f(p.dev1), f(p.dev2)));
        points.push(json!({"x": p.x, "ltilde": lt, "dev1": p.dev1, "dev2": p.dev2}));
    }
    let json = json!({
        "L": l.to_string(),
        "conjugate": name,
        "symbolic": pair.symbolic,
        "tol": report.tol,
        "pass": report.pass,
        "nonincreasing": report.nonincreasing(0.0),
        "points": points,
    });
    Ok(Output { csv, json })
}

fn run_bn(a: &BnArgs) -> crate::Result<Output> {
    let seq = match (&a.l, &a.ltilde) {
        (_, Some(lt)) => NormalizingSeq::new(a.alpha, parse_svf(lt)?)?,
        (Some(l), None) => NormalizingSeq::from_l(a.alpha, &parse_svf(l)?)?,
        (None, None) => return Err(Error::Parameter("one of --L or --ltilde is required".into())),
    };
    let lo = a.n_min.unwrap_or(seq.start_index()).max(1);
    if a.n_max < lo {
        return Err(Error::Parameter(format!(
            "n-max {} is below the first index {lo}",
            a.n_max
        )));
    }
    let ns: Vec<u64> = match a.grid {
        Grid::Linear => (lo..=a.n_max).collect(),
        Grid::Dyadic => (0..64)
            .map(|k| 1u64 << k)
            .filter(|&n| n >= lo && n <= a.n_max)
            .collect(),
    };
    let mut csv = String::from("n,b_n\n");
    let mut rows = Vec::with_capacity(ns.len());
    for n in ns {
        let b = seq.b_n(n)?;
        csv.push_str(&format!("{n},{}\n", f(b)));
        rows.push(json!({"n": n, "b_n": b}));
    }
    let json = json!({"alpha": a.alpha, "ltilde": seq.ltilde().to_string(), "rows": rows});
    Ok(Output { csv, json })
}

fn parse_cases(s: &str) -> crate::Result<Vec<(f64, f64)>> {
    s.split(',')
        .map(|c| {
            let (p, q) = c
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("expected P:Q, got `{c}`")))?;
            let num = |t: &str| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("invalid number `{t}`")))
            };
            Ok((num(p)?, num(q)?))
        })
        .collect()
}

fn run_karamata(a: &KaramataArgs) -> crate::Result<Output> {
    let l = parse_svf(&a.l)?;
    let horizon = a.horizon.unwrap_or_else(|| default_horizon(a.n));
    let mut csv = String::from("p,q,n,numeric_sum,asymptotic,ratio\n");
    let mut rows = Vec::new();
    for (p, q) in parse_cases(&a.cases)? {
        let k = karamata_tail_sum(p, q, &l, a.n, horizon)?;
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            f(p),
            f(q),
            a.n,
            f(k.numeric_sum),
            f(k.asymptotic),
            f(k.ratio)
        ));
        rows.push(json!({
            "p": p, "q": q, "n": a.n, "numeric_sum": k.numeric_sum,
            "remainder": k.remainder, "asymptotic": k.asymptotic, "ratio": k.ratio,
        }));
    }
    Ok(Output {
        csv,
        json: json!({"L": l.to_string(), "horizon": horizon, "rows": rows}),
    })
}

fn run_dist(a: &DistArgs) -> crate::Result<Output> {
    let d = DistributionSpec::parse(&a.dist)?;
    if a.t_log2_max < a.t_log2_min {
        return Err(Error::Parameter("t-log2-max is below t-log2-min".into()));
    }
    let mut csv = String::from("t,tail_prob,log2_tail\n");
    let mut rows = Vec::new();
    for k in a.t_log2_min..=a.t_log2_max {
        let s = k as f64;
        let t = s.exp2();
        let (p, lp) = (d.tail_prob(t), d.log2_tail(s));
        csv.push_str(&format!("{},{},{}\n", f(t), f(p), f(lp)));
        rows.push(json!({"t": t, "tail_prob": p, "log2_tail": lp}));
    }
    let moment = match (a.alpha, &a.l) {
        (Some(alpha), Some(l)) => {
            let m = moment_spec(alpha, parse_svf(l)?, a.shift_a)?;
            Some(serde_json::to_value(moment_value(&d, &m)?).map_err(|e| Error::Io(e.to_string()))?)
        }
        _ => None,
    };
    let json = json!({
        "dist": d.to_string(),
        "mean": d.mean(),
        "tail_index": d.tail_index(),
        "tail": rows,
        "moment": moment,
    });
    Ok(Output { csv, json })
}

fn run_sample(a: &SampleArgs, workers: usize) -> crate::Result<Output> {
    let d = DistributionSpec::parse(&a.dist)?;
    let dep = DependenceStructure::parse(&a.dep)?;
    dep.validate()?;
    let to_json = |v: &dyn erased::Ser| v.json();
    match a.test {
        SampleTest::None => {
            let sampler = dep.sampler(&d, a.n)?;
            let mut csv = String::from("rep,index,value\n");
            let mut seqs = Vec::new();
            for r in 0..a.reps {
                let xs = sampler.generate(&mut stream(a.seed, r));
                for (i, x) in xs.iter().enumerate() {
                    csv.push_str(&format!("{r},{i},{}\n", f(*x)));
                }
                seqs.push(xs);
            }
            Ok(Output {
                csv,
                json: json!({"dist": d.to_string(), "dep": dep.to_string(), "sequences": seqs}),
            })
        }
        SampleTest::Nd => {
            let g = default_grid(&d);
            let rep = pairwise_nd_test(&dep, &d, a.n, &g, &g, a.reps, a.seed, workers)?;
            let mut csv = String::from("i,j,x,y,joint,product,excess,se\n");
            for c in &rep.cells {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    c.i,
                    c.j,
                    f(c.x),
                    f(c.y),
                    f(c.joint),
                    f(c.product),
                    f(c.excess),
                    f(c.se)
                ));
            }
            Ok(Output {
                csv,
                json: to_json(&rep)?,
            })
        }
        SampleTest::Cov => {
            if a.n < 2 {
                return Err(Error::Parameter("covariance test needs n >= 2".into()));
            }
            let half = a.n / 2;
            let pairs = vec![
                MonotonePair::new(vec![0], MonotoneFn::Sum, vec![1], MonotoneFn::Sum),
                MonotonePair::new(
                    (0..half).collect(),
                    MonotoneFn::Sum,
                    (half..a.n).collect(),
                    MonotoneFn::Max,
                ),
            ];
            let est = na_covariance_test(&dep, &d, a.n, &pairs, a.reps, a.seed, workers)?;
            let names = ["x0_x1", "sum_first_half_max_second_half"];
            let mut csv = String::from("pair,cov,se,upper,pass\n");
            for (name, e) in names.iter().zip(&est) {
                csv.push_str(&format!("{name},{},{},{},{}\n", f(e.cov), f(e.se), f(e.upper), e.pass));
            }
            Ok(Output {
                csv,
                json: to_json(&est)?,
            })
        }
        SampleTest::Ks => {
            let total = (a.reps as usize).saturating_mul(a.n).max(a.n);
            let ks = marginal_ks(&dep, &d, a.n, total, a.seed)?;
            let csv = format!("n,total,ks\n{},{total},{}\n", a.n, f(ks));
            Ok(Output {
                csv,
                json: json!({"n": a.n, "total": total, "ks": ks}),
            })
        }
    }
}

mod erased {
    use serde_json::Value;

    use crate::error::Error;

    pub trait Ser {
        fn json(&self) -> crate::Result<Value>;
    }

    impl<T: serde::Serialize> Ser for T {
        fn json(&self) -> crate::Result<Value> {
            serde_json::to_value(self).map_err(|e| Error::Io(e.to_string()))
        }
    }
}

use erased::Ser as _;

fn run_criterion(a: &CriterionArgs, workers: usize) -> crate::Result<Output> {
    if a.matrix {
        let mut csv = String::from("dist,alpha,L,expected,moment_side,series_side,agree\n");
        let mut rows = Vec::new();
        for c in agreement_matrix() {
            let v = c.run(a.horizon, a.seed, workers)?;
            let expected = if c.finite { "Finite" } else { "Infinite" };
            let ok = v.agree && v.moment_side == expected;
            csv.push_str(&format!(
                "{},{},{},{expected},{},{:?},{ok}\n",
                c.dist,
                f(c.alpha),
                c.l,
                v.moment_side,
                v.series_side
            ));
            rows.push(json!({
                "dist": c.dist, "alpha": c.alpha, "L": c.l, "expected": expected,
                "moment_side": v.moment_side, "series_side": v.series_side, "agree": ok,
            }));
        }
        return Ok(Output {
            csv,
            json: json!({"horizon": a.horizon, "cases": rows}),
        });
    }
    let missing = |w: &str| Error::Parameter(format!("--{w} is required"));
    let d = DistributionSpec::parse(a.dist.as_deref().ok_or_else(|| missing("dist"))?)?;
    let alpha = a.alpha.ok_or_else(|| missing("alpha"))?;
    let l = parse_svf(a.l.as_deref().ok_or_else(|| missing("L"))?)?;
    let m = moment_spec(alpha, l.clone(), a.shift_a)?;
    let seq = match &a.ltilde {
        Some(lt) => NormalizingSeq::new(alpha, parse_svf(lt)?)?,
        None => NormalizingSeq::from_l(alpha, &l)?,
    };
    let v = proposition1_check(&d, &m, &seq, a.horizon, a.seed, workers)?;
    let mut csv = String::from("k,lo,hi,exact,block_sum,partial_sum\n");
    for b in &v.series.blocks {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            b.k,
            b.lo,
            b.hi,
            b.exact,
            f(b.block_sum),
            f(b.partial_sum)
        ));
    }
    Ok(Output { csv, json: v.json()? })
}

/// The experiment configuration a set of flags describes.
pub fn experiment_config(a: &ExperimentArgs, workers: usize) -> crate::Result<ExperimentConfig> {
    let d = DistributionSpec::parse(&a.dist)?;
    let dep = DependenceStructure::parse(&a.dep)?;
    let (l, mut seq) = match (a.gamma, &a.l) {
        (Some(g), None) => {
            let seq = NormalizingSeq::corollary(a.alpha, g)?;
            let l = seq
                .l()
                .cloned()
                .ok_or_else(|| Error::Parameter("normalizer carries no L".into()))?;
            (l, seq)
        }
        (None, Some(l)) => {
            let l = parse_svf(l)?;
            let seq = NormalizingSeq::from_l(a.alpha, &l)?;
            (l, seq)
        }
        _ => return Err(Error::Parameter("exactly one of --L and --gamma is required".into())),
    };
    if let Some(lt) = &a.ltilde {
        seq = NormalizingSeq::new(a.alpha, parse_svf(lt)?)?;
    }
    let m = moment_spec(a.alpha, l, a.shift_a)?;
    if a.n_log2_max < a.n_log2_min || a.n_log2_max > 34 {
        return Err(Error::Parameter("need n-log2-min <= n-log2-max <= 34".into()));
    }
    let mut cfg = ExperimentConfig::new(d, dep, m, seq);
    cfg.n_grid = dyadic_n_grid(a.n_log2_min, a.n_log2_max);
    cfg.reps = a.reps;
    cfg.epsilons = a.eps.0.clone();
    cfg.weights = WeightScheme::parse(&a.weights)?;
    cfg.seed = a.seed;
    cfg.b_scale = a.b_scale;
    cfg.tail_budget = a.tail_from.zip(a.tail_reps);
    cfg.workers = workers;
    Ok(cfg)
}

fn run_experiment(a: &ExperimentArgs, workers: usize, complete: bool) -> crate::Result<Output> {
    let cfg = experiment_config(a, workers)?;
    let r = if complete {
        run_complete_convergence(&cfg)?
    } else {
        run_slln(&cfg)?
    };
    Ok(Output {
        csv: r.to_csv(),
        json: r.json()?,
    })
}

fn run_petersburg_cmd(a: &PetersburgArgs, workers: usize) -> crate::Result<Output> {
    let dep = DependenceStructure::parse(&a.dep)?;
    dep.validate()?;
    if a.n_log2_max < a.n_log2_min || a.n_log2_min < 1 || a.n_log2_max > 34 {
        return Err(Error::Parameter("need 1 <= n-log2-min <= n-log2-max <= 34".into()));
    }
    let grid = dyadic_n_grid(a.n_log2_min, a.n_log2_max);
    let r = run_petersburg(a.gamma, &dep, &grid, a.reps, a.seed, workers)?;
    Ok(Output {
        csv: r.to_csv(),
        json: r.json()?,
    })
}

/// Run the subcommand and produce both output forms.
pub fn execute(cli: &Cli) -> crate::Result<Output> {
    let w = cli.workers;
    let mut out = match &cli.command {
        Command::Conjugate(a) => run_conjugate(a)?,
        Command::Bn(a) => run_bn(a)?,
        Command::Karamata(a) => run_karamata(a)?,
        Command::Dist(a) => run_dist(a)?,
        Command::Sample(a) => run_sample(a, w)?,
        Command::Criterion(a) => run_criterion(a, w)?,
        Command::Slln(a) => run_experiment(a, w, false)?,
        Command::Complete(a) => run_experiment(a, w, true)?,
        Command::Petersburg(a) => run_petersburg_cmd(a, w)?,
    };
    // Only result-affecting settings are embedded, so output bytes do not
    // depend on paths or worker counts.
    let cfg = CliConfig::from_cli(cli, false);
    out.json = json!({
        "schema_version": SCHEMA_VERSION,
        "command": cli.command.name(),
        "config": cfg.entries,
        "result": out.json,
    });
    Ok(out)
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> crate::Result<()> {
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn emit(cli: &Cli, out: &Output) -> crate::Result<()> {
    let main = match cli.format {
        Format::Csv => out.csv.clone(),
        Format::Json => json_text(&out.json),
    };
    match &cli.out {
        Some(p) => write_atomic(p, main.as_bytes())?,
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(main.as_bytes())
                .and_then(|_| so.flush())
                .map_err(|e| Error::Io(e.to_string()))?;
        }
    }
    if let Some(p) = &cli.summary {
        write_atomic(p, json_text(&out.json).as_bytes())?;
    }
    Ok(())
}

/// Parse `argv`, run one subcommand, and return the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match expand_args(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("regvar: error: {e}");
            return exit_code(&e);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli).and_then(|out| emit(&cli, &out)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("regvar: error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(args: &[&str]) -> Cli {
        let mut v = vec!["regvar"];
        v.extend_from_slice(args);
        Cli::try_parse_from(v).unwrap()
    }

    #[test]
    fn bn_identity_normalizer() {
        let cli = parse(&["bn", "--alpha", "1", "--L", "c:1", "--n-max", "8"]);
        let out = execute(&cli).unwrap();
        let expect: String = std::iter::once("n,b_n\n".to_string())
            .chain((1..=8).map(|n| format!("{n},{n}\n")))
            .collect();
        assert_eq!(out.csv, expect);
    }

    #[test]
    fn conjugate_of_log_is_symbolic() {
        let cli = parse(&["conjugate", "--L", "log"]);
        let out = execute(&cli).unwrap();
        assert!(out.csv.starts_with("x,conjugate,ltilde,dev1,dev2\n"));
        assert!(
            out.csv.lines().skip(1).all(|l| l.split(',').nth(1) == Some("1/log")),
            "{}",
            out.csv
        );
        assert_eq!(out.json["schema_version"], SCHEMA_VERSION);
        assert!(out.json["result"]["pass"].is_boolean());
        assert_eq!(out.json["result"]["nonincreasing"], true);
    }

    #[test]
    fn exit_codes_are_distinct() {
        assert_eq!(
            run(["regvar", "bn", "--alpha", "1", "--L", "nonsense(", "--n-max", "4"]),
            EXIT_PARSE
        );
        assert_eq!(run(["regvar", "frobnicate"]), EXIT_PARSE);
        // L = 1/2 < 1 at alpha = 1 under NA
        let code = run([
            "regvar",
            "slln",
            "--dist",
            "rademacher",
            "--alpha",
            "1",
            "--L",
            "c:0.5",
            "--reps",
            "2",
            "--n-log2-max",
            "10",
            "--out",
            "/dev/null",
        ]);
        assert_eq!(code, EXIT_HYPOTHESIS);
        let codes = [EXIT_OK, EXIT_IO, EXIT_PARSE, EXIT_HYPOTHESIS, EXIT_NUMERIC];
        for (i, a) in codes.iter().enumerate() {
            assert!(codes[i + 1..].iter().all(|b| b != a));
        }
        assert_eq!(
            exit_code(&Error::BracketFailure {
                target: 1.0,
                at_start: 0.0
            }),
            EXIT_NUMERIC
        );
    }

    #[test]
    fn hypothesis_message_names_the_condition() {
        let cli = parse(&[
            "slln",
            "--dist",
            "rademacher",
            "--alpha",
            "1",
            "--L",
            "c:0.5",
            "--reps",
            "2",
        ]);
        let e = execute(&cli).err().unwrap();
        assert!(e.to_string().contains("L(x) >= 1"), "{e}");
    }

    #[test]
    fn config_file_is_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# bn run\nsubcommand = bn\nalpha = 1\nL = c:1\nn-max = 8\n").unwrap();
        let argv = expand_args(
            ["regvar", "--config", path.to_str().unwrap(), "bn", "--n-max", "3"]
                .map(OsString::from)
                .to_vec(),
        )
        .unwrap();
        let cli = Cli::try_parse_from(argv).unwrap();
        let Command::Bn(b) = &cli.command else { panic!() };
        assert_eq!((b.alpha, b.n_max, b.l.as_deref()), (1.0, 3, Some("c:1")));

        let argv = expand_args(
            ["regvar", "--config", path.to_str().unwrap()]
                .map(OsString::from)
                .to_vec(),
        )
        .unwrap();
        let cli = Cli::try_parse_from(argv).unwrap();
        assert_eq!(cli.command.name(), "bn");
    }

    #[test]
    fn config_rejects_garbage() {
        assert!(CliConfig::parse("alpha 1").is_err());
        assert!(CliConfig::parse("a = 1\na = 2").is_err());
        assert!(CliConfig::parse("= 1").is_err());
    }

    #[test]
    fn outputs_are_written_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("bn.csv");
        let summary = dir.path().join("bn.json");
        let code = run([
            "regvar",
            "bn",
            "--alpha",
            "1",
            "--L",
            "c:1",
            "--n-max",
            "4",
            "--out",
            out.to_str().unwrap(),
            "--summary",
            summary.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK);
        assert_eq!(std::fs::read_to_string(&out).unwrap(), "n,b_n\n1,1\n2,2\n3,3\n4,4\n");
        let j: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
        assert_eq!(j["command"], "bn");
        // only the two requested files remain
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
        let missing = dir.path().join("no/such/dir/x.csv");
        let code = run([
            "regvar",
            "bn",
            "--alpha",
            "1",
            "--L",
            "c:1",
            "--n-max",
            "4",
            "--out",
            missing.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_IO);
    }

    fn svf_strategy() -> impl Strategy<Value = String> {
        prop_oneof![
            Just("log".to_string()),
            Just("c:1".to_string()),
            (0.1f64..10.0).prop_map(|c| format!("c:{c}")),
            (-2.0f64..2.0).prop_map(|p| format!("log^{p}")),
            Just("log^-1*loglog4^-1.1".to_string()),
        ]
    }

    fn experiment_strategy() -> impl Strategy<Value = ExperimentArgs> {
        (
            svf_strategy(),
            prop::option::of(svf_strategy()),
            1.0f64..2.0,
            prop::collection::vec(0.01f64..10.0, 1..4),
            any::<u64>(),
            1u64..10_000,
            prop_oneof![
                Just("ones".to_string()),
                Just("signs".to_string()),
                Just("bounded:2.5".to_string())
            ],
            prop_oneof![
                Just("iid".to_string()),
                Just("na:-0.1".to_string()),
                Just("pnd:0.2".to_string())
            ],
            prop::option::of((1u64..1 << 20, 1u64..100_000)),
        )
            .prop_map(|(l, lt, alpha, eps, seed, reps, weights, dep, tail)| ExperimentArgs {
                dist: "example1:1.5:3".into(),
                dep,
                alpha,
                l: Some(l),
                ltilde: lt,
                gamma: None,
                shift_a: None,
                n_log2_min: 8,
                n_log2_max: 20,
                reps,
                eps: FloatList(eps),
                weights,
                seed,
                b_scale: 1.0,
                tail_from: tail.map(|t| t.0),
                tail_reps: tail.map(|t| t.1),
            })
    }

    fn cli_strategy() -> impl Strategy<Value = Cli> {
        let cmd = prop_oneof![
            experiment_strategy().prop_map(Command::Slln),
            experiment_strategy().prop_map(Command::Complete),
            (0.01f64..5.0, any::<u64>(), 1u64..1000, 1u32..10).prop_map(|(gamma, seed, reps, lo)| {
                Command::Petersburg(PetersburgArgs {
                    gamma,
                    dep: "swr".into(),
                    n_log2_min: lo,
                    n_log2_max: lo + 5,
                    reps,
                    seed,
                })
            }),
            (1.0f64..2.0, svf_strategy(), 1u64..1 << 30, any::<bool>()).prop_map(|(alpha, l, n_max, dy)| {
                Command::Bn(BnArgs {
                    alpha,
                    l: Some(l),
                    ltilde: None,
                    n_min: None,
                    n_max,
                    grid: if dy { Grid::Dyadic } else { Grid::Linear },
                })
            }),
            (any::<bool>(), svf_strategy(), any::<u64>()).prop_map(|(matrix, l, seed)| {
                Command::Criterion(CriterionArgs {
                    matrix,
                    dist: Some("stpetersburg".into()),
                    alpha: Some(1.0),
                    l: Some(l),
                    ltilde: None,
                    shift_a: None,
                    horizon: 1 << 16,
                    seed,
                })
            }),
        ];
        (cmd, 0usize..16, any::<bool>()).prop_map(|(command, workers, json)| Cli {
            workers,
            out: Some(PathBuf::from("out.csv")),
            format: if json { Format::Json } else { Format::Csv },
            summary: None,
            config: None,
            command,
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn config_round_trip(cli in cli_strategy()) {
            let cfg = CliConfig::from_cli(&cli, true);
            let text = cfg.to_string();
            let reparsed = CliConfig::parse(&text).unwrap();
            prop_assert_eq!(&reparsed, &cfg);
            let back = reparsed.to_cli().unwrap();
            prop_assert_eq!(back, cli);
        }

        #[test]
        fn float_lists_round_trip(v in prop::collection::vec(-1e300f64..1e300, 1..6)) {
            let l = FloatList(v);
            prop_assert_eq!(l.to_string().parse::<FloatList>().unwrap(), l);
        }
    }
}
