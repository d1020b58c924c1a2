//! Command line front end.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 numerical failure or a
//! failed verification property.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use dunkl_an_core::heat::{
    heat_curved, heat_curved_envelope, heat_envelope, heat_flat, images_oracle, mms_integral,
    HeatContext,
};
use dunkl_an_core::spherical::{
    phi_curved, phi_envelope, psi_envelope, psi_iter_quadrature, psi_mc_orbit, regime_classify,
    EvalResult, Evaluator, DEFAULT_DELTA,
};
use dunkl_an_core::{ChamberPoint, RootSystem};

use crate::output::{self, Format};
use crate::verify::{
    self, cancellation_stress, prop_checks, sweep_heat_ratio, sweep_psi_ratio,
    AxisRange, PropOptions, PropReport, RatioReport, Sampling, Severity, StressReport,
    SweepConfig, SweepKind,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "DUNKL_AN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "dunkl-an", version, about = "Spherical functions and heat kernels of type A_n")]
pub struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate psi_lambda(X) and related quantities.
    Eval(EvalArgs),
    /// Evaluate heat kernels and envelopes.
    Heat(HeatArgs),
    /// Ratio sweep over a grid or random sample.
    Sweep(SweepArgs),
    /// Run verification suites.
    Verify(VerifyArgs),
    /// Print the constants of the root system.
    Constants(ConstantsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMethod {
    Stable,
    AltSum,
    Iter,
    Mc,
    Envelope,
    Curved,
    CurvedEnvelope,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated coordinates; repeat for several values.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Vec<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub x: Vec<String>,
    #[arg(long, value_enum)]
    pub method: Option<EvalMethod>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub precision_bits: Option<usize>,
    /// Monte Carlo sample count.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatKind {
    Flat,
    Curved,
    Envelope,
    CurvedEnvelope,
    Images,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantSource {
    Mms,
    Calibrated,
}

#[derive(Debug, Args)]
pub struct HeatArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub x: Vec<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub y: Vec<String>,
    /// Times; comma-separated and repeatable.
    #[arg(long)]
    pub t: Vec<String>,
    #[arg(long, value_enum)]
    pub kind: Option<HeatKind>,
    #[arg(long, value_enum)]
    pub constant: Option<ConstantSource>,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepTarget {
    Psi,
    Heat,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub kind: Option<SweepTarget>,
    #[arg(long)]
    pub n: Option<usize>,
    /// `min,max,points` gap range of lambda.
    #[arg(long)]
    pub lambda_range: Option<String>,
    #[arg(long)]
    pub x_range: Option<String>,
    #[arg(long)]
    pub y_range: Option<String>,
    #[arg(long)]
    pub t_range: Option<String>,
    #[arg(long, value_enum)]
    pub sampling: Option<SamplingArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Record the wall-clock time in the report.
    #[arg(long)]
    pub timestamp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplingArg {
    Grid,
    LogGrid,
    Random,
}

impl From<SamplingArg> for Sampling {
    fn from(s: SamplingArg) -> Self {
        match s {
            SamplingArg::Grid => Sampling::Grid,
            SamplingArg::LogGrid => Sampling::LogGrid,
            SamplingArg::Random => Sampling::Random,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    All,
    Psi,
    Heat,
    Stress,
    Props,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub suite: Option<Suite>,
    /// Seed of every random suite (fixed default, never the clock).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Samples per property.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ConstantsArgs {
    #[arg(long)]
    pub n: Option<usize>,
    /// Also calibrate `c_k` by quadrature (rank at most 2).
    #[arg(long)]
    pub calibrate: bool,
}

/// Contents of `--config`. Every field is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub rank: Option<usize>,
    #[serde(default)]
    pub lambda: Vec<Vec<f64>>,
    #[serde(default)]
    pub x: Vec<Vec<f64>>,
    #[serde(default)]
    pub y: Vec<Vec<f64>>,
    #[serde(default)]
    pub t: Vec<f64>,
    pub tolerance: Option<f64>,
    pub precision_bits: Option<usize>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
    pub method: Option<EvalMethod>,
    pub heat_kind: Option<HeatKind>,
    pub constant: Option<ConstantSource>,
    pub suite: Option<Suite>,
    pub sweep_kind: Option<SweepTarget>,
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Input(_) => EXIT_INPUT,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<dunkl_an_core::Error> for Failure {
    fn from(e: dunkl_an_core::Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

impl From<verify::VerifyError> for Failure {
    fn from(e: verify::VerifyError) -> Self {
        match e {
            verify::VerifyError::Core(c) => c.into(),
            verify::VerifyError::Config(m) => Failure::Input(m),
            verify::VerifyError::Pool(m) => Failure::Numerical(m),
        }
    }
}

type Outcome<T> = Result<T, Failure>;

/// A finished command: the text to emit and whether every check passed.
struct Emitted {
    text: String,
    passed: bool,
}

struct Context {
    file: FileConfig,
    format: Format,
    threads: Option<usize>,
    output: Option<PathBuf>,
}

/// Runs the command line with explicit streams; returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return code;
        }
    };
    match execute(cli, stderr) {
        Ok((ctx, emitted)) => {
            let written = match &ctx.output {
                Some(path) => std::fs::write(path, emitted.text.as_bytes()).map_err(|e| e.to_string()),
                None => stdout.write_all(emitted.text.as_bytes()).map_err(|e| e.to_string()),
            };
            if let Err(e) = written {
                let _ = writeln!(stderr, "error: cannot write output: {e}");
                return EXIT_NUMERICAL;
            }
            if emitted.passed {
                EXIT_OK
            } else {
                let _ = writeln!(stderr, "error: one or more checks failed");
                EXIT_NUMERICAL
            }
        }
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message());
            f.code()
        }
    }
}

fn execute(cli: Cli, stderr: &mut dyn Write) -> Outcome<(Context, Emitted)> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::Input(format!("bad config: {e}")))?
        }
        None => FileConfig::default(),
    };
    let ctx = Context {
        format: cli.format.or(file.format).unwrap_or_default(),
        threads: cli.threads.or(file.threads),
        output: cli.output.clone().or_else(|| file.output.clone()),
        file,
    };
    if ctx.threads == Some(0) {
        return Err(Failure::Input("--threads must be at least 1".into()));
    }
    let emitted = match &cli.command {
        Command::Eval(a) => cmd_eval(&ctx, a, stderr)?,
        Command::Heat(a) => cmd_heat(&ctx, a, stderr)?,
        Command::Sweep(a) => cmd_sweep(&ctx, a)?,
        Command::Verify(a) => cmd_verify(&ctx, a)?,
        Command::Constants(a) => cmd_constants(&ctx, a)?,
    };
    Ok((ctx, emitted))
}

fn parse_list(text: &str) -> Outcome<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Input(format!("cannot parse {s:?} in {text:?}")))
        })
        .collect()
}

fn lists(flags: &[String], file: &[Vec<f64>]) -> Outcome<Vec<Vec<f64>>> {
    if flags.is_empty() {
        Ok(file.to_vec())
    } else {
        flags.iter().map(|s| parse_list(s)).collect()
    }
}

fn parse_range(text: &str) -> Outcome<AxisRange> {
    let v = parse_list(text)?;
    if v.len() != 3 || v[2] < 0.0 || v[2].fract() != 0.0 {
        return Err(Failure::Input(format!("range {text:?} is not min,max,points")));
    }
    Ok(AxisRange::new(v[0], v[1], v[2] as usize))
}

fn infer_rank(given: Option<usize>, lists: &[&[Vec<f64>]]) -> Outcome<usize> {
    if let Some(n) = given {
        return Ok(n);
    }
    lists
        .iter()
        .flat_map(|l| l.first())
        .map(|v| v.len().saturating_sub(1))
        .next()
        .filter(|n| *n >= 1)
        .ok_or_else(|| Failure::Input("rank not given and no coordinates to infer it from".into()))
}

/// Dominant point of rank `n`, sorting if needed.
fn dominant(name: &str, coords: &[f64], n: usize, warnings: &mut Vec<String>, stderr: &mut dyn Write) -> Outcome<ChamberPoint> {
    if coords.len() != n + 1 {
        return Err(Failure::Input(format!(
            "{name} has {} coordinates, rank {n} needs {}",
            coords.len(),
            n + 1
        )));
    }
    let (p, reordered) = ChamberPoint::from_unsorted(coords.to_vec())?;
    if reordered {
        let msg = format!("{name} was not dominant and has been sorted to {:?}", p.coords());
        let _ = writeln!(stderr, "warning: {msg}");
        warnings.push(msg);
    }
    Ok(p)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalRow {
    pub quantity: String,
    pub lambda: Option<Vec<f64>>,
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub t: Option<f64>,
    pub log_value: f64,
    pub value: Option<f64>,
    pub method: String,
    pub abs_log_error: Option<f64>,
    pub mc_std_error: Option<f64>,
    pub precision_bits: Option<u32>,
    pub confluent: bool,
    pub regime: Option<String>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct FlatEvalRow<'a> {
    quantity: &'a str,
    lambda: String,
    x: String,
    y: String,
    t: String,
    log_value: f64,
    value: String,
    method: &'a str,
    abs_log_error: String,
    mc_std_error: String,
    precision_bits: String,
    confluent: bool,
    regime: String,
    warnings: String,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn joined(v: &Option<Vec<f64>>) -> String {
    v.as_ref()
        .map(|v| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";"))
        .unwrap_or_default()
}

impl<'a> From<&'a EvalRow> for FlatEvalRow<'a> {
    fn from(r: &'a EvalRow) -> Self {
        Self {
            quantity: &r.quantity,
            lambda: joined(&r.lambda),
            x: joined(&Some(r.x.clone())),
            y: joined(&r.y),
            t: opt(r.t),
            log_value: r.log_value,
            value: opt(r.value),
            method: &r.method,
            abs_log_error: opt(r.abs_log_error),
            mc_std_error: opt(r.mc_std_error),
            precision_bits: opt(r.precision_bits),
            confluent: r.confluent,
            regime: r.regime.clone().unwrap_or_default(),
            warnings: r.warnings.join(" | "),
        }
    }
}

fn from_result(quantity: &str, r: &EvalResult) -> EvalRow {
    EvalRow {
        quantity: quantity.into(),
        lambda: None,
        x: Vec::new(),
        y: None,
        t: None,
        log_value: r.log_value,
        value: r.linear_value(),
        method: r.method.name().into(),
        abs_log_error: Some(r.abs_log_error),
        mc_std_error: r.mc_std_error,
        precision_bits: Some(r.precision_bits),
        confluent: r.confluent,
        regime: None,
        warnings: Vec::new(),
    }
}

fn from_log(quantity: &str, log_value: f64) -> EvalRow {
    EvalRow {
        quantity: quantity.into(),
        lambda: None,
        x: Vec::new(),
        y: None,
        t: None,
        log_value,
        value: Some(log_value.exp()).filter(|v| v.is_finite() && *v > 0.0),
        method: "closed_form".into(),
        abs_log_error: None,
        mc_std_error: None,
        precision_bits: None,
        confluent: false,
        regime: None,
        warnings: Vec::new(),
    }
}

fn render_rows(ctx: &Context, rows: &[EvalRow]) -> Outcome<String> {
    match ctx.format {
        Format::Json => output::to_json(&rows).map_err(|e| Failure::Numerical(e.to_string())),
        Format::Csv => {
            let flat: Vec<FlatEvalRow> = rows.iter().map(FlatEvalRow::from).collect();
            let mut buf = Vec::new();
            output::rows_csv(&flat, &mut buf).map_err(|e| Failure::Numerical(e.to_string()))?;
            Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
        }
        Format::Plain => Ok(rows
            .iter()
            .map(|r| match r.value {
                Some(v) => format!("{v}\n"),
                None => format!("exp({})\n", r.log_value),
            })
            .collect()),
    }
}

fn cmd_eval(ctx: &Context, a: &EvalArgs, stderr: &mut dyn Write) -> Outcome<Emitted> {
    let f = &ctx.file;
    let lambdas = lists(&a.lambda, &f.lambda)?;
    let xs = lists(&a.x, &f.x)?;
    if lambdas.is_empty() || xs.is_empty() {
        return Err(Failure::Input("eval needs --lambda and --x".into()));
    }
    let n = infer_rank(a.n.or(f.rank), &[&lambdas, &xs])?;
    RootSystem::new(n)?;
    let method = a.method.or(f.method).unwrap_or(EvalMethod::Stable);
    let target = a.tolerance.or(f.tolerance).unwrap_or(dunkl_an_core::spherical::DEFAULT_TARGET);
    let bits = a.precision_bits.or(f.precision_bits).unwrap_or(64);
    let samples = a.samples.or(f.samples).unwrap_or(100_000);
    let seed = a.seed.or(f.seed).unwrap_or(0);
    let ev = Evaluator::default();
    let mut rows = Vec::new();
    for l in &lambdas {
        for x in &xs {
            let mut warnings = Vec::new();
            let lambda = dominant("lambda", l, n, &mut warnings, stderr)?;
            let xp = dominant("x", x, n, &mut warnings, stderr)?;
            let mut row = match method {
                EvalMethod::Stable => from_result("psi", &ev.psi_stable(&lambda, &xp, target)?),
                EvalMethod::AltSum => from_result("psi", &ev.psi_alt_sum(&lambda, &xp, bits)?),
                EvalMethod::Iter => from_result("psi", &psi_iter_quadrature(&lambda, &xp, target.max(1e-10))?),
                EvalMethod::Mc => from_result("psi", &psi_mc_orbit(&lambda, &xp, samples, seed)?),
                EvalMethod::Envelope => from_log("psi_envelope", psi_envelope(&lambda, &xp)),
                EvalMethod::Curved => from_result("phi", &phi_curved(&lambda, &xp)?),
                EvalMethod::CurvedEnvelope => from_log("phi_envelope", phi_envelope(&lambda, &xp)),
            };
            row.regime = Some(regime_classify(&lambda, &xp, DEFAULT_DELTA).label.name().into());
            row.lambda = Some(lambda.into_coords());
            row.x = xp.into_coords();
            row.warnings = warnings;
            rows.push(row);
        }
    }
    Ok(Emitted {
        text: render_rows(ctx, &rows)?,
        passed: true,
    })
}

fn cmd_heat(ctx: &Context, a: &HeatArgs, stderr: &mut dyn Write) -> Outcome<Emitted> {
    let f = &ctx.file;
    let xs = lists(&a.x, &f.x)?;
    let ys = lists(&a.y, &f.y)?;
    let mut ts = Vec::new();
    for s in &a.t {
        ts.extend(parse_list(s)?);
    }
    if ts.is_empty() {
        ts = f.t.clone();
    }
    if xs.is_empty() || ys.is_empty() || ts.is_empty() {
        return Err(Failure::Input("heat needs --x, --y and --t".into()));
    }
    let n = infer_rank(a.n.or(f.rank), &[&xs, &ys])?;
    let kind = a.kind.or(f.heat_kind).unwrap_or(HeatKind::Flat);
    let tol = a.tolerance.or(f.tolerance).unwrap_or(dunkl_an_core::spherical::DEFAULT_TARGET);
    let mut hc = match a.constant.or(f.constant).unwrap_or(ConstantSource::Mms) {
        ConstantSource::Mms => HeatContext::mms(n)?,
        ConstantSource::Calibrated => HeatContext::calibrated(n, 1.0, 1e-9)?.0,
    };
    hc.target = tol;
    let mut rows = Vec::new();
    for x in &xs {
        for y in &ys {
            for &t in &ts {
                if !(t > 0.0) || !t.is_finite() {
                    return Err(Failure::Input(format!("time {t} must be positive")));
                }
                let mut warnings = Vec::new();
                let xp = dominant("x", x, n, &mut warnings, stderr)?;
                let yp = dominant("y", y, n, &mut warnings, stderr)?;
                let mut row = match kind {
                    HeatKind::Flat => from_result("heat_flat", &heat_flat(&hc, t, &xp, &yp)?),
                    HeatKind::Curved => from_result("heat_curved", &heat_curved(&hc, t, &xp, &yp)?),
                    HeatKind::Images => from_result("heat_images", &images_oracle(&hc, t, &xp, &yp)?),
                    HeatKind::Envelope => from_log("heat_envelope", heat_envelope(t, &xp, &yp)),
                    HeatKind::CurvedEnvelope => {
                        from_log("heat_curved_envelope", heat_curved_envelope(t, &xp, &yp))
                    }
                };
                row.x = xp.into_coords();
                row.y = Some(yp.into_coords());
                row.t = Some(t);
                row.warnings = warnings;
                rows.push(row);
            }
        }
    }
    Ok(Emitted {
        text: render_rows(ctx, &rows)?,
        passed: true,
    })
}

fn render_report(ctx: &Context, report: &RatioReport) -> Outcome<String> {
    match ctx.format {
        Format::Json => output::to_json(report).map_err(|e| Failure::Numerical(e.to_string())),
        Format::Csv => {
            let mut buf = Vec::new();
            output::report_csv(report, &mut buf).map_err(|e| Failure::Numerical(e.to_string()))?;
            Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
        }
        Format::Plain => Ok(report.records.iter().map(|r| format!("{}\n", r.ratio)).collect()),
    }
}

fn default_sweep(kind: SweepKind, n: usize) -> SweepConfig {
    match kind {
        SweepKind::Psi => {
            let points = match n {
                1 => 40,
                2 => 6,
                3 => 3,
                _ => 2,
            };
            let r = AxisRange::new(1e-3, 1e3, points);
            SweepConfig::psi(n, r, r, Sampling::LogGrid)
        }
        SweepKind::Heat => {
            let points = match n {
                1 => 8,
                2 => 4,
                _ => 2,
            };
            let r = AxisRange::new(0.1, 3.0, points);
            SweepConfig::heat(n, r, r, AxisRange::new(0.1, 10.0, points), Sampling::LogGrid)
        }
    }
}

fn cmd_sweep(ctx: &Context, a: &SweepArgs) -> Outcome<Emitted> {
    let f = &ctx.file;
    let kind = match a.kind.or(f.sweep_kind).unwrap_or(SweepTarget::Psi) {
        SweepTarget::Psi => SweepKind::Psi,
        SweepTarget::Heat => SweepKind::Heat,
    };
    let mut cfg = match (&f.sweep, a.n.or(f.rank)) {
        (Some(c), _) => c.clone(),
        (None, Some(n)) => default_sweep(kind, n),
        (None, None) => return Err(Failure::Input("sweep needs --n or a sweep config".into())),
    };
    if let Some(n) = a.n {
        cfg.rank = n;
    }
    if let Some(r) = &a.lambda_range {
        cfg.lambda = parse_range(r)?;
    }
    if let Some(r) = &a.x_range {
        cfg.x = parse_range(r)?;
    }
    if let Some(r) = &a.y_range {
        cfg.y = Some(parse_range(r)?);
    }
    if let Some(r) = &a.t_range {
        cfg.t = Some(parse_range(r)?);
    }
    if let Some(s) = a.sampling {
        cfg.sampling = s.into();
    }
    cfg.seed = a.seed.or(cfg.seed).or(f.seed);
    cfg.samples = a.samples.or(cfg.samples);
    if let Some(t) = a.tolerance.or(f.tolerance) {
        cfg.target = t;
    }
    let mut report = match kind {
        SweepKind::Psi => sweep_psi_ratio(&cfg, ctx.threads)?,
        SweepKind::Heat => sweep_heat_ratio(&cfg, ctx.threads)?,
    };
    if a.timestamp {
        report.stamp();
    }
    Ok(Emitted {
        text: render_report(ctx, &report)?,
        passed: report.passed(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub rank: usize,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub psi: Option<RatioReport>,
    pub heat: Option<RatioReport>,
    pub stress: Option<StressReport>,
    pub props: Option<PropReport>,
    pub passed: bool,
}

fn check(checks: &mut Vec<Check>, name: &str, passed: bool, detail: String) {
    checks.push(Check {
        name: name.into(),
        passed,
        detail,
    });
}

/// Runs the selected suites at their default sizes.
pub fn verify_suites(n: usize, suite: Suite, seed: u64, samples: usize, threads: Option<usize>) -> Result<VerifyReport, String> {
    let err = |e: verify::VerifyError| e.to_string();
    let mut checks = Vec::new();
    let wants = |s: Suite| suite == Suite::All || suite == s;
    let mut out = VerifyReport {
        rank: n,
        seed,
        checks: Vec::new(),
        psi: None,
        heat: None,
        stress: None,
        props: None,
        passed: false,
    };
    if wants(Suite::Psi) {
        let r = sweep_psi_ratio(&default_sweep(SweepKind::Psi, n), threads).map_err(err)?;
        check(&mut checks, "psi_sweep_evaluated", r.failures.is_empty(), format!("{} failures", r.failures.len()));
        check(
            &mut checks,
            "global_sandwich",
            r.sandwich_violations.is_empty(),
            format!("{} violations", r.sandwich_violations.len()),
        );
        if let Some(agg) = r.overall {
            let positive = agg.min_ratio > 0.0 && agg.max_ratio.is_finite();
            check(&mut checks, "psi_ratio_bounded", positive, format!("[{}, {}]", agg.min_ratio, agg.max_ratio));
            if n == 1 {
                let ok = agg.max_ratio <= 1.30 && agg.min_ratio >= 1.0 - 1e-9;
                check(&mut checks, "rank_one_ratio_range", ok, format!("[{}, {}]", agg.min_ratio, agg.max_ratio));
            }
        }
        out.psi = Some(r);
    }
    if wants(Suite::Heat) {
        let r = sweep_heat_ratio(&default_sweep(SweepKind::Heat, n), threads).map_err(err)?;
        check(&mut checks, "heat_sweep_evaluated", r.failures.is_empty(), format!("{} failures", r.failures.len()));
        if let Some(agg) = r.overall {
            let ok = agg.min_ratio > 0.0 && agg.max_ratio.is_finite();
            check(&mut checks, "heat_ratio_bounded", ok, format!("[{}, {}]", agg.min_ratio, agg.max_ratio));
        }
        out.heat = Some(r);
    }
    if wants(Suite::Stress) && n <= 3 {
        let levels = [
            Severity { gap_product: 1.0, pairing: 0.0 },
            Severity { gap_product: 1e-3, pairing: 50.0 },
            Severity { gap_product: 1e-6, pairing: 50.0 },
        ];
        let r = cancellation_stress(n, &levels, 5, seed, 512).map_err(err)?;
        let failures: usize = r.rows.iter().map(|row| row.failures.len()).sum();
        check(
            &mut checks,
            "cancellation_stress",
            r.worst() <= 1e-9 && failures == 0,
            format!("worst relative error {:e}, {failures} failures", r.worst()),
        );
        out.stress = Some(r);
    }
    if wants(Suite::Props) {
        let opts = PropOptions {
            quadrature_samples: if n >= 3 { 2 } else { 5 },
            ..PropOptions::default()
        };
        let r = prop_checks(n.min(4), samples, seed, opts).map_err(err)?;
        for p in &r.properties {
            check(
                &mut checks,
                &p.name,
                p.passed(),
                format!("{} violations in {} samples", p.violations, p.samples),
            );
        }
        out.props = Some(r);
    }
    out.passed = checks.iter().all(|c| c.passed);
    out.checks = checks;
    Ok(out)
}

fn cmd_verify(ctx: &Context, a: &VerifyArgs) -> Outcome<Emitted> {
    let f = &ctx.file;
    let n = a.n.or(f.rank).ok_or_else(|| Failure::Input("verify needs --n".into()))?;
    RootSystem::new(n)?;
    let suite = a.suite.or(f.suite).unwrap_or(Suite::All);
    let seed = a.seed.or(f.seed).unwrap_or(0);
    let samples = a.samples.or(f.samples).unwrap_or(1000);
    let report = verify_suites(n, suite, seed, samples, ctx.threads).map_err(Failure::Numerical)?;
    let text = match ctx.format {
        Format::Json => output::to_json(&report).map_err(|e| Failure::Numerical(e.to_string()))?,
        Format::Csv => {
            let mut buf = Vec::new();
            output::rows_csv(&report.checks, &mut buf).map_err(|e| Failure::Numerical(e.to_string()))?;
            String::from_utf8(buf).expect("csv output is UTF-8")
        }
        Format::Plain => report
            .checks
            .iter()
            .map(|c| format!("{} {} {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
            .collect(),
    };
    Ok(Emitted {
        text,
        passed: report.passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Constants {
    pub rank: usize,
    pub d: usize,
    pub gamma: usize,
    pub weyl_order: u64,
    pub rho: Vec<f64>,
    /// `int_{R^d} e^{-|x|^2/2} pi(x)^2 dx`.
    pub mms_integral: Option<f64>,
    /// `c_k` from the Gaussian integral (divided by `|W|`).
    pub c_k_mms: Option<f64>,
    /// `c_k` from unit total mass at `t = 1`.
    pub c_k_calibrated: Option<f64>,
    pub note: String,
}

pub fn constants(n: usize, calibrate: bool) -> Result<Constants, dunkl_an_core::Error> {
    let rs = RootSystem::new(n)?;
    let mms = mms_integral(n).ok();
    Ok(Constants {
        rank: n,
        d: rs.dim(),
        gamma: rs.gamma(),
        weyl_order: rs.weyl_order(),
        rho: rs.rho().coords().to_vec(),
        mms_integral: mms,
        c_k_mms: mms.map(|m| m / rs.weyl_order() as f64),
        c_k_calibrated: if calibrate && n <= 2 {
            Some(HeatContext::calibrated(n, 1.0, 1e-9)?.1.c_k)
        } else {
            None
        },
        note: "mms_integral is over all of R^d with weight e^{-|x|^2/2}; the kernel constant c_k \
               restricts it to the chamber, so c_k = mms_integral / |W|"
            .into(),
    })
}

fn cmd_constants(ctx: &Context, a: &ConstantsArgs) -> Outcome<Emitted> {
    let n = a.n.or(ctx.file.rank).ok_or_else(|| Failure::Input("constants needs --n".into()))?;
    let c = constants(n, a.calibrate)?;
    let text = match ctx.format {
        Format::Json => output::to_json(&c).map_err(|e| Failure::Numerical(e.to_string()))?,
        Format::Csv => {
            #[derive(Serialize)]
            struct Flat {
                rank: usize,
                d: usize,
                gamma: usize,
                weyl_order: u64,
                rho: String,
                mms_integral: String,
                c_k_mms: String,
                c_k_calibrated: String,
            }
            let flat = Flat {
                rank: c.rank,
                d: c.d,
                gamma: c.gamma,
                weyl_order: c.weyl_order,
                rho: joined(&Some(c.rho.clone())),
                mms_integral: opt(c.mms_integral),
                c_k_mms: opt(c.c_k_mms),
                c_k_calibrated: opt(c.c_k_calibrated),
            };
            let mut buf = Vec::new();
            output::rows_csv(&[flat], &mut buf).map_err(|e| Failure::Numerical(e.to_string()))?;
            String::from_utf8(buf).expect("csv output is UTF-8")
        }
        Format::Plain => {
            let mut s = format!(
                "rank {}\nd {}\ngamma {}\nweyl_order {}\nrho {}\n",
                c.rank,
                c.d,
                c.gamma,
                c.weyl_order,
                joined(&Some(c.rho.clone())).replace(';', ",")
            );
            s.push_str(&format!("mms_integral {}\nc_k_mms {}\n", opt(c.mms_integral), opt(c.c_k_mms)));
            if let Some(v) = c.c_k_calibrated {
                s.push_str(&format!("c_k_calibrated {v}\n"));
            }
            s
        }
    };
    Ok(Emitted { text, passed: true })
}
