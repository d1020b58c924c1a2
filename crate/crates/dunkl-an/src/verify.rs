//! Sweeps, ratio reports and property suites.
//!
//! Points are parameterised by their simple-root gaps with the last
//! coordinate pinned at zero, so an axis range is a range of gaps.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dunkl_an_core::heat::{heat_envelope, heat_flat, HeatContext};
use dunkl_an_core::spherical::{psi_envelope, regime_classify, Evaluator, DEFAULT_DELTA};
use dunkl_an_core::{factorization, ChamberPoint, RootSystem};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("invalid sweep config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] dunkl_an_core::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

pub type Result<T> = std::result::Result<T, VerifyError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Grid,
    LogGrid,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl AxisRange {
    pub fn new(min: f64, max: f64, points: usize) -> Self {
        Self { min, max, points }
    }

    fn validate(&self, name: &str, log: bool) -> Result<()> {
        if self.points < 2 {
            return Err(VerifyError::Config(format!("{name}: need at least 2 points")));
        }
        if !(self.max > self.min) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(VerifyError::Config(format!("{name}: empty range")));
        }
        if self.min < 0.0 || (log && self.min <= 0.0) {
            return Err(VerifyError::Config(format!("{name}: minimum must be positive")));
        }
        Ok(())
    }

    fn node(&self, i: usize, log: bool) -> f64 {
        let f = i as f64 / (self.points - 1) as f64;
        if i + 1 == self.points {
            self.max
        } else if log {
            (self.min.ln() + f * (self.max / self.min).ln()).exp()
        } else {
            self.min + f * (self.max - self.min)
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.random();
        if self.min > 0.0 {
            (self.min.ln() + u * (self.max / self.min).ln()).exp()
        } else {
            self.min + u * (self.max - self.min)
        }
    }

    /// The same range with both ends pushed out by `factor` in log scale.
    pub fn widened(&self, factor: f64) -> Self {
        Self {
            min: self.min / factor,
            max: self.max * factor,
            points: self.points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub rank: usize,
    /// Gap range of `lambda` (psi sweeps).
    pub lambda: AxisRange,
    /// Gap range of `X`.
    pub x: AxisRange,
    /// Gap range of `Y` (heat sweeps); defaults to `x`.
    #[serde(default)]
    pub y: Option<AxisRange>,
    /// Time range (heat sweeps).
    #[serde(default)]
    pub t: Option<AxisRange>,
    pub sampling: Sampling,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Sample count in random mode; defaults to the grid size.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Accuracy target passed to the evaluators.
    #[serde(default = "default_target")]
    pub target: f64,
    /// Log-domain slack of the sandwich check.
    #[serde(default = "default_log_tol")]
    pub log_tolerance: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub output: Option<String>,
}

fn default_target() -> f64 {
    1e-10
}

fn default_log_tol() -> f64 {
    1e-9
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Psi,
    Heat,
}

impl SweepConfig {
    pub fn psi(rank: usize, lambda: AxisRange, x: AxisRange, sampling: Sampling) -> Self {
        Self {
            rank,
            lambda,
            x,
            y: None,
            t: None,
            sampling,
            seed: None,
            samples: None,
            target: default_target(),
            log_tolerance: default_log_tol(),
            delta: DEFAULT_DELTA,
            output: None,
        }
    }

    pub fn heat(rank: usize, x: AxisRange, y: AxisRange, t: AxisRange, sampling: Sampling) -> Self {
        Self {
            y: Some(y),
            t: Some(t),
            ..Self::psi(rank, x, x, sampling)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Both gap ranges widened by `factor` at each end.
    pub fn widened(&self, factor: f64) -> Self {
        let mut c = self.clone();
        c.lambda = c.lambda.widened(factor);
        c.x = c.x.widened(factor);
        c.y = c.y.map(|r| r.widened(factor));
        c
    }

    fn axes(&self, kind: SweepKind) -> Vec<(&'static str, AxisRange)> {
        let n = self.rank;
        let mut out = Vec::new();
        match kind {
            SweepKind::Psi => {
                out.extend(std::iter::repeat_n(("lambda", self.lambda), n));
                out.extend(std::iter::repeat_n(("x", self.x), n));
            }
            SweepKind::Heat => {
                out.extend(std::iter::repeat_n(("x", self.x), n));
                out.extend(std::iter::repeat_n(("y", self.y.unwrap_or(self.x)), n));
                if let Some(t) = self.t {
                    out.push(("t", t));
                }
            }
        }
        out
    }

    pub fn validate(&self, kind: SweepKind) -> Result<()> {
        RootSystem::new(self.rank)?;
        if kind == SweepKind::Heat && self.t.is_none() {
            return Err(VerifyError::Config("heat sweeps need a time range".into()));
        }
        if self.sampling == Sampling::Random && self.seed.is_none() {
            return Err(VerifyError::Config("random sampling requires a seed".into()));
        }
        let log = self.sampling == Sampling::LogGrid;
        for (name, r) in self.axes(kind) {
            r.validate(name, log)?;
        }
        if kind == SweepKind::Heat && self.t.is_some_and(|t| t.min <= 0.0) {
            return Err(VerifyError::Config("t: minimum must be positive".into()));
        }
        Ok(())
    }

    /// Number of samples the sweep evaluates.
    pub fn sample_count(&self, kind: SweepKind) -> usize {
        let grid: usize = self.axes(kind).iter().map(|(_, r)| r.points).product();
        match self.sampling {
            Sampling::Random => self.samples.unwrap_or(grid),
            _ => grid,
        }
    }

    /// Axis values of sample `index`.
    fn sample(&self, kind: SweepKind, index: usize) -> Vec<f64> {
        let axes = self.axes(kind);
        match self.sampling {
            Sampling::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed.unwrap_or(0));
                rng.set_stream(index as u64);
                axes.iter().map(|(_, r)| r.draw(&mut rng)).collect()
            }
            s => {
                let log = s == Sampling::LogGrid;
                let mut rem = index;
                axes.iter()
                    .map(|(_, r)| {
                        let i = rem % r.points;
                        rem /= r.points;
                        r.node(i, log)
                    })
                    .collect()
            }
        }
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub index: usize,
    pub lambda: Option<Vec<f64>>,
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub t: Option<f64>,
    pub log_value: f64,
    pub log_envelope: f64,
    pub ratio: f64,
    pub regime: String,
    pub method: String,
    pub abs_log_error: f64,
    pub confluent: bool,
    /// Global sandwich check (psi sweeps only).
    pub sandwich_ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub geo_mean_ratio: f64,
}

impl Aggregate {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a Record>) -> Option<Self> {
        let mut count = 0;
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for r in records {
            count += 1;
            lo = lo.min(r.ratio);
            hi = hi.max(r.ratio);
            sum += r.ratio.ln();
        }
        (count > 0).then(|| Self {
            count,
            min_ratio: lo,
            max_ratio: hi,
            geo_mean_ratio: (sum / count as f64).exp().clamp(lo, hi),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub schema_version: String,
    pub code_version: String,
    pub config_hash: String,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub metadata: Metadata,
    pub config: SweepConfig,
    pub records: Vec<Record>,
    pub failures: Vec<Failure>,
    pub overall: Option<Aggregate>,
    pub by_regime: BTreeMap<String, Aggregate>,
    pub sandwich_violations: Vec<usize>,
}

impl RatioReport {
    fn build(kind: SweepKind, config: &SweepConfig, outcomes: Vec<std::result::Result<Record, Failure>>) -> Self {
        let mut records = Vec::new();
        let mut failures = Vec::new();
        for o in outcomes {
            match o {
                Ok(r) => records.push(r),
                Err(f) => failures.push(f),
            }
        }
        let mut report = Self {
            metadata: Metadata {
                schema_version: SCHEMA_VERSION.into(),
                code_version: env!("CARGO_PKG_VERSION").into(),
                config_hash: config.hash(),
                kind: match kind {
                    SweepKind::Psi => "psi",
                    SweepKind::Heat => "heat",
                }
                .into(),
                timestamp: None,
            },
            config: config.clone(),
            sandwich_violations: records
                .iter()
                .filter(|r| r.sandwich_ok == Some(false))
                .map(|r| r.index)
                .collect(),
            records,
            failures,
            overall: None,
            by_regime: BTreeMap::new(),
        };
        report.recompute_aggregates();
        report
    }

    /// Rebuilds the aggregates from the records.
    pub fn recompute_aggregates(&mut self) {
        self.overall = Aggregate::from_records(&self.records);
        let mut groups: BTreeMap<String, Vec<&Record>> = BTreeMap::new();
        for r in &self.records {
            groups.entry(r.regime.clone()).or_default().push(r);
        }
        self.by_regime = groups
            .into_iter()
            .filter_map(|(k, v)| Aggregate::from_records(v).map(|a| (k, a)))
            .collect();
    }

    /// Records the current wall-clock time; reports are byte-stable without it.
    pub fn stamp(&mut self) {
        self.metadata.timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs());
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.sandwich_violations.is_empty()
    }
}

/// Largest relative change of the overall min and max ratio between two
/// reports.
pub fn scale_drift(a: &RatioReport, b: &RatioReport) -> Option<f64> {
    let (a, b) = (a.overall?, b.overall?);
    let rel = |p: f64, q: f64| (q / p - 1.0).abs();
    Some(rel(a.min_ratio, b.min_ratio).max(rel(a.max_ratio, b.max_ratio)))
}

fn run_parallel<T, F>(threads: Option<usize>, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| VerifyError::Pool(e.to_string()))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(f).collect()))
}

fn point(gaps: &[f64]) -> dunkl_an_core::Result<ChamberPoint> {
    ChamberPoint::from_gaps(0.0, gaps)
}

/// `psi / envelope` over the configured samples.
pub fn sweep_psi_ratio(config: &SweepConfig, threads: Option<usize>) -> Result<RatioReport> {
    config.validate(SweepKind::Psi)?;
    let n = config.rank;
    let rs = RootSystem::new(n)?;
    let ev = Evaluator::default();
    let outcomes = run_parallel(threads, config.sample_count(SweepKind::Psi), |index| {
        let v = config.sample(SweepKind::Psi, index);
        let fail = |e: dunkl_an_core::Error| Failure {
            index,
            message: e.to_string(),
        };
        let lambda = point(&v[..n]).map_err(fail)?;
        let x = point(&v[n..]).map_err(fail)?;
        let psi = ev.psi_stable(&lambda, &x, config.target).map_err(fail)?;
        let env = psi_envelope(&lambda, &x);
        let lower = rs.min_weyl_pairing(&lambda, &x).map_err(fail)?.1;
        let upper = lambda.dot(&x);
        let tol = config.log_tolerance * (1.0 + upper.abs());
        let sandwich = psi.log_value <= upper + tol && psi.log_value >= lower - tol;
        Ok(Record {
            index,
            lambda: Some(lambda.into_coords()),
            x: x.into_coords(),
            y: None,
            t: None,
            log_value: psi.log_value,
            log_envelope: env,
            ratio: (psi.log_value - env).exp(),
            regime: regime_name(&v[..n], &v[n..], config.delta),
            method: psi.method.name().into(),
            abs_log_error: psi.abs_log_error,
            confluent: psi.confluent,
            sandwich_ok: Some(sandwich),
        })
    })?;
    Ok(RatioReport::build(SweepKind::Psi, config, outcomes))
}

fn regime_name(lg: &[f64], xg: &[f64], delta: f64) -> String {
    match (point(lg), point(xg)) {
        (Ok(l), Ok(x)) => regime_classify(&l, &x, delta).label.name().into(),
        _ => "invalid".into(),
    }
}

/// `p_t / envelope` over the configured samples, with the MMS constant.
pub fn sweep_heat_ratio(config: &SweepConfig, threads: Option<usize>) -> Result<RatioReport> {
    config.validate(SweepKind::Heat)?;
    let n = config.rank;
    let mut ctx = HeatContext::mms(n)?;
    ctx.target = config.target;
    let outcomes = run_parallel(threads, config.sample_count(SweepKind::Heat), |index| {
        let v = config.sample(SweepKind::Heat, index);
        let fail = |e: dunkl_an_core::Error| Failure {
            index,
            message: e.to_string(),
        };
        let x = point(&v[..n]).map_err(fail)?;
        let y = point(&v[n..2 * n]).map_err(fail)?;
        let t = v[2 * n];
        let p = heat_flat(&ctx, t, &x, &y).map_err(fail)?;
        let env = heat_envelope(t, &x, &y);
        let s = (2.0 * t).sqrt();
        let scaled: Vec<f64> = v[..2 * n].iter().map(|g| g / s).collect();
        Ok(Record {
            index,
            lambda: None,
            x: x.into_coords(),
            y: Some(y.into_coords()),
            t: Some(t),
            log_value: p.log_value,
            log_envelope: env,
            ratio: (p.log_value - env).exp(),
            regime: regime_name(&scaled[..n], &scaled[n..], config.delta),
            method: p.method.name().into(),
            abs_log_error: p.abs_log_error,
            confluent: p.confluent,
            sandwich_ok: None,
        })
    })?;
    Ok(RatioReport::build(SweepKind::Heat, config, outcomes))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Severity {
    /// Every simple-root product `alpha_i(lambda) alpha_i(X)` is this value.
    pub gap_product: f64,
    /// `<lambda, X>`.
    pub pairing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressRow {
    pub severity: Severity,
    pub samples: usize,
    pub worst_rel_error: f64,
    pub max_bits: u32,
    pub min_bits: u32,
    pub predicted_bits: f64,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressReport {
    pub rank: usize,
    pub seed: u64,
    pub reference_bits: usize,
    pub rows: Vec<StressRow>,
}

impl StressReport {
    pub fn worst(&self) -> f64 {
        self.rows.iter().map(|r| r.worst_rel_error).fold(0.0, f64::max)
    }
}

/// Random `(lambda, X)` with the given severity: gaps `sqrt(p) r_i` and
/// `sqrt(p) / r_i`, then a common shift of `X` setting the pairing.
pub fn stress_pair(n: usize, sev: Severity, rng: &mut ChaCha8Rng) -> dunkl_an_core::Result<(ChamberPoint, ChamberPoint)> {
    let root = sev.gap_product.sqrt();
    let r: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let lg: Vec<f64> = r.iter().map(|v| root * v).collect();
    let xg: Vec<f64> = r.iter().map(|v| root / v).collect();
    let d = n + 1;
    // Shift lambda so that its coordinates sum to one.
    let l0 = ChamberPoint::from_gaps(0.0, &lg)?;
    let l_shift = (1.0 - l0.coords().iter().sum::<f64>()) / d as f64;
    let lambda = ChamberPoint::from_gaps(l_shift, &lg)?;
    let x0 = ChamberPoint::from_gaps(0.0, &xg)?;
    let x = ChamberPoint::from_gaps(sev.pairing - lambda.dot(&x0), &xg)?;
    Ok((lambda, x))
}

/// `psi_stable` against a brute-force alternating sum at `reference_bits`.
pub fn cancellation_stress(
    n: usize,
    severities: &[Severity],
    per_level: usize,
    seed: u64,
    reference_bits: usize,
) -> Result<StressReport> {
    if n > 3 {
        return Err(VerifyError::Core(dunkl_an_core::Error::RankTooLarge { rank: n, cap: 3 }));
    }
    let ev = Evaluator::default();
    let mut rows = Vec::new();
    for (level, sev) in severities.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(level as u64);
        let mut row = StressRow {
            severity: *sev,
            samples: 0,
            worst_rel_error: 0.0,
            max_bits: 0,
            min_bits: u32::MAX,
            predicted_bits: 0.0,
            failures: Vec::new(),
        };
        for _ in 0..per_level {
            let (lambda, x) = stress_pair(n, *sev, &mut rng)?;
            let reference = ev.psi_alt_sum(&lambda, &x, reference_bits);
            let got = ev.psi_stable(&lambda, &x, 1e-12);
            match (reference, got) {
                (Ok(r), Ok(g)) => {
                    row.samples += 1;
                    let rel = (g.log_value - r.log_value).exp_m1().abs();
                    row.worst_rel_error = row.worst_rel_error.max(rel);
                    row.max_bits = row.max_bits.max(g.precision_bits);
                    row.min_bits = row.min_bits.min(g.precision_bits);
                    row.predicted_bits = row.predicted_bits.max(
                        dunkl_an_core::spherical::cancellation_bits(lambda.coords(), x.coords()),
                    );
                }
                (r, g) => row.failures.push(format!(
                    "lambda={:?} x={:?}: reference {:?}, stable {:?}",
                    lambda.coords(),
                    x.coords(),
                    r.err(),
                    g.err()
                )),
            }
        }
        if row.samples == 0 {
            row.min_bits = 0;
        }
        rows.push(row);
    }
    Ok(StressReport {
        rank: n,
        seed,
        reference_bits,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub samples: usize,
    pub violations: usize,
    pub counterexamples: Vec<String>,
    /// An empirical constant recorded by the property, if any.
    pub recorded: Option<f64>,
}

impl PropertyResult {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            samples: 0,
            violations: 0,
            counterexamples: Vec::new(),
            recorded: None,
        }
    }

    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.samples += 1;
        if !ok {
            self.violations += 1;
            if self.counterexamples.len() < 5 {
                self.counterexamples.push(describe());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0 && self.samples > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropReport {
    pub rank: usize,
    pub samples: usize,
    pub seed: u64,
    pub properties: Vec<PropertyResult>,
}

impl PropReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyResult::passed)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp()
}

fn random_point(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> ChamberPoint {
    let gaps: Vec<f64> = (0..n).map(|_| log_uniform(rng, lo, hi)).collect();
    let base = rng.random_range(-1.0..1.0);
    ChamberPoint::from_gaps(base, &gaps).expect("positive gaps")
}

/// `sum_w eps(w) e^{<w lambda - lambda, X>}` in doubles.
fn alt_sum_ratio(rs: &RootSystem, lambda: &ChamberPoint, x: &ChamberPoint) -> f64 {
    let top = lambda.dot(x);
    rs.weyl_elements()
        .map(|w| {
            let wl = w.act(lambda.coords());
            let p: f64 = wl.iter().zip(x.coords()).map(|(a, b)| a * b).sum();
            w.sign as f64 * (p - top).exp()
        })
        .sum()
}

/// Settings for [`prop_checks`] beyond the sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropOptions {
    /// Samples for the quadrature-backed properties; zero skips them.
    pub quadrature_samples: usize,
    pub log_tolerance: f64,
    pub delta: f64,
}

impl Default for PropOptions {
    fn default() -> Self {
        Self {
            quadrature_samples: 10,
            log_tolerance: 1e-9,
            delta: DEFAULT_DELTA,
        }
    }
}

/// Runs every property suite at rank `n`.
pub fn prop_checks(n: usize, samples: usize, seed: u64, opts: PropOptions) -> Result<PropReport> {
    if n > 4 {
        return Err(VerifyError::Core(dunkl_an_core::Error::RankTooLarge { rank: n, cap: 4 }));
    }
    let rs = RootSystem::new(n)?;
    let ev = Evaluator::default();
    let order = rs.weyl_order() as f64;
    let stream = |k: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(k);
        r
    };
    let mut props = Vec::new();

    // Lower and upper bounds of the alternating sum in the large regime.
    let mut big = PropertyResult::new("big_regime_bounds");
    let mut rng = stream(1);
    let threshold = dunkl_an_core::ln_factorial(n + 1);
    for _ in 0..samples {
        let lambda = random_point(&mut rng, n, 0.3, 5.0);
        let mut x = random_point(&mut rng, n, 0.3, 5.0);
        let m = min_root_product(&lambda, &x);
        if m < threshold {
            x = x.scaled(threshold / m * (1.0 + rng.random::<f64>()))?;
        }
        let s = alt_sum_ratio(&rs, &lambda, &x);
        big.check((0.5..=order).contains(&s), || {
            format!("lambda={:?} x={:?} sum/e^<l,x>={s}", lambda.coords(), x.coords())
        });
    }
    props.push(big);

    // Small regime: psi e^{-<l,X>} in (0, 1], with the observed minimum.
    let mut small = PropertyResult::new("small_regime_bounds");
    let mut rng = stream(2);
    let mut lowest = f64::INFINITY;
    for _ in 0..samples {
        let lambda = random_point(&mut rng, n, 1e-3, 1.0);
        let x = random_point(&mut rng, n, 1e-3, 1.0);
        let ml = lambda.gaps().into_iter().fold(0.0, f64::max);
        let mx = x.gaps().into_iter().fold(0.0, f64::max);
        let x = if ml * mx > opts.delta { x.scaled(opts.delta / (ml * mx))? } else { x };
        match ev.psi_stable_normalized(&lambda, &x, 1e-12) {
            Ok(r) => {
                let v = r.log_value;
                lowest = lowest.min(v.exp());
                small.check(v.is_finite() && v <= opts.log_tolerance, || {
                    format!("lambda={:?} x={:?} log ratio={v}", lambda.coords(), x.coords())
                });
            }
            Err(e) => small.check(false, || e.to_string()),
        }
    }
    small.recorded = Some(lowest);
    props.push(small);

    // Global sandwich.
    let mut sandwich = PropertyResult::new("global_sandwich");
    if n <= 3 {
        let mut rng = stream(3);
        for _ in 0..samples {
            let lambda = random_point(&mut rng, n, 1e-3, 30.0);
            let x = random_point(&mut rng, n, 1e-3, 30.0);
            let upper = lambda.dot(&x);
            let lower = rs.min_weyl_pairing(&lambda, &x)?.1;
            match ev.psi_stable(&lambda, &x, 1e-12) {
                Ok(r) => {
                    let tol = opts.log_tolerance * (1.0 + upper.abs());
                    let v = r.log_value;
                    sandwich.check(v <= upper + tol && v >= lower - tol, || {
                        format!("lambda={:?} x={:?} log psi={v} bounds=[{lower}, {upper}]", lambda.coords(), x.coords())
                    });
                }
                Err(e) => sandwich.check(false, || e.to_string()),
            }
        }
    }
    props.push(sandwich);

    // Simple-root decomposition of Y - wY, the pairing bound, and the
    // Coefficient bound c_i <= M max_k alpha_k.
    let mut decomp = PropertyResult::new("decompose_diff_nonnegative");
    let mut recon = PropertyResult::new("decompose_diff_reconstructs");
    let mut pairing = PropertyResult::new("pairing_lower_bound");
    let mut coeff = PropertyResult::new("coefficients_bounded_by_max_gap");
    let m = rs.coefficient_bound();
    coeff.recorded = Some(m);
    let mut rng = stream(4);
    for _ in 0..samples {
        let y = random_point(&mut rng, n, 1e-2, 10.0);
        let lambda = random_point(&mut rng, n, 1e-2, 10.0);
        let scale = y.coords().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let max_gap = y.gaps().into_iter().fold(0.0, f64::max);
        for w in rs.weyl_elements() {
            let c = rs.decompose_diff(&y, &w)?;
            let tol = 1e-12 * (1.0 + scale);
            decomp.check(c.iter().all(|v| *v >= -tol), || format!("y={:?} w={:?} c={c:?}", y.coords(), w.perm));
            let wy = w.act(y.coords());
            let ok = (0..=n).all(|j| {
                let s = if j < n { c[j] } else { 0.0 } - if j > 0 { c[j - 1] } else { 0.0 };
                (s - (y.coords()[j] - wy[j])).abs() <= 4.0 * tol
            });
            recon.check(ok, || format!("y={:?} w={:?}", y.coords(), w.perm));
            coeff.check(c.iter().all(|v| *v <= m * max_gap + tol), || {
                format!("y={:?} w={:?} c={c:?} M={m}", y.coords(), w.perm)
            });
            if w.is_identity() {
                continue;
            }
            let cl = rs.decompose_diff(&lambda, &w)?;
            let wl = w.act(lambda.coords());
            let lhs: f64 = lambda.coords().iter().zip(&wl).zip(y.coords()).map(|((a, b), x)| (a - b) * x).sum();
            let lg = lambda.gaps();
            let yg = y.gaps();
            let lt = 1e-12 * (1.0 + lhs.abs());
            let ok = (0..n).any(|i| cl[i] > lt && lhs >= lg[i] * yg[i] - lt);
            pairing.check(ok, || format!("lambda={:?} x={:?} w={:?}", lambda.coords(), y.coords(), w.perm));
        }
    }
    props.extend([decomp, recon, pairing, coeff]);

    // Factorisation ratio and recursive estimate.
    if n <= factorization::MAX_RANK && opts.quadrature_samples > 0 {
        let mut fact = PropertyResult::new("factorization_ratio_bounded");
        let mut rec = PropertyResult::new("recursive_estimate_bounded");
        let mut rng = stream(5);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for _ in 0..opts.quadrature_samples {
            let lambda = random_point(&mut rng, n, 0.1, 3.0);
            let x = random_point(&mut rng, n, 0.1, 3.0);
            let input = factorization::FactorInput::new(lambda.clone(), x.clone())?;
            match factorization::factorization_ratio(&input, 1e-8) {
                Ok(r) => {
                    lo = lo.min(r.ratio);
                    hi = hi.max(r.ratio);
                    fact.check(r.ratio.is_finite() && r.ratio > 0.0, || format!("{r:?}"));
                }
                Err(e) => fact.check(false, || e.to_string()),
            }
            if n >= 2 {
                match factorization::recursive_ratio(&input, 1e-8) {
                    Ok(r) => rec.check(r.is_finite() && r > 0.0, || format!("ratio {r}")),
                    Err(e) => rec.check(false, || e.to_string()),
                }
            }
        }
        fact.recorded = Some(hi / lo);
        props.push(fact);
        if n >= 2 {
            props.push(rec);
        }
    }

    Ok(PropReport {
        rank: n,
        samples,
        seed,
        properties: props,
    })
}

fn min_root_product(lambda: &ChamberPoint, x: &ChamberPoint) -> f64 {
    let (l, c) = (lambda.coords(), x.coords());
    let mut m = f64::INFINITY;
    for i in 0..c.len() {
        for j in (i + 1)..c.len() {
            m = m.min((l[i] - l[j]) * (c[i] - c[j]));
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts_and_order() {
        let c = SweepConfig::psi(1, AxisRange::new(0.5, 2.0, 2), AxisRange::new(0.5, 2.0, 3), Sampling::Grid);
        assert_eq!(c.sample_count(SweepKind::Psi), 6);
        let r = sweep_psi_ratio(&c, Some(1)).unwrap();
        assert_eq!(r.records.len(), 6);
        assert!(r.records.iter().enumerate().all(|(i, rec)| rec.index == i));
        let agg = r.overall.unwrap();
        assert!(agg.min_ratio <= agg.geo_mean_ratio && agg.geo_mean_ratio <= agg.max_ratio);
    }

    #[test]
    fn random_needs_seed() {
        let c = SweepConfig::psi(1, AxisRange::new(0.5, 2.0, 2), AxisRange::new(0.5, 2.0, 2), Sampling::Random);
        assert!(matches!(sweep_psi_ratio(&c, None), Err(VerifyError::Config(_))));
    }

    #[test]
    fn zero_gap_routes_to_confluent_path() {
        let c = SweepConfig::psi(2, AxisRange::new(0.0, 1.0, 2), AxisRange::new(0.0, 1.0, 2), Sampling::Grid);
        let r = sweep_psi_ratio(&c, Some(1)).unwrap();
        assert!(r.failures.is_empty(), "{:?}", r.failures);
        assert!(r.records.iter().any(|rec| rec.confluent));
    }

    #[test]
    fn stress_pair_has_requested_severity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sev = Severity {
            gap_product: 1e-4,
            pairing: 50.0,
        };
        let (l, x) = stress_pair(3, sev, &mut rng).unwrap();
        assert!((l.dot(&x) - 50.0).abs() < 1e-9);
        for (a, b) in l.gaps().iter().zip(x.gaps()) {
            assert!((a * b / 1e-4 - 1.0).abs() < 1e-9);
        }
    }
}
