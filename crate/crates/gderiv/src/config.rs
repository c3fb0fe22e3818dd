//! Experiment configuration: TOML or JSON in, sorted-key JSON out.
//!
//! The top level holds `experiment`, `seed` and `format`, plus the output
//! directory `out`. Every other key belongs to the experiment's own table
//! and is checked against it, so typos are rejected with their path.

use std::path::{Path, PathBuf};

use gderiv_core::chaos::MAX_ORDER;
use gderiv_core::derivative::{ConditioningSpec, Mode, Process, QuotientSchedule, Tolerances};
use gderiv_core::gaussian::FirstChaosVariable;
use gderiv_core::models::{BasisFunction, ModelSpec};
use gderiv_core::simulation::{Estimator, McConditioning, Method, CHOLESKY_MAX_STEPS};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const DEFAULT_SEED: u64 = 20_240_917;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Cov,
    Classify,
    Derivative,
    Renormalize,
    Simulate,
    Girsanov,
    Embed,
    Counterexample,
    PaperSuite,
}

impl Kind {
    pub const ALL: [Kind; 9] = [
        Kind::Cov,
        Kind::Classify,
        Kind::Derivative,
        Kind::Renormalize,
        Kind::Simulate,
        Kind::Girsanov,
        Kind::Embed,
        Kind::Counterexample,
        Kind::PaperSuite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Cov => "cov",
            Kind::Classify => "classify",
            Kind::Derivative => "derivative",
            Kind::Renormalize => "renormalize",
            Kind::Simulate => "simulate",
            Kind::Girsanov => "girsanov",
            Kind::Embed => "embed",
            Kind::Counterexample => "counterexample",
            Kind::PaperSuite => "paper-suite",
        }
    }

    fn parse(name: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Path export format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub format: Format,
    /// Output directory; not part of the canonical form.
    pub out: Option<PathBuf>,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Cov(CovConfig),
    Classify(ClassifyConfig),
    Derivative(DerivativeConfig),
    Renormalize(RenormalizeConfig),
    Simulate(SimulateConfig),
    Girsanov(GirsanovConfig),
    Embed(EmbedConfig),
    Counterexample(CounterexampleConfig),
    PaperSuite(SuiteConfig),
}

impl Experiment {
    pub fn kind(&self) -> Kind {
        match self {
            Experiment::Cov(_) => Kind::Cov,
            Experiment::Classify(_) => Kind::Classify,
            Experiment::Derivative(_) => Kind::Derivative,
            Experiment::Renormalize(_) => Kind::Renormalize,
            Experiment::Simulate(_) => Kind::Simulate,
            Experiment::Girsanov(_) => Kind::Girsanov,
            Experiment::Embed(_) => Kind::Embed,
            Experiment::Counterexample(_) => Kind::Counterexample,
            Experiment::PaperSuite(_) => Kind::PaperSuite,
        }
    }

    pub fn default_for(kind: Kind) -> Experiment {
        match kind {
            Kind::Cov => Experiment::Cov(CovConfig::default()),
            Kind::Classify => Experiment::Classify(ClassifyConfig::default()),
            Kind::Derivative => Experiment::Derivative(DerivativeConfig::default()),
            Kind::Renormalize => Experiment::Renormalize(RenormalizeConfig::default()),
            Kind::Simulate => Experiment::Simulate(SimulateConfig::default()),
            Kind::Girsanov => Experiment::Girsanov(GirsanovConfig::default()),
            Kind::Embed => Experiment::Embed(EmbedConfig::default()),
            Kind::Counterexample => Experiment::Counterexample(CounterexampleConfig::default()),
            Kind::PaperSuite => Experiment::PaperSuite(SuiteConfig::default()),
        }
    }

    fn to_map(&self) -> Map<String, Value> {
        let v = match self {
            Experiment::Cov(c) => serde_json::to_value(c),
            Experiment::Classify(c) => serde_json::to_value(c),
            Experiment::Derivative(c) => serde_json::to_value(c),
            Experiment::Renormalize(c) => serde_json::to_value(c),
            Experiment::Simulate(c) => serde_json::to_value(c),
            Experiment::Girsanov(c) => serde_json::to_value(c),
            Experiment::Embed(c) => serde_json::to_value(c),
            Experiment::Counterexample(c) => serde_json::to_value(c),
            Experiment::PaperSuite(c) => serde_json::to_value(c),
        };
        match v.expect("configs serialize to JSON") {
            Value::Object(m) => m,
            _ => unreachable!("configs are structs"),
        }
    }

    fn from_map(kind: Kind, map: Map<String, Value>) -> Result<Experiment> {
        let v = Value::Object(map);
        Ok(match kind {
            Kind::Cov => Experiment::Cov(de(v)?),
            Kind::Classify => Experiment::Classify(de(v)?),
            Kind::Derivative => Experiment::Derivative(de(v)?),
            Kind::Renormalize => Experiment::Renormalize(de(v)?),
            Kind::Simulate => Experiment::Simulate(de(v)?),
            Kind::Girsanov => Experiment::Girsanov(de(v)?),
            Kind::Embed => Experiment::Embed(de(v)?),
            Kind::Counterexample => Experiment::Counterexample(de(v)?),
            Kind::PaperSuite => Experiment::PaperSuite(de(v)?),
        })
    }

    fn validate(&self) -> Result<()> {
        match self {
            Experiment::Cov(c) => c.validate(),
            Experiment::Classify(c) => c.validate(),
            Experiment::Derivative(c) => c.validate(),
            Experiment::Renormalize(c) => c.validate(),
            Experiment::Simulate(c) => c.validate(),
            Experiment::Girsanov(c) => c.validate(),
            Experiment::Embed(c) => c.validate(),
            Experiment::Counterexample(c) => c.validate(),
            Experiment::PaperSuite(c) => c.validate(),
        }
    }
}

fn de<T: DeserializeOwned>(v: Value) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        // Fields inside flattened tables are reported against their parent;
        // recover the field name from the message when it is unambiguous.
        let path = refine_path(&path, &message);
        CliError::config(path, message)
    })
}

fn refine_path(path: &str, message: &str) -> String {
    if message.contains("Hurst index") && !path.ends_with("hurst") {
        return join(path, "hurst");
    }
    if let Some(rest) = message.strip_prefix("unknown field `") {
        if let Some(field) = rest.split('`').next() {
            if !path.ends_with(field) {
                return join(path, field);
            }
        }
    }
    path.to_string()
}

fn join(path: &str, field: &str) -> String {
    if path.is_empty() || path == "." {
        field.to_string()
    } else {
        format!("{path}.{field}")
    }
}

impl ExperimentConfig {
    pub fn default_for(kind: Kind) -> Self {
        Self { seed: DEFAULT_SEED, format: Format::Csv, out: None, experiment: Experiment::default_for(kind) }
    }

    pub fn kind(&self) -> Kind {
        self.experiment.kind()
    }

    /// Parses TOML, or JSON when the text is a JSON object. `expected`
    /// fills in a missing `experiment` key and must agree with a present one.
    pub fn parse(text: &str, expected: Option<Kind>) -> Result<Self> {
        let value = if text.trim_start().starts_with('{') {
            serde_json::from_str::<Value>(text).map_err(|e| CliError::config("<json>", e.to_string()))?
        } else {
            let t: toml::Table = toml::from_str(text).map_err(|e| CliError::config("<toml>", e.to_string()))?;
            serde_json::to_value(t).map_err(|e| CliError::config("<toml>", e.to_string()))?
        };
        Self::from_value(value, expected)
    }

    pub fn load(path: &Path, expected: Option<Kind>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config("--config", format!("{}: {e}", path.display())))?;
        Self::parse(&text, expected)
    }

    pub fn from_value(value: Value, expected: Option<Kind>) -> Result<Self> {
        let Value::Object(mut map) = value else {
            return Err(CliError::config("", "config must be a table"));
        };
        let kind = match map.remove("experiment") {
            Some(Value::String(name)) => {
                let kind = Kind::parse(&name).ok_or_else(|| {
                    let names: Vec<&str> = Kind::ALL.iter().map(|k| k.name()).collect();
                    CliError::config("experiment", format!("unknown experiment `{name}`, expected one of {}", names.join(", ")))
                })?;
                if let Some(e) = expected {
                    if e != kind {
                        return Err(CliError::config(
                            "experiment",
                            format!("config is for `{}` but the subcommand is `{}`", kind.name(), e.name()),
                        ));
                    }
                }
                kind
            }
            Some(_) => return Err(CliError::config("experiment", "expected a string")),
            None => expected.ok_or_else(|| CliError::config("experiment", "missing experiment kind"))?,
        };
        let seed = match map.remove("seed") {
            None => DEFAULT_SEED,
            Some(v) => v.as_u64().ok_or_else(|| CliError::config("seed", format!("expected an unsigned integer, got {v}")))?,
        };
        let format = match map.remove("format") {
            None => Format::Csv,
            Some(v) => de(v).map_err(|e| match e {
                CliError::Config { message, .. } => CliError::config("format", message),
                e => e,
            })?,
        };
        let out = match map.remove("out") {
            None => None,
            Some(Value::String(s)) => Some(PathBuf::from(s)),
            Some(_) => return Err(CliError::config("out", "expected a path string")),
        };
        let experiment = Experiment::from_map(kind, map)?;
        let config = Self { seed, format, out, experiment };
        config.experiment.validate()?;
        Ok(config)
    }

    /// Normalized form: every field explicit, keys sorted, output
    /// directory omitted.
    pub fn canonical(&self) -> Value {
        let mut map = self.experiment.to_map();
        map.insert("experiment".into(), Value::String(self.kind().name().into()));
        map.insert("seed".into(), Value::from(self.seed));
        map.insert("format".into(), serde_json::to_value(self.format).expect("format serializes"));
        sort(Value::Object(map))
    }

    pub fn canonical_string(&self) -> String {
        serde_json::to_string(&self.canonical()).expect("canonical form serializes")
    }

    /// SHA-256 of the canonical string, hex encoded.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical_string().as_bytes()))
    }
}

/// Rebuilds objects with sorted keys regardless of the map backing.
fn sort(v: Value) -> Value {
    match v {
        Value::Object(m) => {
            let mut entries: Vec<(String, Value)> = m.into_iter().map(|(k, v)| (k, sort(v))).collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().collect())
        }
        Value::Array(a) => Value::Array(a.into_iter().map(sort).collect()),
        v => v,
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn check(ok: bool, path: &str, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::config(path, message()))
    }
}

fn check_model(model: &ModelSpec, path: &str) -> Result<()> {
    model.clone().validated().map(|_| ()).map_err(|e| CliError::config(path, e.to_string()))
}

fn check_unit_interval(x: f64, path: &str) -> Result<()> {
    check(x > 0.0 && x < 1.0, path, || format!("must lie in (0, 1), got {x}"))
}

fn check_time(t: f64, horizon: f64, path: &str) -> Result<()> {
    check(t > 0.0 && t < horizon, path, || format!("must lie in (0, {horizon}), got {t}"))
}

fn check_paths(n: usize, path: &str) -> Result<()> {
    check(n >= 2, path, || format!("need at least 2 paths, got {n}"))
}

/// Conditioning σ-field of the exact engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Conditioning {
    /// `σ{Z_s : s ∈ times}`.
    Span { times: Vec<f64> },
    /// `σ{f(Z_time)}` for an even `f`.
    Even { time: f64 },
    /// All atoms of a finite-atom model.
    Atoms,
    /// The atoms `N_i`, `i ∈ atoms`, counted from 1.
    AtomSubset { atoms: Vec<usize> },
}

impl Conditioning {
    pub fn to_spec(&self) -> ConditioningSpec {
        match self {
            Conditioning::Span { times } => ConditioningSpec::span(times.iter().map(|&s| FirstChaosVariable::point(s)).collect()),
            Conditioning::Even { time } => ConditioningSpec::EvenFunctionOf { var: FirstChaosVariable::point(*time) },
            Conditioning::Atoms => ConditioningSpec::FullGenerators,
            Conditioning::AtomSubset { atoms } => {
                ConditioningSpec::AtomSubset { indices: atoms.iter().map(|i| i - 1).collect() }
            }
        }
    }

    fn validate(&self, model: &ModelSpec, path: &str) -> Result<()> {
        match self {
            Conditioning::Span { times } => {
                check(!times.is_empty(), &format!("{path}.times"), || "need at least one time".into())?;
                for (i, &s) in times.iter().enumerate() {
                    check(s >= 0.0 && s <= model.horizon, &format!("{path}.times[{i}]"), || {
                        format!("must lie in [0, {}], got {s}", model.horizon)
                    })?;
                }
                Ok(())
            }
            Conditioning::Even { time } => check(*time >= 0.0 && *time <= model.horizon, &format!("{path}.time"), || {
                format!("must lie in [0, {}], got {time}", model.horizon)
            }),
            Conditioning::Atoms => check(model.atoms().is_some(), path, || "atom conditioning needs a finite-atom model".into()),
            Conditioning::AtomSubset { atoms } => {
                let n = model.atoms().map(|a| a.len()).unwrap_or(0);
                check(n > 0, path, || "atom conditioning needs a finite-atom model".into())?;
                for (i, &a) in atoms.iter().enumerate() {
                    check(a >= 1 && a <= n, &format!("{path}.atoms[{i}]"), || format!("atom {a} out of range 1..={n}"))?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CovConfig {
    pub model: ModelSpec,
    /// Evaluation grid `T·k/(points − 1)`.
    pub points: usize,
    /// Compare with `∫K_H K_H` (fBm only).
    pub kernel_check: bool,
}

impl Default for CovConfig {
    fn default() -> Self {
        Self { model: ModelSpec::fbm(0.7, 1.0).expect("valid model"), points: 9, kernel_check: true }
    }
}

impl CovConfig {
    fn validate(&self) -> Result<()> {
        check_model(&self.model, "model")?;
        check(self.points >= 2, "points", || format!("need at least 2 points, got {}", self.points))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    pub model: ModelSpec,
    pub t: f64,
    pub conditioning: Conditioning,
    pub schedule: QuotientSchedule,
    pub tolerances: Tolerances,
    /// Decimal places of the coefficients in the summary row.
    pub digits: u32,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::fbm(0.7, 1.0).expect("valid model"),
            t: 0.5,
            conditioning: Conditioning::Span { times: vec![0.5] },
            schedule: QuotientSchedule::default(),
            tolerances: Tolerances::default(),
            digits: 6,
        }
    }
}

impl ClassifyConfig {
    fn validate(&self) -> Result<()> {
        check_model(&self.model, "model")?;
        check_time(self.t, self.model.horizon, "t")?;
        self.conditioning.validate(&self.model, "conditioning")?;
        self.schedule.steps_at(self.t, self.model.horizon).map_err(|e| CliError::config("schedule", e.to_string()))?;
        check(self.digits <= 15, "digits", || format!("at most 15 digits, got {}", self.digits))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DerivativeConfig {
    pub model: ModelSpec,
    pub t: f64,
    /// Times `s` of the span `σ{Z_s}`.
    pub span: Vec<f64>,
    /// Sub-span for the projection identity check.
    pub sub: Option<Vec<f64>>,
}

impl Default for DerivativeConfig {
    fn default() -> Self {
        Self { model: ModelSpec::fbm(0.7, 1.0).expect("valid model"), t: 0.5, span: vec![0.3, 0.8], sub: Some(vec![0.3]) }
    }
}

impl DerivativeConfig {
    fn validate(&self) -> Result<()> {
        check_model(&self.model, "model")?;
        check_time(self.t, self.model.horizon, "t")?;
        Conditioning::Span { times: self.span.clone() }.validate(&self.model, "span")?;
        if let Some(sub) = &self.sub {
            Conditioning::Span { times: sub.clone() }.validate(&self.model, "sub")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenormalizeConfig {
    pub model: ModelSpec,
    pub t: f64,
    pub conditioning: Conditioning,
    /// Renormalization exponent; `1 + fitted slope` when absent.
    pub alpha: Option<f64>,
    pub schedule: QuotientSchedule,
    pub tolerances: Tolerances,
}

impl Default for RenormalizeConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::fbm(0.3, 2.0).expect("valid model"),
            t: 1.0,
            conditioning: Conditioning::Span { times: vec![1.0] },
            alpha: Some(0.6),
            schedule: QuotientSchedule::with_mode(Mode::Forward),
            tolerances: Tolerances::default(),
        }
    }
}

impl RenormalizeConfig {
    fn validate(&self) -> Result<()> {
        check_model(&self.model, "model")?;
        check_time(self.t, self.model.horizon, "t")?;
        self.conditioning.validate(&self.model, "conditioning")?;
        check(self.schedule.mode != Mode::TwoSided, "schedule.mode", || "renormalized limits are one-sided".into())?;
        self.schedule.steps_at(self.t, self.model.horizon).map_err(|e| CliError::config("schedule", e.to_string()))?;
        if let Some(a) = self.alpha {
            check(a > 0.0 && a <= 1.0, "alpha", || format!("must lie in (0, 1], got {a}"))?;
        }
        Ok(())
    }
}

/// Monte Carlo stochastic derivative on a simulated batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub t: f64,
    pub conditioning: McConditioning,
    /// Step sizes in grid cells.
    pub h_steps: Vec<usize>,
    pub alpha: f64,
    pub estimator: Estimator,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            t: 0.5,
            conditioning: McConditioning::Value { s: 0.5 },
            h_steps: vec![8, 4, 2, 1],
            alpha: 1.0,
            estimator: Estimator::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub hurst: f64,
    pub steps: usize,
    pub horizon: f64,
    pub paths: usize,
    pub method: Method,
    /// Integrand `a` of the drift `𝒦_H a`; no drift when absent.
    pub drift: Option<BasisFunction>,
    pub x0: f64,
    /// Number of leading paths written to the path file.
    pub export_paths: usize,
    /// Pairs `(s, t)` at which the empirical covariance is checked.
    pub probes: Vec<(f64, f64)>,
    pub mc: Option<McConfig>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            hurst: 0.7,
            steps: 64,
            horizon: 1.0,
            paths: 20_000,
            method: Method::Circulant,
            drift: None,
            x0: 0.0,
            export_paths: 100,
            probes: vec![(0.25, 0.5), (0.5, 0.75), (0.75, 1.0), (0.25, 1.0)],
            mc: None,
        }
    }
}

fn check_grid(steps: usize, horizon: f64) -> Result<()> {
    check(steps >= 1, "steps", || "need at least one step".into())?;
    check(horizon > 0.0 && horizon.is_finite(), "horizon", || format!("must be positive, got {horizon}"))
}

fn check_node(t: f64, steps: usize, horizon: f64, path: &str) -> Result<()> {
    let x = t / horizon * steps as f64;
    check(t >= 0.0 && t <= horizon && (x - x.round()).abs() < 1e-9, path, || {
        format!("{t} is not a node of the {steps}-step grid on [0, {horizon}]")
    })
}

impl SimulateConfig {
    fn validate(&self) -> Result<()> {
        check_unit_interval(self.hurst, "hurst")?;
        check_grid(self.steps, self.horizon)?;
        check_paths(self.paths, "paths")?;
        check(self.method != Method::Cholesky || self.steps <= CHOLESKY_MAX_STEPS, "method", || {
            format!("cholesky is limited to {CHOLESKY_MAX_STEPS} steps")
        })?;
        check(self.export_paths <= self.paths, "export_paths", || format!("at most {} paths", self.paths))?;
        for (i, &(s, t)) in self.probes.iter().enumerate() {
            check_node(s, self.steps, self.horizon, &format!("probes[{i}][0]"))?;
            check_node(t, self.steps, self.horizon, &format!("probes[{i}][1]"))?;
        }
        if let Some(mc) = &self.mc {
            check_node(mc.t, self.steps, self.horizon, "mc.t")?;
            check_node(mc.conditioning.time(), self.steps, self.horizon, "mc.conditioning.s")?;
            check(!mc.h_steps.is_empty() && !mc.h_steps.contains(&0), "mc.h_steps", || "step multiples must be positive".into())?;
            check(mc.alpha > 0.0 && mc.alpha <= 1.0, "mc.alpha", || format!("must lie in (0, 1], got {}", mc.alpha))?;
            check(mc.estimator != Estimator::Linear || self.paths >= 1000, "paths", || "Monte Carlo estimates need 1000 paths".into())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GirsanovConfig {
    pub hurst: f64,
    pub steps: usize,
    pub horizon: f64,
    pub paths: usize,
    /// Integrand `a`; constant 1 by default.
    pub a: BasisFunction,
    pub x0: f64,
    /// Probe pair of the weighted covariance.
    pub s: f64,
    pub t: f64,
    /// Number of leading paths written with their weights.
    pub export_paths: usize,
}

impl Default for GirsanovConfig {
    fn default() -> Self {
        Self {
            hurst: 0.7,
            steps: 64,
            horizon: 1.0,
            paths: 200_000,
            a: BasisFunction::Linear { slope: 0.0, intercept: 1.0 },
            x0: 0.0,
            s: 0.25,
            t: 0.75,
            export_paths: 0,
        }
    }
}

impl GirsanovConfig {
    fn validate(&self) -> Result<()> {
        check_unit_interval(self.hurst, "hurst")?;
        check_grid(self.steps, self.horizon)?;
        check(self.steps >= 32, "steps", || format!("the Volterra sampler needs at least 32 steps, got {}", self.steps))?;
        check_paths(self.paths, "paths")?;
        check_node(self.s, self.steps, self.horizon, "s")?;
        check_node(self.t, self.steps, self.horizon, "t")?;
        check(self.export_paths <= self.paths, "export_paths", || format!("at most {} paths", self.paths))
    }
}

/// Nelson-derivative regression on simulated Wiener paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NelsonConfig {
    pub t: f64,
    pub steps: usize,
    pub paths: usize,
    pub h_steps: Vec<usize>,
}

impl Default for NelsonConfig {
    fn default() -> Self {
        Self { t: 0.5, steps: 256, paths: 200_000, h_steps: vec![16, 8, 4, 2, 1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedConfig {
    pub a: f64,
    pub b: f64,
    /// Chaos constants `c_0, …, c_N`.
    pub c: Vec<f64>,
    pub horizon: f64,
    /// Number of residual probe times in `(0, horizon]`.
    pub points: usize,
    pub nelson: Option<NelsonConfig>,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self { a: 1.0, b: 0.5, c: vec![1.0, 0.5], horizon: 1.0, points: 16, nelson: Some(NelsonConfig::default()) }
    }
}

impl EmbedConfig {
    fn validate(&self) -> Result<()> {
        check(!self.c.is_empty() && self.c.len() <= MAX_ORDER + 1, "c", || {
            format!("need between 1 and {} constants, got {}", MAX_ORDER + 1, self.c.len())
        })?;
        check(self.horizon > 0.0 && self.horizon.is_finite(), "horizon", || format!("must be positive, got {}", self.horizon))?;
        check(self.points >= 1, "points", || "need at least one point".into())?;
        if let Some(n) = &self.nelson {
            check(self.c.len() <= 2, "nelson", || "the regression check covers chaos order ≤ 1".into())?;
            check_paths(n.paths, "nelson.paths")?;
            check(n.steps >= 1, "nelson.steps", || "need at least one step".into())?;
            check_node(n.t, n.steps, self.horizon, "nelson.t")?;
            check(!n.h_steps.is_empty() && !n.h_steps.contains(&0), "nelson.h_steps", || "step multiples must be positive".into())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CounterexampleConfig {
    /// Number of trigonometric basis functions.
    pub n: usize,
    pub t: f64,
    pub h: f64,
    /// Single atoms classified one at a time (the first `atom_checks`).
    pub atom_checks: usize,
    pub f1: BasisFunction,
    pub f2: BasisFunction,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self {
            n: 4096,
            t: 0.5,
            h: 1.0 / 256.0,
            atom_checks: 4096,
            f1: BasisFunction::Sine { amplitude: 1.0, frequency: 1.0 },
            f2: BasisFunction::AbsPower { center: 0.5, exponent: 0.3, scale: 1.0 },
        }
    }
}

impl CounterexampleConfig {
    fn validate(&self) -> Result<()> {
        check(self.n >= 1, "n", || "need at least one basis function".into())?;
        check_unit_interval(self.t, "t")?;
        check(self.h > 0.0 && self.t + self.h <= 1.0, "h", || format!("need 0 < h ≤ 1 − t, got {}", self.h))?;
        check(self.atom_checks <= self.n, "atom_checks", || format!("at most n = {}", self.n))?;
        check_model(&ModelSpec { kind: gderiv_core::models::ModelKind::TwoAtom { f1: self.f1.clone(), f2: self.f2.clone(), var1: 1.0, var2: 1.0 }, horizon: 1.0 }, "f1")
    }
}

/// The acceptance suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    /// Criteria to run (`AC1`, …); all when absent.
    pub criteria: Option<Vec<String>>,
    /// Leave the circulant sampler out; its performance criterion is then
    /// skipped.
    pub disable_circulant: bool,
    /// Replaces every deterministic tolerance.
    pub tolerance_override: Option<f64>,
    /// Monte Carlo paths per criterion.
    pub paths: usize,
    /// Run independent criteria concurrently. Timed criteria always run
    /// alone.
    pub parallel: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { criteria: None, disable_circulant: false, tolerance_override: None, paths: 200_000, parallel: false }
    }
}

pub const CRITERIA: [&str; 13] =
    ["AC1", "AC2", "AC3", "AC4", "AC5", "AC6", "AC7", "AC8", "AC9", "AC10", "AC11", "AC12", "AC13"];

impl SuiteConfig {
    fn validate(&self) -> Result<()> {
        if let Some(list) = &self.criteria {
            for (i, c) in list.iter().enumerate() {
                check(CRITERIA.contains(&c.as_str()), &format!("criteria[{i}]"), || {
                    format!("unknown criterion `{c}`, expected AC1..AC13")
                })?;
            }
        }
        if let Some(t) = self.tolerance_override {
            check(t > 0.0, "tolerance_override", || format!("must be positive, got {t}"))?;
        }
        check(self.paths >= 1000, "paths", || format!("need at least 1000 paths, got {}", self.paths))
    }

    pub fn selected(&self, criterion: &str) -> bool {
        self.criteria.as_ref().is_none_or(|c| c.iter().any(|x| x == criterion))
    }
}

/// Process of an exact-engine experiment.
pub fn process(model: &ModelSpec) -> Process {
    Process::centered(model.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err_path(text: &str, kind: Kind) -> String {
        match ExperimentConfig::parse(text, Some(kind)) {
            Err(CliError::Config { path, .. }) => path,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn defaults_round_trip_canonically() {
        for kind in Kind::ALL {
            let c = ExperimentConfig::default_for(kind);
            let text = c.canonical_string();
            let back = ExperimentConfig::parse(&text, None).unwrap();
            assert_eq!(back, c, "{}", kind.name());
            assert_eq!(back.canonical_string(), text);
        }
    }

    #[test]
    fn toml_and_json_agree() {
        let toml = r#"
            experiment = "classify"
            t = 0.5
            [model]
            type = "fractional_brownian"
            hurst = 0.7
            horizon = 1.0
            [schedule]
            mode = "forward"
        "#;
        let a = ExperimentConfig::parse(toml, None).unwrap();
        let json = r#"{"schedule": {"mode": "forward"}, "model": {"horizon": 1.0, "hurst": 0.7, "type": "fractional_brownian"}, "t": 0.5}"#;
        let b = ExperimentConfig::parse(json, Some(Kind::Classify)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        let Value::Object(m) = a.canonical() else { unreachable!() };
        let keys: Vec<&String> = m.keys().collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        assert!(a.canonical_string().starts_with(r#"{"conditioning":"#));
    }

    #[test]
    fn errors_name_the_field() {
        let bad_h = "[model]\ntype = \"fractional_brownian\"\nhurst = 1.5\nhorizon = 1.0\n";
        assert_eq!(err_path(bad_h, Kind::Classify), "model.hurst");
        assert_eq!(err_path("t = 0.5\ntypo = 1\n", Kind::Classify), "typo");
        let nested = "[model]\ntype = \"fractional_brownian\"\nhurst = 0.5\nhorizon = 1.0\nextra = 2\n";
        assert_eq!(err_path(nested, Kind::Classify), "model.extra");
        assert_eq!(err_path("[schedule]\nsteps = 20\nmod = \"forward\"\n", Kind::Classify), "schedule.mod");
        assert_eq!(err_path("t = 1.5\n", Kind::Classify), "t");
        assert_eq!(err_path("hurst = 0.7\nprobes = [[0.25, 0.3]]\n", Kind::Simulate), "probes[0][1]");
        assert_eq!(err_path("paths = \"many\"\n", Kind::Girsanov), "paths");
        assert_eq!(err_path("experiment = \"cov\"\n", Kind::Classify), "experiment");
        assert_eq!(err_path("criteria = [\"AC99\"]\n", Kind::PaperSuite), "criteria[0]");
    }

    #[test]
    fn atoms_count_from_one() {
        let c = Conditioning::AtomSubset { atoms: vec![1, 3] };
        let ConditioningSpec::AtomSubset { indices } = c.to_spec() else { panic!() };
        assert_eq!(indices, vec![0, 2]);
    }
}
