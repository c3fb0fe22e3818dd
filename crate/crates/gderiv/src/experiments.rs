//! One runner per experiment kind. Runners return an in-memory bundle;
//! [`crate::output`] writes it out.

use std::collections::BTreeMap;
use std::sync::Arc;

use gderiv_core::chaos::{embedding_residual, mc_verify_nelson, solve_linear_embedding};
use gderiv_core::derivative::{
    classify, difference_quotient, parseval_divergence, projection_identity_residual, rate_exponent,
    renormalized_limit, span_derivative_exact, ConditioningSpec, Mode, Process, Verdict, VerdictKind,
};
use gderiv_core::gaussian::{AffineCombination, FirstChaosVariable, GramSystem, Side};
use gderiv_core::models::{fbm_cov, kernel_covariance_quadrature, ModelKind, ModelSpec};
use gderiv_core::par::Exec;
use gderiv_core::simulation::{
    covariance_se, girsanov_weights, make_shifted, mc_stochastic_derivative, mean_se, sample_fbm,
    sample_fbm_volterra, sample_wiener, weighted_mean_se, write_binary, write_csv, BatchColumns, DriftSpec,
    McDerivativeReport, PathBatch, Sampling, TimeGrid,
};

use crate::config::{
    process, ClassifyConfig, CounterexampleConfig, CovConfig, DerivativeConfig, EmbedConfig, Experiment,
    ExperimentConfig, Format, GirsanovConfig, Kind, RenormalizeConfig, SimulateConfig,
};
use crate::error::{CliError, Context, Result};

/// Files and metadata produced by one run.
#[derive(Debug, Default)]
pub struct Bundle {
    /// Data files, in write order.
    pub files: Vec<(String, Vec<u8>)>,
    /// Gnuplot script over the data files.
    pub plot: Option<String>,
    /// Operations exercised, keyed by experiment kind or criterion.
    pub coverage: BTreeMap<String, Vec<&'static str>>,
    /// Human-readable lines for the terminal.
    pub summary: Vec<String>,
    /// Elapsed seconds of timed sections; kept out of the data files.
    pub timings: BTreeMap<String, f64>,
    /// Failed acceptance criteria.
    pub failed: Vec<String>,
}

impl Bundle {
    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }
}

/// Operations each experiment kind calls, recorded in the manifest.
pub fn coverage(kind: Kind) -> &'static [&'static str] {
    match kind {
        Kind::Cov => &["models::fbm_cov", "models::ModelSpec::cov", "models::kernel_covariance_quadrature"],
        Kind::Classify => &["derivative::classify"],
        Kind::Derivative => &["derivative::span_derivative_exact", "derivative::projection_identity_residual"],
        Kind::Renormalize => &["derivative::difference_quotient", "derivative::rate_exponent", "derivative::renormalized_limit"],
        Kind::Simulate => &[
            "simulation::sample_fbm",
            "simulation::make_shifted",
            "simulation::mc_stochastic_derivative",
            "simulation::write_csv",
            "simulation::write_binary",
        ],
        Kind::Girsanov => &["simulation::sample_fbm_volterra", "simulation::make_shifted", "simulation::girsanov_weights"],
        Kind::Embed => &["chaos::solve_linear_embedding", "chaos::embedding_residual", "chaos::mc_verify_nelson"],
        Kind::Counterexample => &["derivative::parseval_divergence", "derivative::classify"],
        Kind::PaperSuite => &["suite::run_criteria"],
    }
}

/// Rows of a CSV file; every field is preformatted.
pub struct Csv {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    trailer: Option<String>,
}

impl Csv {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new(), trailer: None }
    }

    pub fn row(&mut self, fields: Vec<String>) {
        debug_assert_eq!(fields.len(), self.header.len());
        self.rows.push(fields);
    }

    /// Single-field final row.
    pub fn trailer(&mut self, text: String) {
        self.trailer = Some(text);
    }

    pub fn bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        if let Some(t) = &self.trailer {
            w.write_record([t]).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

/// `x` rounded to `digits` decimals, printed without trailing zeros.
pub fn rounded(x: f64, digits: u32) -> String {
    let k = 10f64.powi(digits as i32);
    let r = (x * k).round() / k;
    format!("{}", if r == 0.0 { 0.0 } else { r })
}

fn joined(values: &[f64], digits: u32) -> String {
    values.iter().map(|&v| rounded(v, digits)).collect::<Vec<_>>().join(";")
}

/// One-line verdict with coefficients rounded for display, e.g.
/// `Differentiates, coeff=1.4`.
pub fn verdict_summary(v: &Verdict, digits: u32) -> String {
    match &v.kind {
        VerdictKind::Differentiates { derivative, .. } => {
            let mut s = format!("Differentiates, coeff={}", joined(&derivative.coefficients, digits));
            let c = rounded(derivative.constant, digits);
            if c != "0" {
                s.push_str(&format!(", constant={c}"));
            }
            s
        }
        VerdictKind::Degenerates { constant } => format!("Degenerates, constant={}", rounded(*constant, digits)),
        VerdictKind::Diverges { slope, r_squared, renormalized, .. } => {
            let mut s = format!("Diverges, slope={}, r2={}", rounded(*slope, 4), rounded(*r_squared, 4));
            if let Some(r) = renormalized {
                s.push_str(&format!(", alpha={}, limit={}", rounded(r.alpha, 4), joined(&r.limit.coefficients, digits)));
            }
            s
        }
        VerdictKind::Inconclusive { reason, .. } => format!("Inconclusive, {reason}"),
    }
}

fn verdict_csv(v: &Verdict, digits: u32) -> Vec<u8> {
    let mut csv = Csv::new(&["h", "coefficients", "constant", "norm"]);
    for r in &v.evidence {
        let c: Vec<String> = r.coefficients.iter().map(|&x| num(x)).collect();
        csv.row(vec![num(r.h), c.join(";"), num(r.constant), num(r.norm)]);
    }
    csv.trailer(verdict_summary(v, digits));
    csv.bytes()
}

fn combination_csv(d: &AffineCombination) -> Vec<u8> {
    let mut csv = Csv::new(&["term", "coefficient"]);
    for (label, c) in d.basis().labels().iter().zip(&d.coefficients) {
        csv.row(vec![label.clone(), num(*c)]);
    }
    csv.row(vec!["constant".into(), num(d.constant)]);
    csv.bytes()
}

fn points(times: &[f64]) -> Vec<FirstChaosVariable> {
    times.iter().map(|&s| FirstChaosVariable::point(s)).collect()
}

/// The first `n` paths of a batch.
pub fn head(batch: &PathBatch, n: usize) -> PathBatch {
    let nodes = batch.grid.nodes();
    let steps = batch.grid.steps;
    PathBatch {
        grid: batch.grid,
        n_paths: n,
        values: batch.values[..n * nodes].to_vec(),
        w_increments: batch.w_increments.as_ref().map(|w| w[..n * steps].to_vec()),
        centered: batch.centered.as_ref().map(|c| c[..n * nodes].to_vec()),
        seed: batch.seed,
        stream: batch.stream,
        method: batch.method.clone(),
    }
}

fn export(batch: &PathBatch, eta: Option<&[f64]>, n: usize, format: Format) -> Result<(String, Vec<u8>)> {
    let part = head(batch, n);
    let cols = BatchColumns::from_batch(&part, eta.map(|e| &e[..n])).context(|| "path export".into())?;
    let mut bytes = Vec::new();
    match format {
        Format::Csv => {
            write_csv(&mut bytes, &cols).context(|| "path export".into())?;
            Ok(("paths.csv".into(), bytes))
        }
        Format::Binary => {
            write_binary(&mut bytes, &cols).context(|| "path export".into())?;
            Ok(("paths.bin".into(), bytes))
        }
    }
}

/// Runs one experiment.
pub fn run(config: &ExperimentConfig) -> Result<Bundle> {
    let kind = config.kind();
    let mut bundle = match &config.experiment {
        Experiment::Cov(c) => cov(c)?,
        Experiment::Classify(c) => classify_run(c)?,
        Experiment::Derivative(c) => derivative(c)?,
        Experiment::Renormalize(c) => renormalize(c)?,
        Experiment::Simulate(c) => simulate(c, config.seed, config.format)?,
        Experiment::Girsanov(c) => girsanov(c, config.seed, config.format)?,
        Experiment::Embed(c) => embed(c, config.seed)?,
        Experiment::Counterexample(c) => counterexample(c)?,
        Experiment::PaperSuite(c) => crate::suite::run(c, config.seed)?,
    };
    if kind != Kind::PaperSuite {
        bundle.coverage.insert(kind.name().into(), coverage(kind).to_vec());
    }
    Ok(bundle)
}

fn cov(c: &CovConfig) -> Result<Bundle> {
    let m = &c.model;
    let hurst = m.hurst().filter(|_| c.kernel_check);
    let times: Vec<f64> = (0..c.points).map(|k| m.horizon * k as f64 / (c.points - 1) as f64).collect();
    let mut csv = Csv::new(&["s", "t", "cov", "kernel", "abs_error"]);
    let mut worst: f64 = 0.0;
    for &s in &times {
        for &t in &times {
            let r = match hurst {
                Some(h) => fbm_cov(h, s, t).context(|| format!("cov at ({s}, {t})"))?,
                None => m.cov(s, t),
            };
            let (k, e) = match hurst {
                Some(h) if s > 0.0 && t > 0.0 => {
                    let k = kernel_covariance_quadrature(h, s, t).context(|| format!("kernel identity at ({s}, {t})"))?;
                    worst = worst.max((k - r).abs());
                    (num(k), num((k - r).abs()))
                }
                _ => (String::new(), String::new()),
            };
            csv.row(vec![num(s), num(t), num(r), k, e]);
        }
    }
    let mut b = Bundle::default();
    b.files.push(("cov.csv".into(), csv.bytes()));
    if hurst.is_some() {
        b.summary.push(format!("max |∫K_H K_H − R_H| over the grid: {worst:e}"));
    }
    b.summary.push(format!("{} covariance values written", times.len() * times.len()));
    b.plot = Some(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 's'\nset ylabel 't'\n\
         splot 'cov.csv' using 1:2:3 with points pt 7 title 'covariance'\n"
            .into(),
    );
    Ok(b)
}

fn classify_run(c: &ClassifyConfig) -> Result<Bundle> {
    let p = process(&c.model);
    let spec = c.conditioning.to_spec();
    let v = classify(&p, c.t, &spec, &c.schedule, &c.tolerances).context(|| format!("classify at t = {}", c.t))?;
    let mut b = Bundle::default();
    b.files.push(("verdict.csv".into(), verdict_csv(&v, c.digits)));
    b.summary.push(format!("{} at t = {}: {}", spec.describe(), c.t, verdict_summary(&v, c.digits)));
    b.plot = Some(
        "set datafile separator ','\nset logscale xy\nset xlabel '|h|'\nset ylabel 'L2 norm of the quotient'\n\
         plot 'verdict.csv' using (abs($1)):4 with linespoints title 'quotient norm'\n"
            .into(),
    );
    Ok(b)
}

fn derivative(c: &DerivativeConfig) -> Result<Bundle> {
    let p = process(&c.model);
    let span = GramSystem::new(points(&c.span), p.oracle()).context(|| "span Gram system".into())?;
    let d = match span_derivative_exact(&p, c.t, &span, Side::TwoSided).context(|| "exact span derivative".into())? {
        Some(d) => d,
        None => {
            let spec = ConditioningSpec::span(points(&c.span));
            let v = classify(&p, c.t, &spec, &Default::default(), &Default::default())
                .context(|| format!("classify at t = {}", c.t))?;
            let d = v.derivative().ok_or_else(|| CliError::Core {
                context: "span derivative".into(),
                source: gderiv_core::Error::PreconditionFailed(verdict_summary(&v, 6)),
            })?;
            if d.coefficients.len() == span.len() {
                AffineCombination::new(span.basis().clone(), d.coefficients, d.constant)
            } else {
                AffineCombination::new(span.basis().clone(), vec![0.0; span.len()], d.mean())
            }
        }
    };
    let mut b = Bundle::default();
    b.files.push(("derivative.csv".into(), combination_csv(&d)));
    b.summary.push(format!("derivative at t = {}: coefficients {:?}, constant {}", c.t, d.coefficients, d.constant));
    if let Some(sub) = &c.sub {
        let r = projection_identity_residual(&p, c.t, &points(&c.span), &points(sub))
            .context(|| "projection identity".into())?;
        let mut csv = Csv::new(&["sub", "residual"]);
        let l: Vec<String> = sub.iter().map(|&s| num(s)).collect();
        csv.row(vec![l.join(";"), num(r)]);
        b.files.push(("projection.csv".into(), csv.bytes()));
        b.summary.push(format!("projection identity residual: {r:e}"));
    }
    Ok(b)
}

fn renormalize(c: &RenormalizeConfig) -> Result<Bundle> {
    let p = process(&c.model);
    let spec = c.conditioning.to_spec();
    let fit = rate_exponent(&p, c.t, &spec, &c.schedule).context(|| "rate fit".into())?;
    let sign = if c.schedule.mode == Mode::Backward { -1.0 } else { 1.0 };
    let hs = c.schedule.steps_at(c.t, p.horizon()).context(|| "schedule".into())?;
    let mut rate = Csv::new(&["h", "norm"]);
    for h in hs {
        let q = difference_quotient(&p, c.t, sign * h, &spec).context(|| format!("quotient at h = {h}"))?;
        rate.row(vec![num(sign * h), num(q.l2_norm())]);
    }
    let alpha = c.alpha.unwrap_or(1.0 + fit.slope);
    let limit = renormalized_limit(&p, c.t, &spec, alpha, &c.schedule, &c.tolerances)
        .context(|| format!("renormalized limit at alpha = {alpha}"))?;
    let mut b = Bundle::default();
    b.files.push(("rate.csv".into(), rate.bytes()));
    b.summary.push(format!("rate fit: slope {:.6}, r2 {:.6}", fit.slope, fit.r_squared));
    match limit {
        Some(l) => {
            b.files.push(("renormalized.csv".into(), combination_csv(&l)));
            b.summary.push(format!("renormalized limit (alpha = {alpha}): coefficients {:?}", l.coefficients));
        }
        None => {
            let mut csv = Csv::new(&["term", "coefficient"]);
            csv.trailer(format!("no limit at alpha = {alpha}"));
            b.files.push(("renormalized.csv".into(), csv.bytes()));
            b.summary.push(format!("no renormalized limit at alpha = {alpha}"));
        }
    }
    b.plot = Some(
        "set datafile separator ','\nset logscale xy\nset xlabel '|h|'\nset ylabel 'quotient norm'\n\
         plot 'rate.csv' using (abs($1)):2 with linespoints title 'norm'\n"
            .into(),
    );
    Ok(b)
}

fn covariance_rows(batch: &PathBatch, h: f64, probes: &[(f64, f64)], csv: &mut Csv, label: &str) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &(s, t) in probes {
        let is = batch.grid.index_of(s).context(|| format!("probe {s}"))?;
        let it = batch.grid.index_of(t).context(|| format!("probe {t}"))?;
        let (c, se) = covariance_se(&batch.centered_column(is), &batch.centered_column(it));
        let want = fbm_cov(h, s, t).context(|| "fbm covariance".into())?;
        let z = if se > 0.0 { (c - want) / se } else { 0.0 };
        worst = worst.max(z.abs());
        csv.row(vec![label.into(), num(h), num(s), num(t), num(c), num(se), num(want), num(z)]);
    }
    Ok(worst)
}

pub const COVARIANCE_HEADER: [&str; 8] = ["method", "hurst", "s", "t", "estimate", "se", "exact", "z"];

pub fn mc_csv(r: &McDerivativeReport) -> Csv {
    let mut csv = Csv::new(&["h", "query", "estimate", "se", "exact"]);
    for step in &r.steps {
        for ((q, e), x) in r.queries.iter().zip(&step.estimates).zip(&step.exact) {
            csv.row(vec![num(step.h), num(*q), num(e.value), num(e.se), num(*x)]);
        }
    }
    if let Some(lim) = &r.limit {
        for (q, l) in r.queries.iter().zip(lim) {
            csv.row(vec!["0".into(), num(*q), String::new(), String::new(), num(*l)]);
        }
    }
    csv
}

fn simulate(c: &SimulateConfig, seed: u64, format: Format) -> Result<Bundle> {
    let grid = TimeGrid::new(c.steps, c.horizon).context(|| "grid".into())?;
    let sampling = Sampling::new(seed);
    let batch = sample_fbm(c.hurst, &grid, c.paths, &sampling, c.method)
        .context(|| format!("{} sampler", c.method.name()))?;
    let drift = match &c.drift {
        Some(a) => DriftSpec::new(c.hurst, a.clone(), c.horizon),
        None => DriftSpec::zero(c.hurst, c.horizon),
    }
    .context(|| "drift".into())?;
    let z = make_shifted(batch, &drift, c.x0).context(|| "shifted process".into())?;
    let mut b = Bundle::default();
    if c.export_paths > 0 {
        b.files.push(export(&z, None, c.export_paths, format)?);
    }
    let mut cov = Csv::new(&COVARIANCE_HEADER);
    let worst = covariance_rows(&z, c.hurst, &c.probes, &mut cov, c.method.name())?;
    b.files.push(("covariance.csv".into(), cov.bytes()));
    b.summary.push(format!("{} paths, {} sampler: largest covariance |z| = {worst:.3}", c.paths, c.method.name()));
    if let Some(mc) = &c.mc {
        let model = ModelSpec::fbm(c.hurst, c.horizon).context(|| "model".into())?;
        let p = Process::shifted(model, c.x0, Arc::new(drift));
        let r = mc_stochastic_derivative(&p, &z, mc.t, mc.conditioning, &mc.h_steps, mc.alpha, mc.estimator)
            .context(|| "Monte Carlo stochastic derivative".into())?;
        b.files.push(("mc_derivative.csv".into(), mc_csv(&r).bytes()));
        b.summary.push(format!(
            "Monte Carlo derivative at t = {}: stabilized = {}, max spread {:.3} SE",
            mc.t, r.stabilized, r.max_spread_z
        ));
    }
    if format == Format::Csv && c.export_paths > 0 {
        b.plot = Some(
            "set datafile separator ','\nset key autotitle columnhead\nset xlabel 't'\n\
             plot 'paths.csv' using 2:(column('Z')) with lines title 'Z'\n"
                .into(),
        );
    }
    Ok(b)
}

fn girsanov(c: &GirsanovConfig, seed: u64, format: Format) -> Result<Bundle> {
    let grid = TimeGrid::new(c.steps, c.horizon).context(|| "grid".into())?;
    let batch = sample_fbm_volterra(c.hurst, &grid, c.paths, &Sampling::new(seed)).context(|| "volterra sampler".into())?;
    let drift = DriftSpec::new(c.hurst, c.a.clone(), c.horizon).context(|| "drift".into())?;
    let z = make_shifted(batch, &drift, c.x0).context(|| "shifted process".into())?;
    let eta = girsanov_weights(&z, &drift, Exec::default()).context(|| "Girsanov weights".into())?;
    let checks = girsanov_checks(&z, &eta, c.hurst, c.x0, c.s, c.t)?;
    let mut b = Bundle::default();
    if c.export_paths > 0 {
        b.files.push(export(&z, Some(&eta), c.export_paths, format)?);
    }
    let mut csv = Csv::new(&["quantity", "estimate", "se", "target", "z"]);
    for g in &checks {
        csv.row(vec![g.name.into(), num(g.estimate), num(g.se), num(g.target), num(g.z())]);
        b.summary.push(format!("{}: {:.6} ± {:.6} (target {:.6}, z = {:.2})", g.name, g.estimate, g.se, g.target, g.z()));
    }
    b.files.push(("girsanov.csv".into(), csv.bytes()));
    Ok(b)
}

/// A Monte Carlo estimate against its target.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub estimate: f64,
    pub se: f64,
    pub target: f64,
}

impl Check {
    pub fn z(&self) -> f64 {
        if self.se > 0.0 {
            (self.estimate - self.target) / self.se
        } else if self.estimate == self.target {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Mean weight, weighted and unweighted second moments of the centered
/// values at `(s, t)`.
pub fn girsanov_checks(z: &PathBatch, eta: &[f64], h: f64, x0: f64, s: f64, t: f64) -> Result<Vec<Check>> {
    let is = z.grid.index_of(s).context(|| format!("probe {s}"))?;
    let it = z.grid.index_of(t).context(|| format!("probe {t}"))?;
    let prod: Vec<f64> = z.column(is).iter().zip(z.column(it)).map(|(a, b)| (a - x0) * (b - x0)).collect();
    let target = fbm_cov(h, s, t).context(|| "fbm covariance".into())?;
    let (m, se) = mean_se(eta);
    let (w, wse) = weighted_mean_se(&prod, eta);
    let (u, use_) = mean_se(&prod);
    Ok(vec![
        Check { name: "mean_weight", estimate: m, se, target: 1.0 },
        Check { name: "weighted_second_moment", estimate: w, se: wse, target },
        Check { name: "unweighted_second_moment", estimate: u, se: use_, target },
    ])
}

fn embed(c: &EmbedConfig, seed: u64) -> Result<Bundle> {
    let x = solve_linear_embedding(c.a, c.b, &c.c).context(|| "embedded equation".into())?;
    let mut csv = Csv::new(&["t", "residual"]);
    let mut worst: f64 = 0.0;
    for k in 1..=c.points {
        let t = c.horizon * k as f64 / c.points as f64;
        let r = embedding_residual(&x, c.a, c.b, t).context(|| format!("residual at t = {t}"))?;
        worst = worst.max(r);
        csv.row(vec![num(t), num(r)]);
    }
    let mut b = Bundle::default();
    b.files.push(("residuals.csv".into(), csv.bytes()));
    b.summary.push(format!("largest embedding residual: {worst:e}"));
    if let Some(n) = &c.nelson {
        let grid = TimeGrid::new(n.steps, c.horizon).context(|| "grid".into())?;
        let w = sample_wiener(&grid, n.paths, &Sampling::new(seed)).context(|| "Wiener sampler".into())?;
        let check = mc_verify_nelson(&x, n.t, &n.h_steps, &w).context(|| "Nelson regression".into())?;
        let mut csv = Csv::new(&[
            "h",
            "intercept",
            "intercept_se",
            "exact_intercept",
            "slope",
            "slope_se",
            "exact_slope",
        ]);
        for s in &check.steps {
            csv.row(vec![
                num(s.h),
                num(s.intercept.0),
                num(s.intercept.1),
                num(s.exact_intercept),
                num(s.slope.0),
                num(s.slope.1),
                num(s.exact_slope),
            ]);
        }
        b.files.push(("nelson.csv".into(), csv.bytes()));
        if let Some(last) = check.steps.last() {
            b.summary.push(format!(
                "Nelson slope at h = {}: {:.5} ± {:.5} (a = {})",
                last.h, last.slope.0, last.slope.1, c.a
            ));
        }
    }
    b.plot = Some(
        "set datafile separator ','\nset logscale y\nset xlabel 't'\nset ylabel 'residual'\n\
         plot 'residuals.csv' using 1:($2 + 1e-18) with linespoints title 'embedding residual'\n"
            .into(),
    );
    Ok(b)
}

/// Verdicts of the two-atom model under all atoms and under `N_1` alone.
pub fn two_atom_verdicts(c: &CounterexampleConfig) -> Result<(Verdict, Verdict)> {
    let m = ModelSpec {
        kind: ModelKind::TwoAtom { f1: c.f1.clone(), f2: c.f2.clone(), var1: 1.0, var2: 1.0 },
        horizon: 1.0,
    }
    .validated()
    .context(|| "two-atom model".into())?;
    let p = Process::centered(m);
    let all = classify(&p, c.t, &ConditioningSpec::FullGenerators, &Default::default(), &Default::default())
        .context(|| "two-atom model, all atoms".into())?;
    let first = classify(&p, c.t, &ConditioningSpec::AtomSubset { indices: vec![0] }, &Default::default(), &Default::default())
        .context(|| "two-atom model, first atom".into())?;
    Ok((all, first))
}

/// Single-atom verdicts for the first `count` atoms of `model`.
pub fn atom_verdicts(model: &ModelSpec, t: f64, count: usize) -> Result<Vec<Verdict>> {
    let p = Process::centered(model.clone());
    (0..count)
        .map(|i| {
            classify(&p, t, &ConditioningSpec::AtomSubset { indices: vec![i] }, &Default::default(), &Default::default())
                .context(|| format!("atom {}", i + 1))
        })
        .collect()
}

/// `(N, Σ_{i≤N} (Δ_h f_i)²)` at powers of two up to `n`, and at `n`.
pub fn parseval_rows(model: &ModelSpec, n: usize, t: f64, h: f64) -> Result<Vec<(usize, f64)>> {
    let mut ns: Vec<usize> = std::iter::successors(Some(1usize), |k| Some(k * 2)).take_while(|&k| k < n).collect();
    ns.push(n);
    ns.into_iter()
        .map(|k| Ok((k, parseval_divergence(model, t, h, k).context(|| format!("Parseval sum at N = {k}"))?)))
        .collect()
}

fn counterexample(c: &CounterexampleConfig) -> Result<Bundle> {
    let model = ModelSpec::trigonometric_expansion(c.n, 1.0).context(|| "trigonometric expansion".into())?;
    let mut b = Bundle::default();
    let mut csv = Csv::new(&["n", "sum", "target", "relative_gap"]);
    let target = 1.0 / c.h;
    for (k, s) in parseval_rows(&model, c.n, c.t, c.h)? {
        csv.row(vec![k.to_string(), num(s), num(target), num((s - target) / target)]);
        if k == c.n {
            b.summary.push(format!("Parseval sum at N = {k}: {s:.6} vs 1/h = {target} ({:+.4}%)", 100.0 * (s - target) / target));
        }
    }
    b.files.push(("parseval.csv".into(), csv.bytes()));
    let verdicts = atom_verdicts(&model, c.t, c.atom_checks)?;
    let mut csv = Csv::new(&["atom", "verdict", "differentiates"]);
    let mut ok = 0;
    for (i, v) in verdicts.iter().enumerate() {
        ok += v.differentiates() as usize;
        csv.row(vec![(i + 1).to_string(), verdict_summary(v, 9), v.differentiates().to_string()]);
    }
    b.files.push(("atoms.csv".into(), csv.bytes()));
    b.summary.push(format!("{ok} of {} single-atom σ-fields differentiate", verdicts.len()));
    let (all, first) = two_atom_verdicts(c)?;
    let mut csv = Csv::new(&["conditioning", "verdict"]);
    csv.row(vec!["atoms".into(), verdict_summary(&all, 6)]);
    csv.row(vec!["atom_subset[1]".into(), verdict_summary(&first, 6)]);
    b.files.push(("two_atom.csv".into(), csv.bytes()));
    b.summary.push(format!("two-atom model: all atoms {}, first atom {}", verdict_summary(&all, 6), verdict_summary(&first, 6)));
    b.plot = Some(
        "set datafile separator ','\nset logscale x\nset xlabel 'N'\nset ylabel 'sum of squared quotients'\n\
         plot 'parseval.csv' using 1:2 with linespoints title 'partial sum', '' using 1:3 with lines title '1/h'\n"
            .into(),
    );
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_exercises_an_operation() {
        for kind in Kind::ALL {
            assert!(!coverage(kind).is_empty(), "{}", kind.name());
        }
    }

    #[test]
    fn rounding_for_display() {
        assert_eq!(rounded(1.399_999_999_7, 6), "1.4");
        assert_eq!(rounded(-0.5000000001, 6), "-0.5");
        assert_eq!(rounded(-1e-12, 6), "0");
    }

    #[test]
    fn classify_writes_the_summary_last() {
        let b = run(&ExperimentConfig::default_for(Kind::Classify)).unwrap();
        let text = String::from_utf8(b.file("verdict.csv").unwrap().to_vec()).unwrap();
        assert_eq!(text.lines().last().unwrap(), "\"Differentiates, coeff=1.4\"");
        assert!(text.starts_with("h,coefficients,constant,norm\n"));
    }

    #[test]
    fn export_truncates_and_keeps_weights() {
        let grid = TimeGrid::new(32, 1.0).unwrap();
        let b = sample_fbm_volterra(0.3, &grid, 10, &Sampling::new(1)).unwrap();
        let eta = vec![1.0; 10];
        let (name, bytes) = export(&b, Some(&eta), 3, Format::Csv).unwrap();
        assert_eq!(name, "paths.csv");
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().next().unwrap(), "path_id,t,W,B,Z,eta");
        assert_eq!(text.lines().count(), 1 + 3 * 33);
    }
}
