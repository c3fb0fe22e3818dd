//! Acceptance suite: every criterion runs with fixed seeds, failures are
//! collected rather than raised, and the report is a CSV.

use std::sync::Arc;
use std::time::Instant;

use gderiv_core::chaos::{
    embedding_residual, j_integral_samples, mc_verify_nelson, simplex_inner_product, solve_linear_embedding, Monomial,
    SimplexKernel,
};
use gderiv_core::derivative::{
    classify, projection_identity_residual, renormalized_limit, ConditioningSpec, Mode, Process, QuotientSchedule,
    Tolerances, VerdictKind,
};
use gderiv_core::gaussian::FirstChaosVariable;
use gderiv_core::models::{fbm_cov, kernel_covariance_quadrature, ModelSpec};
use gderiv_core::par::Exec;
use gderiv_core::simulation::{
    covariance_se, girsanov_weights, make_shifted, mc_stochastic_derivative, sample_fbm, sample_fbm_volterra,
    sample_wiener, write_csv, BatchColumns, DriftSpec, Estimator, McConditioning, Method, Sampling, TimeGrid,
    VolterraWeights, CHOLESKY_MAX_STEPS,
};

use crate::config::{CounterexampleConfig, SuiteConfig, CRITERIA};
use crate::error::{Context, Result};
use crate::experiments::{
    atom_verdicts, girsanov_checks, head, mc_csv, num, parseval_rows, two_atom_verdicts, verdict_summary, Bundle, Csv,
    COVARIANCE_HEADER,
};

const PROBES: [(f64, f64); 4] = [(0.25, 0.5), (0.5, 0.75), (0.75, 1.0), (0.25, 1.0)];

/// Monte Carlo tolerance in standard errors.
const Z_MAX: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        }
    }
}

/// Result of one criterion. `parts` lists the individual checks so that a
/// failure can be traced to the check that caused it.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub criterion: &'static str,
    pub status: Status,
    pub detail: String,
    pub parts: Vec<(String, bool)>,
    pub files: Vec<(String, Vec<u8>)>,
    pub seconds: Option<f64>,
    pub coverage: Vec<&'static str>,
}

impl Outcome {
    fn new(criterion: &'static str, coverage: &[&'static str]) -> Self {
        Self {
            criterion,
            status: Status::Pass,
            detail: String::new(),
            parts: Vec::new(),
            files: Vec::new(),
            seconds: None,
            coverage: coverage.to_vec(),
        }
    }

    fn skipped(criterion: &'static str, why: &str) -> Self {
        let mut o = Self::new(criterion, &[]);
        o.status = Status::Skip;
        o.detail = why.into();
        o
    }

    /// Records a check; the detail collects the failing ones, or all of them
    /// while everything passes.
    fn check(&mut self, name: impl Into<String>, ok: bool) {
        self.parts.push((name.into(), ok));
    }

    fn finish(mut self) -> Self {
        let failed: Vec<&str> = self.parts.iter().filter(|p| !p.1).map(|p| p.0.as_str()).collect();
        if failed.is_empty() {
            let all: Vec<&str> = self.parts.iter().map(|p| p.0.as_str()).collect();
            self.detail = all.join("; ");
        } else {
            self.status = Status::Fail;
            self.detail = failed.join("; ");
        }
        self
    }

    /// Turns an error inside a criterion into a failure with context.
    fn from_error(criterion: &'static str, e: crate::error::CliError) -> Self {
        let mut o = Self::new(criterion, &[]);
        o.check(format!("error: {e}"), false);
        o.finish()
    }
}

struct Ctx<'a> {
    cfg: &'a SuiteConfig,
    seed: u64,
}

impl Ctx<'_> {
    fn tol(&self, default: f64) -> f64 {
        self.cfg.tolerance_override.unwrap_or(default)
    }

    fn sampling(&self, stream: u64) -> Sampling {
        Sampling::new(self.seed).stream(stream)
    }

    fn methods(&self) -> Vec<Method> {
        let mut m = vec![Method::Cholesky];
        if !self.cfg.disable_circulant {
            m.push(Method::Circulant);
        }
        m.push(Method::Volterra);
        m
    }

    /// Sampler for the Monte Carlo criteria that need no Wiener increments.
    fn fast_method(&self) -> Method {
        if self.cfg.disable_circulant {
            Method::Volterra
        } else {
            Method::Circulant
        }
    }
}

fn fmt_e(x: f64) -> String {
    format!("{x:.3e}")
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}

fn fbm(h: f64, horizon: f64) -> Result<Process> {
    Ok(Process::centered(ModelSpec::fbm(h, horizon).context(|| format!("fBm model H = {h}"))?))
}

fn point(t: f64) -> FirstChaosVariable {
    FirstChaosVariable::point(t)
}

fn ac1(x: &Ctx) -> Result<Outcome> {
    let mut o = Outcome::new("AC1", &["derivative::classify"]);
    let p = fbm(0.7, 1.0)?;
    let spec = ConditioningSpec::span(vec![point(0.5)]);
    let schedule = QuotientSchedule::with_mode(Mode::TwoSided);
    let (v, secs) = timed(|| classify(&p, 0.5, &spec, &schedule, &Tolerances::default()));
    let v = v.context(|| "classify".into())?;
    o.seconds = Some(secs);
    let coeff = v.derivative().map(|d| d.coefficients.clone()).unwrap_or_default();
    let ok = matches!(v.kind, VerdictKind::Differentiates { .. }) && coeff.len() == 1;
    o.check(format!("verdict {}", verdict_summary(&v, 6)), ok);
    if ok {
        let err = (coeff[0] - 1.4).abs();
        o.check(format!("|coeff − 1.4| = {}", fmt_e(err)), err < x.tol(1e-6));
    }
    o.check("runtime under 0.1 s", secs < 0.1);
    o.files.push(("ac1_verdict.csv".into(), evidence_csv(&v)));
    Ok(o.finish())
}

fn evidence_csv(v: &gderiv_core::derivative::Verdict) -> Vec<u8> {
    let mut csv = Csv::new(&["h", "coefficients", "constant", "norm"]);
    for r in &v.evidence {
        let c: Vec<String> = r.coefficients.iter().map(|&x| num(x)).collect();
        csv.row(vec![num(r.h), c.join(";"), num(r.constant), num(r.norm)]);
    }
    csv.bytes()
}

fn ac2(x: &Ctx) -> Result<Outcome> {
    let mut o = Outcome::new("AC2", &["derivative::classify", "derivative::renormalized_limit"]);
    let p = fbm(0.3, 2.0)?;
    let spec = ConditioningSpec::span(vec![point(1.0)]);
    let schedule = QuotientSchedule::with_mode(Mode::Forward);
    let tol = Tolerances::default();
    let ((v, lim), secs) = timed(|| {
        let v = classify(&p, 1.0, &spec, &schedule, &tol);
        let lim = renormalized_limit(&p, 1.0, &spec, 0.6, &schedule, &tol);
        (v, lim)
    });
    let v = v.context(|| "classify".into())?;
    let lim = lim.context(|| "renormalized limit".into())?;
    o.seconds = Some(secs);
    match v.kind {
        VerdictKind::Diverges { slope, r_squared, .. } => {
            o.check(format!("Diverges, slope = {slope:.5}"), (slope + 0.4).abs() <= 0.02);
            o.check(format!("r2 = {r_squared:.6}"), r_squared > 0.99);
        }
        _ => o.check(format!("verdict {}", verdict_summary(&v, 6)), false),
    }
    match lim {
        Some(l) if l.coefficients.len() == 1 => {
            let err = (l.coefficients[0] + 0.5).abs();
            o.check(format!("renormalized limit {:.9}·B_1, |Δ| = {}", l.coefficients[0], fmt_e(err)), err < x.tol(1e-6));
        }
        _ => o.check("renormalized limit missing", false),
    }
    o.check("runtime under 0.1 s", secs < 0.1);
    o.files.push(("ac2_quotients.csv".into(), evidence_csv(&v)));
    Ok(o.finish())
}

fn ac3(x: &Ctx) -> Result<Outcome> {
    let mut o = Outcome::new("AC3", &["derivative::projection_identity_residual"]);
    let cases: [(f64, f64, [f64; 2], f64); 2] = [(0.7, 0.5, [0.3, 0.8], 0.3), (0.3, 0.5, [0.2, 0.9], 0.9)];
    let mut csv = Csv::new(&["hurst", "t", "big", "sub", "residual"]);
    for (h, t, big, sub) in cases {
        let p = fbm(h, 1.0)?;
        let r = projection_identity_residual(&p, t, &[point(big[0]), point(big[1])], &[point(sub)])
            .context(|| format!("projection identity at H = {h}"))?;
        o.check(format!("H = {h}: residual {}", fmt_e(r)), r < x.tol(1e-9));
        csv.row(vec![num(h), num(t), format!("{};{}", big[0], big[1]), num(sub), num(r)]);
    }
    o.files.push(("ac3_projection.csv".into(), csv.bytes()));
    Ok(o.finish())
}

fn ac4(x: &Ctx) -> Result<Outcome> {
    let mut o = Outcome::new("AC4", &["derivative::classify"]);
    let p = fbm(0.3, 2.0)?;
    let spec = ConditioningSpec::EvenFunctionOf { var: point(1.0) };
    let v = classify(&p, 1.0, &spec, &QuotientSchedule::default(), &Tolerances::default()).context(|| "classify".into())?;
    match v.kind {
        VerdictKind::Degenerates { constant } => {
            o.check(format!("Degenerates, |constant| = {}", fmt_e(constant.abs())), constant.abs() < x.tol(1e-10))
        }
        _ => o.check(format!("verdict {}", verdict_summary(&v, 6)), false),
    }
    Ok(o.finish())
}

fn ac5(x: &Ctx) -> Result<Outcome> {
    let mut o = Outcome::new("AC5", &["models::kernel_covariance_quadrature", "models::fbm_cov"]);
    let grid = [0.2, 0.4, 0.6, 0.8, 1.0];
    let mut csv = Csv::new(&["hurst", "s", "t", "kernel", "cov", "abs_error"]);
    let (res, secs) = timed(|| -> Result<Vec<(f64, f64)>> {
        let mut worst = Vec::new();
        for h in [0.3, 0.5, 0.7] {
            let mut w: f64 = 0.0;
            for s in grid {
                for t in grid {
                    let k = kernel_covariance_quadrature(h, s, t).context(|| format!("kernel identity H = {h}"))?;
                    let r = fbm_cov(h, s, t).context(|| "fbm covariance".into())?;
                    w = w.max((k - r).abs());
                    csv.row(vec![num(h), num(s), num(t), num(k), num(r), num((k - r).abs())]);
                }
            }
            worst.push((h, w));
        }
        Ok(worst)
    });
    for (h, w) in res? {
        o.check(format!("H = {h}: max error {}", fmt_e(w)), w < x.tol(1e-3));
    }
    o.seconds = Some(secs);
    o.check("runtime under 30 s", secs < 30.0);
    o.files.push(("ac5_kernel.csv".into(), csv.bytes()));
    Ok(o.finish())
}

fn ac6(x: &Ctx) -> Result<Outcome> {
    let mut o = Outcome::new("AC6", &["simulation::sample_fbm", "simulation::VolterraWeights::projection_bias"]);
    let grid = TimeGrid::new(64, 1.0).context(|| "grid".into())?;
    let mut csv = Csv::new(&COVARIANCE_HEADER);
    for (k, method) in x.methods().into_iter().enumerate() {
        for (j, h) in [0.3, 0.7].into_iter().enumerate() {
            let b = sample_fbm(h, &grid, x.cfg.paths, &x.sampling(60 + (2 * k + j) as u64), method)
                .context(|| format!("{} sampler H = {h}", method.name()))?;
            let mut worst: f64 = 0.0;
            for (s, t) in PROBES {
                let is = grid.index_of(s).context(|| "probe".into())?;
                let it = grid.index_of(t).context(|| "probe".into())?;
                let (c, se) = covariance_se(&b.column(is), &b.column(it));
                let want = fbm_cov(h, s, t).context(|| "fbm covariance".into())?;
                let z = (c - want) / se;
                worst = worst.max(z.abs());
                csv.row(vec![method.name().into(), num(h), num(s), num(t), num(c), num(se), num(want), num(z)]);
            }
            o.check(format!("{} H = {h}: max |z| = {worst:.2}", method.name()), worst <= Z_MAX);
        }
    }
    let fine = TimeGrid::new(256, 1.0).context(|| "grid".into())?;
    let coarse = TimeGrid::new(512, 1.0).context(|| "grid".into())?;
    for h in [0.3, 0.7] {
        let bias = |g: &TimeGrid| -> Result<f64> {
            VolterraWeights::new(h, g, Exec::default())
                .and_then(|w| w.projection_bias(&PROBES))
                .context(|| format!("Volterra weights H = {h}"))
        };
        let (b256, b512) = (bias(&fine)?, bias(&coarse)?);
        o.check(format!("volterra H = {h}: bias {} at n = 256", fmt_e(b256)), b256 < 0.01);
        o.check(format!("volterra H = {h}: bias {} at n = 512", fmt_e(b512)), b512 < b256);
    }
    o.files.push(("ac6_covariance.csv".into(), csv.bytes()));
    Ok(o.finish())
}

fn ac7(x: &Ctx) -> Result<Outcome> {
    if x.cfg.disable_circulant {
        return Ok(Outcome::skipped("AC7", "circulant sampler disabled"));
    }
    let mut o = Outcome::new("AC7", &["simulation::sample_fbm"]);
    let steps = 1 << 20;
    let grid = TimeGrid::new(steps, 1.0).context(|| "grid".into())?;
    let s = x.sampling(70).exec(Exec::Sequential);
    let (b, secs) = timed(|| sample_fbm(0.7, &grid, 1, &s, Method::Circulant));
    let b = b.context(|| "circulant sampler".into())?;
    o.seconds = Some(secs);
    o.check(format!("circulant path with {} nodes", b.grid.nodes()), b.values.iter().all(|v| v.is_finite()));
    o.check("single-threaded generation under 1 s", secs < 1.0);
    let big = TimeGrid::new(CHOLESKY_MAX_STEPS + 1, 1.0).context(|| "grid".into())?;
    let rejected = matches!(
        sample_fbm(0.7, &big, 1, &s, Method::Cholesky),
        Err(gderiv_core::Error::Unsupported(_))
    );
    o.check(format!("cholesky rejects {} steps", CHOLESKY_MAX_STEPS + 1), rejected);
    Ok(o.finish())
}

fn ac8(x: &Ctx) -> Result<Outcome> {
    let mut o = Outcome::new(
        "AC8",
        &["simulation::sample_fbm_volterra", "simulation::make_shifted", "simulation::girsanov_weights"],
    );
    let grid = TimeGrid::new(64, 1.0).context(|| "grid".into())?;
    let mut csv = Csv::new(&["hurst", "quantity", "estimate", "se", "target", "z"]);
    for (j, h) in [0.3, 0.7].into_iter().enumerate() {
        let drift = DriftSpec::constant(h, 1.0, 1.0).context(|| "drift".into())?;
        let b = sample_fbm_volterra(h, &grid, x.cfg.paths, &x.sampling(80 + j as u64)).context(|| "sampler".into())?;
        let z = make_shifted(b, &drift, 0.0).context(|| "shift".into())?;
        let eta = girsanov_weights(&z, &drift, Exec::default()).context(|| "weights".into())?;
        for c in girsanov_checks(&z, &eta, h, 0.0, 0.25, 0.75)? {
            let zs = c.z();
            let ok = if c.name == "unweighted_second_moment" { zs.abs() > Z_MAX } else { zs.abs() <= Z_MAX };
            o.check(format!("H = {h} {}: z = {zs:.2}", c.name), ok);
            csv.row(vec![num(h), c.name.into(), num(c.estimate), num(c.se), num(c.target), num(zs)]);
        }
    }
    o.files.push(("ac8_girsanov.csv".into(), csv.bytes()));
    Ok(o.finish())
}

fn shifted_setup(x: &Ctx, h: f64, steps: usize, horizon: f64, stream: u64) -> Result<(Process, gderiv_core::simulation::PathBatch)> {
    let drift = DriftSpec::constant(h, 1.0, horizon).context(|| "drift".into())?;
    let grid = TimeGrid::new(steps, horizon).context(|| "grid".into())?;
    let b = sample_fbm(h, &grid, x.cfg.paths, &x.sampling(stream), x.fast_method()).context(|| "sampler".into())?;
    let z = make_shifted(b, &drift, 0.0).context(|| "shift".into())?;
    let model = ModelSpec::fbm(h, horizon).context(|| "model".into())?;
    Ok((Process::shifted(model, 0.0, Arc::new(drift)), z))
}

fn ac9(x: &Ctx) -> Result<Outcome> {
    let mut o = Outcome::new("AC9", &["simulation::mc_stochastic_derivative", "derivative::difference_quotient"]);
    // The finite-step quotient converges like h^{2H−1}; on this grid the
    // change between successive steps is below the Monte Carlo resolution.
    let (p, z) = shifted_setup(x, 0.7, 512, 1.0, 90)?;
    let r = mc_stochastic_derivative(&p, &z, 0.5, McConditioning::Value { s: 0.5 }, &[4, 2, 1], 1.0, Estimator::Linear)
        .context(|| "Monte Carlo derivative".into())?;
    o.check(format!("stabilized, max spread {:.2} SE", r.max_spread_z), r.stabilized);
    for step in &r.steps {
        let worst = step
            .estimates
            .iter()
            .zip(&step.exact)
            .map(|(e, ex)| ((e.value - ex) / e.se).abs())
            .fold(0.0, f64::max);
        o.check(format!("h = {}: max |z| vs exact = {worst:.2}", step.h), worst <= Z_MAX);
    }
    o.files.push(("ac9_mc.csv".into(), mc_csv(&r).bytes()));
    Ok(o.finish())
}

fn ac10(x: &Ctx) -> Result<Outcome> {
    let mut o = Outcome::new("AC10", &["simulation::mc_stochastic_derivative", "simulation::DriftSpec::mu"]);
    let (p, z) = shifted_setup(x, 0.3, 512, 2.0, 100)?;
    let r = mc_stochastic_derivative(
        &p,
        &z,
        1.0,
        McConditioning::AbsCentered { s: 1.0 },
        &[32, 16, 8, 4, 2],
        1.0,
        Estimator::Linear,
    )
    .context(|| "Monte Carlo derivative".into())?;
    let mu = p.mean_slope(1.0);
    o.check(format!("stabilized, max spread {:.2} SE", r.max_spread_z), r.stabilized);
    // The stabilization window: the three smallest steps.
    for step in r.steps.iter().rev().take(3) {
        let worst = step.estimates.iter().map(|e| ((e.value - mu) / e.se).abs()).fold(0.0, f64::max);
        o.check(format!("h = {}: max |z| vs mu = {worst:.2}", step.h), worst <= Z_MAX);
    }
    let mut csv = mc_csv(&r);
    csv.row(vec!["mu".into(), String::new(), String::new(), String::new(), num(mu)]);
    o.files.push(("ac10_mc.csv".into(), csv.bytes()));
    Ok(o.finish())
}

fn ac11(x: &Ctx) -> Result<Outcome> {
    let mut o = Outcome::new("AC11", &["derivative::parseval_divergence", "derivative::classify"]);
    let c = CounterexampleConfig::default();
    let model = ModelSpec::trigonometric_expansion(c.n, 1.0).context(|| "trigonometric expansion".into())?;
    let rows = parseval_rows(&model, c.n, c.t, c.h)?;
    let target = 1.0 / c.h;
    let mut csv = Csv::new(&["n", "sum", "target", "relative_gap"]);
    for &(k, s) in &rows {
        csv.row(vec![k.to_string(), num(s), num(target), num((s - target) / target)]);
    }
    let (_, sum) = *rows.last().expect("at least one row");
    let gap = (sum - target).abs() / target;
    o.check(format!("Parseval sum {sum:.4} at N = {} is {:.3}% from {target}", c.n, 100.0 * gap), gap <= 0.01);
    let verdicts = atom_verdicts(&model, c.t, c.n)?;
    let ok = verdicts.iter().filter(|v| v.differentiates()).count();
    o.check(format!("{ok} of {} single atoms differentiate", c.n), ok == c.n);
    let (all, first) = two_atom_verdicts(&c)?;
    o.check(format!("two-atom, all atoms: {}", verdict_summary(&all, 6)), matches!(all.kind, VerdictKind::Diverges { .. }));
    let want = c.f1.derivative(c.t, gderiv_core::gaussian::Side::TwoSided).value();
    let got = first.derivative().map(|d| d.coefficients.clone()).unwrap_or_default();
    let ok = match (want, got.as_slice()) {
        (Some(w), [g]) => matches!(first.kind, VerdictKind::Differentiates { .. }) && (g - w).abs() < x.tol(1e-6),
        _ => false,
    };
    o.check(format!("two-atom, first atom: {}", verdict_summary(&first, 6)), ok);
    o.files.push(("ac11_parseval.csv".into(), csv.bytes()));
    Ok(o.finish())
}

fn ac12(x: &Ctx) -> Result<Outcome> {
    let mut o = Outcome::new(
        "AC12",
        &[
            "chaos::solve_linear_embedding",
            "chaos::embedding_residual",
            "chaos::mc_verify_nelson",
            "chaos::j_integral_samples",
        ],
    );
    let families: [(f64, f64, &[f64]); 4] = [
        (1.0, 0.5, &[1.0, 0.5]),
        (-0.7, 0.2, &[0.3, -1.0, 0.5]),
        (0.0, 1.0, &[2.0, 1.0, 0.5, 0.25]),
        (2.0, -1.0, &[0.5, 0.1, 0.2, 0.3]),
    ];
    let mut csv = Csv::new(&["a", "b", "t", "residual"]);
    let mut worst: f64 = 0.0;
    for (a, b, c) in families {
        let xp = solve_linear_embedding(a, b, c).context(|| "embedded equation".into())?;
        for k in 1..=16 {
            let t = k as f64 / 16.0;
            let r = embedding_residual(&xp, a, b, t).context(|| format!("residual at t = {t}"))?;
            worst = worst.max(r);
            csv.row(vec![num(a), num(b), num(t), num(r)]);
        }
    }
    o.check(format!("max embedding residual {}", fmt_e(worst)), worst < x.tol(1e-10));
    o.files.push(("ac12_residuals.csv".into(), csv.bytes()));

    let xp = solve_linear_embedding(1.0, 0.5, &[1.0, 0.5]).context(|| "embedded equation".into())?;
    let grid = TimeGrid::new(256, 1.0).context(|| "grid".into())?;
    let w = sample_wiener(&grid, x.cfg.paths, &x.sampling(120)).context(|| "Wiener sampler".into())?;
    let check = mc_verify_nelson(&xp, 0.5, &[16, 8, 4, 2, 1], &w).context(|| "Nelson regression".into())?;
    let mut ncsv = Csv::new(&["h", "slope", "slope_se", "exact_slope"]);
    for s in &check.steps {
        ncsv.row(vec![num(s.h), num(s.slope.0), num(s.slope.1), num(s.exact_slope)]);
    }
    let last = check.steps.last().expect("nonempty schedule");
    let z = (last.slope.0 - 1.0) / last.slope.1;
    o.check(format!("Nelson slope {:.4} ± {:.4} at h = {}: z = {z:.2}", last.slope.0, last.slope.1, last.h), z.abs() <= Z_MAX);
    o.files.push(("ac12_nelson.csv".into(), ncsv.bytes()));

    // Iterated integrals: the general index-chain path costs O(steps^n) per
    // path, so this part uses a coarser grid and fewer paths.
    let grid = TimeGrid::new(48, 1.0).context(|| "grid".into())?;
    let w = sample_wiener(&grid, x.cfg.paths.min(30_000), &x.sampling(121)).context(|| "Wiener sampler".into())?;
    let poly = SimplexKernel::Polynomial(vec![Monomial::new(1.0, vec![1, 0, 0]), Monomial::new(-0.5, vec![0, 1, 0])]);
    let kernels = [SimplexKernel::Constant(1.0), poly];
    let mut ccsv = Csv::new(&["order_a", "order_b", "kernel", "estimate", "se", "target", "z"]);
    let mut plain = Vec::new();
    for n in 1..=3 {
        for (ki, g) in kernels.iter().enumerate() {
            let j = j_integral_samples(n, g, &w).context(|| format!("J_{n}"))?;
            let want = simplex_inner_product(g, g, n, 1.0).context(|| format!("isometry order {n}"))?;
            let (v, se) = covariance_se(&j, &j);
            let z = (v - want) / se;
            let kname = if ki == 0 { "constant" } else { "polynomial" };
            o.check(format!("isometry order {n} {kname}: z = {z:.2}"), z.abs() <= Z_MAX);
            ccsv.row(vec![n.to_string(), n.to_string(), kname.into(), num(v), num(se), num(want), num(z)]);
            if ki == 0 {
                plain.push(j);
            }
        }
    }
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let (c, se) = covariance_se(&plain[a], &plain[b]);
        let z = c / se;
        o.check(format!("orthogonality orders {},{}: z = {z:.2}", a + 1, b + 1), z.abs() <= Z_MAX);
        ccsv.row(vec![(a + 1).to_string(), (b + 1).to_string(), "constant".into(), num(c), num(se), "0".into(), num(z)]);
    }
    o.files.push(("ac12_chaos.csv".into(), ccsv.bytes()));
    Ok(o.finish())
}

/// Seeded generators run twice must give the same bytes.
fn ac13(x: &Ctx) -> Result<Outcome> {
    let mut o = Outcome::new("AC13", &["simulation::sample_fbm", "simulation::write_csv"]);
    let grid = TimeGrid::new(64, 1.0).context(|| "grid".into())?;
    let render = |method: Method, exec: Exec| -> Result<Vec<u8>> {
        let b = sample_fbm(0.3, &grid, 200, &x.sampling(130).exec(exec), method).context(|| "sampler".into())?;
        let cols = BatchColumns::from_batch(&head(&b, 200), None).context(|| "export".into())?;
        let mut bytes = Vec::new();
        write_csv(&mut bytes, &cols).context(|| "export".into())?;
        Ok(bytes)
    };
    for method in x.methods() {
        let a = render(method, Exec::Parallel)?;
        let b = render(method, Exec::Sequential)?;
        o.check(format!("{} paths byte-identical across reruns", method.name()), a == b);
    }
    Ok(o.finish())
}

type Criterion = fn(&Ctx) -> Result<Outcome>;

const TABLE: [(&str, Criterion, bool); 13] = [
    ("AC1", ac1, true),
    ("AC2", ac2, true),
    ("AC3", ac3, false),
    ("AC4", ac4, false),
    ("AC5", ac5, true),
    ("AC6", ac6, false),
    ("AC7", ac7, true),
    ("AC8", ac8, false),
    ("AC9", ac9, false),
    ("AC10", ac10, false),
    ("AC11", ac11, false),
    ("AC12", ac12, false),
    ("AC13", ac13, false),
];

fn run_one(x: &Ctx, name: &'static str, f: Criterion) -> Outcome {
    if !x.cfg.selected(name) {
        return Outcome::skipped(name, "not selected");
    }
    f(x).unwrap_or_else(|e| Outcome::from_error(name, e))
}

/// Runs the selected criteria. Untimed criteria run concurrently when the
/// config asks for it; timed ones always run alone afterwards.
pub fn run_criteria(cfg: &SuiteConfig, seed: u64) -> Vec<Outcome> {
    let x = Ctx { cfg, seed };
    let mut out: Vec<Option<Outcome>> = vec![None; TABLE.len()];
    let untimed: Vec<usize> = (0..TABLE.len()).filter(|&i| !TABLE[i].2).collect();
    let results: Vec<(usize, Outcome)> = if cfg.parallel && cfg!(feature = "parallel") {
        par_map(&untimed, |&i| (i, run_one(&x, TABLE[i].0, TABLE[i].1)))
    } else {
        untimed.iter().map(|&i| (i, run_one(&x, TABLE[i].0, TABLE[i].1))).collect()
    };
    for (i, o) in results {
        out[i] = Some(o);
    }
    for (i, (name, f, timed)) in TABLE.iter().enumerate() {
        if *timed {
            out[i] = Some(run_one(&x, name, *f));
        }
    }
    debug_assert!(TABLE.iter().map(|t| t.0).eq(CRITERIA));
    out.into_iter().map(|o| o.expect("every criterion ran")).collect()
}

#[cfg(feature = "parallel")]
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.iter().map(f).collect()
}

/// `criterion,status,detail`; timings are kept out so the file is
/// reproducible.
pub fn report_csv(outcomes: &[Outcome]) -> Vec<u8> {
    let mut csv = Csv::new(&["criterion", "status", "detail"]);
    for o in outcomes {
        csv.row(vec![o.criterion.into(), o.status.name().into(), o.detail.clone()]);
    }
    csv.bytes()
}

pub fn report_line(o: &Outcome) -> String {
    format!("{} {} {}", o.criterion, o.status.name(), o.detail)
}

const PLOT: &str = "set datafile separator ','\n\
set key autotitle columnhead\n\
set logscale xy\n\
set xlabel '|h|'\n\
set ylabel 'quotient norm'\n\
plot 'ac1_verdict.csv' using (abs($1)):4 with linespoints title 'H = 0.7, span{B_0.5}', \\\n\
     'ac2_quotients.csv' using (abs($1)):4 with linespoints title 'H = 0.3, span{B_1}'\n\
pause -1\n\
unset logscale\n\
set logscale x\n\
set xlabel 'N'\n\
set ylabel 'partial sum'\n\
plot 'ac11_parseval.csv' using 1:2 with linespoints title 'sum', '' using 1:3 with lines title '1/h'\n";

/// The paper-suite experiment: report plus every criterion's data files.
pub fn run(cfg: &SuiteConfig, seed: u64) -> Result<Bundle> {
    Ok(bundle(run_criteria(cfg, seed)))
}

pub fn bundle(outcomes: Vec<Outcome>) -> Bundle {
    let mut b = Bundle::default();
    b.files.push(("report.csv".into(), report_csv(&outcomes)));
    for o in outcomes {
        b.summary.push(report_line(&o));
        if o.status == Status::Fail {
            b.failed.push(o.criterion.into());
        }
        if let Some(s) = o.seconds {
            b.timings.insert(o.criterion.into(), s);
        }
        if !o.coverage.is_empty() {
            b.coverage.insert(o.criterion.into(), o.coverage);
        }
        b.files.extend(o.files);
    }
    b.plot = Some(PLOT.into());
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn only(list: &[&str]) -> SuiteConfig {
        SuiteConfig { criteria: Some(list.iter().map(|s| s.to_string()).collect()), ..SuiteConfig::default() }
    }

    #[test]
    fn exact_criteria_pass() {
        let out = run_criteria(&only(&["AC1", "AC2", "AC3", "AC4"]), 1);
        for o in &out[..4] {
            assert_eq!(o.status, Status::Pass, "{}", report_line(o));
        }
        assert!(out[4..].iter().all(|o| o.status == Status::Skip));
    }

    #[test]
    fn tampered_tolerance_fails_with_a_reason() {
        let cfg = SuiteConfig { tolerance_override: Some(1e-30), ..only(&["AC1", "AC4"]) };
        let out = run_criteria(&cfg, 1);
        assert_eq!(out[0].status, Status::Fail);
        assert!(out[0].detail.contains("|coeff − 1.4|"), "{}", out[0].detail);
        let report = String::from_utf8(report_csv(&out)).unwrap();
        assert!(report.starts_with("criterion,status,detail\nAC1,FAIL,"), "{report}");
    }

    #[test]
    fn disabled_circulant_skips_performance() {
        let cfg = SuiteConfig { disable_circulant: true, ..only(&["AC7", "AC13"]) };
        let out = run_criteria(&cfg, 1);
        assert_eq!(out[6].status, Status::Skip);
        assert_eq!(out[12].status, Status::Pass, "{}", report_line(&out[12]));
        assert!(!out[12].detail.contains("circulant"));
    }
}
