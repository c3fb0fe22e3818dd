//! Conditional difference quotients `E[(Z_{t+h} − Z_t)/h | 𝒢]`, their
//! limits, and the classification of conditioning σ-fields.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gaussian::{
    project_affine, AffineCombination, Basis, CovarianceOracle, FirstChaosVariable, GramSystem,
    PartialDerivative, Side,
};
use crate::models::{MeanPath, ModelKind, ModelOracle, ModelSpec};

/// A Gaussian model together with an optional deterministic mean path.
#[derive(Debug, Clone)]
pub struct Process {
    inner: Arc<ModelOracle>,
}

impl Process {
    pub fn centered(model: ModelSpec) -> Self {
        Self { inner: Arc::new(ModelOracle::new(model)) }
    }

    /// `Z_t = x0 + B_t + m(t)`.
    pub fn shifted(model: ModelSpec, x0: f64, mean: Arc<dyn MeanPath>) -> Self {
        Self { inner: Arc::new(ModelOracle::shifted(model, x0, mean)) }
    }

    pub fn model(&self) -> &ModelSpec {
        self.inner.model()
    }

    pub fn horizon(&self) -> f64 {
        self.inner.model().horizon
    }

    pub fn oracle(&self) -> Arc<dyn CovarianceOracle> {
        self.inner.clone()
    }

    pub fn mean(&self, t: f64) -> f64 {
        self.inner.mean(t)
    }

    pub fn mean_slope(&self, t: f64) -> f64 {
        self.inner.mean_slope(t)
    }

    /// `Z_t` as a first-chaos variable (offset = mean).
    pub fn value(&self, t: f64) -> FirstChaosVariable {
        FirstChaosVariable::value_of(self.inner.as_ref(), t)
    }

    /// `Σ w_j Z_{t_j}`.
    pub fn combination(&self, terms: &[(f64, f64)]) -> Result<FirstChaosVariable> {
        FirstChaosVariable::of_process(self.inner.as_ref(), terms)
    }
}

impl From<ModelSpec> for Process {
    fn from(model: ModelSpec) -> Self {
        Self::centered(model)
    }
}

/// Pointwise maps for conditioning on `σ{f(Y)}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointwiseMap {
    Identity,
    Abs,
    Square,
    Cube,
    Sign,
}

impl PointwiseMap {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            PointwiseMap::Identity => x,
            PointwiseMap::Abs => x.abs(),
            PointwiseMap::Square => x * x,
            PointwiseMap::Cube => x * x * x,
            PointwiseMap::Sign => x.signum(),
        }
    }

    pub fn is_even(self) -> bool {
        matches!(self, PointwiseMap::Abs | PointwiseMap::Square)
    }
}

/// Description of a conditioning σ-field.
#[derive(Debug, Clone)]
pub enum ConditioningSpec {
    /// `σ{Y_1, …, Y_n}` for first-chaos variables.
    LinearSpan { vars: Vec<FirstChaosVariable> },
    /// `σ{f(Y)}` for some even `f`; only the evenness is used.
    EvenFunctionOf { var: FirstChaosVariable },
    /// `σ{f(Y)}` for a general map; Monte Carlo only.
    MeasurableFunctionOf { var: FirstChaosVariable, map: PointwiseMap },
    /// `σ{N_1, …, N_n}` of a finite-atom model.
    FullGenerators,
    /// `σ{N_i : i ∈ indices}` of a finite-atom model (0-based indices).
    AtomSubset { indices: Vec<usize> },
}

impl ConditioningSpec {
    pub fn span(vars: Vec<FirstChaosVariable>) -> Self {
        ConditioningSpec::LinearSpan { vars }
    }

    pub fn describe(&self) -> String {
        match self {
            ConditioningSpec::LinearSpan { vars } => {
                let l: Vec<String> = vars.iter().map(FirstChaosVariable::label).collect();
                format!("span{{{}}}", l.join(", "))
            }
            ConditioningSpec::EvenFunctionOf { var } => format!("even({})", var.label()),
            ConditioningSpec::MeasurableFunctionOf { var, map } => format!("{map:?}({})", var.label()),
            ConditioningSpec::FullGenerators => "atoms".into(),
            ConditioningSpec::AtomSubset { indices } => format!("atoms{indices:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Forward,
    Backward,
    #[default]
    TwoSided,
}

/// Geometric schedule `h_k = h0·ratio^k`, `k = 0..steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuotientSchedule {
    /// `t/16` when absent.
    #[serde(default)]
    pub h0: Option<f64>,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub mode: Mode,
}

fn default_ratio() -> f64 {
    0.5
}

fn default_steps() -> usize {
    20
}

impl Default for QuotientSchedule {
    fn default() -> Self {
        Self { h0: None, ratio: 0.5, steps: 20, mode: Mode::TwoSided }
    }
}

impl QuotientSchedule {
    pub fn with_mode(mode: Mode) -> Self {
        Self { mode, ..Self::default() }
    }

    /// Step sizes (positive) at `t`, after validation against the horizon.
    pub fn steps_at(&self, t: f64, horizon: f64) -> Result<Vec<f64>> {
        let h0 = self.h0.unwrap_or(t / 16.0);
        if !(h0 > 0.0 && h0.is_finite()) {
            return Err(domain(format!("h0 must be positive, got {h0}")));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(domain(format!("ratio must lie in (0, 1), got {}", self.ratio)));
        }
        if self.steps < 8 {
            return Err(domain(format!("schedule needs at least 8 steps, got {}", self.steps)));
        }
        if !(t > 0.0 && t < horizon) {
            return Err(domain(format!("t = {t} must lie in (0, {horizon})")));
        }
        let forward = matches!(self.mode, Mode::Forward | Mode::TwoSided);
        let backward = matches!(self.mode, Mode::Backward | Mode::TwoSided);
        if forward && !(t + h0 < horizon) {
            return Err(domain(format!("t + h0 = {} leaves (0, {horizon})", t + h0)));
        }
        if backward && !(t - h0 > 0.0) {
            return Err(domain(format!("t − h0 = {} leaves (0, {horizon})", t - h0)));
        }
        Ok((0..self.steps).map(|k| h0 * self.ratio.powi(k as i32)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative L² change allowed across the Cauchy window.
    pub cauchy_rel: f64,
    pub cauchy_window: usize,
    pub degenerate_variance: f64,
    pub r_squared_min: f64,
    pub slope_min: f64,
    pub monotone_min: usize,
    pub side_agreement: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            cauchy_rel: 1e-6,
            cauchy_window: 5,
            degenerate_variance: 1e-10,
            r_squared_min: 0.99,
            slope_min: 0.05,
            monotone_min: 10,
            side_agreement: 1e-6,
        }
    }
}

/// One step of the quotient path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceRow {
    /// Signed step: negative for backward quotients.
    pub h: f64,
    pub coefficients: Vec<f64>,
    pub constant: f64,
    pub norm: f64,
}

#[derive(Debug, Clone)]
pub struct Renormalized {
    pub alpha: f64,
    pub limit: AffineCombination,
}

#[derive(Debug, Clone)]
pub enum VerdictKind {
    Differentiates { derivative: AffineCombination, norm: f64 },
    Degenerates { constant: f64 },
    Diverges { slope: f64, intercept: f64, r_squared: f64, renormalized: Option<Renormalized> },
    Inconclusive { reason: String, forward: Option<Box<Verdict>>, backward: Option<Box<Verdict>> },
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub labels: Vec<String>,
    pub evidence: Vec<EvidenceRow>,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self.kind {
            VerdictKind::Differentiates { .. } => "Differentiates",
            VerdictKind::Degenerates { .. } => "Degenerates",
            VerdictKind::Diverges { .. } => "Diverges",
            VerdictKind::Inconclusive { .. } => "Inconclusive",
        }
    }

    /// True for differentiating σ-fields, degenerate ones included.
    pub fn differentiates(&self) -> bool {
        matches!(self.kind, VerdictKind::Differentiates { .. } | VerdictKind::Degenerates { .. })
    }

    pub fn derivative(&self) -> Option<AffineCombination> {
        match &self.kind {
            VerdictKind::Differentiates { derivative, .. } => Some(derivative.clone()),
            VerdictKind::Degenerates { constant } => Some(AffineCombination::constant_only(*constant)),
            _ => None,
        }
    }

    /// One-line summary, e.g. `Differentiates, coeff=1.4`.
    pub fn summary(&self) -> String {
        match &self.kind {
            VerdictKind::Differentiates { derivative, .. } => {
                let c: Vec<String> = derivative.coefficients.iter().map(|c| format!("{c}")).collect();
                if derivative.constant == 0.0 {
                    format!("Differentiates, coeff={}", c.join(";"))
                } else {
                    format!("Differentiates, coeff={}, constant={}", c.join(";"), derivative.constant)
                }
            }
            VerdictKind::Degenerates { constant } => format!("Degenerates, constant={constant}"),
            VerdictKind::Diverges { slope, r_squared, renormalized, .. } => {
                let mut s = format!("Diverges, slope={slope}, r2={r_squared}");
                if let Some(r) = renormalized {
                    let c: Vec<String> = r.limit.coefficients.iter().map(|c| format!("{c}")).collect();
                    s.push_str(&format!(", alpha={}, limit={}", r.alpha, c.join(";")));
                }
                s
            }
            VerdictKind::Inconclusive { reason, .. } => format!("Inconclusive, {reason}"),
        }
    }
}

/// Conditioning target prepared once and reused across step sizes.
enum Prepared {
    Span(GramSystem),
    Deterministic,
    Atoms { basis: Arc<Basis>, atoms: Vec<(crate::models::BasisFunction, f64)>, indices: Vec<usize> },
}

fn prepare(process: &Process, spec: &ConditioningSpec) -> Result<Prepared> {
    match spec {
        ConditioningSpec::LinearSpan { vars } => {
            Ok(Prepared::Span(GramSystem::new(vars.clone(), process.oracle())?))
        }
        ConditioningSpec::EvenFunctionOf { .. } => Ok(Prepared::Deterministic),
        ConditioningSpec::MeasurableFunctionOf { .. } => Err(Error::Unsupported(
            "general measurable conditioning needs the Monte Carlo estimators".into(),
        )),
        ConditioningSpec::FullGenerators | ConditioningSpec::AtomSubset { .. } => {
            let atoms = process.model().atoms().ok_or_else(|| {
                Error::Unsupported("atom conditioning needs a finite-atom model".into())
            })?;
            let indices = match spec {
                ConditioningSpec::AtomSubset { indices } => {
                    if let Some(&bad) = indices.iter().find(|&&i| i >= atoms.len()) {
                        return Err(domain(format!("atom index {bad} out of range (model has {})", atoms.len())));
                    }
                    indices.clone()
                }
                _ => (0..atoms.len()).collect(),
            };
            let labels = indices.iter().map(|i| format!("N{}", i + 1)).collect();
            let variances: Vec<f64> = indices.iter().map(|&i| atoms[i].1).collect();
            Ok(Prepared::Atoms { basis: Basis::atoms(labels, &variances), atoms, indices })
        }
    }
}

fn quotient_prepared(process: &Process, prepared: &Prepared, t: f64, h: f64) -> Result<AffineCombination> {
    let oracle = process.oracle();
    let drift = oracle.mean_increment(t, h) / h;
    match prepared {
        Prepared::Span(span) => {
            // Same as regressing Z_{t+h} − Z_t, with the covariance increments
            // taken from the model to avoid cancellation at small h.
            let rhs: Vec<f64> = span
                .variables()
                .iter()
                .map(|y| y.terms().iter().map(|&(s, w)| w * oracle.cov_increment(t, h, s)).sum::<f64>() / h)
                .collect();
            let c = span.solve(&DVector::from_vec(rhs))?;
            let shift: f64 = c.iter().zip(span.basis().means()).map(|(c, m)| c * m).sum();
            Ok(AffineCombination::new(span.basis().clone(), c.iter().copied().collect(), drift - shift))
        }
        Prepared::Deterministic => Ok(AffineCombination::constant_only(drift)),
        Prepared::Atoms { basis, atoms, indices } => {
            let coefficients = indices.iter().map(|&i| atoms[i].0.difference_quotient(t, h)).collect();
            Ok(AffineCombination::new(basis.clone(), coefficients, drift))
        }
    }
}

fn check_time(process: &Process, t: f64, h: f64) -> Result<()> {
    let horizon = process.horizon();
    if !(t > 0.0 && t < horizon && t + h > 0.0 && t + h <= horizon) || h == 0.0 {
        return Err(domain(format!("t = {t}, t + h = {} must lie in (0, {horizon}]", t + h)));
    }
    Ok(())
}

/// `E[(Z_{t+h} − Z_t)/h | 𝒢]` as an affine combination over the
/// conditioning variables (or atoms).
pub fn difference_quotient(process: &Process, t: f64, h: f64, spec: &ConditioningSpec) -> Result<AffineCombination> {
    check_time(process, t, h)?;
    quotient_prepared(process, &prepare(process, spec)?, t, h)
}

/// `∂_u ⟨Z_u, Y⟩|_{u=t}` from the model's closed-form partial derivative.
fn cross_partial(process: &Process, t: f64, y: &FirstChaosVariable, side: Side) -> Option<f64> {
    let oracle = process.oracle();
    let mut acc = 0.0;
    for &(s, w) in y.terms() {
        match oracle.partial_u(t, s, side)? {
            PartialDerivative::Finite(d) => acc += w * d,
            PartialDerivative::Undefined => return None,
        }
    }
    Some(acc)
}

/// Exact derivative with respect to a linear span, `M^{-1}(∂_u⟨Z_u, Y_i⟩)_i`,
/// or `None` when some partial derivative does not exist.
pub fn span_derivative_exact(process: &Process, t: f64, span: &GramSystem, side: Side) -> Result<Option<AffineCombination>> {
    let mut rhs = Vec::with_capacity(span.len());
    for y in span.variables() {
        match cross_partial(process, t, y, side) {
            Some(v) => rhs.push(v),
            None => return Ok(None),
        }
    }
    let c = span.solve(&DVector::from_vec(rhs))?;
    let shift: f64 = c.iter().zip(span.basis().means()).map(|(c, m)| c * m).sum();
    let constant = process.mean_slope(t) - shift;
    Ok(Some(AffineCombination::new(span.basis().clone(), c.iter().copied().collect(), constant)))
}

/// `D^Y Z_t = Y/Var(Y) · ∂_s Cov(Z_s, Y)|_{s=t}` (two-sided), as an affine
/// combination over `{Y}`; `None` when the derivative does not exist.
pub fn stochastic_derivative_exact(process: &Process, t: f64, y: &FirstChaosVariable) -> Result<Option<AffineCombination>> {
    let span = GramSystem::new(vec![y.clone()], process.oracle())?;
    if !(span.gram()[(0, 0)] > 0.0) {
        return Err(Error::DegenerateVariable);
    }
    span_derivative_exact(process, t, &span, Side::TwoSided)
}

/// Coefficientwise Aitken Δ² extrapolation.
fn aitken(seq: &[Vec<f64>]) -> Vec<Vec<f64>> {
    seq.windows(3)
        .map(|w| {
            (0..w[2].len())
                .map(|i| {
                    let (x0, x1, x2) = (w[0][i], w[1][i], w[2][i]);
                    let d1 = x2 - x1;
                    let den = d1 - (x1 - x0);
                    let scale = x0.abs().max(x1.abs()).max(x2.abs());
                    if den.abs() <= 1e-13 * scale || !den.is_finite() {
                        x2
                    } else {
                        x2 - d1 * d1 / den
                    }
                })
                .collect()
        })
        .collect()
}

/// Path of affine combinations as coefficient vectors, constant last.
fn flatten(path: &[AffineCombination]) -> Vec<Vec<f64>> {
    path.iter()
        .map(|a| {
            let mut v = a.coefficients.clone();
            v.push(a.constant);
            v
        })
        .collect()
}

fn unflatten(basis: &Arc<Basis>, v: &[f64]) -> AffineCombination {
    let (c, k) = v.split_at(v.len() - 1);
    AffineCombination::new(basis.clone(), c.to_vec(), k[0])
}

/// Limit of a quotient path when it is Cauchy after acceleration.
fn accelerated_limit(path: &[AffineCombination], tol: &Tolerances) -> Option<AffineCombination> {
    let n = path.len();
    let window = tol.cauchy_window.max(2);
    if n < window + 4 {
        return None;
    }
    let basis = path[0].basis().clone();
    let scale = |a: &AffineCombination| a.l2_norm().max(1.0);
    // Raw differences must contract; a divergent path never has a limit.
    let diffs: Vec<f64> = path.windows(2).map(|w| w[1].distance(&w[0])).collect();
    let floor = 1e-12 * scale(&path[n - 1]);
    let tail = &diffs[diffs.len() - window..];
    let contracting = tail.windows(2).all(|w| w[1] <= floor || w[1] <= 0.99 * w[0]);
    if !contracting {
        return None;
    }
    if tail.iter().all(|&d| d <= floor) {
        return Some(path[n - 1].clone());
    }
    let twice = aitken(&aitken(&flatten(path)));
    let acc: Vec<AffineCombination> = twice.iter().map(|v| unflatten(&basis, v)).collect();
    let last = acc.last()?;
    let tail = &acc[acc.len() - window..];
    let worst = tail.iter().map(|a| a.distance(last)).fold(0.0, f64::max);
    (worst <= tol.cauchy_rel * scale(last)).then(|| last.clone())
}

/// Log-log least squares of the quotient norm against `|h|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Schedule indices dropped for zero norm.
    pub excluded: Vec<usize>,
    /// Fewer than two usable points.
    pub degenerate: bool,
}

fn fit_rows(rows: &[EvidenceRow]) -> RateFit {
    let mut excluded = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if r.norm > 0.0 && r.norm.is_finite() {
            xs.push(r.h.abs().ln());
            ys.push(r.norm.ln());
        } else {
            excluded.push(i);
        }
    }
    if xs.len() < 2 {
        return RateFit { slope: f64::NAN, intercept: f64::NAN, r_squared: f64::NAN, excluded, degenerate: true };
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    RateFit { slope, intercept: my - slope * mx, r_squared, excluded, degenerate: false }
}

/// Evaluated quotient path for one side.
struct Path {
    rows: Vec<EvidenceRow>,
    quotients: Vec<AffineCombination>,
    labels: Vec<String>,
}

fn quotient_path(process: &Process, t: f64, spec: &ConditioningSpec, hs: &[f64], sign: f64) -> Result<Path> {
    let prepared = prepare(process, spec)?;
    let mut rows = Vec::with_capacity(hs.len());
    let mut quotients = Vec::with_capacity(hs.len());
    for &h in hs {
        let h = sign * h;
        check_time(process, t, h)?;
        let q = quotient_prepared(process, &prepared, t, h)?;
        rows.push(EvidenceRow { h, coefficients: q.coefficients.clone(), constant: q.constant, norm: q.l2_norm() });
        quotients.push(q);
    }
    let labels = quotients.first().map(|q| q.basis().labels().to_vec()).unwrap_or_default();
    Ok(Path { rows, quotients, labels })
}

fn renormalize_path(path: &Path, alpha: f64) -> Vec<AffineCombination> {
    path.quotients
        .iter()
        .zip(&path.rows)
        .map(|(q, r)| q.scaled(r.h.abs().powf(1.0 - alpha)))
        .collect()
}

fn one_sided(process: &Process, path: Path, tol: &Tolerances) -> Verdict {
    let Path { rows, quotients, labels } = path;
    if let Some(limit) = accelerated_limit(&quotients, tol) {
        let kind = if limit.variance() < tol.degenerate_variance {
            VerdictKind::Degenerates { constant: limit.mean() }
        } else {
            let norm = limit.l2_norm();
            VerdictKind::Differentiates { derivative: limit, norm }
        };
        return Verdict { kind, labels, evidence: rows };
    }
    let n = rows.len();
    let run = rows.windows(2).rev().take_while(|w| w[1].norm > w[0].norm).count();
    let fit = fit_rows(&rows);
    let monotone = run + 1 >= tol.monotone_min.min(n);
    if monotone && !fit.degenerate && fit.r_squared > tol.r_squared_min && fit.slope < -tol.slope_min {
        let path = Path { rows, quotients, labels };
        let mut candidates = Vec::new();
        if let Some(h) = process.model().hurst() {
            candidates.push(2.0 * h);
        }
        candidates.push(1.0 + fit.slope);
        let renormalized = candidates.into_iter().filter(|a| *a > 0.0 && *a <= 1.0).find_map(|alpha| {
            accelerated_limit(&renormalize_path(&path, alpha), tol).map(|limit| Renormalized { alpha, limit })
        });
        let Path { rows, labels, .. } = path;
        return Verdict {
            kind: VerdictKind::Diverges {
                slope: fit.slope,
                intercept: fit.intercept,
                r_squared: fit.r_squared,
                renormalized,
            },
            labels,
            evidence: rows,
        };
    }
    let reason = format!(
        "no Cauchy limit; norm growth run {run}, slope {:.4}, r2 {:.4}",
        fit.slope, fit.r_squared
    );
    Verdict { kind: VerdictKind::Inconclusive { reason, forward: None, backward: None }, labels, evidence: rows }
}

/// Classifies `spec` at `t`: differentiating, degenerate, divergent, or
/// inconclusive, with the quotient path as evidence.
pub fn classify(
    process: &Process,
    t: f64,
    spec: &ConditioningSpec,
    schedule: &QuotientSchedule,
    tol: &Tolerances,
) -> Result<Verdict> {
    let hs = schedule.steps_at(t, process.horizon())?;
    match schedule.mode {
        Mode::Forward => Ok(one_sided(process, quotient_path(process, t, spec, &hs, 1.0)?, tol)),
        Mode::Backward => Ok(one_sided(process, quotient_path(process, t, spec, &hs, -1.0)?, tol)),
        Mode::TwoSided => {
            let fwd = one_sided(process, quotient_path(process, t, spec, &hs, 1.0)?, tol);
            let bwd = one_sided(process, quotient_path(process, t, spec, &hs, -1.0)?, tol);
            Ok(merge_sides(fwd, bwd, tol))
        }
    }
}

fn merge_sides(fwd: Verdict, bwd: Verdict, tol: &Tolerances) -> Verdict {
    let mut evidence = bwd.evidence.clone();
    evidence.reverse();
    evidence.extend(fwd.evidence.iter().cloned());
    let labels = fwd.labels.clone();
    if let (Some(f), Some(b)) = (fwd.derivative(), bwd.derivative()) {
        // Degenerate limits carry an empty basis; compare as constants then.
        let gap = if f.coefficients.len() == b.coefficients.len() {
            f.distance(&b)
        } else {
            (f.mean() - b.mean()).abs() + f.variance().sqrt() + b.variance().sqrt()
        };
        let scale = f.l2_norm().max(b.l2_norm()).max(1.0);
        if gap <= tol.side_agreement * scale {
            let kind = if f.coefficients.len() == b.coefficients.len() {
                let avg = f.zip_with(&b, |x, y| 0.5 * (x + y));
                if avg.variance() < tol.degenerate_variance {
                    VerdictKind::Degenerates { constant: avg.mean() }
                } else {
                    let norm = avg.l2_norm();
                    VerdictKind::Differentiates { derivative: avg, norm }
                }
            } else {
                VerdictKind::Degenerates { constant: 0.5 * (f.mean() + b.mean()) }
            };
            return Verdict { kind, labels, evidence };
        }
        let reason = format!("one-sided limits differ by {gap:.3e}");
        return Verdict {
            kind: VerdictKind::Inconclusive { reason, forward: Some(Box::new(fwd)), backward: Some(Box::new(bwd)) },
            labels,
            evidence,
        };
    }
    if let (VerdictKind::Diverges { .. }, VerdictKind::Diverges { .. }) = (&fwd.kind, &bwd.kind) {
        return Verdict { kind: fwd.kind, labels, evidence };
    }
    let reason = format!("forward {}, backward {}", fwd.name(), bwd.name());
    Verdict {
        kind: VerdictKind::Inconclusive { reason, forward: Some(Box::new(fwd)), backward: Some(Box::new(bwd)) },
        labels,
        evidence,
    }
}

/// `lim h^{1−α} E[(Z_{t+h} − Z_t)/h | 𝒢]` along a one-sided schedule, or
/// `None` when the renormalized path is not Cauchy.
pub fn renormalized_limit(
    process: &Process,
    t: f64,
    spec: &ConditioningSpec,
    alpha: f64,
    schedule: &QuotientSchedule,
    tol: &Tolerances,
) -> Result<Option<AffineCombination>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(domain(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let sign = match schedule.mode {
        Mode::Forward => 1.0,
        Mode::Backward => -1.0,
        Mode::TwoSided => return Err(domain("renormalized limits are one-sided")),
    };
    let hs = schedule.steps_at(t, process.horizon())?;
    let path = quotient_path(process, t, spec, &hs, sign)?;
    Ok(accelerated_limit(&renormalize_path(&path, alpha), tol))
}

/// Log-log fit of the quotient norm path; forward unless the schedule is
/// backward.
pub fn rate_exponent(process: &Process, t: f64, spec: &ConditioningSpec, schedule: &QuotientSchedule) -> Result<RateFit> {
    let hs = schedule.steps_at(t, process.horizon())?;
    let sign = if schedule.mode == Mode::Backward { -1.0 } else { 1.0 };
    Ok(fit_rows(&quotient_path(process, t, spec, &hs, sign)?.rows))
}

/// Derivative over a span: exact when the model provides the partials,
/// otherwise the classified limit.
fn span_derivative(process: &Process, t: f64, span: &GramSystem, verdict: &Verdict) -> Result<AffineCombination> {
    if let Some(d) = span_derivative_exact(process, t, span, Side::TwoSided)? {
        return Ok(d);
    }
    let d = verdict.derivative().ok_or_else(|| Error::PreconditionFailed(verdict.summary()))?;
    if d.coefficients.len() == span.len() {
        Ok(AffineCombination::new(span.basis().clone(), d.coefficients, d.constant))
    } else {
        Ok(AffineCombination::new(span.basis().clone(), vec![0.0; span.len()], d.mean()))
    }
}

/// `‖D^{sub} Z_t − E[D^{big} Z_t | sub]‖_{L²}`.
pub fn projection_identity_residual(
    process: &Process,
    t: f64,
    big: &[FirstChaosVariable],
    sub: &[FirstChaosVariable],
) -> Result<f64> {
    let schedule = QuotientSchedule::default();
    let tol = Tolerances::default();
    let big_spec = ConditioningSpec::span(big.to_vec());
    let verdict = classify(process, t, &big_spec, &schedule, &tol)?;
    if !verdict.differentiates() {
        return Err(Error::PreconditionFailed(format!("the larger span does not differentiate: {}", verdict.summary())));
    }
    let big_span = GramSystem::new(big.to_vec(), process.oracle())?;
    let d_big = span_derivative(process, t, &big_span, &verdict)?;
    let sub_span = GramSystem::new(sub.to_vec(), process.oracle())?;
    let sub_verdict = classify(process, t, &ConditioningSpec::span(sub.to_vec()), &schedule, &tol)?;
    let d_sub = span_derivative(process, t, &sub_span, &sub_verdict)?;
    let projected = project_affine(&d_big, &sub_span)?;
    Ok(d_sub.distance(&projected))
}

/// `Σ_{i<N} Var(N_i)·(Δ_h f_i(t))²`, the squared L² norm of the quotient
/// given the first `N` atoms.
pub fn parseval_divergence(model: &ModelSpec, t: f64, h: f64, n: usize) -> Result<f64> {
    let ModelKind::BasisExpansion { .. } = model.kind else {
        return Err(Error::Unsupported("Parseval sums need a basis-expansion model".into()));
    };
    let atoms = model.atoms().expect("basis expansion");
    if n > atoms.len() {
        return Err(domain(format!("N = {n} exceeds the {} model functions", atoms.len())));
    }
    Ok(atoms[..n].iter().map(|(f, v)| v * f.difference_quotient(t, h).powi(2)).sum())
}
