use serde::{Deserialize, Serialize};

use super::estimators::quantile_sorted;
use super::{mc_conditional_expectation, Estimator, PathBatch, Prediction};
use crate::derivative::{
    difference_quotient, renormalized_limit, stochastic_derivative_exact, ConditioningSpec, Mode, Process,
    QuotientSchedule, Tolerances,
};
use crate::error::{domain, Result};

/// Quantile levels of the conditioning variable used as query points.
pub const QUERY_LEVELS: [f64; 3] = [0.25, 0.5, 0.75];

/// Number of smallest step sizes checked for stabilization.
const STABLE_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum McConditioning {
    /// `σ{Z_s}`, estimated through the centered value `B_s`.
    Value { s: f64 },
    /// `σ{|B_s|}`.
    AbsCentered { s: f64 },
}

impl McConditioning {
    pub fn time(self) -> f64 {
        match self {
            McConditioning::Value { s } | McConditioning::AbsCentered { s } => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McStep {
    pub h: f64,
    /// `h^{-α} E[Z_{t+h} − Z_t | ·]` at the query points.
    pub estimates: Vec<Prediction>,
    /// The same quantity from the exact engine.
    pub exact: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McDerivativeReport {
    pub t: f64,
    pub alpha: f64,
    pub conditioning: McConditioning,
    /// Query points: quantiles of the conditioning variable.
    pub queries: Vec<f64>,
    pub bandwidth: Option<f64>,
    /// Ordered by decreasing `h`.
    pub steps: Vec<McStep>,
    /// Limit `h → 0` from the exact engine, when it exists.
    pub limit: Option<Vec<f64>>,
    /// Largest pairwise gap between the estimates over the smallest steps,
    /// in units of their combined standard error.
    pub max_spread_z: f64,
    pub stabilized: bool,
}

/// Monte Carlo estimates of `h^{-α} E[Z_{t+h} − Z_t | 𝒢]` for each step
/// `h = k·dt`, `k ∈ h_steps`, on a shifted batch of `process`.
pub fn mc_stochastic_derivative(
    process: &Process,
    batch: &PathBatch,
    t: f64,
    conditioning: McConditioning,
    h_steps: &[usize],
    alpha: f64,
    estimator: Estimator,
) -> Result<McDerivativeReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(domain(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if h_steps.is_empty() || h_steps.contains(&0) {
        return Err(domain("step multiples must be positive"));
    }
    let grid = batch.grid;
    if grid.horizon > process.horizon() * (1.0 + 1e-12) {
        return Err(domain("batch grid extends past the model horizon"));
    }
    let s = conditioning.time();
    let (it, is) = (grid.index_of(t)?, grid.index_of(s)?);
    if it == 0 || is == 0 {
        return Err(domain("t and s must be positive"));
    }
    let mut steps: Vec<usize> = h_steps.to_vec();
    steps.sort_unstable_by(|a, b| b.cmp(a));
    steps.dedup();
    if it + steps[0] > grid.steps {
        return Err(domain(format!("t + h = {} exceeds the grid", grid.time(it + steps[0]))));
    }

    let b_s = batch.centered_column(is);
    let y: Vec<f64> = match conditioning {
        McConditioning::Value { .. } => b_s,
        McConditioning::AbsCentered { .. } => b_s.iter().map(|v| v.abs()).collect(),
    };
    let mut sorted = y.clone();
    sorted.sort_by(f64::total_cmp);
    let queries: Vec<f64> = QUERY_LEVELS.iter().map(|&p| quantile_sorted(&sorted, p)).collect();

    let z_s = process.value(s);
    let spec = match conditioning {
        McConditioning::Value { .. } => ConditioningSpec::span(vec![z_s.clone()]),
        McConditioning::AbsCentered { .. } => ConditioningSpec::EvenFunctionOf { var: z_s.clone() },
    };
    // Exact affine maps act on Z_s = E Z_s + B_s.
    let at = |q: f64| match conditioning {
        McConditioning::Value { .. } => vec![process.mean(s) + q],
        McConditioning::AbsCentered { .. } => Vec::new(),
    };

    let z_t = batch.column(it);
    let mut bandwidth = None;
    let mut out = Vec::with_capacity(steps.len());
    for &k in &steps {
        let h = k as f64 * grid.dt();
        let scale = h.powf(-alpha);
        let z_th = batch.column(it + k);
        let x: Vec<f64> = z_th.iter().zip(&z_t).map(|(a, b)| scale * (a - b)).collect();
        let fit = mc_conditional_expectation(&x, &y, estimator, &queries)?;
        bandwidth = fit.bandwidth;
        let exact_q = difference_quotient(process, t, h, &spec)?.scaled(h.powf(1.0 - alpha));
        let exact = queries.iter().map(|&q| exact_q.evaluate(&at(q))).collect();
        out.push(McStep { h, estimates: fit.predictions, exact });
    }

    let limit = if alpha == 1.0 {
        match conditioning {
            McConditioning::Value { .. } => stochastic_derivative_exact(process, t, &z_s)?
                .map(|d| queries.iter().map(|&q| d.evaluate(&at(q))).collect()),
            McConditioning::AbsCentered { .. } => {
                let mu = process.mean_slope(t);
                mu.is_finite().then(|| vec![mu; queries.len()])
            }
        }
    } else {
        renormalized_limit(process, t, &spec, alpha, &QuotientSchedule::with_mode(Mode::Forward), &Tolerances::default())?
            .map(|d| queries.iter().map(|&q| d.evaluate(&at(q))).collect())
    };

    let tail = &out[out.len().saturating_sub(STABLE_WINDOW)..];
    let mut max_spread_z = 0.0f64;
    for (i, a) in tail.iter().enumerate() {
        for b in &tail[i + 1..] {
            for (p, r) in a.estimates.iter().zip(&b.estimates) {
                let z = (p.value - r.value).abs() / (p.se * p.se + r.se * r.se).sqrt();
                max_spread_z = max_spread_z.max(z);
            }
        }
    }
    Ok(McDerivativeReport {
        t,
        alpha,
        conditioning,
        queries,
        bandwidth,
        steps: out,
        limit,
        max_spread_z,
        stabilized: max_spread_z <= 3.0,
    })
}
