//! Iterated Wiener integrals on ordered simplices and processes given by
//! finite chaos expansions `X_t = f_0(t) + Σ_{n≤N} J_n(f_n(·, t))`.
//!
//! `Δ_n[0, t] = {0 ≤ s_n ≤ … ≤ s_1 ≤ t}`; kernels take their arguments in
//! that order (`s[0]` is the latest time).

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::quadrature::GaussLegendre;
use crate::simulation::{mc_conditional_expectation, Estimator, PathBatch};

/// Largest chaos order handled; iterated sums cost `O(steps^n)`.
pub const MAX_ORDER: usize = 3;

/// Gauss–Legendre points per simplex coordinate.
const SIMPLEX_POINTS: usize = 24;

/// `coeff · Π s_i^{powers[i]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

impl Monomial {
    pub fn new(coeff: f64, powers: Vec<u32>) -> Self {
        Self { coeff, powers }
    }

    fn eval(&self, s: &[f64]) -> f64 {
        self.powers.iter().zip(s).fold(self.coeff, |acc, (&p, &x)| acc * x.powi(p as i32))
    }

    fn padded(&self, n: usize) -> Vec<u32> {
        let mut p = self.powers.clone();
        p.resize(n, 0);
        p
    }
}

/// Kernel on a simplex.
#[derive(Clone)]
pub enum SimplexKernel {
    Constant(f64),
    Polynomial(Vec<Monomial>),
    Function(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
    Sum(Vec<(f64, SimplexKernel)>),
}

impl fmt::Debug for SimplexKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimplexKernel::Constant(c) => write!(f, "Constant({c})"),
            SimplexKernel::Polynomial(m) => f.debug_tuple("Polynomial").field(m).finish(),
            SimplexKernel::Function(_) => f.write_str("Function(..)"),
            SimplexKernel::Sum(parts) => f.debug_tuple("Sum").field(parts).finish(),
        }
    }
}

impl SimplexKernel {
    pub fn function(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        SimplexKernel::Function(Arc::new(f))
    }

    pub fn eval(&self, s: &[f64]) -> f64 {
        match self {
            SimplexKernel::Constant(c) => *c,
            SimplexKernel::Polynomial(m) => m.iter().map(|m| m.eval(s)).sum(),
            SimplexKernel::Function(f) => f(s),
            SimplexKernel::Sum(parts) => parts.iter().map(|(w, k)| w * k.eval(s)).sum(),
        }
    }

    /// `a·self + b·other`.
    pub fn combine(a: f64, x: &SimplexKernel, b: f64, y: &SimplexKernel) -> SimplexKernel {
        match (x, y) {
            (SimplexKernel::Constant(p), SimplexKernel::Constant(q)) => SimplexKernel::Constant(a * p + b * q),
            _ => SimplexKernel::Sum(vec![(a, x.clone()), (b, y.clone())]),
        }
    }

    fn constant_value(&self) -> Option<f64> {
        match self {
            SimplexKernel::Constant(c) => Some(*c),
            SimplexKernel::Sum(parts) => parts.iter().map(|(w, k)| k.constant_value().map(|c| w * c)).sum(),
            _ => None,
        }
    }

    /// Expansion into monomials in `n` variables, when the kernel is
    /// polynomial.
    fn monomials(&self, n: usize) -> Option<Vec<Monomial>> {
        match self {
            SimplexKernel::Constant(c) => Some(vec![Monomial::new(*c, vec![0; n])]),
            SimplexKernel::Polynomial(m) => Some(m.iter().map(|m| Monomial::new(m.coeff, m.padded(n))).collect()),
            SimplexKernel::Function(_) => None,
            SimplexKernel::Sum(parts) => {
                let mut out = Vec::new();
                for (w, k) in parts {
                    out.extend(k.monomials(n)?.into_iter().map(|m| Monomial::new(w * m.coeff, m.powers)));
                }
                Some(out)
            }
        }
    }
}

fn check_order(n: usize) -> Result<()> {
    if n > MAX_ORDER {
        return Err(Error::Unsupported(format!("chaos order {n} exceeds {MAX_ORDER}")));
    }
    Ok(())
}

/// `∫_{Δ_n[0,t]} Π s_i^{p_i} ds`, integrating the innermost coordinate first.
pub fn simplex_monomial_integral(powers: &[u32], t: f64) -> f64 {
    let mut exponent = 0.0;
    let mut denom = 1.0;
    for &p in powers.iter().rev() {
        exponent += p as f64 + 1.0;
        denom *= exponent;
    }
    t.powf(exponent) / denom
}

/// Nested Gauss–Legendre over `Δ_n[0, t]`.
fn simplex_quadrature(n: usize, t: f64, f: &dyn Fn(&[f64]) -> f64) -> f64 {
    fn level(gl: &GaussLegendre, s: &mut [f64; MAX_ORDER], k: usize, n: usize, upper: f64, f: &dyn Fn(&[f64]) -> f64) -> f64 {
        if k == n {
            return f(&s[..n]);
        }
        let mut acc = 0.0;
        for (x, w) in gl.points(0.0, upper) {
            s[k] = x;
            acc += w * level(gl, s, k + 1, n, x, f);
        }
        acc
    }
    let gl = GaussLegendre::new(SIMPLEX_POINTS);
    level(&gl, &mut [0.0; MAX_ORDER], 0, n, t, f)
}

/// `⟨f, g⟩_{L²(Δ_n[0,t])}`: closed form for polynomial kernels, nested
/// Gauss–Legendre otherwise.
pub fn simplex_inner_product(f: &SimplexKernel, g: &SimplexKernel, n: usize, t: f64) -> Result<f64> {
    check_order(n)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(domain(format!("simplex upper limit must be nonnegative, got {t}")));
    }
    if let (Some(p), Some(q)) = (f.constant_value(), g.constant_value()) {
        let volume: f64 = t.powi(n as i32) / (1..=n).map(|k| k as f64).product::<f64>();
        return Ok(p * q * volume);
    }
    if let (Some(p), Some(q)) = (f.monomials(n), g.monomials(n)) {
        let mut acc = 0.0;
        for a in &p {
            for b in &q {
                let powers: Vec<u32> = a.powers.iter().zip(&b.powers).map(|(x, y)| x + y).collect();
                acc += a.coeff * b.coeff * simplex_monomial_integral(&powers, t);
            }
        }
        return Ok(acc);
    }
    Ok(simplex_quadrature(n, t, &|s| f.eval(s) * g.eval(s)))
}

fn increments(batch: &PathBatch) -> Result<&[f64]> {
    batch
        .w_increments
        .as_deref()
        .ok_or_else(|| Error::Contract("iterated integrals need the Wiener increments of the batch".into()))
}

/// Samples of `J_n(g)` over `Δ_n[0, T]` for the batch horizon `T`.
pub fn j_integral_samples(n: usize, kernel: &SimplexKernel, batch: &PathBatch) -> Result<Vec<f64>> {
    j_integral_samples_until(n, kernel, batch, batch.grid.steps)
}

/// `J_n(g)` over `Δ_n[0, t_node]`: sums over strictly decreasing index
/// chains, kernel at the left points.
pub fn j_integral_samples_until(n: usize, kernel: &SimplexKernel, batch: &PathBatch, node: usize) -> Result<Vec<f64>> {
    check_order(n)?;
    let w = increments(batch)?;
    let steps = batch.grid.steps;
    if node > steps {
        return Err(domain(format!("node {node} beyond the {steps}-step grid")));
    }
    let times = batch.grid.times();
    if n == 0 {
        return Ok(vec![kernel.eval(&[]); batch.n_paths]);
    }
    let constant = kernel.constant_value();
    Ok(crate::par::map_range(crate::par::Exec::default(), batch.n_paths, |p| {
        let dw = &w[p * steps..p * steps + node];
        if let Some(c) = constant {
            // Elementary symmetric polynomial e_n of the increments.
            let mut e = [1.0, 0.0, 0.0, 0.0];
            for &x in dw {
                for k in (1..=n).rev() {
                    e[k] += e[k - 1] * x;
                }
            }
            return c * e[n];
        }
        let g = |s: &[f64]| kernel.eval(s);
        match n {
            1 => dw.iter().enumerate().map(|(j, d)| g(&[times[j]]) * d).sum(),
            2 => {
                let mut acc = 0.0;
                for j1 in 1..node {
                    let inner: f64 = (0..j1).map(|j2| g(&[times[j1], times[j2]]) * dw[j2]).sum();
                    acc += dw[j1] * inner;
                }
                acc
            }
            _ => {
                let mut acc = 0.0;
                for j1 in 2..node {
                    let mut mid = 0.0;
                    for j2 in 1..j1 {
                        let inner: f64 = (0..j2).map(|j3| g(&[times[j1], times[j2], times[j3]]) * dw[j3]).sum();
                        mid += dw[j2] * inner;
                    }
                    acc += dw[j1] * mid;
                }
                acc
            }
        }
    }))
}

/// Chaos coefficients of a random variable: `f_0` and the kernels of
/// orders `1..=N` on `Δ_n[0, t]`.
#[derive(Debug, Clone)]
pub struct ChaosAt {
    pub t: f64,
    pub f0: f64,
    pub kernels: Vec<SimplexKernel>,
}

impl ChaosAt {
    /// `E X²` by the chaos isometry.
    pub fn second_moment(&self) -> Result<f64> {
        let mut acc = self.f0 * self.f0;
        for (i, k) in self.kernels.iter().enumerate() {
            acc += simplex_inner_product(k, k, i + 1, self.t)?;
        }
        Ok(acc)
    }

    /// `a·self + b·other + c` orderwise.
    pub fn affine(&self, a: f64, other: &ChaosAt, b: f64, c: f64) -> ChaosAt {
        let n = self.kernels.len().max(other.kernels.len());
        let zero = SimplexKernel::Constant(0.0);
        let kernels = (0..n)
            .map(|i| {
                let x = self.kernels.get(i).unwrap_or(&zero);
                let y = other.kernels.get(i).unwrap_or(&zero);
                SimplexKernel::combine(a, x, b, y)
            })
            .collect();
        ChaosAt { t: self.t, f0: a * self.f0 + b * other.f0 + c, kernels }
    }
}

/// Process with a finite chaos expansion.
#[derive(Debug, Clone)]
pub enum ChaosProcess {
    /// `f_0(t) = c_0 e^{at} − b/a` (`c_0 + bt` when `a = 0`) and
    /// `f_n(·, t) = c_n e^{at}` on `Δ_n[0, t]`.
    ClosedLinear { a: f64, b: f64, c: Vec<f64> },
    /// Kernels sampled at increasing times; `kernels[k][n − 1]` is
    /// `f_n(·, times[k])`.
    GridKernel { times: Vec<f64>, f0: Vec<f64>, kernels: Vec<Vec<SimplexKernel>> },
}

/// The closed family solving `D X_t = a X_t + b` in chaos.
pub fn solve_linear_embedding(a: f64, b: f64, c: &[f64]) -> Result<ChaosProcess> {
    if c.is_empty() {
        return Err(domain("need at least c_0"));
    }
    check_order(c.len() - 1)?;
    if !(a.is_finite() && b.is_finite() && c.iter().all(|x| x.is_finite())) {
        return Err(domain("coefficients must be finite"));
    }
    Ok(ChaosProcess::ClosedLinear { a, b, c: c.to_vec() })
}

impl ChaosProcess {
    pub fn grid_kernel(times: Vec<f64>, f0: Vec<f64>, kernels: Vec<Vec<SimplexKernel>>) -> Result<Self> {
        if times.len() < 3 || f0.len() != times.len() || kernels.len() != times.len() {
            return Err(domain("grid kernel needs matching samples at three or more times"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times[0] < 0.0 {
            return Err(domain("grid kernel times must be nonnegative and increasing"));
        }
        let n = kernels[0].len();
        check_order(n)?;
        if kernels.iter().any(|k| k.len() != n) {
            return Err(domain("every time needs the same number of kernels"));
        }
        Ok(ChaosProcess::GridKernel { times, f0, kernels })
    }

    pub fn max_order(&self) -> usize {
        match self {
            ChaosProcess::ClosedLinear { c, .. } => c.len() - 1,
            ChaosProcess::GridKernel { kernels, .. } => kernels[0].len(),
        }
    }

    fn closed_f0(a: f64, b: f64, c0: f64, t: f64) -> f64 {
        if a == 0.0 {
            c0 + b * t
        } else {
            c0 * (a * t).exp() - b / a
        }
    }

    fn grid_index(times: &[f64], t: f64) -> Result<usize> {
        let scale = times.last().copied().unwrap_or(1.0).abs().max(1.0);
        times
            .iter()
            .position(|&x| (x - t).abs() <= 1e-12 * scale)
            .ok_or_else(|| domain(format!("t = {t} is not a sample time of the kernel family")))
    }

    /// Chaos coefficients of `X_t`.
    pub fn at(&self, t: f64) -> Result<ChaosAt> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(domain(format!("t must be nonnegative, got {t}")));
        }
        match self {
            ChaosProcess::ClosedLinear { a, b, c } => {
                let e = (a * t).exp();
                Ok(ChaosAt {
                    t,
                    f0: Self::closed_f0(*a, *b, c[0], t),
                    kernels: c[1..].iter().map(|cn| SimplexKernel::Constant(cn * e)).collect(),
                })
            }
            ChaosProcess::GridKernel { times, f0, kernels } => {
                let k = Self::grid_index(times, t)?;
                Ok(ChaosAt { t, f0: f0[k], kernels: kernels[k].clone() })
            }
        }
    }

    /// Samples of `X_{t_node}` on a Wiener batch.
    pub fn samples(&self, batch: &PathBatch, node: usize) -> Result<Vec<f64>> {
        let x = self.at(batch.grid.time(node))?;
        let mut out = vec![x.f0; batch.n_paths];
        for (i, k) in x.kernels.iter().enumerate() {
            for (o, j) in out.iter_mut().zip(j_integral_samples_until(i + 1, k, batch, node)?) {
                *o += j;
            }
        }
        Ok(out)
    }
}

/// Chaos coefficients of the derivative given the past:
/// `f_0'(t)` and `∂_t f_n(·, t)` restricted to `Δ_n[0, t]`.
pub fn nelson_derivative(x: &ChaosProcess, t: f64) -> Result<ChaosAt> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(domain(format!("t must be nonnegative, got {t}")));
    }
    match x {
        ChaosProcess::ClosedLinear { a, b, c } => {
            let e = (a * t).exp();
            let f0 = if *a == 0.0 { *b } else { a * c[0] * e };
            Ok(ChaosAt { t, f0, kernels: c[1..].iter().map(|cn| SimplexKernel::Constant(a * cn * e)).collect() })
        }
        ChaosProcess::GridKernel { times, f0, kernels } => {
            let k = ChaosProcess::grid_index(times, t)?;
            if k == 0 || k + 1 == times.len() {
                return Err(Error::PreconditionFailed(format!(
                    "kernel family has no two-sided time derivative at the sampled endpoint t = {t}"
                )));
            }
            let span = times[k + 1] - times[k - 1];
            let d0 = (f0[k + 1] - f0[k - 1]) / span;
            let kernels = kernels[k + 1]
                .iter()
                .zip(&kernels[k - 1])
                .map(|(hi, lo)| SimplexKernel::combine(1.0 / span, hi, -1.0 / span, lo))
                .collect();
            Ok(ChaosAt { t, f0: d0, kernels })
        }
    }
}

/// `‖D X_t − a X_t − b‖_{L²}` through the chaos isometry.
pub fn embedding_residual(x: &ChaosProcess, a: f64, b: f64, t: f64) -> Result<f64> {
    let d = nelson_derivative(x, t)?;
    let v = x.at(t)?;
    Ok(d.affine(1.0, &v, -a, -b).second_moment()?.max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NelsonStep {
    pub h: f64,
    /// Fitted `(value, se)` of `E[(X_{t+h} − X_t)/h | X_t] = α + β X_t`.
    pub intercept: (f64, f64),
    pub slope: (f64, f64),
    /// The same coefficients in closed form at this `h`.
    pub exact_intercept: f64,
    pub exact_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NelsonCheck {
    pub t: f64,
    pub a: f64,
    pub b: f64,
    /// Ordered by decreasing `h`.
    pub steps: Vec<NelsonStep>,
    /// The closed-form slope bias shrinks monotonically with `h`.
    pub bias_monotone: bool,
}

/// Regression of `(X_{t+h} − X_t)/h` on `X_t` for the first-order closed
/// family; given the past, `X_t` carries the same information as `W_t`.
pub fn mc_verify_nelson(x: &ChaosProcess, t: f64, h_steps: &[usize], batch: &PathBatch) -> Result<NelsonCheck> {
    let ChaosProcess::ClosedLinear { a, b, c } = x else {
        return Err(Error::Unsupported("Monte Carlo verification needs the closed family".into()));
    };
    if c.len() > 2 {
        return Err(Error::Unsupported("Monte Carlo verification covers chaos order ≤ 1".into()));
    }
    let (a, b) = (*a, *b);
    let grid = batch.grid;
    let it = grid.index_of(t)?;
    let mut steps: Vec<usize> = h_steps.to_vec();
    steps.sort_unstable_by(|p, q| q.cmp(p));
    steps.dedup();
    if steps.is_empty() || steps[steps.len() - 1] == 0 || it + steps[0] > grid.steps {
        return Err(domain("steps must be positive and keep t + h on the grid"));
    }
    let xt = x.samples(batch, it)?;
    let mut out = Vec::with_capacity(steps.len());
    for &k in &steps {
        let h = k as f64 * grid.dt();
        let xh = x.samples(batch, it + k)?;
        let dq: Vec<f64> = xh.iter().zip(&xt).map(|(p, q)| (p - q) / h).collect();
        let fit = mc_conditional_expectation(&dq, &xt, Estimator::Linear, &[])?;
        // E[X_{t+h} | 𝒫_t] = f_0(t+h) + e^{ah}(X_t − f_0(t)).
        let growth = (a * h).exp();
        let exact_slope = (growth - 1.0) / h;
        let f0 = |s| ChaosProcess::closed_f0(a, b, c[0], s);
        let exact_intercept = (f0(t + h) - growth * f0(t)) / h;
        out.push(NelsonStep {
            h,
            intercept: fit.intercept.expect("linear fit"),
            slope: fit.slope.expect("linear fit"),
            exact_intercept,
            exact_slope,
        });
    }
    let bias: Vec<f64> = out.iter().map(|s| (s.exact_slope - a).abs()).collect();
    let bias_monotone = bias.windows(2).all(|w| w[1] <= w[0]);
    Ok(NelsonCheck { t, a, b, steps: out, bias_monotone })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::{covariance_se, mean_se, sample_wiener, Sampling, TimeGrid};

    #[test]
    fn simplex_volumes() {
        let one = SimplexKernel::Constant(1.0);
        assert!((simplex_inner_product(&one, &one, 2, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((simplex_inner_product(&one, &one, 2, 0.5).unwrap() - 0.125).abs() < 1e-15);
        assert!((simplex_inner_product(&one, &one, 3, 1.0).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!(matches!(simplex_inner_product(&one, &one, 4, 1.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn polynomial_kernels_match_quadrature() {
        let f = SimplexKernel::Polynomial(vec![Monomial::new(0.7, vec![2, 0]), Monomial::new(-1.3, vec![1, 3])]);
        let g = SimplexKernel::Polynomial(vec![Monomial::new(1.1, vec![0, 1]), Monomial::new(0.4, vec![3, 2])]);
        let exact = simplex_inner_product(&f, &g, 2, 0.9).unwrap();
        let (fc, gc) = (f.clone(), g.clone());
        let quad = simplex_quadrature(2, 0.9, &move |s| fc.eval(s) * gc.eval(s));
        assert!((exact - quad).abs() < 1e-12, "{exact} vs {quad}");
        // Dense midpoint sum over the triangle as an independent check.
        let m = 2000;
        let d = 0.9 / m as f64;
        let mut dense = 0.0;
        for i in 0..m {
            let s1 = (i as f64 + 0.5) * d;
            for j in 0..i {
                let s2 = (j as f64 + 0.5) * d;
                dense += f.eval(&[s1, s2]) * g.eval(&[s1, s2]) * d * d;
            }
            let s2 = s1 - 0.25 * d;
            dense += 0.5 * f.eval(&[s1, s2]) * g.eval(&[s1, s2]) * d * d;
        }
        assert!((exact - dense).abs() < 1e-5, "{exact} vs {dense}");
    }

    #[test]
    fn monomial_integral() {
        // ∫_0^1 ∫_0^{s1} s1 s2 = 1/8
        assert!((simplex_monomial_integral(&[1, 1], 1.0) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn iterated_integrals() {
        let grid = TimeGrid::new(128, 1.0).unwrap();
        let batch = sample_wiener(&grid, 40_000, &Sampling::new(31)).unwrap();
        let one = SimplexKernel::Constant(1.0);
        let j1 = j_integral_samples(1, &one, &batch).unwrap();
        let w = batch.wiener_values().unwrap();
        for p in 0..10 {
            assert!((j1[p] - w[p * 129 + 128]).abs() < 1e-12);
        }
        let j2 = j_integral_samples(2, &one, &batch).unwrap();
        for p in 0..10 {
            let wt = w[p * 129 + 128];
            let qv: f64 = batch.increments(p).unwrap().iter().map(|d| d * d).sum();
            assert!((j2[p] - 0.5 * (wt * wt - qv)).abs() < 1e-12);
        }
        let (m, se) = mean_se(&j2);
        assert!(m.abs() < 3.0 * se);
        let (v, se) = covariance_se(&j2, &j2);
        assert!((v - 0.5).abs() < 3.0 * se, "{v} ± {se}");
        let (c, se) = covariance_se(&j1, &j2);
        assert!(c.abs() < 3.0 * se);
    }

    #[test]
    fn general_kernel_path_agrees_with_fast_path() {
        let grid = TimeGrid::new(24, 1.0).unwrap();
        let batch = sample_wiener(&grid, 5, &Sampling::new(2)).unwrap();
        for n in 1..=3 {
            let fast = j_integral_samples(n, &SimplexKernel::Constant(2.0), &batch).unwrap();
            let slow = j_integral_samples(n, &SimplexKernel::function(|_| 2.0), &batch).unwrap();
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let mut bare = batch.clone();
        bare.w_increments = None;
        assert!(matches!(j_integral_samples(1, &SimplexKernel::Constant(1.0), &bare), Err(Error::Contract(_))));
    }

    #[test]
    fn closed_family_examples() {
        let x = solve_linear_embedding(1.0, 0.0, &[1.0]).unwrap();
        let d = nelson_derivative(&x, 0.3).unwrap();
        assert!((d.f0 - 0.3f64.exp()).abs() < 1e-15);
        let x = solve_linear_embedding(1.0, 0.5, &[1.0, 1.0]).unwrap();
        let v = x.at(0.5).unwrap();
        assert!((v.f0 - (0.5f64.exp() - 0.5)).abs() < 1e-15);
        let d = nelson_derivative(&x, 0.5).unwrap();
        assert!((d.f0 - (v.f0 + 0.5)).abs() < 1e-14);
        let x = solve_linear_embedding(0.0, 1.0, &[0.0, 1.0]).unwrap();
        assert_eq!(x.at(0.7).unwrap().f0, 0.7);
        assert_eq!(nelson_derivative(&x, 0.7).unwrap().f0, 1.0);
        assert!(solve_linear_embedding(1.0, 0.0, &[1.0; 5]).is_err());
    }

    #[test]
    fn solved_family_has_zero_residual() {
        for a in [-1.0, 0.0, 1.0] {
            for b in [0.0, 0.5] {
                for n in 0..=2 {
                    let c: Vec<f64> = (0..=n).map(|i| 1.0 + 0.5 * i as f64).collect();
                    let x = solve_linear_embedding(a, b, &c).unwrap();
                    for k in 1..=16 {
                        let t = k as f64 / 16.0;
                        assert!(embedding_residual(&x, a, b, t).unwrap() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn perturbed_family_residual_grows() {
        let a = 1.0;
        let dt = 1e-3;
        let family = |eps: f64| {
            let times: Vec<f64> = (0..=1000).map(|k| k as f64 * dt).collect();
            let f0 = times.iter().map(|&t| (a * t).exp()).collect();
            let kernels = times.iter().map(|&t| vec![SimplexKernel::Constant((1.0 + eps * t) * (a * t).exp())]).collect();
            ChaosProcess::grid_kernel(times, f0, kernels).unwrap()
        };
        let t = 0.5;
        let unperturbed = embedding_residual(&family(0.0), a, 0.0, t).unwrap();
        assert!(unperturbed < 1e-6);
        let mut last = unperturbed;
        for eps in [0.5, 1.0, 2.0] {
            let r = embedding_residual(&family(eps), a, 0.0, t).unwrap();
            // ∂_t f_1 − a f_1 = ε e^{at}; its norm on [0, t] is ε e^{at} √t.
            let want = eps * (a * t).exp() * t.sqrt();
            assert!((r - want).abs() < 1e-5 * want, "{r} vs {want}");
            assert!(r > last);
            last = r;
        }
    }

    #[test]
    fn nelson_regression() {
        let grid = TimeGrid::new(64, 1.0).unwrap();
        let batch = sample_wiener(&grid, 50_000, &Sampling::new(12)).unwrap();
        let x = solve_linear_embedding(1.0, 0.5, &[1.0, 1.0]).unwrap();
        let r = mc_verify_nelson(&x, 0.5, &[8, 4, 2, 1], &batch).unwrap();
        assert!(r.bias_monotone);
        for s in &r.steps {
            assert!((s.slope.0 - s.exact_slope).abs() < 3.0 * s.slope.1, "{s:?}");
            assert!((s.intercept.0 - s.exact_intercept).abs() < 3.0 * s.intercept.1, "{s:?}");
        }
        let x = solve_linear_embedding(0.0, 1.0, &[0.0, 1.0]).unwrap();
        let r = mc_verify_nelson(&x, 0.5, &[4], &batch).unwrap();
        let s = &r.steps[0];
        assert!((s.intercept.0 - 1.0).abs() < 3.0 * s.intercept.1);
        assert!(s.slope.0.abs() < 3.0 * s.slope.1);
        let deep = solve_linear_embedding(1.0, 0.0, &[1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(mc_verify_nelson(&deep, 0.5, &[4], &batch), Err(Error::Unsupported(_))));
    }
}
