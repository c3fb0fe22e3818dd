//! Finite-dimensional Gaussian linear algebra.
//!
//! Conditioning a centered Gaussian quantity on a finite family of jointly
//! Gaussian variables is linear regression, so every conditional expectation
//! in this crate is represented by its regression coefficients
//! ([`AffineCombination`]). Deterministic offsets (the mean of a shifted
//! process) ride along additively and never enter inner products.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default reciprocal-condition cutoff below which a span counts as singular.
pub const DEFAULT_RCOND_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    TwoSided,
}

/// Value of `d/du cov(u, s)` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartialDerivative {
    Finite(f64),
    /// One-sided derivatives diverge or disagree.
    Undefined,
}

impl PartialDerivative {
    pub fn value(self) -> Option<f64> {
        match self {
            PartialDerivative::Finite(v) => Some(v),
            PartialDerivative::Undefined => None,
        }
    }
}

/// Covariance model `ρ(s, t)` of a (possibly shifted) Gaussian process.
pub trait CovarianceOracle: Send + Sync {
    fn cov(&self, s: f64, t: f64) -> f64;

    /// `cov(t + h, s) − cov(t, s)`. Models override this when they can avoid
    /// the cancellation of the plain difference at small `h`.
    fn cov_increment(&self, t: f64, h: f64, s: f64) -> f64 {
        self.cov(t + h, s) - self.cov(t, s)
    }

    /// Closed-form `d/du cov(u, s)|_{u=t}`; `None` when no closed form is known.
    fn partial_u(&self, _t: f64, _s: f64, _side: Side) -> Option<PartialDerivative> {
        None
    }

    /// Deterministic mean `E Z_t`; zero for centered models.
    fn mean(&self, _t: f64) -> f64 {
        0.0
    }

    /// `E Z_{t+h} − E Z_t`.
    fn mean_increment(&self, t: f64, h: f64) -> f64 {
        self.mean(t + h) - self.mean(t)
    }

    /// Derivative of the mean.
    fn mean_slope(&self, t: f64) -> f64 {
        let step = 1e-6 * t.abs().max(1.0);
        (self.mean(t + step) - self.mean(t - step)) / (2.0 * step)
    }

    fn horizon(&self) -> f64 {
        f64::INFINITY
    }
}

impl<O: CovarianceOracle + ?Sized> CovarianceOracle for Arc<O> {
    fn cov(&self, s: f64, t: f64) -> f64 {
        (**self).cov(s, t)
    }
    fn cov_increment(&self, t: f64, h: f64, s: f64) -> f64 {
        (**self).cov_increment(t, h, s)
    }
    fn mean_increment(&self, t: f64, h: f64) -> f64 {
        (**self).mean_increment(t, h)
    }
    fn partial_u(&self, t: f64, s: f64, side: Side) -> Option<PartialDerivative> {
        (**self).partial_u(t, s, side)
    }
    fn mean(&self, t: f64) -> f64 {
        (**self).mean(t)
    }
    fn mean_slope(&self, t: f64) -> f64 {
        (**self).mean_slope(t)
    }
    fn horizon(&self) -> f64 {
        (**self).horizon()
    }
}

/// Checks a closed-form `partial_u` against central differences of `cov`.
///
/// Returns the worst relative discrepancy over the probes where both sides
/// are finite and agree.
pub fn partial_consistency(oracle: &dyn CovarianceOracle, probes: &[(f64, f64)]) -> f64 {
    let mut worst = 0.0_f64;
    for &(t, s) in probes {
        let (Some(PartialDerivative::Finite(l)), Some(PartialDerivative::Finite(r))) = (
            oracle.partial_u(t, s, Side::Left),
            oracle.partial_u(t, s, Side::Right),
        ) else {
            continue;
        };
        if (l - r).abs() > 1e-9 * l.abs().max(1.0) {
            continue;
        }
        let step = 1e-6 * oracle.horizon().min(1.0);
        let fd = (oracle.cov(t + step, s) - oracle.cov(t - step, s)) / (2.0 * step);
        let rel = (fd - l).abs() / l.abs().max(1e-3);
        worst = worst.max(rel);
    }
    worst
}

/// A finite linear combination `Σ w_j Z_{t_j} + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstChaosVariable {
    terms: Vec<(f64, f64)>,
    offset: f64,
}

impl FirstChaosVariable {
    /// Terms must have strictly increasing times and finite weights, with at
    /// least one nonzero weight (an empty list is the constant `offset`).
    pub fn new(terms: Vec<(f64, f64)>, offset: f64) -> Result<Self> {
        if terms.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::Contract("times must be strictly increasing".into()));
        }
        if terms.iter().any(|&(t, w)| !t.is_finite() || !w.is_finite()) || !offset.is_finite() {
            return Err(Error::Contract("times, weights and offset must be finite".into()));
        }
        if !terms.is_empty() && terms.iter().all(|&(_, w)| w == 0.0) {
            return Err(Error::Contract("at least one weight must be nonzero".into()));
        }
        Ok(Self { terms, offset })
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), offset: c }
    }

    /// The centered value `Z_t − E Z_t` at a single time.
    pub fn point(t: f64) -> Self {
        Self { terms: vec![(t, 1.0)], offset: 0.0 }
    }

    /// `Σ w_j Z_{t_j}` of the given process, with the offset taken from its mean.
    pub fn of_process(oracle: &dyn CovarianceOracle, terms: &[(f64, f64)]) -> Result<Self> {
        let mut sorted = terms.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let offset = terms.iter().map(|&(t, w)| w * oracle.mean(t)).sum();
        let merged = merge(sorted);
        if merged.is_empty() {
            return Ok(Self::constant(offset));
        }
        Self::new(merged, offset)
    }

    /// `Z_t` of the given process.
    pub fn value_of(oracle: &dyn CovarianceOracle, t: f64) -> Self {
        Self { terms: vec![(t, 1.0)], offset: oracle.mean(t) }
    }

    /// `Σ c_k X_k`, merging equal times and dropping cancelled terms.
    pub fn linear_combination(parts: &[(f64, &FirstChaosVariable)]) -> Self {
        let mut terms: Vec<(f64, f64)> = parts
            .iter()
            .flat_map(|&(c, x)| x.terms.iter().map(move |&(t, w)| (t, c * w)))
            .collect();
        terms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let offset = parts.iter().map(|&(c, x)| c * x.offset).sum();
        Self { terms: merge(terms), offset }
    }

    pub fn terms(&self) -> &[(f64, f64)] {
        &self.terms
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn label(&self) -> String {
        if self.terms.len() == 1 && self.terms[0].1 == 1.0 {
            return format!("Z({})", self.terms[0].0);
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(t, w)| format!("{w}*Z({t})"))
            .collect();
        if parts.is_empty() {
            format!("{}", self.offset)
        } else {
            parts.join("+")
        }
    }
}

fn merge(sorted: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (t, w) in sorted {
        match out.last_mut() {
            Some(last) if last.0 == t => last.1 += w,
            _ => out.push((t, w)),
        }
    }
    out.retain(|&(_, w)| w != 0.0);
    out
}

/// `E[(X − EX)(Y − EY)] = Σ_i Σ_j w_i v_j cov(t_i, s_j)`.
pub fn inner_product(
    x: &FirstChaosVariable,
    y: &FirstChaosVariable,
    oracle: &dyn CovarianceOracle,
) -> Result<f64> {
    let mut acc = 0.0;
    for &(t, w) in &x.terms {
        for &(s, v) in &y.terms {
            let c = oracle.cov(t, s);
            if !c.is_finite() {
                return Err(Error::NonFiniteCovariance { s, t });
            }
            acc += w * v * c;
        }
    }
    Ok(acc)
}

/// Labelled basis with its Gram matrix and means, shared by every affine
/// combination expressed over it.
#[derive(Debug, Clone)]
pub struct Basis {
    labels: Vec<String>,
    gram: DMatrix<f64>,
    means: Vec<f64>,
    variables: Option<Vec<FirstChaosVariable>>,
}

impl Basis {
    pub fn empty() -> Arc<Self> {
        Arc::new(Self {
            labels: Vec::new(),
            gram: DMatrix::zeros(0, 0),
            means: Vec::new(),
            variables: Some(Vec::new()),
        })
    }

    /// Independent centered atoms with the given variances.
    pub fn atoms(labels: Vec<String>, variances: &[f64]) -> Arc<Self> {
        let n = variances.len();
        Arc::new(Self {
            labels,
            gram: DMatrix::from_diagonal(&DVector::from_column_slice(variances)),
            means: vec![0.0; n],
            variables: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variables(&self) -> Option<&[FirstChaosVariable]> {
        self.variables.as_deref()
    }
}

/// `Σ c_i Y_i + constant` over a shared basis `{Y_i}`.
#[derive(Debug, Clone)]
pub struct AffineCombination {
    basis: Arc<Basis>,
    pub coefficients: Vec<f64>,
    pub constant: f64,
}

impl AffineCombination {
    pub fn new(basis: Arc<Basis>, coefficients: Vec<f64>, constant: f64) -> Self {
        assert_eq!(basis.len(), coefficients.len(), "coefficient count must match basis");
        Self { basis, coefficients, constant }
    }

    pub fn constant_only(c: f64) -> Self {
        Self::new(Basis::empty(), Vec::new(), c)
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn mean(&self) -> f64 {
        self.coefficients
            .iter()
            .zip(&self.basis.means)
            .map(|(c, m)| c * m)
            .sum::<f64>()
            + self.constant
    }

    pub fn variance(&self) -> f64 {
        let c = DVector::from_column_slice(&self.coefficients);
        (c.transpose() * &self.basis.gram * &c)[(0, 0)].max(0.0)
    }

    pub fn l2_norm(&self) -> f64 {
        (self.variance() + self.mean().powi(2)).sqrt()
    }

    /// L² distance to another combination over the same basis.
    pub fn distance(&self, other: &AffineCombination) -> f64 {
        self.zip_with(other, |a, b| a - b).l2_norm()
    }

    pub fn zip_with(&self, other: &AffineCombination, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.coefficients.len(), other.coefficients.len());
        Self {
            basis: self.basis.clone(),
            coefficients: self
                .coefficients
                .iter()
                .zip(&other.coefficients)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            constant: f(self.constant, other.constant),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            basis: self.basis.clone(),
            coefficients: self.coefficients.iter().map(|&c| f(c)).collect(),
            constant: f(self.constant),
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        self.map(|c| k * c)
    }

    /// Value of the combination for realized basis values.
    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.coefficients.iter().zip(values).map(|(c, v)| c * v).sum::<f64>() + self.constant
    }

    /// The combination as a single first-chaos variable, when the basis is
    /// made of process values.
    pub fn to_variable(&self) -> Option<FirstChaosVariable> {
        let vars = self.basis.variables()?;
        let parts: Vec<(f64, &FirstChaosVariable)> =
            self.coefficients.iter().copied().zip(vars.iter()).collect();
        let v = FirstChaosVariable::linear_combination(&parts);
        let offset = v.offset + self.constant;
        Some(v.with_offset(offset))
    }

    pub fn sup_abs(&self) -> f64 {
        self.coefficients
            .iter()
            .fold(self.constant.abs(), |m, c| m.max(c.abs()))
    }
}

#[derive(Debug)]
enum Factor {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::linalg::FullPivLU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

/// Variables, their Gram matrix and a lazily computed factorization.
pub struct GramSystem {
    oracle: Arc<dyn CovarianceOracle>,
    basis: Arc<Basis>,
    rcond_threshold: f64,
    factor: OnceLock<std::result::Result<Factor, f64>>,
}

impl std::fmt::Debug for GramSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GramSystem")
            .field("labels", &self.basis.labels)
            .field("gram", &self.basis.gram)
            .finish()
    }
}

impl GramSystem {
    pub fn new(variables: Vec<FirstChaosVariable>, oracle: Arc<dyn CovarianceOracle>) -> Result<Self> {
        let n = variables.len();
        let mut gram = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = inner_product(&variables[i], &variables[j], oracle.as_ref())?;
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        let basis = Arc::new(Basis {
            labels: variables.iter().map(FirstChaosVariable::label).collect(),
            means: variables.iter().map(FirstChaosVariable::offset).collect(),
            gram,
            variables: Some(variables),
        });
        Ok(Self { oracle, basis, rcond_threshold: DEFAULT_RCOND_THRESHOLD, factor: OnceLock::new() })
    }

    pub fn with_rcond_threshold(mut self, threshold: f64) -> Self {
        self.rcond_threshold = threshold;
        self.factor = OnceLock::new();
        self
    }

    pub fn oracle(&self) -> &Arc<dyn CovarianceOracle> {
        &self.oracle
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn variables(&self) -> &[FirstChaosVariable] {
        self.basis.variables().expect("gram systems are built from variables")
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.basis.gram
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// Smallest over largest eigenvalue of the Gram matrix.
    pub fn rcond(&self) -> f64 {
        if self.is_empty() {
            return 1.0;
        }
        let eig = nalgebra::SymmetricEigen::new(self.basis.gram.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if max <= 0.0 {
            0.0
        } else {
            min / max
        }
    }

    /// Smallest eigenvalue relative to the largest; should be ≥ −1e-10 for a
    /// valid covariance model.
    pub fn min_eigenvalue_ratio(&self) -> f64 {
        self.rcond()
    }

    fn factor(&self) -> Result<&Factor> {
        let slot = self.factor.get_or_init(|| {
            let rcond = self.rcond();
            if !(rcond >= self.rcond_threshold) {
                return Err(rcond);
            }
            match self.basis.gram.clone().cholesky() {
                Some(ch) => Ok(Factor::Cholesky(ch)),
                None => Ok(Factor::Lu(self.basis.gram.clone().full_piv_lu())),
            }
        });
        slot.as_ref().map_err(|&rcond| Error::SingularSpan { rcond })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        match self.factor()? {
            Factor::Cholesky(ch) => Ok(ch.solve(rhs)),
            Factor::Lu(lu) => lu
                .solve(rhs)
                .ok_or(Error::SingularSpan { rcond: 0.0 }),
        }
    }

    /// `(⟨x, Y_i⟩)_i`.
    pub fn cross(&self, x: &FirstChaosVariable) -> Result<DVector<f64>> {
        let vals: Result<Vec<f64>> = self
            .variables()
            .iter()
            .map(|y| inner_product(x, y, self.oracle.as_ref()))
            .collect();
        Ok(DVector::from_vec(vals?))
    }

    /// `E[target | span]` as an affine combination of the span's variables.
    pub fn conditional_expectation(&self, target: &FirstChaosVariable) -> Result<AffineCombination> {
        let r = regress(target, self)?;
        Ok(AffineCombination::new(self.basis.clone(), r.coefficients, r.constant))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionCoefficients {
    pub coefficients: Vec<f64>,
    pub constant: f64,
}

/// Solves `M c = (⟨target, Y_i⟩)_i`; the constant keeps the target's mean.
pub fn regress(target: &FirstChaosVariable, span: &GramSystem) -> Result<RegressionCoefficients> {
    if span.is_empty() {
        return Ok(RegressionCoefficients { coefficients: Vec::new(), constant: target.offset() });
    }
    let rhs = span.cross(target)?;
    let c = span.solve(&rhs)?;
    let shift: f64 = c.iter().zip(span.basis.means.iter()).map(|(c, m)| c * m).sum();
    Ok(RegressionCoefficients { coefficients: c.iter().copied().collect(), constant: target.offset() - shift })
}

/// Orthonormalizes `family` under the oracle's inner product.
///
/// Returns the orthonormal variables and the lower-triangular matrix `T`
/// with `e_i = Σ_j T_ij y_j`.
pub fn gram_schmidt(
    family: &[FirstChaosVariable],
    oracle: &dyn CovarianceOracle,
) -> Result<(Vec<FirstChaosVariable>, DMatrix<f64>)> {
    let n = family.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = inner_product(&family[i], &family[j], oracle)?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    let ip = |u: &DVector<f64>, v: &DVector<f64>| (u.transpose() * &g * v)[(0, 0)];
    let mut rows: Vec<DVector<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        // Two passes of modified Gram–Schmidt.
        for _ in 0..2 {
            for e in &rows {
                let p = ip(&v, e);
                v -= e * p;
            }
        }
        let norm = ip(&v, &v).max(0.0).sqrt();
        let scale = g[(i, i)].max(0.0).sqrt();
        if !(norm > 1e-10 * scale) || scale == 0.0 {
            return Err(Error::DegenerateFamily { index: i + 1, norm });
        }
        rows.push(v / norm);
    }
    let mut t = DMatrix::zeros(n, n);
    for (i, r) in rows.iter().enumerate() {
        t.set_row(i, &r.transpose());
    }
    let out = rows
        .iter()
        .map(|r| {
            let parts: Vec<(f64, &FirstChaosVariable)> = r.iter().copied().zip(family.iter()).collect();
            FirstChaosVariable::linear_combination(&parts)
        })
        .collect();
    Ok((out, t))
}

/// Projects an affine combination over a larger span onto `sub`.
pub fn project_affine(expr: &AffineCombination, sub: &GramSystem) -> Result<AffineCombination> {
    let target = expr.to_variable().ok_or_else(|| {
        Error::Unsupported("projection needs a basis of process values".into())
    })?;
    sub.conditional_expectation(&target)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fbm(f64);
    impl CovarianceOracle for Fbm {
        fn cov(&self, s: f64, t: f64) -> f64 {
            let h2 = 2.0 * self.0;
            0.5 * (s.powf(h2) + t.powf(h2) - (t - s).abs().powf(h2))
        }
    }

    struct Bad;
    impl CovarianceOracle for Bad {
        fn cov(&self, _s: f64, _t: f64) -> f64 {
            f64::NAN
        }
    }

    fn oracle(h: f64) -> Arc<dyn CovarianceOracle> {
        Arc::new(Fbm(h))
    }

    #[test]
    fn inner_product_examples() {
        let o = Fbm(0.3);
        let one = FirstChaosVariable::point(1.0);
        assert!((inner_product(&one, &one, &o).unwrap() - 1.0).abs() < 1e-15);
        let bm = Fbm(0.5);
        let x = FirstChaosVariable::point(0.3);
        let y = FirstChaosVariable::point(0.7);
        assert!((inner_product(&x, &y, &bm).unwrap() - 0.3).abs() < 1e-15);
        let inc = FirstChaosVariable::new(vec![(0.2, -1.0), (0.3, 1.0)], 0.0).unwrap();
        let want = 0.5 * (0.3f64.powf(0.6) - 0.2f64.powf(0.6) - 0.1f64.powf(0.6));
        let got = inner_product(&inc, &FirstChaosVariable::point(0.2), &o).unwrap();
        assert!((got - want).abs() < 1e-15);
        assert!((got + 0.073163).abs() < 1e-6);
    }

    #[test]
    fn inner_product_reports_bad_pair() {
        let x = FirstChaosVariable::point(0.4);
        let y = FirstChaosVariable::point(0.9);
        match inner_product(&x, &y, &Bad) {
            Err(Error::NonFiniteCovariance { s, t }) => assert_eq!((s, t), (0.9, 0.4)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn variable_invariants() {
        assert!(FirstChaosVariable::new(vec![(0.5, 1.0), (0.2, 1.0)], 0.0).is_err());
        assert!(FirstChaosVariable::new(vec![(0.5, 0.0)], 0.0).is_err());
        assert!(FirstChaosVariable::new(vec![(0.5, f64::NAN)], 0.0).is_err());
        let x = FirstChaosVariable::point(0.5);
        let cancelled = FirstChaosVariable::linear_combination(&[(1.0, &x), (-1.0, &x)]);
        assert!(cancelled.is_constant());
    }

    #[test]
    fn one_dimensional_regression() {
        // ⟨X,Y⟩ = 0.5, ⟨Y,Y⟩ = 2 with Brownian covariance: Y = √2-ish scaled.
        let o = oracle(0.5);
        let y = FirstChaosVariable::new(vec![(2.0, 1.0)], 0.0).unwrap();
        let x = FirstChaosVariable::new(vec![(0.5, 1.0)], 0.0).unwrap();
        let span = GramSystem::new(vec![y], o).unwrap();
        let r = regress(&x, &span).unwrap();
        assert!((r.coefficients[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn orthonormal_span_gives_inner_products() {
        let o = oracle(0.5);
        // B_1 and B_2 − B_1 are orthonormal for Brownian motion.
        let y1 = FirstChaosVariable::point(1.0);
        let y2 = FirstChaosVariable::new(vec![(1.0, -1.0), (2.0, 1.0)], 0.0).unwrap();
        let x = FirstChaosVariable::new(vec![(0.5, 2.0), (1.5, 1.0)], 0.0).unwrap();
        let span = GramSystem::new(vec![y1.clone(), y2.clone()], o.clone()).unwrap();
        let r = regress(&x, &span).unwrap();
        let a = inner_product(&x, &y1, o.as_ref()).unwrap();
        let b = inner_product(&x, &y2, o.as_ref()).unwrap();
        assert!((r.coefficients[0] - a).abs() < 1e-14);
        assert!((r.coefficients[1] - b).abs() < 1e-14);
    }

    #[test]
    fn markov_regression_two_points() {
        let o = oracle(0.5);
        let span = GramSystem::new(
            vec![FirstChaosVariable::point(0.2), FirstChaosVariable::point(0.8)],
            o.clone(),
        )
        .unwrap();
        let target = FirstChaosVariable::point(0.5);
        let r = regress(&target, &span).unwrap();
        // Brute-force 2×2 solve by Cramer's rule.
        let (a, b, d) = (0.2, 0.2, 0.8);
        let (r1, r2) = (0.2, 0.5);
        let det = a * d - b * b;
        let c1 = (r1 * d - b * r2) / det;
        let c2 = (a * r2 - b * r1) / det;
        assert!((r.coefficients[0] - c1).abs() < 1e-14);
        assert!((r.coefficients[1] - c2).abs() < 1e-14);
        // Brownian bridge interpolation weights.
        assert!((c1 - 0.5).abs() < 1e-14 && (c2 - 0.5).abs() < 1e-14);
        let fit = span.conditional_expectation(&target).unwrap().to_variable().unwrap();
        let resid = FirstChaosVariable::linear_combination(&[(1.0, &target), (-1.0, &fit)]);
        for y in span.variables() {
            assert!(inner_product(&resid, y, o.as_ref()).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn regression_constant_tracks_offsets() {
        let o = oracle(0.5);
        let y = FirstChaosVariable::point(1.0).with_offset(3.0);
        let x = FirstChaosVariable::point(2.0).with_offset(5.0);
        let span = GramSystem::new(vec![y], o).unwrap();
        let r = regress(&x, &span).unwrap();
        assert!((r.coefficients[0] - 1.0).abs() < 1e-15);
        assert!((r.constant - 2.0).abs() < 1e-15);
    }

    #[test]
    fn singular_span_is_reported() {
        let o = oracle(0.5);
        let span = GramSystem::new(
            vec![FirstChaosVariable::point(0.5), FirstChaosVariable::point(0.5)],
            o,
        )
        .unwrap();
        match regress(&FirstChaosVariable::point(0.7), &span) {
            Err(Error::SingularSpan { rcond }) => assert!(rcond < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gram_schmidt_examples() {
        let o = Fbm(0.5);
        let e1 = FirstChaosVariable::point(1.0);
        let e2 = FirstChaosVariable::new(vec![(1.0, -1.0), (2.0, 1.0)], 0.0).unwrap();
        let (_, t) = gram_schmidt(&[e1.clone(), e2], &o).unwrap();
        assert!((t - DMatrix::identity(2, 2)).abs().max() < 1e-14);

        match gram_schmidt(&[e1.clone(), e1], &o) {
            Err(Error::DegenerateFamily { index, .. }) => assert_eq!(index, 2),
            other => panic!("{other:?}"),
        }

        let (out, _) =
            gram_schmidt(&[FirstChaosVariable::point(0.5), FirstChaosVariable::point(1.0)], &o).unwrap();
        // Second vector ∝ B_1 − B_{0.5}: independent increments.
        let terms = out[1].terms();
        assert_eq!(terms.len(), 2);
        assert!((terms[0].1 + terms[1].1).abs() < 1e-12);
        let norm = inner_product(&out[1], &out[1], &o).unwrap();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let o = oracle(0.7);
        let sub = GramSystem::new(vec![FirstChaosVariable::point(0.4)], o.clone()).unwrap();
        let expr = AffineCombination::new(sub.basis().clone(), vec![2.5], 0.0);
        let p = project_affine(&expr, &sub).unwrap();
        assert!((p.coefficients[0] - 2.5).abs() < 1e-14);

        let big = GramSystem::new(vec![FirstChaosVariable::point(0.9)], o.clone()).unwrap();
        let expr = AffineCombination::new(big.basis().clone(), vec![3.0], 0.0);
        let p = project_affine(&expr, &sub).unwrap();
        let want = 3.0 * o.cov(0.9, 0.4) / o.cov(0.4, 0.4);
        assert!((p.coefficients[0] - want).abs() < 1e-14);
    }
}
