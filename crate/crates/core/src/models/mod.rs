//! Closed-form covariance models and the fractional-Brownian toolkit.

mod basis;
mod fractional;
mod kernel;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::gaussian::{CovarianceOracle, PartialDerivative, Side};

pub use basis::BasisFunction;
pub use fractional::{apply_kh, apply_kh_with, frac_integral, frac_integral_weighted, SampledFunction, DEFAULT_OPERATOR_STEPS};
pub use kernel::{
    kernel_covariance_quadrature, kernel_from_parts, kernel_integral, kernel_kh, kernel_normalization, kh_of_constant,
};

/// Hurst index in the open interval `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Hurst(f64);

impl Hurst {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h < 1.0 {
            Ok(Self(h))
        } else {
            Err(domain(format!("Hurst index must lie in (0, 1), got {h}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn is_brownian(self) -> bool {
        self.0 == 0.5
    }
}

impl TryFrom<f64> for Hurst {
    type Error = crate::Error;
    fn try_from(h: f64) -> Result<Self> {
        Hurst::new(h)
    }
}

impl From<Hurst> for f64 {
    fn from(h: Hurst) -> f64 {
        h.0
    }
}

/// `R_H(s, t) = ½(t^{2H} + s^{2H} − |t − s|^{2H})`.
pub fn fbm_cov(h: f64, s: f64, t: f64) -> Result<f64> {
    let h = Hurst::new(h)?;
    if s < 0.0 || t < 0.0 {
        return Err(domain("fBm covariance needs s, t ≥ 0"));
    }
    Ok(fbm_cov_unchecked(h.get(), s, t))
}

#[inline]
pub(crate) fn fbm_cov_unchecked(h: f64, s: f64, t: f64) -> f64 {
    if h == 0.5 {
        return s.min(t);
    }
    let h2 = 2.0 * h;
    0.5 * (t.powf(h2) + s.powf(h2) - (t - s).abs().powf(h2))
}

/// `(a + d)^p − a^p` without cancellation when `|d| ≪ a`.
pub(crate) fn pow_increment(a: f64, d: f64, p: f64) -> f64 {
    if a > 0.0 && d.abs() < 0.5 * a {
        a.powf(p) * (p * (d / a).ln_1p()).exp_m1()
    } else {
        (a + d).abs().powf(p) - a.powf(p)
    }
}

/// `R_H(t + h, s) − R_H(t, s)`.
pub(crate) fn fbm_cov_increment(hurst: f64, t: f64, h: f64, s: f64) -> f64 {
    let q = t - s;
    if hurst == 0.5 {
        return if h >= 0.0 { (-q).clamp(0.0, h) } else { -(-h - q.clamp(0.0, -h)) };
    }
    let p = 2.0 * hurst;
    let far = if q != 0.0 && (q + h).signum() == q.signum() {
        pow_increment(q.abs(), h * q.signum(), p)
    } else {
        (q + h).abs().powf(p) - q.abs().powf(p)
    };
    0.5 * (pow_increment(t, h, p) - far)
}

/// One-sided derivatives of `u ↦ R_H(u, s)` at `u = t`, as `(left, right)`.
fn fbm_partial_sides(h: f64, t: f64, s: f64) -> (PartialDerivative, PartialDerivative) {
    use PartialDerivative::*;
    let smooth = h * t.powf(2.0 * h - 1.0);
    if t != s {
        let d = t - s;
        let v = smooth - h * d.abs().powf(2.0 * h - 1.0) * d.signum();
        return (Finite(v), Finite(v));
    }
    if h > 0.5 {
        (Finite(smooth), Finite(smooth))
    } else if h == 0.5 {
        // min(u, s): slope 1 from the left, 0 from the right.
        (Finite(1.0), Finite(0.0))
    } else {
        (Undefined, Undefined)
    }
}

pub(crate) fn combine_sides(
    left: PartialDerivative,
    right: PartialDerivative,
    side: Side,
) -> PartialDerivative {
    match side {
        Side::Left => left,
        Side::Right => right,
        Side::TwoSided => match (left, right) {
            (PartialDerivative::Finite(l), PartialDerivative::Finite(r))
                if (l - r).abs() <= 1e-12 * l.abs().max(r.abs()).max(1.0) =>
            {
                PartialDerivative::Finite(0.5 * (l + r))
            }
            _ => PartialDerivative::Undefined,
        },
    }
}

/// Covariance model variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelKind {
    FractionalBrownian {
        hurst: Hurst,
    },
    /// `Z_t = Σ_i f_i(t) N_i` with independent centered `N_i`.
    BasisExpansion {
        functions: Vec<BasisFunction>,
        /// Variances of the atoms; all ones when omitted.
        #[serde(default)]
        variances: Option<Vec<f64>>,
        /// Declared bound `A ≥ sup_t Σ_i f_i(t)²`.
        bound: f64,
    },
    TwoAtom {
        f1: BasisFunction,
        f2: BasisFunction,
        #[serde(default = "one")]
        var1: f64,
        #[serde(default = "one")]
        var2: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Unknown keys are rejected by the flattened [`ModelKind`]; serde cannot
/// combine `deny_unknown_fields` with `flatten` on the outer struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kind: ModelKind,
    pub horizon: f64,
}

impl ModelSpec {
    pub fn fbm(h: f64, horizon: f64) -> Result<Self> {
        Self { kind: ModelKind::FractionalBrownian { hurst: Hurst::new(h)? }, horizon }.validated()
    }

    pub fn two_atom(f1: BasisFunction, f2: BasisFunction, horizon: f64) -> Result<Self> {
        Self { kind: ModelKind::TwoAtom { f1, f2, var1: 1.0, var2: 1.0 }, horizon }.validated()
    }

    /// `f_i(t) = ∫_0^t e_i`, with `e_i` the first `n` trigonometric
    /// orthonormal functions on `[0, horizon]`; the limit is Brownian motion.
    pub fn trigonometric_expansion(n: usize, horizon: f64) -> Result<Self> {
        let functions = (0..n).map(|index| BasisFunction::TrigIntegral { index, period: horizon }).collect();
        Self { kind: ModelKind::BasisExpansion { functions, variances: None, bound: horizon }, horizon }
            .validated()
    }

    pub fn basis(functions: Vec<BasisFunction>, bound: f64, horizon: f64) -> Result<Self> {
        Self { kind: ModelKind::BasisExpansion { functions, variances: None, bound }, horizon }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(domain(format!("horizon must be positive, got {}", self.horizon)));
        }
        match &self.kind {
            ModelKind::FractionalBrownian { hurst } => {
                Hurst::new(hurst.get())?;
            }
            ModelKind::BasisExpansion { functions, variances, bound } => {
                if let Some(v) = variances {
                    if v.len() != functions.len() || v.iter().any(|&x| !(x >= 0.0)) {
                        return Err(domain("variances must be nonnegative, one per function"));
                    }
                }
                let atoms = self.atoms().unwrap_or_default();
                for k in 0..=256 {
                    let t = self.horizon * k as f64 / 256.0;
                    let s: f64 = atoms.iter().map(|(f, _)| f.value(t).powi(2)).sum();
                    if s > *bound {
                        return Err(domain(format!(
                            "Σ f_i(t)² = {s} exceeds the declared bound {bound} at t = {t}"
                        )));
                    }
                }
            }
            ModelKind::TwoAtom { var1, var2, .. } => {
                if !(*var1 >= 0.0 && *var2 >= 0.0) {
                    return Err(domain("atom variances must be nonnegative"));
                }
            }
        }
        Ok(self)
    }

    pub fn hurst(&self) -> Option<f64> {
        match &self.kind {
            ModelKind::FractionalBrownian { hurst } => Some(hurst.get()),
            _ => None,
        }
    }

    /// Atoms `(f_i, Var N_i)` of finite-atom models.
    pub fn atoms(&self) -> Option<Vec<(BasisFunction, f64)>> {
        match &self.kind {
            ModelKind::FractionalBrownian { .. } => None,
            ModelKind::BasisExpansion { functions, variances, .. } => Some(
                functions
                    .iter()
                    .enumerate()
                    .map(|(i, f)| (f.clone(), variances.as_ref().map_or(1.0, |v| v[i])))
                    .collect(),
            ),
            ModelKind::TwoAtom { f1, f2, var1, var2 } => {
                Some(vec![(f1.clone(), *var1), (f2.clone(), *var2)])
            }
        }
    }

    pub fn cov(&self, s: f64, t: f64) -> f64 {
        match &self.kind {
            ModelKind::FractionalBrownian { hurst } => fbm_cov_unchecked(hurst.get(), s, t),
            ModelKind::BasisExpansion { functions, variances, .. } => functions
                .iter()
                .enumerate()
                .map(|(i, f)| f.value(s) * f.value(t) * variances.as_ref().map_or(1.0, |v| v[i]))
                .sum(),
            ModelKind::TwoAtom { f1, f2, var1, var2 } => {
                f1.value(s) * f1.value(t) * var1 + f2.value(s) * f2.value(t) * var2
            }
        }
    }

    /// `cov(t + h, s) − cov(t, s)`, accurate for small `h`.
    pub fn cov_increment(&self, t: f64, h: f64, s: f64) -> f64 {
        match &self.kind {
            ModelKind::FractionalBrownian { hurst } => fbm_cov_increment(hurst.get(), t, h, s),
            _ => self
                .atoms()
                .expect("finite-atom model")
                .iter()
                .map(|(f, var)| var * f.value(s) * h * f.difference_quotient(t, h))
                .sum(),
        }
    }

    fn partial_sides(&self, t: f64, s: f64) -> (PartialDerivative, PartialDerivative) {
        match &self.kind {
            ModelKind::FractionalBrownian { hurst } => fbm_partial_sides(hurst.get(), t, s),
            _ => {
                let atoms = self.atoms().expect("finite-atom model");
                let side = |side: Side| {
                    let mut acc = 0.0;
                    for (f, var) in &atoms {
                        let weight = f.value(s) * var;
                        if weight == 0.0 {
                            continue;
                        }
                        match f.derivative(t, side) {
                            PartialDerivative::Finite(d) => acc += d * weight,
                            PartialDerivative::Undefined => return PartialDerivative::Undefined,
                        }
                    }
                    PartialDerivative::Finite(acc)
                };
                (side(Side::Left), side(Side::Right))
            }
        }
    }
}

/// `d/du cov(u, s)|_{u=t}` from the model's closed form.
pub fn cov_partial_u(model: &ModelSpec, t: f64, s: f64, side: Side) -> Result<PartialDerivative> {
    if !(t > 0.0 && t < model.horizon) {
        return Err(domain(format!("t = {t} must lie in (0, {})", model.horizon)));
    }
    if !(s > 0.0 && s <= model.horizon) {
        return Err(domain(format!("s = {s} must lie in (0, {}]", model.horizon)));
    }
    let (l, r) = model.partial_sides(t, s);
    Ok(combine_sides(l, r, side))
}

/// `½ dt^{2H}(|k+1|^{2H} − 2|k|^{2H} + |k−1|^{2H})`, the lag-`k`
/// autocovariance of fractional Gaussian noise with step `dt`.
pub fn fgn_autocovariance(h: f64, k: u64, dt: f64) -> f64 {
    let h2 = 2.0 * h;
    let k = k as f64;
    0.5 * dt.powf(h2) * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Deterministic mean path `t ↦ E Z_t` attached to a model.
pub trait MeanPath: Send + Sync + std::fmt::Debug {
    fn mean(&self, t: f64) -> f64;
    fn slope(&self, t: f64) -> f64;

    /// `m(t + h) − m(t)`.
    fn increment(&self, t: f64, h: f64) -> f64 {
        self.mean(t + h) - self.mean(t)
    }
}

/// [`CovarianceOracle`] backed by a [`ModelSpec`], optionally shifted by a
/// deterministic mean path.
#[derive(Debug, Clone)]
pub struct ModelOracle {
    model: ModelSpec,
    mean: Option<Arc<dyn MeanPath>>,
    x0: f64,
}

impl ModelOracle {
    pub fn new(model: ModelSpec) -> Self {
        Self { model, mean: None, x0: 0.0 }
    }

    pub fn shifted(model: ModelSpec, x0: f64, mean: Arc<dyn MeanPath>) -> Self {
        Self { model, mean: Some(mean), x0 }
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn is_centered(&self) -> bool {
        self.mean.is_none() && self.x0 == 0.0
    }

    pub fn into_arc(self) -> Arc<dyn CovarianceOracle> {
        Arc::new(self)
    }
}

impl CovarianceOracle for ModelOracle {
    fn cov(&self, s: f64, t: f64) -> f64 {
        self.model.cov(s, t)
    }

    fn cov_increment(&self, t: f64, h: f64, s: f64) -> f64 {
        self.model.cov_increment(t, h, s)
    }

    fn mean_increment(&self, t: f64, h: f64) -> f64 {
        self.mean.as_ref().map_or(0.0, |m| m.increment(t, h))
    }

    fn partial_u(&self, t: f64, s: f64, side: Side) -> Option<PartialDerivative> {
        let (l, r) = self.model.partial_sides(t, s);
        Some(combine_sides(l, r, side))
    }

    fn mean(&self, t: f64) -> f64 {
        self.x0 + self.mean.as_ref().map_or(0.0, |m| m.mean(t))
    }

    fn mean_slope(&self, t: f64) -> f64 {
        self.mean.as_ref().map_or(0.0, |m| m.slope(t))
    }

    fn horizon(&self) -> f64 {
        self.model.horizon
    }
}

/// Centered oracle for a model.
pub fn as_oracle(model: &ModelSpec) -> Arc<dyn CovarianceOracle> {
    Arc::new(ModelOracle::new(model.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::partial_consistency;

    #[test]
    fn spec_serde() {
        let m: ModelSpec =
            serde_json::from_str(r#"{"type": "fractional_brownian", "hurst": 0.7, "horizon": 2.0}"#).unwrap();
        assert_eq!(m, ModelSpec::fbm(0.7, 2.0).unwrap());
        let back: ModelSpec = serde_json::from_value(serde_json::to_value(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        let extra = r#"{"type": "fractional_brownian", "hurst": 0.7, "horizon": 2.0, "drift": 1}"#;
        assert!(serde_json::from_str::<ModelSpec>(extra).unwrap_err().to_string().contains("drift"));
        let bad = r#"{"type": "fractional_brownian", "hurst": 1.5, "horizon": 1.0}"#;
        assert!(serde_json::from_str::<ModelSpec>(bad).unwrap_err().to_string().contains("Hurst"));
        let atoms = r#"{"type": "two_atom", "horizon": 1.0,
            "f1": {"kind": "linear", "slope": 1.0, "intercept": 0.0},
            "f2": {"kind": "abs_power", "center": 0.5, "exponent": 0.3, "scale": 1.0}}"#;
        let m: ModelSpec = serde_json::from_str(atoms).unwrap();
        assert_eq!(m.atoms().unwrap().len(), 2);
    }

    #[test]
    fn covariance_increments() {
        for h in [0.3, 0.5, 0.7] {
            for (t, s) in [(0.5, 0.5), (0.5, 0.2), (0.5, 0.9), (0.5, 0.52), (1.0, 0.0)] {
                for step in [0.05, -0.05, 1e-3, -1e-3] {
                    let direct = fbm_cov_unchecked(h, t + step, s) - fbm_cov_unchecked(h, t, s);
                    let inc = fbm_cov_increment(h, t, step, s);
                    assert!((inc - direct).abs() < 1e-13, "H={h} t={t} s={s} h={step}: {inc} vs {direct}");
                }
            }
        }
        // At tiny steps the increment keeps its leading behaviour H·t^{2H−1}·h.
        let inc = fbm_cov_increment(0.7, 0.5, 1e-12, 0.2);
        let slope = 0.7 * (0.5f64.powf(0.4) - 0.3f64.powf(0.4));
        assert!((inc / 1e-12 - slope).abs() < 1e-9);
    }

    #[test]
    fn fbm_cov_examples() {
        assert!((fbm_cov(0.5, 0.3, 0.7).unwrap() - 0.3).abs() < 1e-15);
        for h in [0.1, 0.3, 0.7, 0.9] {
            assert!((fbm_cov(h, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        }
        let v = fbm_cov(0.7, 0.5, 0.5).unwrap();
        assert!((v - 0.5f64.powf(1.4)).abs() < 1e-15);
        assert!((v - 0.37893).abs() < 1e-5);
        assert!(fbm_cov(1.5, 0.5, 0.5).is_err());
        assert!(fbm_cov(0.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn partial_examples() {
        let m = ModelSpec::fbm(0.7, 1.0).unwrap();
        let v = cov_partial_u(&m, 0.5, 0.5, Side::TwoSided).unwrap().value().unwrap();
        assert!((v - 0.7 * 0.5f64.powf(0.4)).abs() < 1e-14);
        assert!((v - 0.530501).abs() < 1e-6);

        let m = ModelSpec::fbm(0.3, 2.0).unwrap();
        assert_eq!(cov_partial_u(&m, 1.0, 1.0, Side::TwoSided).unwrap(), PartialDerivative::Undefined);
        let v = cov_partial_u(&m, 0.5, 0.2, Side::TwoSided).unwrap().value().unwrap();
        assert!((v + 0.089741).abs() < 1e-6, "{v}");
        assert!((v - 0.3 * (0.5f64.powf(-0.4) - 0.3f64.powf(-0.4))).abs() < 1e-14);

        let bm = ModelSpec::fbm(0.5, 1.0).unwrap();
        assert_eq!(cov_partial_u(&bm, 0.5, 0.5, Side::Left).unwrap(), PartialDerivative::Finite(1.0));
        assert_eq!(cov_partial_u(&bm, 0.5, 0.5, Side::Right).unwrap(), PartialDerivative::Finite(0.0));
        assert_eq!(cov_partial_u(&bm, 0.5, 0.5, Side::TwoSided).unwrap(), PartialDerivative::Undefined);
        assert!(cov_partial_u(&bm, 0.0, 0.5, Side::Right).is_err());
    }

    #[test]
    fn partial_matches_finite_differences() {
        let probes: Vec<(f64, f64)> = [0.15, 0.35, 0.55, 0.8]
            .iter()
            .flat_map(|&t| [0.1, 0.3, 0.55, 0.9].into_iter().map(move |s| (t, s)))
            .collect();
        for h in [0.3, 0.5, 0.7] {
            let o = ModelOracle::new(ModelSpec::fbm(h, 1.0).unwrap());
            let worst = partial_consistency(&o, &probes);
            assert!(worst < 1e-5, "H={h}: {worst}");
        }
        let two = ModelSpec::two_atom(
            BasisFunction::Sine { amplitude: 1.0, frequency: 3.0 },
            BasisFunction::AbsPower { center: 0.5, exponent: 0.3, scale: 1.0 },
            1.0,
        )
        .unwrap();
        assert!(partial_consistency(&ModelOracle::new(two), &probes) < 1e-5);
    }

    #[test]
    fn fgn_examples() {
        assert!((fgn_autocovariance(0.7, 0, 0.1) - 0.1f64.powf(1.4)).abs() < 1e-15);
        for k in 1..5 {
            assert!(fgn_autocovariance(0.5, k, 0.3).abs() < 1e-15);
        }
        let v = fgn_autocovariance(0.7, 1, 1.0);
        assert!((v - 0.5 * (2f64.powf(1.4) - 2.0)).abs() < 1e-15);
        assert!((v - 0.31951).abs() < 1e-5);
        // Cov(B_1, B_2 − B_1)
        let direct = fbm_cov(0.7, 1.0, 2.0).unwrap() - fbm_cov(0.7, 1.0, 1.0).unwrap();
        assert!((v - direct).abs() < 1e-14);
    }

    #[test]
    fn oracle_adapters() {
        let o = as_oracle(&ModelSpec::fbm(0.3, 1.0).unwrap());
        assert_eq!(o.cov(0.2, 0.9), o.cov(0.9, 0.2));
        let lin = ModelSpec::basis(vec![BasisFunction::Linear { slope: 1.0, intercept: 0.0 }], 1.0, 1.0).unwrap();
        let o = as_oracle(&lin);
        assert!((o.cov(0.3, 0.7) - 0.21).abs() < 1e-15);
    }

    #[test]
    fn truncated_onb_expansion_approaches_min() {
        // Parseval: Σ_{i<N} f_i(s) f_i(t) → ⟨1_{[0,s]}, 1_{[0,t]}⟩ = min(s, t).
        let mut prev = f64::INFINITY;
        for n in [16, 64, 256, 1024] {
            let m = ModelSpec::trigonometric_expansion(n, 1.0).unwrap();
            let err = (m.cov(0.3, 0.7) - 0.3).abs();
            assert!(err <= prev + 1e-12, "n={n}: {err} > {prev}");
            prev = err;
        }
        assert!(prev < 1e-3, "{prev}");
    }

    #[test]
    fn bound_is_enforced() {
        let r = ModelSpec::basis(vec![BasisFunction::Linear { slope: 3.0, intercept: 0.0 }], 1.0, 1.0);
        assert!(r.is_err());
    }
}
