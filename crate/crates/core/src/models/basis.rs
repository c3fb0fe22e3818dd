use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::gaussian::{PartialDerivative, Side};

/// Deterministic coefficient functions `f_i` of finite-atom models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisFunction {
    /// `slope·t + intercept`
    Linear { slope: f64, intercept: f64 },
    /// `scale·|t − center|^exponent`; not differentiable at the center when
    /// `exponent ≤ 1`.
    AbsPower { center: f64, exponent: f64, scale: f64 },
    /// `∫_0^t e_index` for the trigonometric orthonormal basis of
    /// `L²([0, period])`: `e_0 = 1/√T`, then cosine/sine pairs of frequency
    /// `k = 1, 2, …`, scaled by `√(2/T)`.
    TrigIntegral { index: usize, period: f64 },
    /// `amplitude·sin(frequency·t)`
    Sine { amplitude: f64, frequency: f64 },
}

impl BasisFunction {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            BasisFunction::Linear { slope, intercept } => slope * t + intercept,
            BasisFunction::AbsPower { center, exponent, scale } => {
                scale * (t - center).abs().powf(exponent)
            }
            BasisFunction::TrigIntegral { index, period } => {
                if index == 0 {
                    return t / period.sqrt();
                }
                let (k, cosine) = trig_frequency(index);
                let w = 2.0 * PI * k / period;
                let amp = (2.0 / period).sqrt() / w;
                if cosine {
                    amp * (w * t).sin()
                } else {
                    amp * (1.0 - (w * t).cos())
                }
            }
            BasisFunction::Sine { amplitude, frequency } => amplitude * (frequency * t).sin(),
        }
    }

    /// `Δ_h f(t) = (f(t+h) − f(t))/h`, evaluated without cancellation for the
    /// trigonometric family.
    pub fn difference_quotient(&self, t: f64, h: f64) -> f64 {
        match *self {
            BasisFunction::TrigIntegral { index, period } if index > 0 => {
                let (k, cosine) = trig_frequency(index);
                let w = 2.0 * PI * k / period;
                let amp = (2.0 / period).sqrt() / w;
                // sin(a+d) − sin(a) = 2 cos(a + d/2) sin(d/2), likewise for cos.
                let half = 0.5 * w * h;
                let mid = w * t + half;
                let d = if cosine { 2.0 * mid.cos() * half.sin() } else { 2.0 * mid.sin() * half.sin() };
                amp * d / h
            }
            _ => (self.value(t + h) - self.value(t)) / h,
        }
    }

    pub fn derivative(&self, t: f64, side: Side) -> PartialDerivative {
        use PartialDerivative::*;
        match *self {
            BasisFunction::Linear { slope, .. } => Finite(slope),
            BasisFunction::AbsPower { center, exponent, scale } => {
                let d = t - center;
                if d != 0.0 {
                    return Finite(scale * exponent * d.abs().powf(exponent - 1.0) * d.signum());
                }
                if exponent > 1.0 || scale == 0.0 {
                    Finite(0.0)
                } else if exponent == 1.0 {
                    match side {
                        Side::Left => Finite(-scale),
                        Side::Right => Finite(scale),
                        Side::TwoSided => Undefined,
                    }
                } else {
                    Undefined
                }
            }
            BasisFunction::TrigIntegral { index, period } => {
                if index == 0 {
                    return Finite(1.0 / period.sqrt());
                }
                let (k, cosine) = trig_frequency(index);
                let w = 2.0 * PI * k / period;
                let amp = (2.0 / period).sqrt();
                Finite(if cosine { amp * (w * t).cos() } else { amp * (w * t).sin() })
            }
            BasisFunction::Sine { amplitude, frequency } => {
                Finite(amplitude * frequency * (frequency * t).cos())
            }
        }
    }
}

/// Frequency and cosine flag of trigonometric basis member `index ≥ 1`.
fn trig_frequency(index: usize) -> (f64, bool) {
    (index.div_ceil(2) as f64, index % 2 == 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;

    #[test]
    fn trig_family_is_orthonormal() {
        let gl = GaussLegendre::new(40);
        let e = |i: usize, x: f64| {
            BasisFunction::TrigIntegral { index: i, period: 2.0 }.derivative(x, Side::TwoSided).value().unwrap()
        };
        for i in 0..7 {
            for j in 0..7 {
                let v: f64 = (0..8)
                    .map(|c| gl.integrate(|x| e(i, x) * e(j, x), c as f64 * 0.25, (c + 1) as f64 * 0.25))
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-12, "({i},{j}): {v}");
            }
        }
    }

    #[test]
    fn quotient_matches_values() {
        for index in 0..9 {
            let f = BasisFunction::TrigIntegral { index, period: 1.0 };
            let (t, h) = (0.37, 1e-3);
            let direct = (f.value(t + h) - f.value(t)) / h;
            assert!((f.difference_quotient(t, h) - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn abs_power_kink() {
        let f = BasisFunction::AbsPower { center: 0.5, exponent: 0.3, scale: 1.0 };
        assert_eq!(f.derivative(0.5, Side::Right), PartialDerivative::Undefined);
        let g = BasisFunction::AbsPower { center: 0.5, exponent: 1.0, scale: 2.0 };
        assert_eq!(g.derivative(0.5, Side::Left), PartialDerivative::Finite(-2.0));
    }
}
