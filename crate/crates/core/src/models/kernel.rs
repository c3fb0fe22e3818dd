//! Volterra kernel `K_H` of fractional Brownian motion.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use crate::error::{domain, Result};
use crate::quadrature::{tanh_sinh, Node};
use crate::special::unit_interval_with_complement;

use super::Hurst;

/// `V_H = Γ(2 − 2H) cos(πH) / (πH(1 − 2H))`, the constant with
/// `∫_0^t K̃(t,u)² du = V_H t^{2H}` for the unscaled kernel `K̃`.
pub fn kernel_normalization(h: f64) -> f64 {
    if h == 0.5 {
        return 1.0;
    }
    gamma(2.0 - 2.0 * h) * (PI * h).cos() / (PI * h * (1.0 - 2.0 * h))
}

/// `K_H(t, s)`, zero for `s ≥ t`.
pub fn kernel_kh(h: f64, t: f64, s: f64) -> Result<f64> {
    let h = Hurst::new(h)?.get();
    if !(s > 0.0) || !(t > 0.0) {
        return Err(domain(format!("K_H(t, s) needs t, s > 0, got t = {t}, s = {s}")));
    }
    if s >= t {
        return Ok(0.0);
    }
    kernel_from_parts(h, t, s, t - s)
}

/// Kernel value with the gap `t − s` supplied separately, so that callers
/// integrating towards the diagonal keep full relative precision.
pub fn kernel_from_parts(h: f64, t: f64, s: f64, gap: f64) -> Result<f64> {
    if h == 0.5 {
        return Ok(1.0);
    }
    if gap <= 0.0 {
        return Ok(0.0);
    }
    let a = h - 0.5;
    // Pfaff: F(a, ½−H; H+½; 1−t/s) = (t/s)^{½−H} F(a, 2H; H+½; 1−s/t).
    let w = gap / t;
    let f = unit_interval_with_complement(a, 2.0 * h, h + 0.5, w, s / t)?;
    let scale = 1.0 / (kernel_normalization(h).sqrt() * gamma(h + 0.5));
    Ok(scale * gap.powf(a) * (s / t).powf(a) * f)
}

/// `(𝒦_H 1)(t) = ∫_0^t K_H(t, s) ds = V_H^{-1/2} Γ(3/2 − H) t^{H+½} / (H + ½)`.
pub fn kh_of_constant(h: f64, t: f64) -> f64 {
    if h == 0.5 {
        return t;
    }
    gamma(1.5 - h) * t.powf(h + 0.5) / ((h + 0.5) * kernel_normalization(h).sqrt())
}

/// `∫_a^b K_H(t, s) ds` by tanh-sinh, for `0 ≤ a < b ≤ t`.
pub fn kernel_integral(h: f64, t: f64, a: f64, b: f64) -> Result<f64> {
    let h = Hurst::new(h)?.get();
    if !(0.0 <= a && a < b && b <= t) {
        return Err(domain(format!("kernel integral needs 0 ≤ a < b ≤ t, got [{a}, {b}], t = {t}")));
    }
    if h == 0.5 {
        return Ok(b - a);
    }
    let failure = std::cell::Cell::new(None);
    let est = tanh_sinh(
        |n: Node| {
            let gap = (t - b) + n.from_right;
            kernel_from_parts(h, t, n.x, gap).unwrap_or_else(|e| {
                failure.set(Some(e));
                0.0
            })
        },
        a,
        b,
        1e-12,
        1e-15,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(est.value),
    }
}

/// `∫_0^{s∧t} K_H(s, u) K_H(t, u) du` by tanh-sinh quadrature.
pub fn kernel_covariance_quadrature(h: f64, s: f64, t: f64) -> Result<f64> {
    let h = Hurst::new(h)?.get();
    if !(s > 0.0 && t > 0.0) {
        return Err(domain("kernel covariance needs s, t > 0"));
    }
    let m = s.min(t);
    let est = tanh_sinh(
        |n: Node| {
            let ks = kernel_from_parts(h, s, n.x, (s - m) + n.from_right).unwrap_or(f64::NAN);
            let kt = kernel_from_parts(h, t, n.x, (t - m) + n.from_right).unwrap_or(f64::NAN);
            ks * kt
        },
        0.0,
        m,
        1e-10,
        1e-14,
    );
    if est.value.is_finite() {
        Ok(est.value)
    } else {
        Err(domain(format!("kernel quadrature failed at H = {h}, s = {s}, t = {t}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fbm_cov;

    #[test]
    fn brownian_kernel_is_one() {
        assert_eq!(kernel_kh(0.5, 0.7, 0.3).unwrap(), 1.0);
        assert_eq!(kernel_kh(0.7, 0.3, 0.7).unwrap(), 0.0);
        assert_eq!(kernel_kh(0.3, 0.5, 0.5).unwrap(), 0.0);
        assert!(kernel_kh(0.3, 0.5, 0.0).is_err());
    }

    #[test]
    fn normalization_is_continuous_at_brownian() {
        assert!((kernel_normalization(0.5 - 1e-7) - 1.0).abs() < 1e-5);
        assert!((kernel_normalization(0.5 + 1e-7) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn matches_raw_hypergeometric_form() {
        // Direct evaluation of the defining formula, argument 1 − t/s < 0.
        for &(h, t, s) in &[(0.7, 0.7, 0.3), (0.3, 0.7, 0.3), (0.3, 1.0, 0.9), (0.8, 0.5, 0.45)] {
            let f = crate::special::hyp2f1(h - 0.5, 0.5 - h, h + 0.5, 1.0 - t / s).unwrap();
            let raw = (t - s).powf(h - 0.5) / gamma(h + 0.5) * f / kernel_normalization(h).sqrt();
            let k = kernel_kh(h, t, s).unwrap();
            assert!((k - raw).abs() < 1e-12 * raw.abs(), "H={h}: {k} vs {raw}");
        }
    }

    #[test]
    fn kernel_square_integral_is_variance() {
        for h in [0.3, 0.7] {
            let v = kernel_covariance_quadrature(h, 0.8, 0.8).unwrap();
            assert!((v - 0.8f64.powf(2.0 * h)).abs() < 1e-8, "H={h}: {v}");
        }
    }

    #[test]
    fn kernel_reproduces_covariance() {
        for h in [0.3, 0.7] {
            let v = kernel_covariance_quadrature(h, 0.3, 0.7).unwrap();
            let r = fbm_cov(h, 0.3, 0.7).unwrap();
            assert!((v - r).abs() < 1e-6, "H={h}: {v} vs {r}");
        }
    }

    #[test]
    fn closed_form_of_constant() {
        for h in [0.3, 0.7] {
            let q = kernel_integral(h, 0.5, 0.0, 0.5).unwrap();
            assert!((q - kh_of_constant(h, 0.5)).abs() < 1e-9, "H={h}");
        }
    }
}
