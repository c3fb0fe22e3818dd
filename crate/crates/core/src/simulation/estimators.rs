use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Minimum sample size accepted by the estimators.
pub const MIN_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Estimator {
    /// Least squares of `x` on `(1, y)`.
    Linear,
    /// Nadaraya–Watson with a Gaussian kernel; Silverman's rule when the
    /// bandwidth is omitted.
    Kernel {
        #[serde(default)]
        bandwidth: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub query: f64,
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalFit {
    pub estimator: Estimator,
    /// Bandwidth actually used by the kernel estimator.
    pub bandwidth: Option<f64>,
    /// `(intercept, slope)` and their standard errors for the linear fit.
    pub intercept: Option<(f64, f64)>,
    pub slope: Option<(f64, f64)>,
    pub predictions: Vec<Prediction>,
}

/// `0.9·min(sd, IQR/1.34)·n^{-1/5}`.
pub fn silverman_bandwidth(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut s = y.to_vec();
    s.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Linear-interpolated empirical quantile of sorted data.
pub(crate) fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let x = p * (s.len() - 1) as f64;
    let i = x.floor() as usize;
    let f = x - i as f64;
    if i + 1 < s.len() {
        s[i] + f * (s[i + 1] - s[i])
    } else {
        s[i]
    }
}

/// Empirical `E[x | y = q]` at each query point, with standard errors.
pub fn mc_conditional_expectation(x: &[f64], y: &[f64], estimator: Estimator, queries: &[f64]) -> Result<ConditionalFit> {
    if x.len() != y.len() {
        return Err(domain(format!("x and y lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.len() < MIN_SAMPLES {
        return Err(domain(format!("need at least {MIN_SAMPLES} samples, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Estimator("non-finite sample".into()));
    }
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if !(syy > 1e-24 * n * (1.0 + my * my)) {
        return Err(Error::Estimator("conditioning sample has zero variance".into()));
    }
    match estimator {
        Estimator::Linear => Ok(linear(x, y, my, syy, queries)),
        Estimator::Kernel { bandwidth } => {
            let b = match bandwidth {
                Some(b) if b > 0.0 && b.is_finite() => b,
                Some(b) => return Err(domain(format!("bandwidth must be positive, got {b}"))),
                None => silverman_bandwidth(y),
            };
            kernel(x, y, b, queries).map(|predictions| ConditionalFit {
                estimator,
                bandwidth: Some(b),
                intercept: None,
                slope: None,
                predictions,
            })
        }
    }
}

/// OLS with heteroskedasticity-robust (HC1) standard errors.
fn linear(x: &[f64], y: &[f64], my: f64, syy: f64, queries: &[f64]) -> ConditionalFit {
    let n = y.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / syy;
    let intercept = mx - slope * my;
    // Sandwich pieces in centered coordinates: the intercept at ȳ and the
    // slope are asymptotically uncorrelated.
    let (mut s00, mut s01, mut s11) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let e = a - intercept - slope * b;
        let d = b - my;
        s00 += e * e;
        s01 += e * e * d;
        s11 += e * e * d * d;
    }
    let k = n / (n - 2.0);
    let v_level = k * s00 / (n * n);
    let v_slope = k * s11 / (syy * syy);
    let c = k * s01 / (n * syy);
    let predictions = queries
        .iter()
        .map(|&q| {
            let d = q - my;
            let var = v_level + 2.0 * d * c + d * d * v_slope;
            Prediction { query: q, value: intercept + slope * q, se: var.max(0.0).sqrt() }
        })
        .collect();
    let v_int = v_level - 2.0 * my * c + my * my * v_slope;
    ConditionalFit {
        estimator: Estimator::Linear,
        bandwidth: None,
        intercept: Some((intercept, v_int.max(0.0).sqrt())),
        slope: Some((slope, v_slope.sqrt())),
        predictions,
    }
}

fn kernel(x: &[f64], y: &[f64], b: f64, queries: &[f64]) -> Result<Vec<Prediction>> {
    queries
        .iter()
        .map(|&q| {
            let w: Vec<f64> = y.iter().map(|v| (-0.5 * ((v - q) / b).powi(2)).exp()).collect();
            let sw: f64 = w.iter().sum();
            if !(sw > 0.0) {
                return Err(Error::Estimator(format!("no samples within reach of query {q}")));
            }
            let value = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
            let var = w.iter().zip(x).map(|(w, x)| (w * (x - value)).powi(2)).sum::<f64>() / (sw * sw);
            Ok(Prediction { query: q, value, se: var.sqrt() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| r.sample(StandardNormal)).collect()
    }

    #[test]
    fn gaussian_regression_slope() {
        let y = normals(1, 20_000);
        let e = normals(2, 20_000);
        // Cov = 0.6, Var(y) = 1.
        let x: Vec<f64> = y.iter().zip(&e).map(|(y, e)| 0.6 * y + 0.8 * e + 2.0).collect();
        let fit = mc_conditional_expectation(&x, &y, Estimator::Linear, &[0.0, 1.0]).unwrap();
        let (s, se) = fit.slope.unwrap();
        assert!((s - 0.6).abs() < 3.0 * se, "{s} ± {se}");
        let p = fit.predictions[1];
        assert!((p.value - 2.6).abs() < 3.0 * p.se);
    }

    #[test]
    fn kernel_recovers_square() {
        let y = normals(3, 50_000);
        let e = normals(4, 50_000);
        let x: Vec<f64> = y.iter().zip(&e).map(|(y, e)| y * y + e).collect();
        let fit = mc_conditional_expectation(&x, &y, Estimator::Kernel { bandwidth: None }, &[-1.0, 0.0, 1.0]).unwrap();
        for p in fit.predictions {
            assert!((p.value - p.query * p.query).abs() < 3.0 * p.se, "{p:?}");
        }
    }

    #[test]
    fn independent_sample_is_flat() {
        let y = normals(5, 10_000);
        let x = normals(6, 10_000);
        let mx = x.iter().sum::<f64>() / x.len() as f64;
        for est in [Estimator::Linear, Estimator::Kernel { bandwidth: Some(0.3) }] {
            let fit = mc_conditional_expectation(&x, &y, est, &[-0.5, 0.5]).unwrap();
            for p in fit.predictions {
                assert!((p.value - mx).abs() < 3.0 * p.se, "{est:?} {p:?}");
            }
        }
    }

    #[test]
    fn preconditions() {
        let y = vec![1.0; 2000];
        let x = normals(7, 2000);
        assert!(matches!(mc_conditional_expectation(&x, &y, Estimator::Linear, &[0.0]), Err(Error::Estimator(_))));
        assert!(mc_conditional_expectation(&x[..10], &x[..10], Estimator::Linear, &[0.0]).is_err());
        assert!(mc_conditional_expectation(&x, &x, Estimator::Kernel { bandwidth: Some(0.0) }, &[0.0]).is_err());
    }

    #[test]
    fn silverman_scale() {
        let y = normals(8, 100_000);
        let b = silverman_bandwidth(&y);
        assert!((b - 0.9 * 1e5f64.powf(-0.2)).abs() < 0.01);
    }
}
