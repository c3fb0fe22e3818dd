//! Quadrature rules: double-exponential (tanh-sinh) for integrands with
//! endpoint singularities, and Gauss–Legendre for smooth ones.

use std::f64::consts::FRAC_PI_2;

/// Point handed to a tanh-sinh integrand: the abscissa together with its
/// distances to both endpoints, computed without cancellation.
#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub x: f64,
    pub from_left: f64,
    pub from_right: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

const T_MAX: f64 = 6.5;
const MAX_LEVEL: u32 = 10;

/// Tanh-sinh integral of `f` over `[a, b]`.
///
/// Halves the step until two successive levels agree to `rel_tol` (relative)
/// or `abs_tol`, whichever is looser.
pub fn tanh_sinh<F>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Estimate
where
    F: Fn(Node) -> f64,
{
    if a == b {
        return Estimate { value: 0.0, error: 0.0, evaluations: 0 };
    }
    let half = 0.5 * (b - a);
    let mut evaluations = 0usize;
    // Contribution of the abscissa ±t, already multiplied by the weight.
    let pair = |t: f64, evals: &mut usize| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let e = (-2.0 * u.abs()).exp();
        // 1 − tanh|u| and 1 + tanh|u|, both scaled to the half-width.
        let near = 2.0 * half * e / (1.0 + e);
        let far = 2.0 * half / (1.0 + e);
        let w = FRAC_PI_2 * t.cosh() * 4.0 * e / ((1.0 + e) * (1.0 + e)) * half;
        if w == 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        if t == 0.0 {
            *evals += 1;
            return w * f(Node { x: a + half, from_left: half, from_right: half });
        }
        if near > 0.0 {
            // Right side: x close to b.
            *evals += 2;
            acc += w * f(Node { x: b - near, from_left: far, from_right: near });
            acc += w * f(Node { x: a + near, from_left: near, from_right: far });
        }
        acc
    };

    let mut h = 1.0;
    let mut sum = pair(0.0, &mut evaluations);
    let mut k = 1;
    while (k as f64) * h <= T_MAX {
        sum += pair(k as f64 * h, &mut evaluations);
        k += 1;
    }
    let mut prev = sum * h;
    let mut error = f64::INFINITY;
    for level in 1..=MAX_LEVEL {
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= T_MAX {
            sum += pair(k as f64 * h, &mut evaluations);
            k += 2;
        }
        let cur = sum * h;
        error = (cur - prev).abs();
        prev = cur;
        if level >= 3 && (error <= rel_tol * cur.abs() || error <= abs_tol) {
            break;
        }
    }
    Estimate { value: prev, error, evaluations }
}

/// Convenience wrapper for integrands that only need the abscissa.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    tanh_sinh(|n| f(n.x), a, b, rel_tol, 0.0).value
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=m {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            if m == 1 {
                p1 = x;
                p0 = 1.0;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed-order Gauss–Legendre rule mapped onto arbitrary intervals.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(m: usize) -> Self {
        let (nodes, weights) = gauss_legendre(m);
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    pub fn points(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, w * half))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_sinh_handles_endpoint_singularities() {
        // ∫_0^1 x^{-0.4} dx = 1/0.6
        let est = tanh_sinh(|n| n.from_left.powf(-0.4), 0.0, 1.0, 1e-13, 0.0);
        assert!((est.value - 1.0 / 0.6).abs() < 1e-11, "{est:?}");
        // ∫_0^1 (1-x)^{-0.7} x^{-0.2} dx = B(0.8, 0.3)
        let beta = statrs::function::beta::beta(0.8, 0.3);
        let est = tanh_sinh(
            |n| n.from_right.powf(-0.7) * n.from_left.powf(-0.2),
            0.0,
            1.0,
            1e-13,
            0.0,
        );
        assert!((est.value - beta).abs() < 1e-10 * beta, "{} vs {beta}", est.value);
    }

    #[test]
    fn tanh_sinh_smooth() {
        let v = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-14);
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn gauss_legendre_exact_on_polynomials() {
        let gl = GaussLegendre::new(10);
        let v = gl.integrate(|x| x.powi(19) + 3.0 * x.powi(6), 0.0, 2.0);
        let want = 2f64.powi(20) / 20.0 + 3.0 * 2f64.powi(7) / 7.0;
        assert!((v - want).abs() < 1e-9 * want);
        let (_, w) = gauss_legendre(7);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }
}
