//! Riemann–Liouville integrals by product integration and the operator
//! `𝒦_H` built from them.

use statrs::function::gamma::gamma;

use crate::error::{domain, Error, Result};
use crate::quadrature::tanh_sinh;

use super::{kernel_normalization, Hurst};

/// Default number of uniform steps used when a caller needs `𝒦_H` on a grid
/// of its own choosing.
pub const DEFAULT_OPERATOR_STEPS: usize = 1 << 10;

/// Fewest grid nodes [`apply_kh`] accepts.
pub const MIN_OPERATOR_NODES: usize = 33;

/// Function values on a strictly increasing grid starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() || grid.len() < 2 {
            return Err(domain("grid and values need equal lengths ≥ 2"));
        }
        if grid[0] != 0.0 {
            return Err(domain("grid must start at 0"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(domain("grid must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(domain("sampled values must be finite"));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` on `n` uniform steps of `[0, horizon]`.
    pub fn uniform(n: usize, horizon: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let grid: Vec<f64> = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
        let values = grid.iter().map(|&x| f(x)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Piecewise-linear interpolation.
    pub fn interpolate(&self, x: f64) -> f64 {
        let k = self.segment(x);
        let (x0, x1) = (self.grid[k], self.grid[k + 1]);
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.grid.len();
        self.grid.partition_point(|&g| g <= x).clamp(1, n - 1) - 1
    }

    fn uniform_step(&self) -> Option<f64> {
        let n = self.grid.len() - 1;
        let dt = self.grid[n] / n as f64;
        let uniform = self
            .grid
            .iter()
            .enumerate()
            .all(|(i, &g)| (g - i as f64 * dt).abs() <= 1e-12 * self.grid[n]);
        uniform.then_some(dt)
    }

    fn check_point(&self, x: f64) -> Result<()> {
        let end = *self.grid.last().unwrap();
        if !(0.0..=end * (1.0 + 1e-14)).contains(&x) {
            return Err(domain(format!("x = {x} lies outside the grid [0, {end}]")));
        }
        Ok(())
    }
}

/// `∫_{y_a}^{y_b} (x − y)^{α−1} φ(y) dy` for linear `φ` with `φ(y_a) = p`
/// and slope `s`; `big = x − y_a`, `small = x − y_b`.
#[inline]
fn segment(alpha: f64, p: f64, s: f64, big: f64, small: f64) -> f64 {
    let d0 = big.powf(alpha) - small.powf(alpha);
    let d1 = big.powf(alpha + 1.0) - small.powf(alpha + 1.0);
    (p + s * big) * d0 / alpha - s * d1 / (alpha + 1.0)
}

/// `I^α f(x) = Γ(α)^{-1} ∫_0^x (x − y)^{α−1} f(y) dy` with `f` interpolated
/// linearly between grid nodes.
pub fn frac_integral(alpha: f64, f: &SampledFunction, x: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(domain(format!("fractional order must be positive, got {alpha}")));
    }
    f.check_point(x)?;
    let mut acc = 0.0;
    for k in 0..f.grid.len() - 1 {
        let (y0, y1) = (f.grid[k], f.grid[k + 1]);
        if y0 >= x {
            break;
        }
        let s = (f.values[k + 1] - f.values[k]) / (y1 - y0);
        acc += segment(alpha, f.values[k], s, x - y0, (x - y1).max(0.0));
    }
    Ok(acc / gamma(alpha))
}

/// `I^α[y^γ f](x)` for `γ > −1`; the cells next to the origin, where the
/// weight may be singular, are integrated by quadrature.
pub fn frac_integral_weighted(alpha: f64, weight: f64, f: &SampledFunction, x: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(domain(format!("fractional order must be positive, got {alpha}")));
    }
    if !(weight > -1.0) {
        return Err(domain(format!("weight exponent must exceed −1, got {weight}")));
    }
    f.check_point(x)?;
    let v0 = f.values[0];
    let f = &without_origin_value(f);
    let phi: Vec<f64> = f.grid.iter().zip(&f.values).map(|(&y, &v)| weighted(y, weight, v)).collect();
    let mut acc = first_cells(alpha, weight, f, x);
    for k in SINGULAR_CELLS.min(f.grid.len() - 1)..f.grid.len() - 1 {
        let (y0, y1) = (f.grid[k], f.grid[k + 1]);
        if y0 >= x {
            break;
        }
        let p1 = if y1 <= x { phi[k + 1] } else { weighted(x, weight, f.interpolate(x)) };
        let end = y1.min(x);
        let s = (p1 - phi[k]) / (end - y0);
        acc += segment(alpha, phi[k], s, x - y0, x - end);
    }
    Ok(acc / gamma(alpha) + power_part(alpha, weight, v0, x))
}

#[inline]
fn weighted(y: f64, weight: f64, v: f64) -> f64 {
    if weight == 0.0 {
        v
    } else if y == 0.0 {
        // Callers pass remainders with v = 0 at the origin.
        0.0
    } else {
        y.powf(weight) * v
    }
}

/// Cells next to the origin integrated by quadrature when the weight is
/// singular; interpolating `y^γ f` there loses accuracy.
const SINGULAR_CELLS: usize = 16;

/// `∫_0^{min(x, y_K)} (x − y)^{α−1} y^γ f(y) dy` over the first
/// [`SINGULAR_CELLS`] cells, unnormalized.
fn first_cells(alpha: f64, weight: f64, f: &SampledFunction, x: f64) -> f64 {
    let cells = SINGULAR_CELLS.min(f.grid.len() - 1);
    let mut acc = 0.0;
    for k in 0..cells {
        let start = f.grid[k];
        if start >= x {
            break;
        }
        let end = f.grid[k + 1].min(x);
        let (v0, v1) = (f.values[k], f.values[k + 1]);
        let slope = (v1 - v0) / (f.grid[k + 1] - start);
        let far = x - end;
        acc += tanh_sinh(
            |n| {
                let y = if k == 0 { n.from_left } else { n.x };
                (far + n.from_right).powf(alpha - 1.0) * y.powf(weight) * (v0 + slope * (n.x - start))
            },
            start,
            end,
            1e-13,
            1e-300,
        )
        .value;
    }
    acc
}

/// `I^α[y^γ c](x) = c Γ(γ+1)/Γ(α+γ+1) x^{α+γ}` for a constant `c`.
fn power_part(alpha: f64, weight: f64, c: f64, x: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    let e = alpha + weight;
    let xe = if x == 0.0 && e.abs() < 1e-14 { 1.0 } else { x.powf(e) };
    c * gamma(weight + 1.0) / gamma(e + 1.0) * xe
}

/// `f − f(0)`, so that only a smooth remainder meets the weight.
fn without_origin_value(f: &SampledFunction) -> SampledFunction {
    let v0 = f.values[0];
    SampledFunction { grid: f.grid.clone(), values: f.values.iter().map(|v| v - v0).collect() }
}

/// `I^α[y^γ f]` at every grid node.
fn weighted_all_nodes(alpha: f64, weight: f64, f: &SampledFunction) -> Vec<f64> {
    let v0 = f.values[0];
    let mut out = weighted_all_nodes_rest(alpha, weight, &without_origin_value(f));
    for (slot, &x) in out.iter_mut().zip(&f.grid) {
        *slot += power_part(alpha, weight, v0, x);
    }
    out
}

/// Like [`weighted_all_nodes`] for `f` vanishing at the origin.
fn weighted_all_nodes_rest(alpha: f64, weight: f64, f: &SampledFunction) -> Vec<f64> {
    let n = f.grid.len();
    let phi: Vec<f64> = f.grid.iter().zip(&f.values).map(|(&y, &v)| weighted(y, weight, v)).collect();
    let g = gamma(alpha);
    let mut out = vec![0.0; n];
    let singular = weight < 0.0;
    let skip = if singular { SINGULAR_CELLS.min(n - 1) } else { 0 };
    match f.uniform_step() {
        Some(dt) => {
            let p: Vec<f64> = (0..n).map(|m| (m as f64).powf(alpha)).collect();
            let q: Vec<f64> = (0..n).map(|m| (m as f64).powf(alpha + 1.0)).collect();
            let scale = dt.powf(alpha);
            for (i, slot) in out.iter_mut().enumerate().skip(1) {
                let mut acc = 0.0;
                for j in skip..i {
                    let m = i - j;
                    let d = phi[j + 1] - phi[j];
                    acc += (phi[j] + d * m as f64) * (p[m] - p[m - 1]) / alpha
                        - d * (q[m] - q[m - 1]) / (alpha + 1.0);
                }
                acc *= scale;
                if singular {
                    acc += first_cells(alpha, weight, f, f.grid[i]);
                }
                *slot = acc / g;
            }
        }
        None => {
            for (i, slot) in out.iter_mut().enumerate().skip(1) {
                let x = f.grid[i];
                let mut acc = if singular { first_cells(alpha, weight, f, x) } else { 0.0 };
                for j in skip..i {
                    let s = (phi[j + 1] - phi[j]) / (f.grid[j + 1] - f.grid[j]);
                    acc += segment(alpha, phi[j], s, x - f.grid[j], x - f.grid[j + 1]);
                }
                *slot = acc / g;
            }
        }
    }
    out
}

/// `𝒦_H h` on the grid of `h`.
///
/// For `H > ½`: `V_H^{-1/2} I^1[y^{H−½} I^{H−½}[y^{½−H} h]]`; for `H < ½`:
/// `V_H^{-1/2} I^{2H}[y^{½−H} I^{½−H}[y^{H−½} h]]`; for `H = ½` plain
/// integration.
pub fn apply_kh(h: f64, f: &SampledFunction) -> Result<SampledFunction> {
    apply_kh_with(h, f, MIN_OPERATOR_NODES)
}

pub fn apply_kh_with(h: f64, f: &SampledFunction, min_nodes: usize) -> Result<SampledFunction> {
    let h = Hurst::new(h)?.get();
    if f.len() < min_nodes {
        return Err(Error::Resolution { nodes: f.len(), required: min_nodes });
    }
    let values = if h == 0.5 {
        weighted_all_nodes(1.0, 0.0, f)
    } else {
        let (a1, w1, a2, w2) = if h > 0.5 {
            (h - 0.5, 0.5 - h, 1.0, h - 0.5)
        } else {
            (0.5 - h, h - 0.5, 2.0 * h, 0.5 - h)
        };
        let inner = SampledFunction { grid: f.grid.clone(), values: weighted_all_nodes(a1, w1, f) };
        let c = kernel_normalization(h).sqrt().recip();
        weighted_all_nodes(a2, w2, &inner).into_iter().map(|v| c * v).collect()
    };
    SampledFunction::new(f.grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{kernel_from_parts, kernel_integral};

    #[test]
    fn order_one_of_constant_is_plain_integral() {
        let f = SampledFunction::uniform(16, 1.0, |_| 1.0).unwrap();
        assert!((frac_integral(1.0, &f, 0.7).unwrap() - 0.7).abs() < 1e-14);
        assert!(frac_integral(0.0, &f, 0.7).is_err());
        assert!(frac_integral(-1.0, &f, 0.7).is_err());
    }

    #[test]
    fn power_function_identity() {
        let f = SampledFunction::uniform(512, 1.0, |y| y).unwrap();
        let v = frac_integral(0.6, &f, 0.5).unwrap();
        let want = gamma(2.0) / gamma(2.6) * 0.5f64.powf(1.6);
        assert!((v - want).abs() < 1e-6, "{v} vs {want}");
    }

    #[test]
    fn semigroup() {
        let poly = |y: f64| y - 0.5 * y * y + y * y * y;
        let n = 1024;
        let f = SampledFunction::uniform(n, 1.0, poly).unwrap();
        let inner = f.grid().iter().map(|&x| frac_integral(0.4, &f, x).unwrap()).collect();
        let inner = SampledFunction::new(f.grid().to_vec(), inner).unwrap();
        for x in [0.3, 0.75, 1.0] {
            let two = frac_integral(0.3, &inner, x).unwrap();
            let one = frac_integral(0.7, &f, x).unwrap();
            assert!((two - one).abs() < 1e-5, "x={x}: {two} vs {one}");
        }
    }

    #[test]
    fn weighted_matches_quadrature() {
        let f = SampledFunction::uniform(256, 1.0, |y| 1.0 + y).unwrap();
        for (alpha, w) in [(0.2, -0.2), (0.4, -0.4), (1.0, 0.3)] {
            let v = frac_integral_weighted(alpha, w, &f, 0.6).unwrap();
            let want = tanh_sinh(
                |n| n.from_right.powf(alpha - 1.0) * n.from_left.powf(w) * (1.0 + n.x),
                0.0,
                0.6,
                1e-12,
                1e-15,
            )
            .value
                / gamma(alpha);
            assert!((v - want).abs() < 1e-5, "(α={alpha}, γ={w}): {v} vs {want}");
        }
    }

    #[test]
    fn weighted_all_nodes_agrees_with_pointwise() {
        let f = SampledFunction::uniform(64, 1.0, |y| (3.0 * y).cos()).unwrap();
        let all = weighted_all_nodes(0.3, -0.2, &f);
        for i in [1, 5, 64] {
            let one = frac_integral_weighted(0.3, -0.2, &f, f.grid()[i]).unwrap();
            assert!((all[i] - one).abs() < 1e-12, "node {i}");
        }
        // Non-uniform path.
        let g = SampledFunction::new(
            vec![0.0, 0.1, 0.25, 0.5, 0.6, 1.0],
            vec![1.0, 0.9, 0.7, 0.2, 0.1, -0.5],
        )
        .unwrap();
        let all = weighted_all_nodes(0.6, -0.1, &g);
        for i in 1..g.len() {
            let one = frac_integral_weighted(0.6, -0.1, &g, g.grid()[i]).unwrap();
            assert!((all[i] - one).abs() < 1e-12);
        }
    }

    #[test]
    fn operator_on_constant() {
        let one = SampledFunction::uniform(DEFAULT_OPERATOR_STEPS, 1.0, |_| 1.0).unwrap();
        let bm = apply_kh(0.5, &one).unwrap();
        assert!((bm.interpolate(0.5) - 0.5).abs() < 1e-14);
        for h in [0.3, 0.7] {
            let k = apply_kh(h, &one).unwrap();
            let want = kernel_integral(h, 0.5, 0.0, 0.5).unwrap();
            assert!((k.interpolate(0.5) - want).abs() < 1e-3, "H={h}: {} vs {want}", k.interpolate(0.5));
        }
    }

    #[test]
    fn operator_matches_kernel_on_nonconstant() {
        let n = DEFAULT_OPERATOR_STEPS;
        let g = |s: f64| (2.0 * s).sin() + 0.5;
        let f = SampledFunction::uniform(n, 1.0, g).unwrap();
        for h in [0.3, 0.7] {
            let k = apply_kh(h, &f).unwrap();
            let want = tanh_sinh(
                |n| kernel_from_parts(h, 0.8, n.x, n.from_right).unwrap() * g(n.x),
                0.0,
                0.8,
                1e-10,
                1e-14,
            )
            .value;
            let got = k.interpolate(0.8);
            assert!((got - want).abs() < 1e-3, "H={h}: {got} vs {want}");
        }
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let f = SampledFunction::uniform(8, 1.0, |_| 1.0).unwrap();
        assert!(matches!(apply_kh(0.7, &f), Err(Error::Resolution { .. })));
    }
}
