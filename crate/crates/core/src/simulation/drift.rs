use super::{PathBatch, TimeGrid};
use crate::error::{domain, Error, Result};
use crate::models::{apply_kh, kh_of_constant, pow_increment, BasisFunction, Hurst, MeanPath, SampledFunction};
use crate::par::{self, Exec};
use crate::quadrature::GaussLegendre;

/// Steps of the fine grid carrying `m = 𝒦_H a` when no closed form exists.
const FINE_STEPS: usize = 1 << 12;

#[derive(Debug, Clone)]
enum Table {
    /// `a ≡ c`: `m(t) = c·(𝒦_H 1)(t)`.
    Constant(f64),
    Sampled(SampledFunction),
}

/// Deterministic Girsanov integrand `a` and the drift `m = 𝒦_H a` it
/// induces, `Z_t = x0 + B_t + m(t)`.
#[derive(Debug, Clone)]
pub struct DriftSpec {
    hurst: f64,
    horizon: f64,
    a: BasisFunction,
    table: Table,
}

impl DriftSpec {
    pub fn new(hurst: f64, a: BasisFunction, horizon: f64) -> Result<Self> {
        let hurst = Hurst::new(hurst)?.get();
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(domain(format!("horizon must be positive, got {horizon}")));
        }
        for i in 0..=256 {
            let t = horizon * i as f64 / 256.0;
            if !a.value(t).is_finite() {
                return Err(domain(format!("drift integrand is not bounded: a({t}) = {}", a.value(t))));
            }
        }
        let table = match a {
            BasisFunction::Linear { slope, intercept } if slope == 0.0 => Table::Constant(intercept),
            _ => {
                let f = SampledFunction::uniform(FINE_STEPS, horizon, |t| a.value(t))?;
                Table::Sampled(apply_kh(hurst, &f)?)
            }
        };
        Ok(Self { hurst, horizon, a, table })
    }

    pub fn constant(hurst: f64, c: f64, horizon: f64) -> Result<Self> {
        Self::new(hurst, BasisFunction::Linear { slope: 0.0, intercept: c }, horizon)
    }

    pub fn zero(hurst: f64, horizon: f64) -> Result<Self> {
        Self::constant(hurst, 0.0, horizon)
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn integrand(&self) -> &BasisFunction {
        &self.a
    }

    /// `m(t) = (𝒦_H a)(t)`.
    pub fn m(&self, t: f64) -> f64 {
        match &self.table {
            Table::Constant(c) => c * kh_of_constant(self.hurst, t),
            Table::Sampled(f) => f.interpolate(t),
        }
    }

    /// `μ(t) = m'(t)`: closed form for constant `a`, otherwise central
    /// differences with the fine-grid step.
    pub fn mu(&self, t: f64) -> f64 {
        match &self.table {
            Table::Constant(c) => {
                if self.hurst == 0.5 {
                    return *c;
                }
                let t = t.max(f64::MIN_POSITIVE);
                c * (self.hurst + 0.5) * kh_of_constant(self.hurst, t) / t
            }
            Table::Sampled(f) => {
                let d = self.horizon / FINE_STEPS as f64;
                let lo = (t - d).max(0.0);
                let hi = (t + d).min(self.horizon);
                (f.interpolate(hi) - f.interpolate(lo)) / (hi - lo)
            }
        }
    }

    /// Cell averages `ā_j` of `a` over the grid cells.
    pub fn cell_averages(&self, grid: &TimeGrid) -> Vec<f64> {
        let gl = GaussLegendre::new(10);
        let dt = grid.dt();
        (0..grid.steps)
            .map(|j| gl.integrate(|s| self.a.value(s), grid.time(j), grid.time(j + 1)) / dt)
            .collect()
    }

    fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if grid.horizon > self.horizon * (1.0 + 1e-12) {
            return Err(domain(format!(
                "drift is defined up to {}, grid reaches {}",
                self.horizon, grid.horizon
            )));
        }
        Ok(())
    }
}

impl MeanPath for DriftSpec {
    fn mean(&self, t: f64) -> f64 {
        self.m(t)
    }

    fn slope(&self, t: f64) -> f64 {
        self.mu(t)
    }

    fn increment(&self, t: f64, h: f64) -> f64 {
        match &self.table {
            Table::Constant(c) => c * kh_of_constant(self.hurst, 1.0) * pow_increment(t, h, self.hurst + 0.5),
            Table::Sampled(_) => self.m(t + h) - self.m(t),
        }
    }
}

/// `Z = x0 + B + m` pathwise; the centered values are kept alongside.
pub fn make_shifted(batch: PathBatch, drift: &DriftSpec, x0: f64) -> Result<PathBatch> {
    if batch.centered.is_some() {
        return Err(Error::Contract("batch is already shifted".into()));
    }
    drift.check_grid(&batch.grid)?;
    let shift: Vec<f64> = batch.grid.times().iter().map(|&t| x0 + drift.m(t)).collect();
    let mut out = batch;
    let b = out.values.clone();
    for row in out.values.chunks_mut(shift.len()) {
        for (v, s) in row.iter_mut().zip(&shift) {
            *v += s;
        }
    }
    out.centered = Some(b);
    Ok(out)
}

/// `η = exp(−Σ ā_j ΔW_j − ½ Σ ā_j² Δ)` per path.
pub fn girsanov_weights(batch: &PathBatch, drift: &DriftSpec, exec: Exec) -> Result<Vec<f64>> {
    let Some(w) = batch.w_increments.as_ref() else {
        return Err(Error::Contract("Girsanov weights need the Wiener increments of the batch".into()));
    };
    drift.check_grid(&batch.grid)?;
    let abar = drift.cell_averages(&batch.grid);
    let quad = 0.5 * batch.grid.dt() * abar.iter().map(|a| a * a).sum::<f64>();
    let steps = batch.grid.steps;
    Ok(par::map_range(exec, batch.n_paths, |p| {
        let dw = &w[p * steps..(p + 1) * steps];
        let lin: f64 = abar.iter().zip(dw).map(|(a, d)| a * d).sum();
        (-lin - quad).exp()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::kernel_integral;
    use crate::simulation::{mean_se, sample_fbm, sample_fbm_volterra, weighted_mean_se, Method, Sampling};

    #[test]
    fn zero_drift_is_identity() {
        let grid = TimeGrid::new(32, 1.0).unwrap();
        let b = sample_fbm_volterra(0.7, &grid, 10, &Sampling::new(5)).unwrap();
        let d = DriftSpec::zero(0.7, 1.0).unwrap();
        let eta = girsanov_weights(&b, &d, Exec::default()).unwrap();
        assert!(eta.iter().all(|&e| e == 1.0));
        let z = make_shifted(b.clone(), &d, 2.0).unwrap();
        for (zv, bv) in z.values.iter().zip(&b.values) {
            assert_eq!(*zv, bv + 2.0);
        }
    }

    #[test]
    fn brownian_unit_drift_mean() {
        let grid = TimeGrid::new(16, 1.0).unwrap();
        let d = DriftSpec::constant(0.5, 1.0, 1.0).unwrap();
        assert!((d.m(0.3) - 0.3).abs() < 1e-15);
        let b = sample_fbm(0.5, &grid, 20_000, &Sampling::new(8), Method::Circulant).unwrap();
        let z = make_shifted(b, &d, 1.0).unwrap();
        for i in [4, 16] {
            let col: Vec<f64> = z.column(i).iter().map(|v| v - 1.0).collect();
            let (m, se) = mean_se(&col);
            assert!((m - grid.time(i)).abs() < 3.0 * se, "{m} ± {se}");
        }
    }

    #[test]
    fn unit_drift_matches_kernel_quadrature() {
        let d = DriftSpec::constant(0.7, 1.0, 1.0).unwrap();
        for t in [0.25, 0.5, 1.0] {
            let q = kernel_integral(0.7, t, 0.0, t).unwrap();
            assert!((d.m(t) - q).abs() < 1e-3, "{t}");
        }
        // The sampled path through the operator agrees with the closed form.
        let s = DriftSpec::new(0.7, BasisFunction::Linear { slope: 1e-300, intercept: 1.0 }, 1.0).unwrap();
        for t in [0.25, 0.5, 0.9] {
            assert!((s.m(t) - d.m(t)).abs() < 1e-4);
            assert!((s.mu(t) - d.mu(t)).abs() < 1e-3, "{} vs {}", s.mu(t), d.mu(t));
        }
    }

    #[test]
    fn weights_need_increments() {
        let grid = TimeGrid::new(8, 1.0).unwrap();
        let b = sample_fbm(0.7, &grid, 2, &Sampling::new(1), Method::Cholesky).unwrap();
        let d = DriftSpec::constant(0.7, 1.0, 1.0).unwrap();
        assert!(matches!(girsanov_weights(&b, &d, Exec::default()), Err(Error::Contract(_))));
    }

    #[test]
    fn exponential_martingale() {
        let grid = TimeGrid::new(32, 1.0).unwrap();
        let b = sample_fbm_volterra(0.3, &grid, 50_000, &Sampling::new(4)).unwrap();
        let d = DriftSpec::new(0.3, BasisFunction::Sine { amplitude: 1.0, frequency: 3.0 }, 1.0).unwrap();
        let eta = girsanov_weights(&b, &d, Exec::default()).unwrap();
        let (m, se) = mean_se(&eta);
        assert!((m - 1.0).abs() < 3.0 * se, "{m} ± {se}");
        let ones = vec![1.0; eta.len()];
        assert_eq!(weighted_mean_se(&ones, &eta).0, m);
    }

    #[test]
    fn unbounded_integrand_rejected() {
        let a = BasisFunction::AbsPower { center: 0.5, exponent: -0.5, scale: 1.0 };
        assert!(DriftSpec::new(0.7, a, 1.0).is_err());
    }
}
