//! Monte Carlo layer: fBm samplers, shifted processes, Girsanov weights,
//! conditional-expectation estimators and batch export.

mod drift;
mod estimators;
mod export;
mod mc;
mod samplers;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::par::Exec;

pub use drift::{girsanov_weights, make_shifted, DriftSpec};
pub use estimators::{mc_conditional_expectation, silverman_bandwidth, ConditionalFit, Estimator, Prediction};
pub use export::{read_binary, write_binary, write_csv, BatchColumns, BINARY_MAGIC};
pub use mc::{mc_stochastic_derivative, McConditioning, McDerivativeReport, McStep};
pub use samplers::{
    circulant_eigenvalues, sample_fbm, sample_fbm_volterra, sample_wiener, Method, VolterraWeights,
    CHOLESKY_MAX_STEPS,
};

/// Uniform grid `t_i = i·T/n`, `i = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub steps: usize,
    pub horizon: f64,
}

impl TimeGrid {
    pub fn new(steps: usize, horizon: f64) -> Result<Self> {
        if steps == 0 {
            return Err(domain("grid needs at least one step"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(domain(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { steps, horizon })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn time(&self, i: usize) -> f64 {
        self.horizon * i as f64 / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.time(i)).collect()
    }

    /// Node index of `t`, which must lie on the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = t / self.dt();
        let i = x.round();
        if (x - i).abs() > 1e-9 || i < 0.0 || i as usize > self.steps {
            return Err(domain(format!("t = {t} is not a node of the grid (dt = {})", self.dt())));
        }
        Ok(i as usize)
    }
}

/// Seed, stream and execution policy of a sampling run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Sampling {
    pub seed: u64,
    pub stream: u64,
    pub exec: Exec,
}

impl Sampling {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0, exec: Exec::default() }
    }

    pub fn stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    /// Generator for one path: keyed by `(seed, stream)`, positioned on the
    /// ChaCha stream `path`.
    pub fn path_rng(&self, path: usize) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.stream.to_le_bytes());
        key[16..24].copy_from_slice(b"gderiv\0\0");
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(path as u64);
        rng
    }
}

/// Paths on a uniform grid, stored row-major (`paths × nodes`).
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub grid: TimeGrid,
    pub n_paths: usize,
    /// Process values; `values[p·nodes]` is the initial value.
    pub values: Vec<f64>,
    /// Wiener increments (`paths × steps`) driving the values, when known.
    pub w_increments: Option<Vec<f64>>,
    /// Centered part `B` when `values` holds a shifted process `Z`.
    pub centered: Option<Vec<f64>>,
    pub seed: u64,
    pub stream: u64,
    pub method: String,
}

impl PathBatch {
    pub fn path(&self, p: usize) -> &[f64] {
        let n = self.grid.nodes();
        &self.values[p * n..(p + 1) * n]
    }

    /// Column of values at node `i`.
    pub fn column(&self, i: usize) -> Vec<f64> {
        let n = self.grid.nodes();
        (0..self.n_paths).map(|p| self.values[p * n + i]).collect()
    }

    /// Column of the centered part at node `i` (the values themselves for an
    /// unshifted batch).
    pub fn centered_column(&self, i: usize) -> Vec<f64> {
        let n = self.grid.nodes();
        let src = self.centered.as_ref().unwrap_or(&self.values);
        (0..self.n_paths).map(|p| src[p * n + i]).collect()
    }

    pub fn increments(&self, p: usize) -> Option<&[f64]> {
        let m = self.grid.steps;
        self.w_increments.as_ref().map(|w| &w[p * m..(p + 1) * m])
    }

    /// `W` at every node, cumulated from the increments.
    pub fn wiener_values(&self) -> Option<Vec<f64>> {
        let w = self.w_increments.as_ref()?;
        let m = self.grid.steps;
        let mut out = Vec::with_capacity(self.n_paths * (m + 1));
        for p in 0..self.n_paths {
            let mut acc = 0.0;
            out.push(0.0);
            for dw in &w[p * m..(p + 1) * m] {
                acc += dw;
                out.push(acc);
            }
        }
        Some(out)
    }
}

/// Sample mean and its standard error.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Sample covariance of two columns with a delta-method standard error.
pub fn covariance_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let (c, se) = mean_se(&prods);
    (c * n / (n - 1.0), se)
}

/// Weighted mean `Σ w x / n` with its standard error.
pub fn weighted_mean_se(x: &[f64], w: &[f64]) -> (f64, f64) {
    let prods: Vec<f64> = x.iter().zip(w).map(|(a, b)| a * b).collect();
    mean_se(&prods)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let s = Sampling::new(7);
        let a: u64 = s.path_rng(3).random();
        let b: u64 = s.path_rng(3).random();
        let c: u64 = s.path_rng(4).random();
        let d: u64 = s.stream(1).path_rng(3).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn grid_indexing() {
        let g = TimeGrid::new(256, 1.0).unwrap();
        assert_eq!(g.index_of(0.5).unwrap(), 128);
        assert!(g.index_of(0.501).is_err());
        assert!(TimeGrid::new(0, 1.0).is_err());
    }
}
