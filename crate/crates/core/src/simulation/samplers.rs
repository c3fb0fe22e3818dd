use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{PathBatch, Sampling, TimeGrid};
use crate::error::{domain, Error, Result};
use crate::models::{fbm_cov_unchecked, fgn_autocovariance, kernel_from_parts, kernel_integral, Hurst};
use crate::par;
use crate::quadrature::GaussLegendre;

/// Largest grid the Cholesky sampler accepts: factorization is O(n³) and
/// each path costs O(n²).
pub const CHOLESKY_MAX_STEPS: usize = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cholesky,
    Circulant,
    Volterra,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Cholesky => "cholesky",
            Method::Circulant => "circulant",
            Method::Volterra => "volterra",
        }
    }
}

/// Centered fBm paths with covariance `R_H` on the grid.
pub fn sample_fbm(h: f64, grid: &TimeGrid, n_paths: usize, sampling: &Sampling, method: Method) -> Result<PathBatch> {
    let h = Hurst::new(h)?.get();
    if n_paths == 0 {
        return Err(domain("need at least one path"));
    }
    match method {
        Method::Cholesky => cholesky(h, grid, n_paths, sampling),
        Method::Circulant => circulant(h, grid, n_paths, sampling),
        Method::Volterra => sample_fbm_volterra(h, grid, n_paths, sampling),
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn batch(grid: &TimeGrid, n_paths: usize, sampling: &Sampling, method: Method, values: Vec<f64>, w: Option<Vec<f64>>) -> PathBatch {
    PathBatch {
        grid: *grid,
        n_paths,
        values,
        w_increments: w,
        centered: None,
        seed: sampling.seed,
        stream: sampling.stream,
        method: method.name().into(),
    }
}

fn cholesky(h: f64, grid: &TimeGrid, n_paths: usize, sampling: &Sampling) -> Result<PathBatch> {
    let n = grid.steps;
    if n > CHOLESKY_MAX_STEPS {
        return Err(Error::Unsupported(format!(
            "Cholesky sampling is limited to {CHOLESKY_MAX_STEPS} steps, got {n}"
        )));
    }
    let cov = DMatrix::from_fn(n, n, |i, j| fbm_cov_unchecked(h, grid.time(i + 1), grid.time(j + 1)));
    let l = cov
        .cholesky()
        .ok_or_else(|| domain(format!("fBm covariance is not numerically positive definite at n = {n}")))?
        .unpack();
    // Packed lower triangle, row by row.
    let mut packed = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in 0..=i {
            packed.push(l[(i, j)]);
        }
    }
    let nodes = grid.nodes();
    let mut values = vec![0.0; n_paths * nodes];
    par::for_each_row(sampling.exec, &mut values, nodes, |p, row| {
        let mut rng = sampling.path_rng(p);
        let z: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let mut off = 0;
        for i in 0..n {
            let r = &packed[off..off + i + 1];
            row[i + 1] = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            off += i + 1;
        }
    });
    Ok(batch(grid, n_paths, sampling, Method::Cholesky, values, None))
}

/// Eigenvalues of the circulant embedding of the fGn autocovariance
/// (first row of length `2n`). Values in `[−1e-9, 0)` are clamped to zero.
pub fn circulant_eigenvalues(h: f64, steps: usize, dt: f64) -> Result<Vec<f64>> {
    let m = 2 * steps;
    let mut row: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); m];
    for k in 0..=steps {
        let g = fgn_autocovariance(h, k as u64, dt);
        row[k] = Complex::new(g, 0.0);
        if k > 0 && k < steps {
            row[m - k] = Complex::new(g, 0.0);
        }
    }
    FftPlanner::new().plan_fft_forward(m).process(&mut row);
    row.iter()
        .map(|c| {
            let l = c.re;
            if l >= 0.0 {
                Ok(l)
            } else if l >= -1e-9 {
                Ok(0.0)
            } else {
                Err(Error::EmbeddingFailure { eigenvalue: l })
            }
        })
        .collect()
}

fn circulant(h: f64, grid: &TimeGrid, n_paths: usize, sampling: &Sampling) -> Result<PathBatch> {
    let n = grid.steps;
    let m = 2 * n;
    let scale: Vec<f64> = circulant_eigenvalues(h, n, grid.dt())?.into_iter().map(|l| (l / m as f64).sqrt()).collect();
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(m);
    let nodes = grid.nodes();
    let mut values = vec![0.0; n_paths * nodes];
    par::for_each_row(sampling.exec, &mut values, nodes, |p, row| {
        let mut rng = sampling.path_rng(p);
        let mut buf: Vec<Complex<f64>> = scale
            .iter()
            .map(|&s| {
                let a = normal(&mut rng);
                let b = normal(&mut rng);
                Complex::new(s * a, s * b)
            })
            .collect();
        let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(&mut buf, &mut scratch);
        let mut acc = 0.0;
        for (slot, z) in row[1..].iter_mut().zip(&buf[..n]) {
            acc += z.re;
            *slot = acc;
        }
    });
    Ok(batch(grid, n_paths, sampling, Method::Circulant, values, None))
}

/// Discretized Volterra representation `B_{t_i} ≈ Σ_{j<i} K̄_{ij} ΔW_j`
/// with cell-averaged kernel weights, plus the factor of the covariance the
/// `W`-driven part misses.
#[derive(Debug, Clone)]
pub struct VolterraWeights {
    h: f64,
    grid: TimeGrid,
    /// Row `i − 1` holds `K̄_{i,0..i}`, packed.
    kbar: Vec<f64>,
    /// `steps × rank`, row-major.
    residual: Vec<f64>,
    rank: usize,
}

impl VolterraWeights {
    pub fn new(h: f64, grid: &TimeGrid, exec: par::Exec) -> Result<Self> {
        let h = Hurst::new(h)?.get();
        let n = grid.steps;
        if h == 0.5 {
            return Ok(Self { h, grid: *grid, kbar: vec![1.0; n * (n + 1) / 2], residual: Vec::new(), rank: 0 });
        }
        let dt = grid.dt();
        let gl = GaussLegendre::new(10);
        let rows: Vec<Result<Vec<f64>>> = par::map_range(exec, n, |r| {
            let i = r + 1;
            let t = grid.time(i);
            (0..i)
                .map(|j| {
                    let (a, b) = (grid.time(j), grid.time(j + 1));
                    let integral = if j == 0 || j + 1 == i {
                        kernel_integral(h, t, a, b)?
                    } else {
                        let mut acc = 0.0;
                        for (s, w) in gl.points(a, b) {
                            acc += w * kernel_from_parts(h, t, s, t - s)?;
                        }
                        acc
                    };
                    Ok(integral / dt)
                })
                .collect()
        });
        let mut kbar = Vec::with_capacity(n * (n + 1) / 2);
        for r in rows {
            kbar.extend(r?);
        }
        let mut me = Self { h, grid: *grid, kbar, residual: Vec::new(), rank: 0 };
        let miss = DMatrix::from_fn(n, n, |a, b| {
            fbm_cov_unchecked(h, grid.time(a + 1), grid.time(b + 1)) - me.projection_covariance(a + 1, b + 1)
        });
        let eig = SymmetricEigen::new(miss);
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > 1e-12 * top.max(1e-300)).collect();
        me.rank = keep.len();
        me.residual = vec![0.0; n * me.rank];
        for i in 0..n {
            for (c, &k) in keep.iter().enumerate() {
                me.residual[i * me.rank + c] = eig.eigenvectors[(i, k)] * eig.eigenvalues[k].sqrt();
            }
        }
        Ok(me)
    }

    fn row(&self, i: usize) -> &[f64] {
        let start = (i - 1) * i / 2;
        &self.kbar[start..start + i]
    }

    /// `K̄_{ij}`, the average of `K_H(t_i, ·)` over cell `j`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if j >= i {
            0.0
        } else {
            self.row(i)[j]
        }
    }

    /// Covariance of the `W`-driven part at nodes `i`, `j`.
    pub fn projection_covariance(&self, i: usize, j: usize) -> f64 {
        if i == 0 || j == 0 {
            return 0.0;
        }
        let (a, b) = (self.row(i), self.row(j));
        self.grid.dt() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    /// Largest `|Cov(W-part) − R_H|` over probe time pairs on the grid.
    pub fn projection_bias(&self, probes: &[(f64, f64)]) -> Result<f64> {
        let mut worst = 0.0f64;
        for &(s, t) in probes {
            let (i, j) = (self.grid.index_of(s)?, self.grid.index_of(t)?);
            let d = self.projection_covariance(i, j) - fbm_cov_unchecked(self.h, s, t);
            worst = worst.max(d.abs());
        }
        Ok(worst)
    }

    pub fn residual_rank(&self) -> usize {
        self.rank
    }
}

/// fBm paths built from Wiener increments through the Volterra kernel; the
/// increments are kept for Girsanov weighting.
pub fn sample_fbm_volterra(h: f64, grid: &TimeGrid, n_paths: usize, sampling: &Sampling) -> Result<PathBatch> {
    if grid.steps < 32 {
        return Err(domain(format!("Volterra sampling needs at least 32 steps, got {}", grid.steps)));
    }
    let weights = VolterraWeights::new(h, grid, sampling.exec)?;
    sample_with_weights(&weights, n_paths, sampling)
}

/// Volterra sampling with precomputed weights.
pub fn sample_with_weights(weights: &VolterraWeights, n_paths: usize, sampling: &Sampling) -> Result<PathBatch> {
    let grid = weights.grid;
    let n = grid.steps;
    let nodes = grid.nodes();
    let sd = grid.dt().sqrt();
    let rank = weights.rank;
    let mut values = vec![0.0; n_paths * nodes];
    let mut w = vec![0.0; n_paths * n];
    let bm = weights.h == 0.5;
    par::for_each_row_pair(sampling.exec, &mut values, nodes, &mut w, n, |p, row, dw| {
        let mut rng = sampling.path_rng(p);
        for x in dw.iter_mut() {
            *x = sd * normal(&mut rng);
        }
        if bm {
            let mut acc = 0.0;
            for (slot, d) in row[1..].iter_mut().zip(dw.iter()) {
                acc += d;
                *slot = acc;
            }
            return;
        }
        let xi: Vec<f64> = (0..rank).map(|_| normal(&mut rng)).collect();
        for i in 1..=n {
            let k = weights.row(i);
            let mut acc: f64 = k.iter().zip(dw.iter()).map(|(a, b)| a * b).sum();
            let r = &weights.residual[(i - 1) * rank..i * rank];
            acc += r.iter().zip(&xi).map(|(a, b)| a * b).sum::<f64>();
            row[i] = acc;
        }
    });
    Ok(batch(&grid, n_paths, sampling, Method::Volterra, values, Some(w)))
}

/// Standard Brownian paths with their increments.
pub fn sample_wiener(grid: &TimeGrid, n_paths: usize, sampling: &Sampling) -> Result<PathBatch> {
    let weights = VolterraWeights::new(0.5, grid, sampling.exec)?;
    let mut b = sample_with_weights(&weights, n_paths, sampling)?;
    b.method = "wiener".into();
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::Exec;
    use crate::simulation::covariance_se;

    #[test]
    fn brownian_circulant_has_independent_increments() {
        let grid = TimeGrid::new(16, 1.0).unwrap();
        let b = sample_fbm(0.5, &grid, 20_000, &Sampling::new(1), Method::Circulant).unwrap();
        let d1: Vec<f64> = (0..b.n_paths).map(|p| b.path(p)[1] - b.path(p)[0]).collect();
        let d2: Vec<f64> = (0..b.n_paths).map(|p| b.path(p)[2] - b.path(p)[1]).collect();
        let (c, se) = covariance_se(&d1, &d2);
        assert!(c.abs() < 3.0 * se, "{c} ± {se}");
        let (v, se) = covariance_se(&d1, &d1);
        assert!((v - grid.dt()).abs() < 3.0 * se);
    }

    #[test]
    fn embedding_is_nonnegative() {
        for h in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let l = circulant_eigenvalues(h, 1024, 1.0 / 1024.0).unwrap();
            assert!(l.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn volterra_brownian_is_cumulative_sum() {
        let grid = TimeGrid::new(32, 1.0).unwrap();
        let b = sample_fbm_volterra(0.5, &grid, 4, &Sampling::new(3)).unwrap();
        for p in 0..4 {
            let dw = b.increments(p).unwrap();
            let mut acc = 0.0;
            for (i, d) in dw.iter().enumerate() {
                acc += d;
                assert_eq!(b.path(p)[i + 1], acc);
            }
        }
    }

    #[test]
    fn volterra_grid_covariance_is_exact() {
        let grid = TimeGrid::new(32, 1.0).unwrap();
        let w = VolterraWeights::new(0.3, &grid, Exec::default()).unwrap();
        let n = grid.steps;
        let mut worst = 0.0f64;
        for i in 1..=n {
            for j in 1..=n {
                let mut c = w.projection_covariance(i, j);
                let (ri, rj) = (&w.residual[(i - 1) * w.rank..i * w.rank], &w.residual[(j - 1) * w.rank..j * w.rank]);
                c += ri.iter().zip(rj).map(|(a, b)| a * b).sum::<f64>();
                worst = worst.max((c - fbm_cov_unchecked(0.3, grid.time(i), grid.time(j))).abs());
            }
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn volterra_bias_shrinks_with_resolution() {
        let probes = [(0.25, 0.75), (0.5, 0.5), (1.0, 1.0), (0.25, 1.0)];
        for h in [0.3, 0.7] {
            let a = VolterraWeights::new(h, &TimeGrid::new(256, 1.0).unwrap(), Exec::default()).unwrap();
            let b = VolterraWeights::new(h, &TimeGrid::new(512, 1.0).unwrap(), Exec::default()).unwrap();
            let (ba, bb) = (a.projection_bias(&probes).unwrap(), b.projection_bias(&probes).unwrap());
            assert!(ba < 0.01, "H={h}: {ba}");
            assert!(bb < ba, "H={h}: {bb} vs {ba}");
        }
    }

    #[test]
    fn cholesky_limit() {
        let grid = TimeGrid::new(CHOLESKY_MAX_STEPS + 1, 1.0).unwrap();
        assert!(matches!(
            sample_fbm(0.7, &grid, 1, &Sampling::new(0), Method::Cholesky),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let grid = TimeGrid::new(64, 1.0).unwrap();
        for method in [Method::Cholesky, Method::Circulant, Method::Volterra] {
            let s = Sampling::new(11).stream(2);
            let a = sample_fbm(0.3, &grid, 50, &s.exec(Exec::Parallel), method).unwrap();
            let b = sample_fbm(0.3, &grid, 50, &s.exec(Exec::Sequential), method).unwrap();
            assert_eq!(a, b, "{method:?}");
        }
    }
}
