//! Gaussian-process posterior over normalized profit-per-second as a
//! function of the strategy scalar, with a unit-lengthscale Gaussian kernel
//! and a zero prior mean, plus the tempered posterior-sample acquisition
//! rule used to pick the next strategy.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Number of evenly spaced acquisition grid points on [-1, 1].
pub const GRID_SIZE: usize = 201;
/// Default observation noise variance added to the kernel diagonal.
pub const DEFAULT_NOISE: f64 = 0.1;
/// Default observation capacity per process (FIFO eviction beyond this).
pub const DEFAULT_CAP: usize = 200;
/// Diagonal jitter keeping the kernel matrix positive definite.
pub const JITTER: f64 = 1e-6;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GpError {
    #[error("non-finite value in observations or queries")]
    NonFinite,
    #[error("kernel system singular even after jitter; observations corrupted")]
    Singular,
}

/// Gaussian kernel `exp(-(s1 - s2)^2 / 2)` with unit lengthscale.
pub fn kernel(s1: f64, s2: f64) -> f64 {
    let d = s1 - s2;
    (-d * d / 2.0).exp()
}

/// Mean-variance normalization with population standard deviation. A list
/// with fewer than two elements or zero variance maps to all zeros.
pub fn normalize(raw: &[f64]) -> Vec<f64> {
    let n = raw.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mean = raw.iter().sum::<f64>() / n as f64;
    let var = raw.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return vec![0.0; n];
    }
    let std = var.sqrt();
    raw.iter().map(|x| (x - mean) / std).collect()
}

/// Observed (strategy, pps) pairs. Raw pps values are retained so targets
/// can be re-normalized whenever the memory changes; beyond `cap` the
/// oldest observation is evicted first.
#[derive(Clone, Debug)]
pub struct GpObservations {
    s: Vec<f64>,
    raw: Vec<f64>,
    y: Vec<f64>,
    cap: usize,
}

impl GpObservations {
    pub fn new(cap: usize) -> GpObservations {
        GpObservations {
            s: Vec::new(),
            raw: Vec::new(),
            y: Vec::new(),
            cap: cap.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.cap
    }

    pub fn push(&mut self, s: f64, raw_pps: f64) {
        if self.s.len() == self.cap {
            self.s.remove(0);
            self.raw.remove(0);
        }
        self.s.push(s);
        self.raw.push(raw_pps);
        self.y = normalize(&self.raw);
    }

    pub fn s_values(&self) -> &[f64] {
        &self.s
    }

    pub fn y_values(&self) -> &[f64] {
        &self.y
    }

    pub fn raw_values(&self) -> &[f64] {
        &self.raw
    }
}

/// Posterior mean and variance over a fixed strategy grid.
#[derive(Clone, Debug)]
pub struct PosteriorGrid {
    pub s: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// The acquisition grid: 201 points from -1.00 to 1.00 in steps of 0.01.
pub fn grid_points() -> Vec<f64> {
    (0..GRID_SIZE).map(|i| (i as f64 - 100.0) / 100.0).collect()
}

/// Marginal posterior mean and variance at each query point, conditioning
/// on the observations with noise variance `noise` (plus jitter) on the
/// kernel diagonal. With no observations this is the prior (0, 1).
pub fn posterior(
    obs: &GpObservations,
    queries: &[f64],
    noise: f64,
) -> Result<(Vec<f64>, Vec<f64>), GpError> {
    if queries.iter().any(|q| !q.is_finite())
        || obs.s.iter().any(|s| !s.is_finite())
        || obs.y.iter().any(|y| !y.is_finite())
        || !noise.is_finite()
        || noise < 0.0
    {
        return Err(GpError::NonFinite);
    }
    let n = obs.len();
    if n == 0 {
        return Ok((vec![0.0; queries.len()], vec![1.0; queries.len()]));
    }

    // Lower Cholesky factor of K + (noise + jitter) I.
    let mut chol = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut k = kernel(obs.s[i], obs.s[j]);
            if i == j {
                k += noise + JITTER;
            }
            chol[i * n + j] = k;
        }
    }
    cholesky_in_place(&mut chol, n)?;

    // alpha = (K + sigma I)^{-1} y via forward and back substitution.
    let mut alpha = obs.y.clone();
    forward_solve(&chol, n, &mut alpha);
    back_solve_transposed(&chol, n, &mut alpha);

    let mut means = Vec::with_capacity(queries.len());
    let mut vars = Vec::with_capacity(queries.len());
    let mut k_star = vec![0.0; n];
    for &q in queries {
        for (i, &si) in obs.s.iter().enumerate() {
            k_star[i] = kernel(q, si);
        }
        let mean = k_star.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>();
        let mut z = k_star.clone();
        forward_solve(&chol, n, &mut z);
        let var = (1.0 - z.iter().map(|v| v * v).sum::<f64>()).max(0.0);
        means.push(mean);
        vars.push(var);
    }
    Ok((means, vars))
}

/// Posterior over the standard acquisition grid.
pub fn posterior_grid(obs: &GpObservations, noise: f64) -> Result<PosteriorGrid, GpError> {
    let s = grid_points();
    let (mean, var) = posterior(obs, &s, noise)?;
    Ok(PosteriorGrid { s, mean, var })
}

/// Tempered posterior-sample acquisition: draw one sample `f` from the
/// posterior (independent marginals per grid point), form
/// `mean + tau * (f - mean)`, and return the grid argmax, lowest `s` on
/// ties. `tau = 1` explores with a full posterior sample, `tau = 0`
/// exploits the posterior mean.
pub fn acquire<R: Rng>(grid: &PosteriorGrid, tau: f64, rng: &mut R) -> f64 {
    let tau = tau.clamp(0.0, 1.0);
    let mut best_s = grid.s[0];
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..grid.s.len() {
        let z: f64 = rng.sample(StandardNormal);
        let v = grid.mean[i] + tau * grid.var[i].sqrt() * z;
        if v > best_v {
            best_v = v;
            best_s = grid.s[i];
        }
    }
    best_s
}

fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<(), GpError> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(GpError::Singular);
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / d;
        }
    }
    Ok(())
}

/// Solves `L x = b` in place for lower-triangular `L`.
fn forward_solve(chol: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= chol[i * n + k] * b[k];
        }
        b[i] = v / chol[i * n + i];
    }
}

/// Solves `L^T x = b` in place for lower-triangular `L`.
fn back_solve_transposed(chol: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in (i + 1)..n {
            v -= chol[k * n + i] * b[k];
        }
        b[i] = v / chol[i * n + i];
    }
}
