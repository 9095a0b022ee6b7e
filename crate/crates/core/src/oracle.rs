//! Independent checks of the closed forms.
//!
//! [`grid_ipf`] runs the plain alternating-scaling iteration on a 1-D grid,
//! with no use of the Gaussian structure beyond evaluating densities.
//! [`mc_pushforward`] samples a bridge kernel and compares sample moments
//! with the target marginal.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::bridge::{integrated_costs, BridgeProblem};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianDist, RelaxedParams};
use crate::random::{rng, standard_normal_vector};
use crate::spd::symmetrize;

/// Largest tail mass a grid may cut off.
pub const MAX_TRUNCATION: f64 = 1e-8;

/// Uniform midpoint grid on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n_points: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, n_points: usize) -> Result<Self> {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) || n_points < 3 {
            return Err(Error::InvalidArgument(format!(
                "bad grid [{lo}, {hi}] with {n_points} points"
            )));
        }
        Ok(Self { lo, hi, n_points })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / self.n_points as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.n_points)
            .map(|i| self.lo + (i as f64 + 0.5) * h)
            .collect()
    }
}

/// A Gaussian discretized on a grid: renormalized midpoint weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    pub grid: GridSpec,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    /// Mass of the continuous Gaussian outside `[lo, hi]`.
    pub truncated: f64,
}

impl GridMeasure {
    pub fn gaussian(grid: GridSpec, mean: f64, var: f64) -> Result<Self> {
        let s = var.sqrt();
        let truncated = 0.5 * erfc((grid.hi - mean) / (s * SQRT_2))
            + 0.5 * erfc((mean - grid.lo) / (s * SQRT_2));
        if truncated > MAX_TRUNCATION {
            return Err(Error::GridTooNarrow { mass: truncated });
        }
        let points = grid.points();
        let raw: Vec<f64> = points
            .iter()
            .map(|x| (-0.5 * (x - mean).powi(2) / var).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights = raw.into_iter().map(|w| w / total).collect();
        Ok(Self {
            grid,
            points,
            weights,
            truncated,
        })
    }
}

/// Coupling mass on the product grid, rows indexed by `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCoupling {
    pub x: GridMeasure,
    pub y: GridMeasure,
    pub mass: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpfReport {
    pub coupling: GridCoupling,
    pub iterations: usize,
    pub converged: bool,
    /// L1 marginal mismatch after the last sweep.
    pub marginal_error: f64,
    /// `(E X, E Y)`.
    pub mean: DVector<f64>,
    /// Covariance of `(X, Y)`.
    pub cov: DMatrix<f64>,
    /// `Σ P log(P/R)` with `R` the discretized reference `η_i q(x_i, y_j)`,
    /// rows normalized.
    pub entropy: f64,
    /// Grid potentials `U(x_i) = −log u_i`, `V(y_j) = −log v_j` with
    /// `p(x, y) = e^{−U(x)} q(x, y) e^{−V(y)}` as densities and `V = 0` at
    /// the start.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Alternating row/column scaling of `q_θ(x_i, y_j)` until both marginals
/// are matched to `tol` in L1. Non-convergence is reported, not an error.
pub fn grid_ipf(p: &BridgeProblem, grid: GridSpec, iters: usize, tol: f64) -> Result<IpfReport> {
    if p.dim() != 1 {
        return Err(Error::InvalidArgument(format!(
            "grid IPF needs d = 1, got {}",
            p.dim()
        )));
    }
    let eta = GridMeasure::gaussian(grid, p.eta.mean[0], p.eta.cov.matrix()[(0, 0)])?;
    let mu = GridMeasure::gaussian(grid, p.mu.mean[0], p.mu.cov.matrix()[(0, 0)])?;
    let n = grid.n_points;
    let h = grid.step();
    let (a, b, t) = (
        p.theta.alpha[0],
        p.theta.beta[(0, 0)],
        p.theta.tau.matrix()[(0, 0)],
    );
    let norm = 1.0 / (2.0 * std::f64::consts::PI * t).sqrt();
    // q[i*n + j] = q_θ(x_i, y_j)
    let mut q = vec![0.0; n * n];
    for (i, x) in eta.points.iter().enumerate() {
        let c = a + b * x;
        for (j, y) in mu.points.iter().enumerate() {
            q[i * n + j] = norm * (-0.5 * (y - c).powi(2) / t).exp();
        }
    }
    let da: Vec<f64> = eta.weights.iter().map(|w| w / h).collect();
    let db: Vec<f64> = mu.weights.iter().map(|w| w / h).collect();
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; n];
    let mut col = vec![0.0; n];
    let mut iterations = 0;
    let mut marginal_error = f64::INFINITY;
    while iterations < iters {
        iterations += 1;
        for i in 0..n {
            let row = &q[i * n..(i + 1) * n];
            let s: f64 = row.iter().zip(&v).map(|(k, vj)| k * vj).sum();
            u[i] = da[i] / (h * s);
        }
        col.iter_mut().for_each(|c| *c = 0.0);
        for i in 0..n {
            let row = &q[i * n..(i + 1) * n];
            for (c, k) in col.iter_mut().zip(row) {
                *c += u[i] * k;
            }
        }
        for j in 0..n {
            v[j] = db[j] / (h * col[j]);
        }
        // columns are exact now; measure the row mismatch
        marginal_error = (0..n)
            .map(|i| {
                let row = &q[i * n..(i + 1) * n];
                let s: f64 = row.iter().zip(&v).map(|(k, vj)| k * vj).sum();
                (u[i] * s * h * h - eta.weights[i]).abs()
            })
            .sum();
        if marginal_error <= tol {
            break;
        }
    }
    let converged = marginal_error <= tol;
    let mass = DMatrix::from_fn(n, n, |i, j| u[i] * q[i * n + j] * v[j] * h * h);

    let mut mean = DVector::zeros(2);
    for i in 0..n {
        for j in 0..n {
            let m = mass[(i, j)];
            mean[0] += m * eta.points[i];
            mean[1] += m * mu.points[j];
        }
    }
    let mut cov = DMatrix::zeros(2, 2);
    let mut entropy = 0.0;
    for i in 0..n {
        let row_sum: f64 = (0..n).map(|j| q[i * n + j]).sum();
        for j in 0..n {
            let m = mass[(i, j)];
            let dx = eta.points[i] - mean[0];
            let dy = mu.points[j] - mean[1];
            cov[(0, 0)] += m * dx * dx;
            cov[(0, 1)] += m * dx * dy;
            cov[(1, 1)] += m * dy * dy;
            if m > 0.0 {
                let r = eta.weights[i] * q[i * n + j] / row_sum;
                entropy += m * (m / r).ln();
            }
        }
    }
    cov[(1, 0)] = cov[(0, 1)];
    Ok(IpfReport {
        coupling: GridCoupling {
            x: eta,
            y: mu,
            mass,
        },
        iterations,
        converged,
        marginal_error,
        mean,
        cov,
        entropy,
        u: u.iter().map(|x| -x.ln()).collect(),
        v: v.iter().map(|x| -x.ln()).collect(),
    })
}

/// Largest violation of the integrated-cost sandwiches
/// `−c^μ + μ(V) ≤ U_∞ − U ≤ log 𝒬(e^{c_η})`, `−c_η ≤ V_∞ − V ≤ −μ(V) + log ℛ(e^{c^μ})`
/// by the grid potentials, over grid points within `radius` standard
/// deviations of the means. Zero when they hold.
pub fn ipf_sandwich_violation(p: &BridgeProblem, rep: &IpfReport, radius: f64) -> Result<f64> {
    let costs = integrated_costs(p)?;
    let (m, s) = (p.eta.mean[0], p.eta.cov.matrix()[(0, 0)]);
    let (mb, sb) = (p.mu.mean[0], p.mu.cov.matrix()[(0, 0)]);
    let log_g = |z: f64, var: f64| -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + z * z / var);
    let mu_v = 0.5 * (1.0 + (2.0 * std::f64::consts::PI * sb).ln());
    let one = |x: f64| DVector::from_element(1, x);
    let mut worst: f64 = 0.0;
    for (i, x) in rep.coupling.x.points.iter().enumerate() {
        if (x - m).abs() > radius * s.sqrt() {
            continue;
        }
        let du = rep.u[i] + log_g(x - m, s);
        worst = worst.max(-costs.c_mu.eval(&one(*x)) + mu_v - du);
        if let Some(lq) = &costs.log_q {
            worst = worst.max(du - lq.eval(&one(*x)));
        }
    }
    for (j, y) in rep.coupling.y.points.iter().enumerate() {
        if (y - mb).abs() > radius * sb.sqrt() {
            continue;
        }
        let dv = rep.v[j] + log_g(y - mb, sb);
        worst = worst.max(-costs.c_eta.eval(&one(*y)) - dv);
        if let Some(lr) = &costs.log_r {
            worst = worst.max(dv - (-mu_v + lr.eval(&one(*y))));
        }
    }
    Ok(worst.max(0.0))
}

/// Sample moments of pushed samples against a target Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub n_samples: usize,
    pub seed: u64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// `(σ̄_ii / N)^{1/2}`.
    pub mean_se: DVector<f64>,
    /// `((σ̄_ii σ̄_jj + σ̄_ij²)/(N − 1))^{1/2}`.
    pub cov_se: DMatrix<f64>,
    /// Largest `|error| / se` over mean entries and covariance entries.
    pub max_z: f64,
}

impl McReport {
    pub fn within(&self, bands: f64) -> bool {
        self.max_z <= bands
    }
}

/// PSD square root with negative rounding clipped.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Draws `Xᵢ ∼ η` and `Yᵢ = α + βXᵢ + τ^{1/2}ξᵢ`, then compares the sample
/// moments of `Y` with `target`. Deterministic in `seed`.
pub fn mc_pushforward(
    eta: &GaussianDist,
    kernel: &RelaxedParams,
    target: &GaussianDist,
    n_samples: usize,
    seed: u64,
) -> Result<McReport> {
    if n_samples < 100 {
        return Err(Error::InvalidArgument(format!(
            "need at least 100 samples, got {n_samples}"
        )));
    }
    let d = eta.dim();
    let sh = eta.cov.sqrt();
    let th = psd_sqrt(kernel.tau.matrix());
    let mut g = rng(seed);
    let ys: Vec<DVector<f64>> = (0..n_samples)
        .map(|_| {
            let x = &eta.mean + sh.matrix() * standard_normal_vector(&mut g, d);
            &kernel.alpha + &kernel.beta * x + &th * standard_normal_vector(&mut g, d)
        })
        .collect();
    let (mean, cov) = sample_moments(&ys)?;
    let sb = target.cov.matrix();
    let nf = n_samples as f64;
    let mean_se = DVector::from_fn(d, |i, _| (sb[(i, i)] / nf).sqrt());
    let cov_se = DMatrix::from_fn(d, d, |i, j| {
        ((sb[(i, i)] * sb[(j, j)] + sb[(i, j)].powi(2)) / (nf - 1.0)).sqrt()
    });
    let mut max_z: f64 = 0.0;
    for i in 0..d {
        max_z = max_z.max((mean[i] - target.mean[i]).abs() / mean_se[i]);
        for j in 0..=i {
            max_z = max_z.max((cov[(i, j)] - sb[(i, j)]).abs() / cov_se[(i, j)]);
        }
    }
    Ok(McReport {
        n_samples,
        seed,
        mean,
        cov,
        mean_se,
        cov_se,
        max_z,
    })
}

/// Sample mean and unbiased covariance.
pub fn sample_moments(samples: &[DVector<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    let d = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.len(),
        });
    }
    let n = samples.len() as f64;
    let mean = samples.iter().fold(DVector::zeros(d), |acc, s| acc + s) / n;
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        let z = s - &mean;
        cov += &z * z.transpose();
    }
    Ok((mean, symmetrize(&(cov / (n - 1.0)))))
}
