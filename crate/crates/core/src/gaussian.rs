//! Gaussian distributions and linear-Gaussian Markov kernels.
//!
//! A kernel `K_θ` with `θ = (α, β, τ)` maps `x` to `N(α + βx, τ)`. Its
//! conjugate (Bayes) map is the Kalman update that turns the forward kernel
//! into the posterior kernel of `X` given `Y`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spd::{
    bures_wasserstein, burg_divergence, same_dim, spectral_norm, symmetrize, SpdMatrix, SymMatrix,
};

/// Smallest accepted ratio `s_min / s_max` of the singular values of `β`.
pub const BETA_CONDITION_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDist {
    pub mean: DVector<f64>,
    pub cov: SpdMatrix,
}

impl GaussianDist {
    pub fn new(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        same_dim(cov.dim(), mean.len())?;
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        log_gauss(&(x - &self.mean), &self.cov)
    }

    /// Differential entropy `d/2 + ½ log det(2πσ)`, equal to `∫ ν(dy) V(y)`
    /// for `V = −log` of the density.
    pub fn entropy(&self) -> f64 {
        let d = self.dim() as f64;
        0.5 * d + 0.5 * (d * (2.0 * PI).ln() + self.cov.log_det())
    }
}

/// `log g_σ(z)` evaluated without forming `det(2πσ)`.
pub fn log_gauss(z: &DVector<f64>, sigma: &SpdMatrix) -> f64 {
    let d = z.len() as f64;
    let w = sigma.inv_sqrt().matrix() * z;
    -0.5 * (w.norm_squared() + d * (2.0 * PI).ln() + sigma.log_det())
}

/// Parameters `θ = (α, β, τ)` with `β` invertible and `τ` SPD.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    pub alpha: DVector<f64>,
    pub beta: DMatrix<f64>,
    pub tau: SpdMatrix,
    beta_condition: f64,
}

impl KernelParams {
    pub fn new(alpha: DVector<f64>, beta: DMatrix<f64>, tau: SpdMatrix) -> Result<Self> {
        let d = tau.dim();
        same_dim(d, alpha.len())?;
        if beta.nrows() != d || beta.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: beta.nrows().max(beta.ncols()),
            });
        }
        if beta.iter().any(|x| !x.is_finite()) || alpha.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let sv = beta.clone().singular_values();
        let (s_min, s_max) = (sv.min(), sv.max());
        if s_min.is_nan() || s_min <= BETA_CONDITION_FLOOR * s_max {
            return Err(Error::SingularBeta { s_min, s_max });
        }
        Ok(Self {
            alpha,
            beta,
            tau,
            beta_condition: s_max / s_min,
        })
    }

    /// `θ = (0, I, t I)`.
    pub fn heat(d: usize, t: f64) -> Result<Self> {
        Self::new(
            DVector::zeros(d),
            DMatrix::identity(d, d),
            SpdMatrix::scaled_identity(d, t)?,
        )
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// Condition number of `β` recorded at construction.
    pub fn beta_condition(&self) -> f64 {
        self.beta_condition
    }

    pub fn relaxed(&self) -> RelaxedParams {
        RelaxedParams {
            alpha: self.alpha.clone(),
            beta: self.beta.clone(),
            tau: self.tau.sym(),
        }
    }

    /// `log q_θ(x, y) = log g_τ(y − α − βx)`.
    pub fn log_transition(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        log_gauss(&(y - &self.alpha - &self.beta * x), &self.tau)
    }

    /// Mean and covariance of `(X, Y)` with `X ~ ν_{m,σ}` and `Y ~ K_θ(X, ·)`.
    pub fn joint_moments(
        &self,
        m: &DVector<f64>,
        sigma: &SpdMatrix,
    ) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.dim();
        let a = &self.alpha + &self.beta * m;
        let sb = sigma.matrix() * self.beta.transpose();
        let b = sigma.congruence(&self.beta) + self.tau.matrix();
        let mut mean = DVector::zeros(2 * d);
        mean.rows_mut(0, d).copy_from(m);
        mean.rows_mut(d, d).copy_from(&a);
        let mut cov = DMatrix::zeros(2 * d, 2 * d);
        cov.view_mut((0, 0), (d, d)).copy_from(sigma.matrix());
        cov.view_mut((0, d), (d, d)).copy_from(&sb);
        cov.view_mut((d, 0), (d, d)).copy_from(&sb.transpose());
        cov.view_mut((d, d), (d, d)).copy_from(&b);
        (mean, cov)
    }

    /// Largest block-wise spectral deviation from `other`.
    pub fn distance(&self, other: &KernelParams) -> f64 {
        (&self.alpha - &other.alpha)
            .norm()
            .max(spectral_norm(&(&self.beta - &other.beta)))
            .max(spectral_norm(&(self.tau.matrix() - other.tau.matrix())))
    }
}

/// Kernel parameters without the invertibility and definiteness
/// requirements, for limits such as `κ → 0` or `ς → 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedParams {
    pub alpha: DVector<f64>,
    pub beta: DMatrix<f64>,
    /// Positive semi-definite noise covariance.
    pub tau: SymMatrix,
}

impl RelaxedParams {
    pub fn new(alpha: DVector<f64>, beta: DMatrix<f64>, tau: SymMatrix) -> Result<Self> {
        let d = tau.dim();
        same_dim(d, alpha.len())?;
        same_dim(d, beta.nrows())?;
        let lmin = tau.lambda_min();
        if lmin < -1e-12 * tau.matrix().norm().max(1.0) {
            return Err(Error::NotPsd { lambda_min: lmin });
        }
        Ok(Self { alpha, beta, tau })
    }
}

/// `h_{m,σ}(θ) = (α + βm, βσβ' + τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PushforwardMoments {
    pub a: DVector<f64>,
    pub b: SpdMatrix,
}

pub fn pushforward(g: &GaussianDist, theta: &KernelParams) -> Result<PushforwardMoments> {
    same_dim(theta.dim(), g.dim())?;
    let a = &theta.alpha + &theta.beta * &g.mean;
    let b = SpdMatrix::new(g.cov.congruence(&theta.beta) + theta.tau.matrix())?;
    Ok(PushforwardMoments { a, b })
}

/// Bayes map `𝔹_{m,σ}(θ) = (ι, κ, ς)`: `κ = σβ' b⁻¹`, `ι = m − κa`,
/// `ς⁻¹ = σ⁻¹ + β'τ⁻¹β`, where `(a, b) = h_{m,σ}(θ)`.
pub fn bayes_map(
    m: &DVector<f64>,
    sigma: &SpdMatrix,
    theta: &KernelParams,
) -> Result<KernelParams> {
    same_dim(theta.dim(), m.len())?;
    same_dim(theta.dim(), sigma.dim())?;
    let a = &theta.alpha + &theta.beta * m;
    let b = SpdMatrix::new(sigma.congruence(&theta.beta) + theta.tau.matrix())?;
    let kappa = sigma.matrix() * theta.beta.transpose() * b.inverse().matrix();
    let iota = m - &kappa * &a;
    let info = sigma.inverse().matrix() + theta.tau.inverse().congruence(&theta.beta.transpose());
    let varsigma = SpdMatrix::new(info)?.inverse();
    let residual = spectral_norm(&(b.congruence(&kappa) + varsigma.matrix() - sigma.matrix()));
    if residual > 1e-9 * sigma.lambda_max() {
        return Err(Error::InvalidArgument(format!(
            "posterior covariance identity fails by {residual:e}"
        )));
    }
    KernelParams::new(iota, kappa, varsigma)
}

/// Relative entropy `½(D(σ1|σ2) + ‖σ2^{-1/2}(m1 − m2)‖²)`.
pub fn gaussian_kl(g1: &GaussianDist, g2: &GaussianDist) -> Result<f64> {
    same_dim(g1.dim(), g2.dim())?;
    let shift = (g2.cov.inv_sqrt().matrix() * (&g1.mean - &g2.mean)).norm_squared();
    Ok(0.5 * (burg_divergence(&g1.cov, &g2.cov)? + shift))
}

/// 2-Wasserstein distance `(D_bw(σ1, σ2)² + ‖m1 − m2‖²)^{1/2}`.
pub fn gaussian_w2(g1: &GaussianDist, g2: &GaussianDist) -> Result<f64> {
    same_dim(g1.dim(), g2.dim())?;
    let bw = bures_wasserstein(&g1.cov, &g2.cov)?;
    Ok((bw * bw + (&g1.mean - &g2.mean).norm_squared()).sqrt())
}

/// `Ent(P_{θ1} | P_{θ0})` for the couplings `ν_{m,σ} × K_θ`.
pub fn kernel_rel_entropy(
    theta1: &KernelParams,
    theta0: &KernelParams,
    m: &DVector<f64>,
    sigma: &SpdMatrix,
) -> Result<f64> {
    same_dim(theta0.dim(), theta1.dim())?;
    same_dim(theta0.dim(), m.len())?;
    let tih = theta0.tau.inv_sqrt();
    let mean_gap = (&theta1.alpha + &theta1.beta * m) - (&theta0.alpha + &theta0.beta * m);
    let mean_term = (tih.matrix() * mean_gap).norm_squared();
    let gain_term =
        (tih.matrix() * (&theta1.beta - &theta0.beta) * sigma.sqrt().matrix()).norm_squared();
    Ok(0.5 * (burg_divergence(&theta1.tau, &theta0.tau)? + mean_term + gain_term))
}

/// Entropic cost `H = Ent(P_{θ1} | P_θ) + ∫ (ηK_{θ1})(dy) V(y)` with
/// `V = −log` of the density of `μ`. For `θ1` in the bridge set the last term
/// is the entropy of `μ`.
pub fn entropic_cost(
    theta1: &KernelParams,
    theta: &KernelParams,
    eta: &GaussianDist,
    mu: &GaussianDist,
) -> Result<f64> {
    same_dim(eta.dim(), mu.dim())?;
    let push = pushforward(eta, theta1)?;
    let d = mu.dim() as f64;
    let mih = mu.cov.inv_sqrt();
    let cross = 0.5
        * (d * (2.0 * PI).ln()
            + mu.cov.log_det()
            + (mu.cov.inverse().matrix() * push.b.matrix()).trace()
            + (mih.matrix() * (&push.a - &mu.mean)).norm_squared());
    Ok(kernel_rel_entropy(theta1, theta, &eta.mean, &eta.cov)? + cross)
}

/// Regression parameters of `Y` on `X` for a jointly Gaussian pair:
/// `β = Σ_YX Σ_XX⁻¹`, `α = E[Y] − βE[X]`, `τ` the Schur complement.
pub fn theta_from_joint(
    mean_x: &DVector<f64>,
    mean_y: &DVector<f64>,
    cov_xx: &DMatrix<f64>,
    cov_xy: &DMatrix<f64>,
    cov_yy: &DMatrix<f64>,
) -> Result<KernelParams> {
    let d = mean_x.len();
    same_dim(d, mean_y.len())?;
    same_dim(d, cov_xx.nrows())?;
    same_dim(d, cov_yy.nrows())?;
    same_dim(d, cov_xy.nrows())?;
    let mut joint = DMatrix::zeros(2 * d, 2 * d);
    joint.view_mut((0, 0), (d, d)).copy_from(cov_xx);
    joint.view_mut((0, d), (d, d)).copy_from(cov_xy);
    joint
        .view_mut((d, 0), (d, d))
        .copy_from(&cov_xy.transpose());
    joint.view_mut((d, d), (d, d)).copy_from(cov_yy);
    SpdMatrix::new(joint)?;
    let sxx = SpdMatrix::new(cov_xx.clone())?;
    let beta = cov_xy.transpose() * sxx.inverse().matrix();
    let tau = SpdMatrix::new(symmetrize(&(cov_yy - &beta * cov_xy)))?;
    let alpha = mean_y - &beta * mean_x;
    KernelParams::new(alpha, beta, tau)
}

/// Kernel parameters of the Ornstein–Uhlenbeck flow `dX = (AX + b)dt + Σ^{1/2}dW`
/// over a horizon `t`: `β = e^{tA}`, `α = ∫₀ᵗ e^{sA} b ds`,
/// `τ = ∫₀ᵗ e^{sA} Σ e^{sA'} ds`.
pub fn ou_params(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    sigma: &SpdMatrix,
    t: f64,
) -> Result<KernelParams> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {t}"
        )));
    }
    let d = sigma.dim();
    same_dim(d, a.nrows())?;
    same_dim(d, a.ncols())?;
    same_dim(d, b.len())?;
    // Integrate α and τ together as one vector-valued function.
    let integrand = |s: f64| -> DVector<f64> {
        let e = (a * s).exp();
        let mut out = DVector::zeros(d + d * d);
        out.rows_mut(0, d).copy_from(&(&e * b));
        let tau = sigma.congruence(&e);
        out.rows_mut(d, d * d).copy_from_slice(tau.as_slice());
        out
    };
    let total = adaptive_simpson(&integrand, 0.0, t, 1e-9)?;
    let alpha = total.rows(0, d).into_owned();
    let tau = SpdMatrix::new(DMatrix::from_column_slice(
        d,
        d,
        total.rows(d, d * d).as_slice(),
    ))?;
    KernelParams::new(alpha, (a * t).exp(), tau)
}

/// Adaptive Simpson quadrature of a vector-valued function with a relative
/// tolerance on the Euclidean norm of the integral.
pub fn adaptive_simpson(
    f: &dyn Fn(f64) -> DVector<f64>,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<DVector<f64>> {
    const MAX_DEPTH: u32 = 40;
    let fa = f(lo);
    let fb = f(hi);
    let fm = f(0.5 * (lo + hi));
    let whole = (&fa + &fm * 4.0 + &fb) * ((hi - lo) / 6.0);
    let scale = whole.norm().max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    let out = simpson_step(
        f,
        lo,
        hi,
        fa,
        fm,
        fb,
        whole,
        rel_tol * scale,
        MAX_DEPTH,
        &mut worst,
    );
    if worst > rel_tol * scale {
        return Err(Error::Quadrature {
            estimate: worst / scale,
        });
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> DVector<f64>,
    lo: f64,
    hi: f64,
    fa: DVector<f64>,
    fm: DVector<f64>,
    fb: DVector<f64>,
    whole: DVector<f64>,
    tol: f64,
    depth: u32,
    unresolved: &mut f64,
) -> DVector<f64> {
    let mid = 0.5 * (lo + hi);
    let flm = f(0.5 * (lo + mid));
    let frm = f(0.5 * (mid + hi));
    let left = (&fa + &flm * 4.0 + &fm) * ((mid - lo) / 6.0);
    let right = (&fm + &frm * 4.0 + &fb) * ((hi - mid) / 6.0);
    let refined = &left + &right;
    let err = (&refined - &whole).norm() / 15.0;
    if err <= tol {
        return &refined + (&refined - &whole) / 15.0;
    }
    if depth == 0 {
        *unresolved += err;
        return refined;
    }
    let l = simpson_step(
        f,
        lo,
        mid,
        fa,
        flm,
        fm.clone(),
        left,
        0.5 * tol,
        depth - 1,
        unresolved,
    );
    let r = simpson_step(
        f,
        mid,
        hi,
        fm,
        frm,
        fb,
        right,
        0.5 * tol,
        depth - 1,
        unresolved,
    );
    l + r
}
