//! Closed-form Schrödinger bridges between Gaussian marginals.
//!
//! For a reference kernel `θ = (α, β, τ)` and marginals `η = ν_{m,σ}`,
//! `μ = ν_{m̄,σ̄}`, the bridge kernel `𝕊(θ) = (ι, κ, ς)` is read off the
//! positive fixed point `r` of `Ricc_ϖ` with `ϖ⁻¹ = γγ'`,
//! `γ = σ̄^{1/2} τ⁻¹β σ^{1/2}`:
//!
//! ```text
//! ς = σ̄^{1/2} r σ̄^{1/2},   κ = ς τ⁻¹β,   ι = m̄ − κm.
//! ```
//!
//! The dual bridge from `μ` back to `η` uses `ϖ̄⁻¹ = γ'γ` in the same way.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{
    bayes_map, entropic_cost, gaussian_w2, pushforward, GaussianDist, KernelParams, RelaxedParams,
};
use crate::riccati::{fixed_points, RiccatiSpec};
use crate::spd::{
    geometric_mean, min_eigenvalue, same_dim, spectral_norm, symmetrize, SpdMatrix, SymMatrix,
};

/// Marginals `η = ν_{m,σ}`, `μ = ν_{m̄,σ̄}` and a reference kernel `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeProblem {
    pub eta: GaussianDist,
    pub mu: GaussianDist,
    pub theta: KernelParams,
}

impl BridgeProblem {
    pub fn new(eta: GaussianDist, mu: GaussianDist, theta: KernelParams) -> Result<Self> {
        same_dim(eta.dim(), mu.dim())?;
        same_dim(eta.dim(), theta.dim())?;
        Ok(Self { eta, mu, theta })
    }

    pub fn dim(&self) -> usize {
        self.eta.dim()
    }

    pub fn with_theta(&self, theta: KernelParams) -> Result<Self> {
        Self::new(self.eta.clone(), self.mu.clone(), theta)
    }

    /// The problem from `μ` back to `η` with reference `θ`.
    pub fn swapped(&self, theta: KernelParams) -> Result<Self> {
        Self::new(self.mu.clone(), self.eta.clone(), theta)
    }

    /// `m₀ = α + βm`, the mean of `ηK_θ`.
    pub fn m0(&self) -> DVector<f64> {
        &self.theta.alpha + &self.theta.beta * &self.eta.mean
    }

    /// `σ_β = βσβ'`.
    pub fn sigma_beta(&self) -> Result<SpdMatrix> {
        SpdMatrix::new(self.eta.cov.congruence(&self.theta.beta))
    }

    /// `θ₁ = 𝔹_{m,σ}(θ)`.
    pub fn theta1(&self) -> Result<KernelParams> {
        bayes_map(&self.eta.mean, &self.eta.cov, &self.theta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeConstants {
    /// `χ = τ⁻¹β`.
    pub chi: DMatrix<f64>,
    /// `γ = σ̄^{1/2} χ σ^{1/2}`.
    pub gamma: DMatrix<f64>,
    /// `ϖ = (γγ')⁻¹`.
    pub varpi: SpdMatrix,
    /// `γ̄ = σ^{1/2} χ' σ̄^{1/2} = γ'`.
    pub gamma_bar: DMatrix<f64>,
    /// `ϖ̄ = (γ'γ)⁻¹`.
    pub varpi_bar: SpdMatrix,
    /// `‖(σ̄^{1/2}ϖσ̄^{1/2})⁻¹ − χσχ'‖₂`.
    pub identity_residual: f64,
}

pub fn bridge_constants(p: &BridgeProblem) -> Result<BridgeConstants> {
    let (sigma, sigma_bar) = (&p.eta.cov, &p.mu.cov);
    let chi = p.theta.tau.inverse().matrix() * &p.theta.beta;
    let sh = sigma.sqrt();
    let sbh = sigma_bar.sqrt();
    let gamma = sbh.matrix() * &chi * sh.matrix();
    let gamma_bar = sh.matrix() * chi.transpose() * sbh.matrix();
    let varpi = SpdMatrix::new(&gamma * gamma.transpose())?.inverse();
    let varpi_bar = SpdMatrix::new(gamma.transpose() * &gamma)?.inverse();
    let lhs = SpdMatrix::new(varpi.congruence(sbh.matrix()))?.inverse();
    let rhs = sigma.congruence(&chi);
    let identity_residual = spectral_norm(&(lhs.matrix() - &rhs));
    Ok(BridgeConstants {
        chi,
        gamma,
        varpi,
        gamma_bar,
        varpi_bar,
        identity_residual,
    })
}

/// `𝕊(θ)`, the dual `𝕊̄(θ₁)` with `θ₁ = 𝔹_{m,σ}(θ)`, and both fixed points.
#[derive(Debug, Clone)]
pub struct BridgeSolution {
    /// `(ι, κ, ς)`.
    pub params: KernelParams,
    pub r: SpdMatrix,
    /// `(ῑ, κ̄, ς̄)`.
    pub dual_params: KernelParams,
    pub r_bar: SpdMatrix,
    pub constants: BridgeConstants,
    /// `‖κσκ' + ς − σ̄‖₂`.
    pub marginal_residual: f64,
}

pub fn schrodinger_bridge(p: &BridgeProblem) -> Result<BridgeSolution> {
    let c = bridge_constants(p)?;
    let (m, sigma) = (&p.eta.mean, &p.eta.cov);
    let (m_bar, sigma_bar) = (&p.mu.mean, &p.mu.cov);

    let r = fixed_points(&RiccatiSpec::new(c.varpi.clone())).r;
    let varsigma = SpdMatrix::new(r.congruence(sigma_bar.sqrt().matrix()))?;
    let kappa = varsigma.matrix() * &c.chi;
    let iota = m_bar - &kappa * m;

    let r_bar = fixed_points(&RiccatiSpec::new(c.varpi_bar.clone())).r;
    let varsigma_bar = SpdMatrix::new(r_bar.congruence(sigma.sqrt().matrix()))?;
    let kappa_bar = varsigma_bar.matrix() * c.chi.transpose();
    let iota_bar = m - &kappa_bar * m_bar;

    let marginal_residual =
        spectral_norm(&(sigma.congruence(&kappa) + varsigma.matrix() - sigma_bar.matrix()));
    Ok(BridgeSolution {
        params: KernelParams::new(iota, kappa, varsigma)?,
        r,
        dual_params: KernelParams::new(iota_bar, kappa_bar, varsigma_bar)?,
        r_bar,
        constants: c,
        marginal_residual,
    })
}

/// Residuals of the commutation, connection and marginal identities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CommutationReport {
    /// Block-wise `‖𝔹_{m,σ}(𝕊(θ)) − 𝕊̄(𝔹_{m,σ}(θ))‖`: `α`, `β`, `τ`.
    pub forward: [f64; 3],
    /// Block-wise `‖𝔹_{m̄,σ̄}(𝕊̄(θ₁)) − 𝕊(𝔹_{m̄,σ̄}(θ₁))‖`.
    pub backward: [f64; 3],
    /// `‖(𝔹_{m̄,σ̄} ∘ 𝔹_{m,σ})(𝕊(θ)) − 𝕊(θ)‖`.
    pub loop_fixed_point: f64,
    /// `‖r⁻¹ − I − γ r̄ γ'‖` and `‖r̄⁻¹ − I − γ' r γ‖`.
    pub connect_r: [f64; 2],
    /// `‖ς⁻¹ − σ̄⁻¹ − χ ς̄ χ'‖` and `‖ς̄⁻¹ − σ⁻¹ − χ' ς χ‖`.
    pub connect_varsigma: [f64; 2],
    /// `‖κ̄ − σκ'σ̄⁻¹‖`.
    pub dual_gain: f64,
    /// `‖γ'r − r̄γ'‖`.
    pub gamma_intertwining: f64,
    /// Pushforward of `η` by `𝕊(θ)` against `μ`: mean and covariance gaps.
    pub pushforward: [f64; 2],
    /// Smallest eigenvalue of the joint covariance `[[σ, σκ'], [κσ, σ̄]]`.
    pub joint_lambda_min: f64,
}

impl CommutationReport {
    pub fn max_residual(&self) -> f64 {
        self.forward
            .iter()
            .chain(&self.backward)
            .chain(&self.connect_r)
            .chain(&self.connect_varsigma)
            .chain(&self.pushforward)
            .fold(
                self.loop_fixed_point
                    .max(self.dual_gain)
                    .max(self.gamma_intertwining),
                |a, &b| a.max(b),
            )
    }
}

fn blockwise(a: &KernelParams, b: &KernelParams) -> [f64; 3] {
    [
        (&a.alpha - &b.alpha).norm(),
        spectral_norm(&(&a.beta - &b.beta)),
        spectral_norm(&(a.tau.matrix() - b.tau.matrix())),
    ]
}

pub fn verify_commutation(p: &BridgeProblem) -> Result<CommutationReport> {
    let sol = schrodinger_bridge(p)?;
    let c = &sol.constants;
    let d = p.dim();
    let id = DMatrix::<f64>::identity(d, d);
    let (m, sigma) = (&p.eta.mean, &p.eta.cov);
    let (m_bar, sigma_bar) = (&p.mu.mean, &p.mu.cov);

    let theta1 = p.theta1()?;
    let dual_direct = schrodinger_bridge(&p.swapped(theta1.clone())?)?.params;
    let forward = blockwise(&bayes_map(m, sigma, &sol.params)?, &dual_direct);

    let theta2 = bayes_map(m_bar, sigma_bar, &theta1)?;
    let s_theta2 = schrodinger_bridge(&p.with_theta(theta2)?)?.params;
    let backward = blockwise(&bayes_map(m_bar, sigma_bar, &sol.dual_params)?, &s_theta2);

    let looped = bayes_map(m_bar, sigma_bar, &bayes_map(m, sigma, &sol.params)?)?;
    let loop_fixed_point = looped.distance(&sol.params);

    let connect_r = [
        spectral_norm(&(sol.r.inverse().matrix() - &id - sol.r_bar.congruence(&c.gamma))),
        spectral_norm(
            &(sol.r_bar.inverse().matrix() - &id - sol.r.congruence(&c.gamma.transpose())),
        ),
    ];
    let (vs, vsb) = (&sol.params.tau, &sol.dual_params.tau);
    let connect_varsigma = [
        spectral_norm(
            &(vs.inverse().matrix() - sigma_bar.inverse().matrix() - vsb.congruence(&c.chi)),
        ),
        spectral_norm(
            &(vsb.inverse().matrix()
                - sigma.inverse().matrix()
                - vs.congruence(&c.chi.transpose())),
        ),
    ];
    let kappa = &sol.params.beta;
    let dual_gain = spectral_norm(
        &(&sol.dual_params.beta
            - sigma.matrix() * kappa.transpose() * sigma_bar.inverse().matrix()),
    );
    let gt = c.gamma.transpose();
    let gamma_intertwining = spectral_norm(&(&gt * sol.r.matrix() - sol.r_bar.matrix() * &gt));

    let push = pushforward(&p.eta, &sol.params)?;
    let pushforward = [
        (&push.a - m_bar).norm(),
        spectral_norm(&(push.b.matrix() - sigma_bar.matrix())),
    ];
    let (_, joint) = sol.params.joint_moments(m, sigma);
    let joint_lambda_min = min_eigenvalue(&joint);

    Ok(CommutationReport {
        forward,
        backward,
        loop_fixed_point,
        connect_r,
        connect_varsigma,
        dual_gain,
        gamma_intertwining,
        pushforward,
        joint_lambda_min,
    })
}

/// `f(x) = c + g'(x − x₀) + ½(x − x₀)'H(x − x₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticPotential {
    pub base_point: DVector<f64>,
    pub value_at_base: f64,
    pub gradient: DVector<f64>,
    pub hessian: SymMatrix,
}

impl QuadraticPotential {
    pub fn new(
        base_point: DVector<f64>,
        value_at_base: f64,
        gradient: DVector<f64>,
        hessian: DMatrix<f64>,
    ) -> Result<Self> {
        same_dim(base_point.len(), gradient.len())?;
        same_dim(base_point.len(), hessian.nrows())?;
        Ok(Self {
            base_point,
            value_at_base,
            gradient,
            hessian: SymMatrix::new(hessian)?,
        })
    }

    pub fn zero(base_point: DVector<f64>) -> Self {
        let d = base_point.len();
        Self {
            base_point,
            value_at_base: 0.0,
            gradient: DVector::zeros(d),
            hessian: SymMatrix::zeros(d),
        }
    }

    /// `log g_σ(x − m)`.
    pub fn log_gauss(mean: &DVector<f64>, cov: &SpdMatrix) -> Self {
        let d = mean.len() as f64;
        Self {
            base_point: mean.clone(),
            value_at_base: -0.5 * (d * (2.0 * PI).ln() + cov.log_det()),
            gradient: DVector::zeros(mean.len()),
            hessian: SymMatrix::new(-cov.inverse().matrix().clone()).expect("finite"),
        }
    }

    pub fn dim(&self) -> usize {
        self.base_point.len()
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        let z = x - &self.base_point;
        self.value_at_base + self.gradient.dot(&z) + 0.5 * z.dot(&(self.hessian.matrix() * &z))
    }

    pub fn gradient_at(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.gradient + self.hessian.matrix() * (x - &self.base_point)
    }

    /// Same function expanded around `base`.
    pub fn rebased(&self, base: &DVector<f64>) -> Self {
        Self {
            base_point: base.clone(),
            value_at_base: self.eval(base),
            gradient: self.gradient_at(base),
            hessian: self.hessian.clone(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let o = other.rebased(&self.base_point);
        Self {
            base_point: self.base_point.clone(),
            value_at_base: self.value_at_base + o.value_at_base,
            gradient: &self.gradient + &o.gradient,
            hessian: SymMatrix::new(self.hessian.matrix() + o.hessian.matrix()).expect("finite"),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            base_point: self.base_point.clone(),
            value_at_base: s * self.value_at_base,
            gradient: &self.gradient * s,
            hessian: SymMatrix::new(self.hessian.matrix() * s).expect("finite"),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn shift(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.value_at_base += c;
        out
    }

    /// Largest of `|value|`, `‖gradient‖` and `‖hessian‖₂`.
    pub fn coefficient_norms(&self) -> [f64; 3] {
        [
            self.value_at_base.abs(),
            self.gradient.norm(),
            spectral_norm(self.hessian.matrix()),
        ]
    }

    /// `∫ ν_{m,s}(dx) f(x)`.
    pub fn integrate(&self, g: &GaussianDist) -> f64 {
        self.eval(&g.mean) + 0.5 * (self.hessian.matrix() * g.cov.matrix()).trace()
    }
}

/// Limit potentials `(𝕌, 𝕍)` with `P_{𝕊(θ)}(dx, dy) = e^{−𝕌(x)} q_θ(x, y) e^{−𝕍(y)} dx dy`.
///
/// Only the sum `𝕌(m) + 𝕍(m̄)` is determined. It is stored as
/// `constant_sum = U(m) + ½ log det(ςτ⁻¹) − ½‖τ^{-1/2}(m₀ − m̄)‖²` with the
/// full `U(m) = ½ log det(2πσ)`. The default split puts `U(m)` on `𝕌`.
#[derive(Debug, Clone)]
pub struct LimitPotentials {
    /// Expanded around `m`.
    pub u: QuadraticPotential,
    /// Expanded around `m̄`.
    pub v: QuadraticPotential,
    pub constant_sum: f64,
    /// `constant_sum` without the `2π` factor in `U(m)`.
    pub constant_sum_no_2pi: f64,
}

impl LimitPotentials {
    /// Move the additive constant so that `𝕍(m̄) = v_at_base`.
    pub fn resplit(&self, v_at_base: f64) -> Self {
        let mut out = self.clone();
        out.v.value_at_base = v_at_base;
        out.u.value_at_base = self.constant_sum - v_at_base;
        out
    }

    /// `log e^{−𝕌(x)} q_θ(x, y) e^{−𝕍(y)} − log p_{𝕊(θ)}(x, y)`.
    pub fn log_density_gap(
        &self,
        p: &BridgeProblem,
        bridge: &KernelParams,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> f64 {
        let lhs = -self.u.eval(x) + p.theta.log_transition(x, y) - self.v.eval(y);
        let rhs = p.eta.log_density(x) + bridge.log_transition(x, y);
        lhs - rhs
    }
}

pub fn limit_potentials(p: &BridgeProblem) -> Result<LimitPotentials> {
    let sol = schrodinger_bridge(p)?;
    limit_potentials_from(p, &sol)
}

pub fn limit_potentials_from(p: &BridgeProblem, sol: &BridgeSolution) -> Result<LimitPotentials> {
    let d = p.dim() as f64;
    let (m, m_bar) = (&p.eta.mean, &p.mu.mean);
    let beta = &p.theta.beta;
    let ti = p.theta.tau.inverse();
    let gap = p.m0() - m_bar;

    let u_m = 0.5 * (d * (2.0 * PI).ln() + p.eta.cov.log_det());
    let log_det_ratio = sol.params.tau.log_det() - p.theta.tau.log_det();
    let mahal = gap.dot(&(ti.matrix() * &gap));
    let constant_sum = u_m + 0.5 * log_det_ratio - 0.5 * mahal;
    let constant_sum_no_2pi = constant_sum - 0.5 * d * (2.0 * PI).ln();

    let v = QuadraticPotential::new(
        m_bar.clone(),
        constant_sum - u_m,
        ti.matrix() * &gap,
        sol.params.tau.inverse().matrix() - ti.matrix(),
    )?;
    let u = QuadraticPotential::new(
        m.clone(),
        u_m,
        -(beta.transpose() * ti.matrix() * &gap),
        sol.dual_params.tau.inverse().matrix() - ti.congruence(&beta.transpose()),
    )?;
    Ok(LimitPotentials {
        u,
        v,
        constant_sum,
        constant_sum_no_2pi,
    })
}

/// Integrated costs for `c(x, y) = −log q_θ(x, y)`:
/// `c_η(y) = ∫η(dx)c(x, y)`, `c^μ(x) = ∫μ(dy)c(x, y)` and the log-integrals
/// `log 𝒬(e^{c_η})(x) = log ∫μ(dy) q_θ(x, y) e^{c_η(y)}`,
/// `log ℛ(e^{c^μ})(y) = log ∫η(dx) q_θ(x, y) e^{c^μ(x)}`.
#[derive(Debug, Clone)]
pub struct IntegratedCosts {
    /// Function of `y`, expanded around `m̄`.
    pub c_eta: QuadraticPotential,
    /// Function of `x`, expanded around `m`.
    pub c_mu: QuadraticPotential,
    /// Function of `x`, expanded around `m`; `None` when the integral diverges.
    pub log_q: Option<QuadraticPotential>,
    /// Function of `y`, expanded around `m̄`; `None` when the integral diverges.
    pub log_r: Option<QuadraticPotential>,
    /// Smallest eigenvalue of minus the log-Hessian of each integrand in its
    /// integration variable; the integral is finite iff it is positive.
    pub integrand_curvature: [f64; 2],
}

pub fn integrated_costs(p: &BridgeProblem) -> Result<IntegratedCosts> {
    let d = p.dim() as f64;
    let (m, m_bar) = (&p.eta.mean, &p.mu.mean);
    let (sigma, sigma_bar) = (&p.eta.cov, &p.mu.cov);
    let beta = &p.theta.beta;
    let tau = &p.theta.tau;
    let ti = tau.inverse();
    let chi = ti.matrix() * beta;
    let gap = m_bar - p.m0();
    let sigma_beta = p.sigma_beta()?;
    let log_norm = 0.5 * (d * (2.0 * PI).ln() + tau.log_det());
    let mahal = 0.5 * gap.dot(&(ti.matrix() * &gap));
    let tr_sb = 0.5 * (ti.matrix() * sigma_beta.matrix()).trace();
    let tr_sbar = 0.5 * (ti.matrix() * sigma_bar.matrix()).trace();

    let c_eta = QuadraticPotential::new(
        m_bar.clone(),
        mahal + tr_sb + log_norm,
        ti.matrix() * &gap,
        ti.matrix().clone(),
    )?;
    let c_mu = QuadraticPotential::new(
        m.clone(),
        mahal + tr_sbar + log_norm,
        -(beta.transpose() * ti.matrix() * &gap),
        ti.congruence(&beta.transpose()),
    )?;

    // In y: log μ + log q + c_η has Hessian −σ̄⁻¹ − τ⁻¹ + τ⁻¹.
    let curv_q =
        min_eigenvalue(&(sigma_bar.inverse().matrix() + ti.matrix() - c_eta.hessian.matrix()));
    // In x: log η + log q + c^μ has Hessian −σ⁻¹ − β'τ⁻¹β + β'τ⁻¹β.
    let curv_r = min_eigenvalue(
        &(sigma.inverse().matrix() + ti.congruence(&beta.transpose()) - c_mu.hessian.matrix()),
    );

    let log_q = if curv_q > 0.0 {
        Some(QuadraticPotential::new(
            m.clone(),
            tr_sb,
            chi.transpose() * &gap,
            chi.transpose() * (sigma_bar.matrix() - tau.matrix()) * &chi,
        )?)
    } else {
        None
    };
    let log_r = if curv_r > 0.0 {
        Some(QuadraticPotential::new(
            m_bar.clone(),
            tr_sbar,
            -(ti.matrix() * &gap),
            sigma.congruence(&chi) - ti.matrix(),
        )?)
    } else {
        None
    };
    Ok(IntegratedCosts {
        c_eta,
        c_mu,
        log_q,
        log_r,
        integrand_curvature: [curv_q, curv_r],
    })
}

/// Marginals with reference drift `(α, β)` and noise `τ = tI` left free.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedFamily {
    pub eta: GaussianDist,
    pub mu: GaussianDist,
    pub alpha: DVector<f64>,
    pub beta: DMatrix<f64>,
}

impl RegularizedFamily {
    pub fn new(
        eta: GaussianDist,
        mu: GaussianDist,
        alpha: DVector<f64>,
        beta: DMatrix<f64>,
    ) -> Result<Self> {
        same_dim(eta.dim(), mu.dim())?;
        same_dim(eta.dim(), alpha.len())?;
        same_dim(eta.dim(), beta.nrows())?;
        Ok(Self {
            eta,
            mu,
            alpha,
            beta,
        })
    }

    pub fn from_problem(p: &BridgeProblem) -> Self {
        Self {
            eta: p.eta.clone(),
            mu: p.mu.clone(),
            alpha: p.theta.alpha.clone(),
            beta: p.theta.beta.clone(),
        }
    }

    /// `θ(t) = (α, β, tI)`.
    pub fn theta(&self, t: f64) -> Result<KernelParams> {
        check_t(t)?;
        KernelParams::new(
            self.alpha.clone(),
            self.beta.clone(),
            SpdMatrix::scaled_identity(self.alpha.len(), t)?,
        )
    }

    pub fn problem(&self, t: f64) -> Result<BridgeProblem> {
        BridgeProblem::new(self.eta.clone(), self.mu.clone(), self.theta(t)?)
    }

    pub fn sigma_beta(&self) -> Result<SpdMatrix> {
        SpdMatrix::new(self.eta.cov.congruence(&self.beta))
    }

    /// `ω = σ̄^{-1/2} σ_β⁻¹ σ̄^{-1/2}`, so that `ϖ_{θ(t)} = t²ω`.
    pub fn omega(&self) -> Result<SpdMatrix> {
        SpdMatrix::new(
            self.sigma_beta()?
                .inverse()
                .congruence(self.mu.cov.inv_sqrt().matrix()),
        )
    }

    /// `σ_β⁻¹ ♯ σ̄`, taking the inverse square root of the better
    /// conditioned argument.
    pub fn monge_coefficient(&self) -> Result<SpdMatrix> {
        let sbi = self.sigma_beta()?.inverse();
        if sbi.condition_number() <= self.mu.cov.condition_number() {
            geometric_mean(&self.mu.cov, &sbi)
        } else {
            geometric_mean(&sbi, &self.mu.cov)
        }
    }

    /// Monge map `T(x) = m̄ + (σ_β⁻¹ ♯ σ̄)β(x − m)` as a noiseless kernel.
    pub fn monge_map(&self) -> Result<RelaxedParams> {
        let gain = self.monge_coefficient()?.matrix() * &self.beta;
        let iota = &self.mu.mean - &gain * &self.eta.mean;
        RelaxedParams::new(iota, gain, SymMatrix::zeros(self.alpha.len()))
    }

    /// Independent coupling `(m̄, 0, σ̄)`, the `t → ∞` limit.
    pub fn independent_limit(&self) -> Result<RelaxedParams> {
        let d = self.alpha.len();
        RelaxedParams::new(
            self.mu.mean.clone(),
            DMatrix::zeros(d, d),
            self.mu.cov.sym(),
        )
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "regularization parameter must be positive, got {t}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RegularizationReport {
    pub t: f64,
    pub bridge: BridgeSolution,
    pub monge: RelaxedParams,
    /// `‖κ_{θ(t)} − (σ_β⁻¹♯σ̄)β‖₂`, `O(t)` as `t → 0`.
    pub kappa_gap: f64,
    /// `‖ς_{θ(t)}/t − σ_β⁻¹♯σ̄‖₂`, `O(t)` as `t → 0`.
    pub varsigma_over_t_gap: f64,
    /// `‖r_{θ(t)}/t − ω^{1/2}‖₂`, `O(t)` as `t → 0`.
    pub r_over_t_gap: f64,
    /// `‖ς_{θ(t)} − σ̄‖₂`, `O(1/t)` as `t → ∞`.
    pub varsigma_gap: f64,
    /// `‖κ_{θ(t)}‖₂`, `O(1/t)` as `t → ∞`.
    pub kappa_norm: f64,
    /// `‖r_{θ(t)} − I‖₂`.
    pub r_gap: f64,
    /// `‖∇²𝕍_{θ(t)} − σ̄⁻¹‖₂` and `‖∇²𝕌_{θ(t)} − σ⁻¹‖₂`, `O(1/t)` as `t → ∞`.
    pub hessian_gaps: [f64; 2],
}

pub fn regularized_asymptotics(family: &RegularizedFamily, t: f64) -> Result<RegularizationReport> {
    let p = family.problem(t)?;
    let bridge = schrodinger_bridge(&p)?;
    let monge = family.monge_map()?;
    let coeff = family.monge_coefficient()?;
    let omega_half = family.omega()?.sqrt();
    let d = p.dim();
    let kappa = &bridge.params.beta;
    let varsigma = bridge.params.tau.matrix();
    let pots = limit_potentials_from(&p, &bridge)?;
    let hessian_gaps = [
        spectral_norm(&(pots.v.hessian.matrix() - family.mu.cov.inverse().matrix())),
        spectral_norm(&(pots.u.hessian.matrix() - family.eta.cov.inverse().matrix())),
    ];
    Ok(RegularizationReport {
        t,
        kappa_gap: spectral_norm(&(kappa - &monge.beta)),
        varsigma_over_t_gap: spectral_norm(&(varsigma / t - coeff.matrix())),
        r_over_t_gap: spectral_norm(&(bridge.r.matrix() / t - omega_half.matrix())),
        varsigma_gap: spectral_norm(&(varsigma - family.mu.cov.matrix())),
        kappa_norm: spectral_norm(kappa),
        r_gap: spectral_norm(&(bridge.r.matrix() - DMatrix::identity(d, d))),
        hessian_gaps,
        monge,
        bridge,
    })
}

/// Both sides of the decomposition of `tH − ½𝕎₂²` at one `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropicGap {
    pub t: f64,
    /// `t·H(P_{𝕊(θ(t))} | P_{θ(t)})`.
    pub t_h: f64,
    /// `½𝕎₂(ν_{m̄,σ̄}, ν_{α+βm, σ_β})²`.
    pub half_w2sq: f64,
    /// `t_h − half_w2sq`.
    pub gap: f64,
    /// `Tr((σ̄♯σ_β⁻¹ − ς/t)σ_β) + (t/2)(d log 2π − log det(r/t))`.
    pub decomposition: f64,
    pub decomposition_residual: f64,
}

pub fn entropic_cost_vs_w2(family: &RegularizedFamily, t: f64) -> Result<EntropicGap> {
    let p = family.problem(t)?;
    let bridge = schrodinger_bridge(&p)?;
    let d = p.dim() as f64;
    let t_h = t * entropic_cost(&bridge.params, &p.theta, &p.eta, &p.mu)?;
    let sigma_beta = family.sigma_beta()?;
    let pushed = GaussianDist::new(p.m0(), sigma_beta.clone())?;
    let w2 = gaussian_w2(&p.mu, &pushed)?;
    let half_w2sq = 0.5 * w2 * w2;
    let coeff = family.monge_coefficient()?;
    let diff = coeff.matrix() - bridge.params.tau.matrix() / t;
    let r_over_t = SpdMatrix::new(symmetrize(&(bridge.r.matrix() / t)))?;
    let decomposition =
        (diff * sigma_beta.matrix()).trace() + 0.5 * t * (d * (2.0 * PI).ln() - r_over_t.log_det());
    let gap = t_h - half_w2sq;
    Ok(EntropicGap {
        t,
        t_h,
        half_w2sq,
        gap,
        decomposition,
        decomposition_residual: (gap - decomposition).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::ou_params;
    use crate::random::{random_invertible, random_spd, rng, standard_normal_vector};
    use approx::assert_abs_diff_eq;

    const GOLDEN: f64 = 0.618_033_988_749_894_9;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn scalar_problem(m: f64, s: f64, mb: f64, sb: f64, a: f64, b: f64, t: f64) -> BridgeProblem {
        let eta = GaussianDist::new(v(&[m]), SpdMatrix::scalar(s).unwrap()).unwrap();
        let mu = GaussianDist::new(v(&[mb]), SpdMatrix::scalar(sb).unwrap()).unwrap();
        let th = KernelParams::new(
            v(&[a]),
            DMatrix::from_element(1, 1, b),
            SpdMatrix::scalar(t).unwrap(),
        )
        .unwrap();
        BridgeProblem::new(eta, mu, th).unwrap()
    }

    fn c1() -> BridgeProblem {
        scalar_problem(0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0)
    }

    fn random_problem(seed: u64, d: usize) -> BridgeProblem {
        let mut g = rng(seed);
        let eta = GaussianDist::new(
            standard_normal_vector(&mut g, d),
            random_spd(&mut g, d, 0.3),
        )
        .unwrap();
        let mu = GaussianDist::new(
            standard_normal_vector(&mut g, d),
            random_spd(&mut g, d, 0.3),
        )
        .unwrap();
        let th = KernelParams::new(
            standard_normal_vector(&mut g, d),
            random_invertible(&mut g, d),
            random_spd(&mut g, d, 0.3),
        )
        .unwrap();
        BridgeProblem::new(eta, mu, th).unwrap()
    }

    #[test]
    fn constants_on_c1() {
        let c = bridge_constants(&c1()).unwrap();
        assert_abs_diff_eq!(c.chi[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.gamma[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.varpi.matrix()[(0, 0)], 1.0, epsilon = 1e-15);
        assert_eq!(c.gamma_bar, c.gamma.transpose());
    }

    #[test]
    fn constants_identity_and_transpose() {
        for seed in 0..20 {
            let p = random_problem(seed, 3);
            let c = bridge_constants(&p).unwrap();
            assert!(
                c.identity_residual
                    <= 1e-10 * spectral_norm(&p.eta.cov.congruence(&c.chi)).max(1.0)
            );
            assert!(
                spectral_norm(&(&c.gamma_bar - c.gamma.transpose()))
                    <= 1e-12 * spectral_norm(&c.gamma)
            );
        }
    }

    #[test]
    fn varpi_scales_quadratically_in_t() {
        let p = random_problem(7, 3);
        let fam = RegularizedFamily::from_problem(&p);
        let omega = fam.omega().unwrap();
        for t in [0.1, 1.0, 3.0] {
            let c = bridge_constants(&fam.problem(t).unwrap()).unwrap();
            let gap = spectral_norm(&(c.varpi.matrix() - omega.matrix() * (t * t)));
            assert!(gap <= 1e-10 * t * t * omega.lambda_max(), "t = {t}: {gap}");
        }
    }

    #[test]
    fn scalar_dual_constant_matches() {
        let p = scalar_problem(0.3, 2.0, -1.0, 0.5, 0.2, 1.7, 0.4);
        let c = bridge_constants(&p).unwrap();
        assert_abs_diff_eq!(
            c.varpi.matrix()[(0, 0)],
            c.varpi_bar.matrix()[(0, 0)],
            epsilon = 1e-14
        );
    }

    #[test]
    fn golden_ratio_bridge() {
        let s = schrodinger_bridge(&c1()).unwrap();
        assert_abs_diff_eq!(s.params.alpha[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.params.beta[(0, 0)], GOLDEN, epsilon = 1e-12);
        assert_abs_diff_eq!(s.params.tau.matrix()[(0, 0)], GOLDEN, epsilon = 1e-12);
        assert_abs_diff_eq!(s.dual_params.beta[(0, 0)], GOLDEN, epsilon = 1e-12);
        assert_abs_diff_eq!(s.dual_params.tau.matrix()[(0, 0)], GOLDEN, epsilon = 1e-12);
        assert_abs_diff_eq!(GOLDEN * GOLDEN + GOLDEN, 1.0, epsilon = 1e-15);
        assert!(s.marginal_residual <= 1e-15);
    }

    #[test]
    fn bridge_is_idempotent() {
        let p = random_problem(3, 4);
        let s = schrodinger_bridge(&p).unwrap();
        let s2 = schrodinger_bridge(&p.with_theta(s.params.clone()).unwrap()).unwrap();
        assert!(s2.params.distance(&s.params) <= 1e-10);
    }

    #[test]
    fn bridge_does_not_depend_on_alpha() {
        let p = random_problem(4, 3);
        let mut th = p.theta.clone();
        th.alpha += v(&[1.0, -2.0, 0.5]);
        let a = schrodinger_bridge(&p).unwrap();
        let b = schrodinger_bridge(&p.with_theta(th).unwrap()).unwrap();
        assert!(a.params.distance(&b.params) <= 1e-12);
    }

    #[test]
    fn commutation_on_c1_and_random() {
        let rep = verify_commutation(&c1()).unwrap();
        assert!(rep.max_residual() <= 1e-12, "{rep:?}");
        for seed in 10..20 {
            let rep = verify_commutation(&random_problem(seed, 3)).unwrap();
            assert!(rep.max_residual() <= 1e-9, "seed {seed}: {rep:?}");
            assert!(rep.joint_lambda_min > 0.0);
        }
    }

    #[test]
    fn sinkhorn_map_fixes_the_bridge() {
        let p = random_problem(21, 2);
        let s = schrodinger_bridge(&p).unwrap();
        let p2 = p.with_theta(s.params.clone()).unwrap();
        let rep = verify_commutation(&p2).unwrap();
        assert!(rep.loop_fixed_point <= 1e-10);
    }

    #[test]
    fn limit_potentials_on_c1() {
        let pots = limit_potentials(&c1()).unwrap();
        assert_abs_diff_eq!(
            pots.v.eval(&v(&[1.0])) - pots.v.eval(&v(&[0.0])),
            0.5 * (1.0 / GOLDEN - 1.0),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(pots.constant_sum_no_2pi, 0.5 * GOLDEN.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(pots.constant_sum_no_2pi, -0.240606, epsilon = 1e-6);
        let re = pots.resplit(0.25);
        assert_abs_diff_eq!(
            re.u.eval(&v(&[0.0])) + re.v.eval(&v(&[0.0])),
            pots.constant_sum,
            epsilon = 1e-14
        );
    }

    #[test]
    fn limit_potentials_factor_the_bridge_density() {
        for seed in 30..35 {
            let p = random_problem(seed, 3);
            let s = schrodinger_bridge(&p).unwrap();
            let pots = limit_potentials_from(&p, &s).unwrap();
            let mut g = rng(seed + 100);
            for _ in 0..20 {
                let x = &p.eta.mean + standard_normal_vector(&mut g, 3);
                let y = &p.mu.mean + standard_normal_vector(&mut g, 3);
                let gap = pots.log_density_gap(&p, &s.params, &x, &y);
                assert!(gap.exp_m1().abs() <= 1e-8, "seed {seed}: {gap}");
            }
        }
    }

    #[test]
    fn quadratic_potential_algebra() {
        let f = QuadraticPotential::new(
            v(&[1.0, 0.0]),
            2.0,
            v(&[1.0, -1.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        )
        .unwrap();
        let x = v(&[0.3, -0.7]);
        let b = v(&[-2.0, 4.0]);
        assert_abs_diff_eq!(f.rebased(&b).eval(&x), f.eval(&x), epsilon = 1e-12);
        assert_abs_diff_eq!(f.sub(&f).eval(&x), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            f.add(&f.rebased(&b)).eval(&x),
            2.0 * f.eval(&x),
            epsilon = 1e-12
        );
        let g = GaussianDist::new(
            v(&[0.5, 0.5]),
            SpdMatrix::from_diagonal(&[0.2, 0.3]).unwrap(),
        )
        .unwrap();
        let expect = f.eval(&g.mean) + 0.5 * (2.0 * 0.2 + 1.0 * 0.3);
        assert_abs_diff_eq!(f.integrate(&g), expect, epsilon = 1e-12);
    }

    #[test]
    fn integrated_costs_on_c1() {
        let ic = integrated_costs(&c1()).unwrap();
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        for y in [-1.5, 0.0, 2.0] {
            assert_abs_diff_eq!(
                ic.c_eta.eval(&v(&[y])),
                0.5 * y * y + 0.5 + half_log_2pi,
                epsilon = 1e-12
            );
        }
        let lq = ic.log_q.unwrap();
        for x in [-1.0, 0.0, 3.0] {
            assert_abs_diff_eq!(lq.eval(&v(&[x])) - 0.5, 0.0, epsilon = 1e-12);
        }
    }

    /// `log ∫ μ(dy) q(x, y) e^{c_η(y)}` by quadrature against the closed form.
    #[test]
    fn integrated_costs_match_quadrature() {
        use crate::gaussian::adaptive_simpson;
        let p = scalar_problem(0.4, 1.3, -0.7, 0.8, 0.2, 0.9, 0.6);
        let ic = integrated_costs(&p).unwrap();
        let lq = ic.log_q.clone().unwrap();
        let lr = ic.log_r.clone().unwrap();
        for x in [-1.0, 0.4, 2.0] {
            let xv = v(&[x]);
            let f = |y: f64| {
                let yv = v(&[y]);
                v(&[(p.mu.log_density(&yv)
                    + p.theta.log_transition(&xv, &yv)
                    + ic.c_eta.eval(&yv))
                .exp()])
            };
            let q = adaptive_simpson(&f, -25.0, 25.0, 1e-11).unwrap()[0];
            assert_abs_diff_eq!(q.ln(), lq.eval(&xv), epsilon = 1e-8);
        }
        for y in [-2.0, -0.7, 1.0] {
            let yv = v(&[y]);
            let f = |x: f64| {
                let xv = v(&[x]);
                v(&[(p.eta.log_density(&xv)
                    + p.theta.log_transition(&xv, &yv)
                    + ic.c_mu.eval(&xv))
                .exp()])
            };
            let r = adaptive_simpson(&f, -25.0, 25.0, 1e-11).unwrap()[0];
            assert_abs_diff_eq!(r.ln(), lr.eval(&yv), epsilon = 1e-8);
        }
        assert!(ic.integrand_curvature.iter().all(|&c| c > 0.0));
    }

    fn monge_family() -> RegularizedFamily {
        let p = scalar_problem(0.0, 1.0, 0.0, 4.0, 0.0, 1.0, 1.0);
        RegularizedFamily::from_problem(&p)
    }

    #[test]
    fn monge_map_coefficient() {
        let fam = monge_family();
        let t = fam.monge_map().unwrap();
        assert_abs_diff_eq!(t.beta[(0, 0)], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.tau.matrix()[(0, 0)], 0.0, epsilon = 0.0);
    }

    #[test]
    fn small_t_gaps_are_linear() {
        let fam = monge_family();
        let ratios: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&t| regularized_asymptotics(&fam, t).unwrap().kappa_gap / t)
            .collect();
        assert!(ratios.iter().all(|r| r.is_finite() && *r < 10.0));
        let spread = ratios.iter().cloned().fold(f64::MIN, f64::max)
            / ratios.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1.3, "{ratios:?}");
    }

    #[test]
    fn large_t_gaps_are_inverse() {
        let fam = monge_family();
        let scaled: Vec<f64> = [10.0, 20.0, 40.0]
            .iter()
            .map(|&t| {
                let rep = regularized_asymptotics(&fam, t).unwrap();
                assert!(rep.hessian_gaps[0] * t < 20.0 && rep.hessian_gaps[1] * t < 20.0);
                rep.varsigma_gap * t
            })
            .collect();
        assert!(scaled.iter().all(|s| *s < 20.0), "{scaled:?}");
    }

    #[test]
    fn decomposition_identity_and_limit() {
        let fam = monge_family();
        let g = entropic_cost_vs_w2(&fam, 1.0).unwrap();
        assert_abs_diff_eq!(g.half_w2sq, 0.5, epsilon = 1e-12);
        assert!(g.decomposition_residual <= 1e-9);
        let cs: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&t| entropic_cost_vs_w2(&fam, t).unwrap().gap.abs() / t)
            .collect();
        assert!(cs.iter().all(|c| *c < 10.0), "{cs:?}");
        for seed in 40..45 {
            let fam = RegularizedFamily::from_problem(&random_problem(seed, 2));
            assert!(
                entropic_cost_vs_w2(&fam, 1.0)
                    .unwrap()
                    .decomposition_residual
                    <= 1e-9
            );
        }
    }

    #[test]
    fn coincident_marginals_give_zero_transport() {
        let fam =
            RegularizedFamily::from_problem(&scalar_problem(0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0));
        let small = entropic_cost_vs_w2(&fam, 1e-3).unwrap();
        assert_abs_diff_eq!(small.half_w2sq, 0.0, epsilon = 1e-12);
        assert!(small.t_h.abs() < 1e-2);
    }

    #[test]
    fn rejects_nonpositive_t() {
        assert!(regularized_asymptotics(&monge_family(), 0.0).is_err());
        assert!(entropic_cost_vs_w2(&monge_family(), -1.0).is_err());
    }

    #[test]
    fn ou_reference_decays_to_independence() {
        let eta = GaussianDist::new(v(&[0.0]), SpdMatrix::scalar(1.0).unwrap()).unwrap();
        let mu = GaussianDist::new(v(&[1.0]), SpdMatrix::scalar(2.0).unwrap()).unwrap();
        let a = DMatrix::from_element(1, 1, -1.0);
        let sig = SpdMatrix::scalar(1.0).unwrap();
        let gaps: Vec<f64> = [2.0, 4.0, 6.0]
            .iter()
            .map(|&t| {
                let th = ou_params(&a, &v(&[0.0]), &sig, t).unwrap();
                let s =
                    schrodinger_bridge(&BridgeProblem::new(eta.clone(), mu.clone(), th).unwrap())
                        .unwrap();
                (s.r.matrix()[(0, 0)] - 1.0).abs()
            })
            .collect();
        // exponential: equal ratios over equal steps, well below 1/t decay
        let q1 = gaps[1] / gaps[0];
        let q2 = gaps[2] / gaps[1];
        assert!(q1 < 0.05 && q2 < 0.05, "{gaps:?}");
    }
}
