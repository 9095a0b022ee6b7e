//! The Gaussian Sinkhorn flow.
//!
//! Starting from `θ₀ = θ`, odd steps apply the Bayes map of `η` and even
//! steps the Bayes map of `μ`:
//!
//! ```text
//! θ_{2n+1} = 𝔹_{m,σ}(θ_{2n}),   θ_{2n+2} = 𝔹_{m̄,σ̄}(θ_{2n+1}).
//! ```
//!
//! The covariances are carried by the rescaled matrices
//! `υ_{2n} = σ̄^{-1/2}τ_{2n}σ̄^{-1/2}`, `υ_{2n+1} = σ^{-1/2}τ_{2n+1}σ^{-1/2}`,
//! which satisfy `υ_{n+1} = (I + γυ_nγ')⁻¹` (even targets) and
//! `υ_{n+1} = (I + γ'υ_nγ)⁻¹` (odd targets). This path stays bounded and is
//! the one recorded; a plain Bayes-map path runs alongside as a cross-check.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::bridge::{
    bridge_constants, integrated_costs, schrodinger_bridge, BridgeConstants, BridgeProblem,
    BridgeSolution, QuadraticPotential, RegularizedFamily,
};
use crate::error::{Error, Result};
use crate::gaussian::{
    bayes_map, gaussian_kl, kernel_rel_entropy, pushforward, GaussianDist, KernelParams,
};
use crate::random::{rng, standard_normal_vector};
use crate::riccati::{
    contraction_bound, monotone_envelopes, ricc_map, ContractionBound, RiccatiSpec,
};
use crate::spd::{min_eigenvalue, spectral_norm, SpdMatrix};

/// Window of errors used by [`fit_log_slope`]; below it the floating-point
/// floor takes over, above it the transient.
pub const RATE_WINDOW: (f64, f64) = (1e-12, 1e-2);

/// Convergence tolerance on `‖m_{2n} − m̄‖ + ‖σ_{2n} − σ̄‖_F`.
pub const STOP_TOL: f64 = 1e-10;

/// One step of the flow.
#[derive(Debug, Clone)]
pub struct SinkhornState {
    pub n: usize,
    pub theta: KernelParams,
    /// `m_n`: mean of `ηK_n` (even `n`) or of `μK_n` (odd `n`).
    pub mean: DVector<f64>,
    pub cov: SpdMatrix,
    pub upsilon: SpdMatrix,
    /// `‖·‖` gaps `(α, β, τ)` between this state and the Bayes-map path.
    pub bayes_gap: [f64; 3],
}

impl SinkhornState {
    pub fn is_even(&self) -> bool {
        self.n.is_multiple_of(2)
    }
}

/// Gibbs-loop products at the even index `2n`.
#[derive(Debug, Clone)]
pub struct GibbsProducts {
    pub n: usize,
    /// `β°_{2n} = β_{2n}β_{2n−1}` (identity at `n = 0`).
    pub beta_circ: DMatrix<f64>,
    /// `β°_{2n,0} = β°_{2n}⋯β°_2`.
    pub beta_circ_even: DMatrix<f64>,
    /// `β°_{2n+1,1} = β°_{2n+1}⋯β°_3`, when `θ_{2n+1}` is recorded.
    pub beta_circ_odd: Option<DMatrix<f64>>,
    /// `τ°_{2n} = β_{2n}τ_{2n−1}β_{2n}' + τ_{2n}` of the `μ` loop.
    pub tau_circ: Option<SpdMatrix>,
    /// `‖σ̄^{-1/2}β°_{2n}σ̄^{1/2} − (I − υ_{2n})‖₂`.
    pub loop_identity_residual: f64,
    /// `‖σ_{2n} − σ̄ − β°_{2n,0}(σ₀ − σ̄)β°_{2n,0}'‖₂`.
    pub cov_transport_residual: f64,
    /// `‖m_{2n} − m̄ − β°_{2n,0}(m₀ − m̄)‖`.
    pub mean_transport_residual: f64,
    /// Moment residual of `μ𝒦°_{2n} = μ`.
    pub mu_fixed_point_residual: f64,
    /// Moment residual of `η𝒦°_{2n+1} = η`, when `θ_{2n+1}` is recorded.
    pub eta_fixed_point_residual: Option<f64>,
    /// `‖σ̄^{-1/2}β°_{2n,0}σ̄^{1/2}‖₂`.
    pub floquet_norm: f64,
    /// `ψρ^{n/2}`.
    pub floquet_bound: f64,
}

/// Rates and the constants of the certified error bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateData {
    pub rho: f64,
    pub rho_bar: f64,
    pub bound: ContractionBound,
    pub bound_bar: ContractionBound,
    /// `‖τ_{2n} − ς‖₂ ≤ c_tau ρⁿ ‖τ₀ − ς‖₂` with `c_tau = cond(σ̄)φ²/ρ`.
    pub c_tau: f64,
    /// `‖τ_{2n+1} − ς̄‖₂ ≤ c_tau_bar ρ̄ⁿ ‖τ₁ − ς̄‖₂`.
    pub c_tau_bar: f64,
    /// `‖m_{2n} − m̄‖ ≤ c_mean ρ^{n/2} ‖m₀ − m̄‖` with `c_mean = cond(σ̄)^{1/2}ψ`.
    pub c_mean: f64,
    pub c_mean_bar: f64,
    /// `‖σ_{2n} − σ̄‖₂ ≤ c_cov ρⁿ ‖σ₀ − σ̄‖₂` with `c_cov = cond(σ̄)ψ²`.
    pub c_cov: f64,
    pub c_cov_bar: f64,
    /// `‖τ⁻¹β‖₂`, turning covariance bounds into gain bounds.
    pub gain_factor: f64,
    /// Lower bound on `λ_min(τ_{2n})` and `λ_min(ς)` for `n ≥ 1`.
    pub sqrt_floor: f64,
    pub sqrt_floor_bar: f64,
}

#[derive(Debug, Clone)]
pub struct SinkhornTrajectory {
    pub problem: BridgeProblem,
    pub states: Vec<SinkhornState>,
    pub gibbs: Vec<GibbsProducts>,
    pub rates: RateData,
    pub bridge: BridgeSolution,
    /// `(U_{2n}, V_{2n})` for every `n` with `θ_{2n−1}` recorded, `U` around
    /// `m` and `V` around `m̄`.
    pub potentials: Vec<(QuadraticPotential, QuadraticPotential)>,
    /// First even index meeting [`STOP_TOL`].
    pub converged_at: Option<usize>,
}

impl SinkhornTrajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &SinkhornState {
        self.states.last().expect("trajectory holds θ₀")
    }

    pub fn even(&self) -> impl Iterator<Item = &SinkhornState> {
        self.states.iter().step_by(2)
    }

    /// `(m_n, σ_n)` as a Gaussian.
    pub fn marginal(&self, k: usize) -> GaussianDist {
        let s = &self.states[k];
        GaussianDist {
            mean: s.mean.clone(),
            cov: s.cov.clone(),
        }
    }
}

/// The per-problem constants of the υ recursion.
struct Stepper<'a> {
    p: &'a BridgeProblem,
    c: BridgeConstants,
    sigma_half: SpdMatrix,
    sigma_bar_half: SpdMatrix,
}

impl<'a> Stepper<'a> {
    fn new(p: &'a BridgeProblem) -> Result<Self> {
        Ok(Self {
            p,
            c: bridge_constants(p)?,
            sigma_half: p.eta.cov.sqrt(),
            sigma_bar_half: p.mu.cov.sqrt(),
        })
    }

    fn initial(&self) -> Result<SinkhornState> {
        let p = self.p;
        let push = pushforward(&p.eta, &p.theta)?;
        let upsilon = SpdMatrix::new(p.theta.tau.congruence(p.mu.cov.inv_sqrt().matrix()))?;
        Ok(SinkhornState {
            n: 0,
            theta: p.theta.clone(),
            mean: push.a,
            cov: push.b,
            upsilon,
            bayes_gap: [0.0; 3],
        })
    }

    fn next(&self, s: &SinkhornState) -> Result<SinkhornState> {
        let (p, c) = (self.p, &self.c);
        let d = p.dim();
        let n = s.n + 1;
        let to_even = n.is_multiple_of(2);
        let (g, half, target, source) = if to_even {
            (&c.gamma, &self.sigma_bar_half, &p.mu, &p.eta)
        } else {
            (&c.gamma_bar, &self.sigma_half, &p.eta, &p.mu)
        };
        let upsilon = SpdMatrix::new(DMatrix::identity(d, d) + s.upsilon.congruence(g))?.inverse();
        let tau = SpdMatrix::new(upsilon.congruence(half.matrix()))?;
        let beta = if to_even {
            tau.matrix() * &c.chi
        } else {
            tau.matrix() * c.chi.transpose()
        };
        let alpha = &target.mean - &beta * &s.mean;
        let mean = &alpha + &beta * &source.mean;
        let cov = SpdMatrix::new(source.cov.congruence(&beta) + tau.matrix())?;
        Ok(SinkhornState {
            n,
            theta: KernelParams::new(alpha, beta, tau)?,
            mean,
            cov,
            upsilon,
            bayes_gap: [0.0; 3],
        })
    }
}

fn step_failure(step: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::StepFailure {
        step,
        source: Box::new(e),
    }
}

fn converged(s: &SinkhornState, mu: &GaussianDist) -> bool {
    (&s.mean - &mu.mean).norm() + (s.cov.matrix() - mu.cov.matrix()).norm() <= STOP_TOL
}

/// Runs `n_iters` steps and records everything.
pub fn run_sinkhorn(p: &BridgeProblem, n_iters: usize) -> Result<SinkhornTrajectory> {
    run(p, n_iters, false)
}

/// Runs until `‖m_{2n} − m̄‖ + ‖σ_{2n} − σ̄‖_F ≤` [`STOP_TOL`] or `max_iters`.
pub fn run_sinkhorn_until(p: &BridgeProblem, max_iters: usize) -> Result<SinkhornTrajectory> {
    run(p, max_iters, true)
}

fn run(p: &BridgeProblem, n_iters: usize, stop: bool) -> Result<SinkhornTrajectory> {
    if n_iters == 0 {
        return Err(Error::InvalidArgument("n_iters must be at least 1".into()));
    }
    let stepper = Stepper::new(p).map_err(step_failure(0))?;
    let mut states = vec![stepper.initial().map_err(step_failure(0))?];
    let mut bayes = p.theta.clone();
    let mut converged_at = converged(&states[0], &p.mu).then_some(0);
    for k in 1..=n_iters {
        let mut s = stepper
            .next(states.last().unwrap())
            .map_err(step_failure(k))?;
        let (m, sigma) = if k % 2 == 0 {
            (&p.mu.mean, &p.mu.cov)
        } else {
            (&p.eta.mean, &p.eta.cov)
        };
        bayes = bayes_map(m, sigma, &bayes).map_err(step_failure(k))?;
        s.bayes_gap = [
            (&bayes.alpha - &s.theta.alpha).norm(),
            spectral_norm(&(&bayes.beta - &s.theta.beta)),
            spectral_norm(&(bayes.tau.matrix() - s.theta.tau.matrix())),
        ];
        let done = k % 2 == 0 && converged(&s, &p.mu);
        states.push(s);
        if done && converged_at.is_none() {
            converged_at = Some(k);
            if stop {
                break;
            }
        }
    }
    let bridge = schrodinger_bridge(p)?;
    let rates = rate_data(p, &bridge)?;
    let gibbs = gibbs_from(p, &states, &rates)?;
    let potentials = series_potentials(p, &states)?;
    Ok(SinkhornTrajectory {
        problem: p.clone(),
        states,
        gibbs,
        rates,
        bridge,
        potentials,
        converged_at,
    })
}

/// Residuals of the Riccati description and the Löwner sandwiches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RiccatiCrosscheck {
    /// `max ‖υ_{2n+2} − Ricc_ϖ(υ_{2n})‖₂`.
    pub even_residual: f64,
    /// `max ‖υ_{2n+1} − Ricc_ϖ̄(υ_{2n−1})‖₂`.
    pub odd_residual: f64,
    /// Largest `(α, β, τ)` gap to the Bayes-map path.
    pub bayes_residual: [f64; 3],
    /// Largest eigenvalue violation of `(I + ϖ⁻¹)⁻¹ ≤ υ ≤ (I + (ϖ + I)⁻¹)⁻¹`
    /// over indices `≥ 4`, zero when it holds.
    pub envelope_violation: f64,
    /// Largest eigenvalue of `τ_{2n} − σ̄` and `τ_{2n+1} − σ`, `n ≥ 1`,
    /// clipped at zero.
    pub loewner_violation: f64,
    /// Largest [`gain_identity_residual`].
    pub gain_identity: f64,
    /// `max ‖(m_n, σ_n) − h(θ_n)‖`.
    pub marginal_pinning: f64,
}

impl RiccatiCrosscheck {
    pub fn max_residual(&self) -> f64 {
        [
            self.even_residual,
            self.odd_residual,
            self.bayes_residual[0],
            self.bayes_residual[1],
            self.bayes_residual[2],
            self.gain_identity,
            self.marginal_pinning,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Eigenvalue violation of the monotone envelopes of `Ricc_ϖ` by `v`.
fn envelope_violation(v: &SpdMatrix, varpi: &SpdMatrix) -> f64 {
    let (lower, upper) = monotone_envelopes(&RiccatiSpec::new(varpi.clone()));
    let below = -min_eigenvalue(&(v.matrix() - lower.matrix()));
    let above = -min_eigenvalue(&(upper.matrix() - v.matrix()));
    below.max(above).max(0.0)
}

/// `‖τ_n⁻¹β_n − τ⁻¹β‖₂` for even `n`, `‖τ_n⁻¹β_n − β'τ⁻¹‖₂` for odd `n`.
pub fn gain_identity_residual(p: &BridgeProblem, s: &SinkhornState) -> f64 {
    let chi = p.theta.tau.inverse().matrix() * &p.theta.beta;
    let lhs = s.theta.tau.inverse().matrix() * &s.theta.beta;
    let rhs = if s.is_even() { chi } else { chi.transpose() };
    spectral_norm(&(lhs - rhs))
}

pub fn riccati_crosscheck(traj: &SinkhornTrajectory) -> Result<RiccatiCrosscheck> {
    let p = &traj.problem;
    let c = &traj.bridge.constants;
    let even = RiccatiSpec::new(c.varpi.clone());
    let odd = RiccatiSpec::new(c.varpi_bar.clone());
    let mut out = RiccatiCrosscheck::default();
    for (k, s) in traj.states.iter().enumerate() {
        for i in 0..3 {
            out.bayes_residual[i] = out.bayes_residual[i].max(s.bayes_gap[i]);
        }
        out.gain_identity = out.gain_identity.max(gain_identity_residual(p, s));
        let (input, target) = if s.is_even() {
            (&p.eta, &p.mu)
        } else {
            (&p.mu, &p.eta)
        };
        let push = pushforward(input, &s.theta)?;
        let pin = (&push.a - &s.mean)
            .norm()
            .max(spectral_norm(&(push.b.matrix() - s.cov.matrix())));
        out.marginal_pinning = out.marginal_pinning.max(pin);
        if k >= 2 {
            let spec = if s.is_even() { &even } else { &odd };
            let prev = &traj.states[k - 2].upsilon;
            let res = spectral_norm(&(ricc_map(spec, &prev.sym())?.matrix() - s.upsilon.matrix()));
            if s.is_even() {
                out.even_residual = out.even_residual.max(res);
            } else {
                out.odd_residual = out.odd_residual.max(res);
            }
            let loew = -min_eigenvalue(&(target.cov.matrix() - s.theta.tau.matrix()));
            out.loewner_violation = out.loewner_violation.max(loew.max(0.0));
        }
        if k >= 4 {
            let varpi = if s.is_even() { &c.varpi } else { &c.varpi_bar };
            out.envelope_violation = out
                .envelope_violation
                .max(envelope_violation(&s.upsilon, varpi));
        }
    }
    Ok(out)
}

fn rate_data(p: &BridgeProblem, sol: &BridgeSolution) -> Result<RateData> {
    let c = &sol.constants;
    let bound = contraction_bound(&RiccatiSpec::new(c.varpi.clone()));
    let bound_bar = contraction_bound(&RiccatiSpec::new(c.varpi_bar.clone()));
    let (cs, csb) = (p.eta.cov.condition_number(), p.mu.cov.condition_number());
    let floor = |half: &SpdMatrix, varpi: &SpdMatrix, vs: &SpdMatrix| -> Result<f64> {
        let lower = monotone_envelopes(&RiccatiSpec::new(varpi.clone())).0;
        Ok(SpdMatrix::new(lower.congruence(half.matrix()))?
            .lambda_min()
            .min(vs.lambda_min()))
    };
    Ok(RateData {
        rho: bound.rate,
        rho_bar: bound_bar.rate,
        bound,
        bound_bar,
        c_tau: csb * bound.phi * bound.phi / bound.rate,
        c_tau_bar: cs * bound_bar.phi * bound_bar.phi / bound_bar.rate,
        c_mean: csb.sqrt() * bound.psi,
        c_mean_bar: cs.sqrt() * bound_bar.psi,
        c_cov: csb * bound.psi * bound.psi,
        c_cov_bar: cs * bound_bar.psi * bound_bar.psi,
        gain_factor: spectral_norm(&c.chi),
        sqrt_floor: floor(&p.mu.cov.sqrt(), &c.varpi, &sol.params.tau)?,
        sqrt_floor_bar: floor(&p.eta.cov.sqrt(), &c.varpi_bar, &sol.dual_params.tau)?,
    })
}

/// `ρ_θ`, `ρ̄_{θ₁}` and the bound constants.
pub fn convergence_rates(p: &BridgeProblem) -> Result<RateData> {
    rate_data(p, &schrodinger_bridge(p)?)
}

/// Rates along the family `θ(t) = (α, β, tI)` next to their explicit bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularizedRates {
    pub t: f64,
    pub rho: f64,
    pub rho_bar: f64,
    /// `(1 + t λ_min(ω)^{1/2})⁻²`.
    pub bound: f64,
    /// `(1 + t λ_min(σ^{-1/2}σ̄⁻¹σ^{-1/2})^{1/2})⁻²`, only for `β = I`.
    pub bound_identity: Option<f64>,
}

pub fn regularized_rates(family: &RegularizedFamily, t: f64) -> Result<RegularizedRates> {
    let rates = convergence_rates(&family.problem(t)?)?;
    let bound = (1.0 + t * family.omega()?.lambda_min().sqrt()).powi(-2);
    let d = family.alpha.len();
    let bound_identity = if family.beta == DMatrix::identity(d, d) {
        let w = family
            .mu
            .cov
            .inverse()
            .congruence(family.eta.cov.inv_sqrt().matrix());
        Some((1.0 + t * min_eigenvalue(&w).sqrt()).powi(-2))
    } else {
        None
    };
    Ok(RegularizedRates {
        t,
        rho: rates.rho,
        rho_bar: rates.rho_bar,
        bound,
        bound_identity,
    })
}

/// The uniform-in-`n` estimates along the `θ(t)` trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniformBounds {
    pub t: f64,
    /// Eigenvalue violation of
    /// `σ̄^{1/2}(2I + ϖ)⁻¹σ̄^{1/2} ≤ σ̄ − τ_{2n} ≤ σ̄^{1/2}(I + ϖ)⁻¹σ̄^{1/2}`
    /// and its odd analogue, indices `≥ 4`.
    pub cov_violation: f64,
    /// `max_n ‖β_n(t)‖₂ t / (‖β‖₂‖σ̄‖₂)` (even) or `/(‖β‖₂‖σ‖₂)` (odd),
    /// `n ≥ 1`. At most 1 when the gain bound holds.
    pub gain_ratio: f64,
}

pub fn regularized_uniform_bounds(
    family: &RegularizedFamily,
    t: f64,
    n_iters: usize,
) -> Result<UniformBounds> {
    let p = family.problem(t)?;
    let traj = run_sinkhorn(&p, n_iters)?;
    let c = &traj.bridge.constants;
    let d = p.dim();
    let beta_norm = spectral_norm(&family.beta);
    let mut cov_violation: f64 = 0.0;
    let mut gain_ratio: f64 = 0.0;
    for s in traj.states.iter().skip(1) {
        let (target, varpi) = if s.is_even() {
            (&p.mu.cov, &c.varpi)
        } else {
            (&p.eta.cov, &c.varpi_bar)
        };
        gain_ratio =
            gain_ratio.max(spectral_norm(&s.theta.beta) * t / (beta_norm * target.lambda_max()));
        if s.n >= 4 {
            let gap = SpdMatrix::new(DMatrix::identity(d, d) - s.upsilon.matrix())?;
            let lower = SpdMatrix::new(varpi.matrix() + DMatrix::identity(d, d) * 2.0)?.inverse();
            let upper = SpdMatrix::new(varpi.matrix() + DMatrix::identity(d, d))?.inverse();
            // rescaled frame: σ̄^{-1/2}(σ̄ − τ_{2n})σ̄^{-1/2} = I − υ_{2n}
            let v = (-min_eigenvalue(&(gap.matrix() - lower.matrix())))
                .max(-min_eigenvalue(&(upper.matrix() - gap.matrix())));
            cov_violation = cov_violation.max(v.max(0.0));
        }
    }
    Ok(UniformBounds {
        t,
        cov_violation,
        gain_ratio,
    })
}

fn gibbs_from(
    p: &BridgeProblem,
    states: &[SinkhornState],
    rates: &RateData,
) -> Result<Vec<GibbsProducts>> {
    let d = p.dim();
    let id = DMatrix::<f64>::identity(d, d);
    let sbh = p.mu.cov.sqrt();
    let sbih = p.mu.cov.inv_sqrt();
    let (m0, s0) = (&states[0].mean, &states[0].cov);
    let mut out = Vec::new();
    let mut even_prod = id.clone();
    let mut odd_prod = id.clone();
    for n in 0..=(states.len() - 1) / 2 {
        let s = &states[2 * n];
        let (beta_circ, tau_circ, mu_fp) = if n == 0 {
            (id.clone(), None, 0.0)
        } else {
            let prev = &states[2 * n - 1];
            let b = &s.theta.beta * &prev.theta.beta;
            let a = &s.theta.alpha + &s.theta.beta * &prev.theta.alpha;
            let tc =
                SpdMatrix::new(prev.theta.tau.congruence(&s.theta.beta) + s.theta.tau.matrix())?;
            let fp_mean = (&a + &b * &p.mu.mean - &p.mu.mean).norm();
            let fp_cov =
                spectral_norm(&(p.mu.cov.congruence(&b) + tc.matrix() - p.mu.cov.matrix()));
            (b, Some(tc), fp_mean.max(fp_cov))
        };
        even_prod = &beta_circ * &even_prod;
        let loop_identity_residual = if n == 0 {
            0.0
        } else {
            spectral_norm(&(sbih.matrix() * &beta_circ * sbh.matrix() - (&id - s.upsilon.matrix())))
        };
        let pushed = &even_prod * (s0.matrix() - p.mu.cov.matrix()) * even_prod.transpose();
        let cov_transport_residual = spectral_norm(&(s.cov.matrix() - p.mu.cov.matrix() - pushed));
        let mean_transport_residual =
            (&s.mean - &p.mu.mean - &even_prod * (m0 - &p.mu.mean)).norm();
        let floquet_norm = spectral_norm(&(sbih.matrix() * &even_prod * sbh.matrix()));
        let floquet_bound = rates.bound.psi * rates.rho.powf(n as f64 / 2.0);

        let (beta_circ_odd, eta_fp) = match states.get(2 * n + 1) {
            Some(next) => {
                let b = &next.theta.beta * &s.theta.beta;
                if n >= 1 {
                    odd_prod = &b * &odd_prod;
                }
                let a = &next.theta.alpha + &next.theta.beta * &s.theta.alpha;
                let tc = s.theta.tau.congruence(&next.theta.beta) + next.theta.tau.matrix();
                let fp_mean = (&a + &b * &p.eta.mean - &p.eta.mean).norm();
                let fp_cov = spectral_norm(&(p.eta.cov.congruence(&b) + tc - p.eta.cov.matrix()));
                (Some(odd_prod.clone()), Some(fp_mean.max(fp_cov)))
            }
            None => (None, None),
        };
        out.push(GibbsProducts {
            n,
            beta_circ,
            beta_circ_even: even_prod.clone(),
            beta_circ_odd,
            tau_circ,
            loop_identity_residual,
            cov_transport_residual,
            mean_transport_residual,
            mu_fixed_point_residual: mu_fp,
            eta_fixed_point_residual: eta_fp,
            floquet_norm,
            floquet_bound,
        });
    }
    Ok(out)
}

/// Gibbs-loop products at every recorded even index.
pub fn gibbs_products(traj: &SinkhornTrajectory) -> Result<Vec<GibbsProducts>> {
    if traj.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least one Sinkhorn step".into(),
        ));
    }
    gibbs_from(&traj.problem, &traj.states, &traj.rates)
}

/// `e_d(p) = (E‖G‖^p)^{1/p}` for a standard Gaussian `G` on `ℝ^d`.
pub fn gaussian_norm_moment(d: usize, p: f64) -> f64 {
    let d = d as f64;
    let log_moment = 0.5 * p * 2f64.ln() + ln_gamma(0.5 * (d + p)) - ln_gamma(0.5 * d);
    (log_moment / p).exp()
}

/// One row of the error table at index `2n` (or `2n + 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRow {
    /// Number of Riccati steps from the start of this parity.
    pub n: usize,
    pub index: usize,
    pub tau: f64,
    pub sqrt_tau: f64,
    pub beta: f64,
    pub mean: f64,
    pub cov: f64,
    /// `Ent(P_{θ_k} | P_{bridge})`.
    pub entropy: f64,
    /// Pinsker: `(Ent/2)^{1/2}`.
    pub tv_bound: f64,
    /// Synchronous-coupling bound on `𝕎_p(P_{θ_k}, P_{bridge})`.
    pub wasserstein_bound: f64,
    pub bound_tau: f64,
    pub bound_sqrt_tau: f64,
    pub bound_beta: f64,
    pub bound_mean: f64,
    pub bound_cov: f64,
    pub bound_wasserstein: f64,
    /// Certified entropy bound, once `‖ς⁻¹‖₂ bound_tau ≤ ½`.
    pub bound_entropy: Option<f64>,
}

impl ErrorRow {
    /// `(actual, bound)` pairs for the certified quantities.
    pub fn certified_pairs(&self) -> [(f64, f64); 6] {
        [
            (self.tau, self.bound_tau),
            (self.sqrt_tau, self.bound_sqrt_tau),
            (self.beta, self.bound_beta),
            (self.mean, self.bound_mean),
            (self.cov, self.bound_cov),
            (self.wasserstein_bound, self.bound_wasserstein),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    /// Rows at indices `2n`, against `𝕊(θ)` and `μ`.
    pub even: Vec<ErrorRow>,
    /// Rows at indices `2n + 1`, against the dual bridge and `η`.
    pub odd: Vec<ErrorRow>,
    pub p: f64,
    pub e_dp: f64,
    /// Smallest `n₀` with `ρ^{n₀}‖τ₀ − ς‖_F ≤ min(1, 1/(2c_tau‖ς⁻¹‖_F))`.
    pub burn_in: usize,
}

struct Side<'a> {
    input: &'a GaussianDist,
    target: &'a GaussianDist,
    bridge: &'a KernelParams,
    start: &'a SinkhornState,
    rho: f64,
    c_tau: f64,
    c_mean: f64,
    c_cov: f64,
    floor: f64,
}

impl Side<'_> {
    fn row(&self, s: &SinkhornState, n: usize, gain: f64, e: f64) -> Result<ErrorRow> {
        let b = self.bridge;
        let d = s.theta.dim();
        let dtau = s.theta.tau.matrix() - b.tau.matrix();
        let tau = spectral_norm(&dtau);
        let sqrt_tau = spectral_norm(&(s.theta.tau.sqrt().matrix() - b.tau.sqrt().matrix()));
        let dbeta = &s.theta.beta - &b.beta;
        let beta = spectral_norm(&dbeta);
        let mean = (&s.mean - &self.target.mean).norm();
        let cov = spectral_norm(&(s.cov.matrix() - self.target.cov.matrix()));
        let entropy = kernel_rel_entropy(&s.theta, b, &self.input.mean, &self.input.cov)?.max(0.0);
        let in_half = self.input.cov.sqrt();
        let wasserstein_bound = mean + e * (spectral_norm(&(&dbeta * in_half.matrix())) + sqrt_tau);

        let rn = self.rho.powi(n as i32);
        let tau0 = spectral_norm(&(self.start.theta.tau.matrix() - b.tau.matrix()));
        let bound_tau = if n == 0 { tau0 } else { self.c_tau * rn * tau0 };
        let floor = if n == 0 {
            self.floor.min(s.theta.tau.lambda_min())
        } else {
            self.floor
        };
        let bound_sqrt_tau = bound_tau / (2.0 * floor.sqrt());
        let bound_beta = gain * bound_tau;
        let bound_mean = self.c_mean
            * self.rho.powf(n as f64 / 2.0)
            * (&self.start.mean - &self.target.mean).norm();
        let bound_cov =
            self.c_cov * rn * spectral_norm(&(self.start.cov.matrix() - self.target.cov.matrix()));
        let bound_wasserstein =
            bound_mean + e * (in_half.lambda_max() * bound_beta + bound_sqrt_tau);

        let vi = b.tau.inverse().lambda_max();
        let x = vi * bound_tau;
        let bound_entropy = (x <= 0.5).then(|| {
            0.5 * (2.0 * d as f64 * x * x
                + vi * bound_mean * bound_mean
                + vi * self.input.cov.lambda_max() * bound_beta * bound_beta)
        });
        Ok(ErrorRow {
            n,
            index: s.n,
            tau,
            sqrt_tau,
            beta,
            mean,
            cov,
            entropy,
            tv_bound: (entropy / 2.0).sqrt(),
            wasserstein_bound,
            bound_tau,
            bound_sqrt_tau,
            bound_beta,
            bound_mean,
            bound_cov,
            bound_wasserstein,
            bound_entropy,
        })
    }
}

/// Errors of every recorded state against the bridge, with the certified
/// bounds built from [`RateData`]. `p_order ≥ 1` selects the `𝕎_p` bound.
pub fn error_report(traj: &SinkhornTrajectory, p_order: f64) -> Result<ErrorReport> {
    if !(p_order >= 1.0 && p_order.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Wasserstein order must be >= 1, got {p_order}"
        )));
    }
    let p = &traj.problem;
    let r = &traj.rates;
    let e = gaussian_norm_moment(p.dim(), p_order);
    let even_side = Side {
        input: &p.eta,
        target: &p.mu,
        bridge: &traj.bridge.params,
        start: &traj.states[0],
        rho: r.rho,
        c_tau: r.c_tau,
        c_mean: r.c_mean,
        c_cov: r.c_cov,
        floor: r.sqrt_floor,
    };
    let mut even = Vec::new();
    for (n, s) in traj.states.iter().step_by(2).enumerate() {
        even.push(even_side.row(s, n, r.gain_factor, e)?);
    }
    let mut odd = Vec::new();
    if traj.len() > 1 {
        let odd_side = Side {
            input: &p.mu,
            target: &p.eta,
            bridge: &traj.bridge.dual_params,
            start: &traj.states[1],
            rho: r.rho_bar,
            c_tau: r.c_tau_bar,
            c_mean: r.c_mean_bar,
            c_cov: r.c_cov_bar,
            floor: r.sqrt_floor_bar,
        };
        for (n, s) in traj.states.iter().skip(1).step_by(2).enumerate() {
            odd.push(odd_side.row(s, n, r.gain_factor, e)?);
        }
    }
    Ok(ErrorReport {
        even,
        odd,
        p: p_order,
        e_dp: e,
        burn_in: burn_in(traj),
    })
}

/// Smallest `n₀` with `ρ^{n₀}‖τ₀ − ς‖_F ≤ min(1, 1/(2 c_tau ‖ς⁻¹‖_F))`.
pub fn burn_in(traj: &SinkhornTrajectory) -> usize {
    let vs = &traj.bridge.params.tau;
    let gap = (traj.states[0].theta.tau.matrix() - vs.matrix()).norm();
    let target = 1f64.min(1.0 / (2.0 * traj.rates.c_tau * vs.inverse().matrix().norm()));
    if gap <= target {
        return 0;
    }
    ((target / gap).ln() / traj.rates.rho.ln()).ceil().max(0.0) as usize
}

/// Least-squares fit of `ln err` against `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Fits `ln err = intercept + slope·x` over the points with `err` inside
/// `window`. `None` with fewer than three points.
pub fn fit_log_slope(xs: &[f64], errs: &[f64], window: (f64, f64)) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(errs)
        .filter(|(_, e)| **e >= window.0 && **e <= window.1)
        .map(|(x, e)| (*x, e.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some(SlopeFit {
        slope,
        intercept: my - slope * mx,
        points: pts.len(),
    })
}

/// Fitted slopes of the even error sequences against `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalRates {
    pub mean: Option<SlopeFit>,
    pub cov: Option<SlopeFit>,
    pub tau: Option<SlopeFit>,
    /// `½ ln ρ`, the expected mean slope.
    pub mean_reference: f64,
    /// `ln ρ`, the expected covariance slope.
    pub cov_reference: f64,
}

pub fn empirical_rates(report: &ErrorReport, rates: &RateData) -> EmpiricalRates {
    let xs: Vec<f64> = report.even.iter().map(|r| r.n as f64).collect();
    let col = |f: fn(&ErrorRow) -> f64| -> Vec<f64> { report.even.iter().map(f).collect() };
    EmpiricalRates {
        mean: fit_log_slope(&xs, &col(|r| r.mean), RATE_WINDOW),
        cov: fit_log_slope(&xs, &col(|r| r.cov), RATE_WINDOW),
        tau: fit_log_slope(&xs, &col(|r| r.tau), RATE_WINDOW),
        mean_reference: 0.5 * rates.rho.ln(),
        cov_reference: rates.rho.ln(),
    }
}

fn log_ratio_potential(
    mean: &DVector<f64>,
    cov: &SpdMatrix,
    reference: &GaussianDist,
) -> QuadraticPotential {
    QuadraticPotential::log_gauss(mean, cov)
        .sub(&QuadraticPotential::log_gauss(
            &reference.mean,
            &reference.cov,
        ))
        .rebased(&reference.mean)
}

/// `V_{2n} = Σ_{p<n} log dπ_{2p}/dμ`, `U_{2n} = U + Σ_{p<n} log dπ_{2p+1}/dη`
/// with `U = −log g_σ(· − m)`.
fn series_potentials(
    p: &BridgeProblem,
    states: &[SinkhornState],
) -> Result<Vec<(QuadraticPotential, QuadraticPotential)>> {
    let mut u = QuadraticPotential::log_gauss(&p.eta.mean, &p.eta.cov).scale(-1.0);
    let mut v = QuadraticPotential::zero(p.mu.mean.clone());
    let mut out = vec![(u.clone(), v.clone())];
    let mut k = 0;
    while k + 1 < states.len() {
        v = v.add(&log_ratio_potential(&states[k].mean, &states[k].cov, &p.mu));
        u = u.add(&log_ratio_potential(
            &states[k + 1].mean,
            &states[k + 1].cov,
            &p.eta,
        ));
        out.push((u.clone(), v.clone()));
        k += 2;
    }
    Ok(out)
}

/// One entry of [`PotentialFlow`].
#[derive(Debug, Clone)]
pub struct PotentialPair {
    pub n: usize,
    pub u: QuadraticPotential,
    pub v: QuadraticPotential,
    /// `V_{2n} + V` with `V = −log g_σ̄(· − m̄)`.
    pub v_with_base: QuadraticPotential,
    /// `U_{2n} − 𝕌` around `m`.
    pub u_remainder: QuadraticPotential,
    /// `V_{2n} − 𝕍` around `m̄`.
    pub v_remainder: QuadraticPotential,
    /// Largest coefficient gap between the series potentials and the closed
    /// form `𝕌 + ε^U`, `𝕍 + ε^V`. `None` when `θ_{2n+1}` is not recorded.
    pub closed_form_gap: Option<f64>,
    /// `μ(V_{2n})` and `η(U_{2n})`.
    pub mu_v: f64,
    pub eta_u: f64,
    /// `max |e^{gap} − 1|` of the density identity over the probe points.
    pub density_error: f64,
    /// Largest violation of the integrated-cost sandwiches over the probe
    /// points, zero when they hold.
    pub sandwich_violation: f64,
}

#[derive(Debug, Clone)]
pub struct PotentialFlow {
    pub pairs: Vec<PotentialPair>,
    /// Bridge potentials with the constant split fixed by the series limit.
    pub limit: crate::bridge::LimitPotentials,
    /// `max |μ(V_{2n}) − μ(V_{2n+2}) − Ent(μ|π_{2n})|` and its `η` analogue.
    pub monotone_identity_residual: f64,
    /// Whether `μ(V_{2n})` and `η(U_{2n})` are nonincreasing.
    pub monotone: bool,
    /// Steps of extra iteration used to sum the series tail.
    pub tail_steps: usize,
}

/// Number of random probe points for the pointwise identities.
pub const PROBE_POINTS: usize = 20;
const PROBE_SEED: u64 = 0x5eed;

fn probe_points(p: &BridgeProblem) -> Vec<(DVector<f64>, DVector<f64>)> {
    let mut g = rng(PROBE_SEED);
    let (sh, sbh) = (p.eta.cov.sqrt(), p.mu.cov.sqrt());
    (0..PROBE_POINTS)
        .map(|_| {
            let x = &p.eta.mean + sh.matrix() * standard_normal_vector(&mut g, p.dim());
            let y = &p.mu.mean + sbh.matrix() * standard_normal_vector(&mut g, p.dim());
            (x, y)
        })
        .collect()
}

/// Sums `V_{2n}(m̄)` to its limit by iterating past the recorded states.
fn series_tail(traj: &SinkhornTrajectory) -> Result<(f64, usize)> {
    let p = &traj.problem;
    let stepper = Stepper::new(p)?;
    let (_, v_last) = traj.potentials.last().expect("at least V_0");
    let mut value = v_last.value_at_base;
    let k = 2 * (traj.potentials.len() - 1);
    let mut s = traj.states[k.min(traj.len() - 1)].clone();
    while s.n < k {
        s = stepper.next(&s)?;
    }
    let mut steps = 0;
    for _ in 0..100_000 {
        let term = log_ratio_potential(&s.mean, &s.cov, &p.mu).value_at_base;
        value += term;
        s = stepper.next(&stepper.next(&s)?)?;
        steps += 2;
        if term.abs() <= 1e-17 * value.abs().max(1.0) {
            break;
        }
    }
    Ok((value, steps))
}

/// Series potentials along the trajectory, compared with the closed form
/// around the bridge potentials.
pub fn potential_flow(traj: &SinkhornTrajectory) -> Result<PotentialFlow> {
    let p = &traj.problem;
    let (m, m_bar) = (&p.eta.mean, &p.mu.mean);
    let (v_inf, tail_steps) = series_tail(traj)?;
    let limit = crate::bridge::limit_potentials_from(p, &traj.bridge)?.resplit(v_inf);
    let base_v = QuadraticPotential::log_gauss(m_bar, &p.mu.cov).scale(-1.0);
    let base_u = QuadraticPotential::log_gauss(m, &p.eta.cov).scale(-1.0);
    let costs = integrated_costs(p)?;
    let mu_base_v = base_v.integrate(&p.mu);
    let chi = p.theta.tau.inverse().matrix() * &p.theta.beta;
    let tau_inv = p.theta.tau.inverse();
    let probes = probe_points(p);

    let mut pairs = Vec::new();
    for (n, (u, v)) in traj.potentials.iter().enumerate() {
        let u_remainder = u.sub(&limit.u).rebased(m);
        let v_remainder = v.sub(&limit.v).rebased(m_bar);

        let closed_form_gap = if n >= 1 && 2 * n + 1 < traj.len() {
            let (s_even, s_prev, s_next) = (
                &traj.states[2 * n],
                &traj.states[2 * n - 1],
                &traj.states[2 * n + 1],
            );
            let gv = &chi * (&s_prev.mean - m);
            let hv =
                s_even.theta.tau.inverse().matrix() - traj.bridge.params.tau.inverse().matrix();
            let gu = chi.transpose() * (&s_even.mean - m_bar);
            let hu = s_next.theta.tau.inverse().matrix()
                - traj.bridge.dual_params.tau.inverse().matrix();
            // V_{2n}(m̄) + U_{2n}(m) from the end-point constants
            let z = &s_even.mean - m_bar;
            let z0 = &traj.states[0].mean - m_bar;
            let sum = base_u.value_at_base
                + 0.5 * (s_even.theta.tau.log_det() - p.theta.tau.log_det())
                + 0.5 * z.dot(&(s_even.theta.tau.inverse().matrix() * &z))
                - 0.5 * z0.dot(&(tau_inv.matrix() * &z0));
            let u_const = sum - v.value_at_base;
            let gaps = [
                (&v_remainder.gradient - gv).norm(),
                spectral_norm(&(v_remainder.hessian.matrix() - hv)),
                (&u_remainder.gradient - gu).norm(),
                spectral_norm(&(u_remainder.hessian.matrix() - hu)),
                (u.value_at_base - u_const).abs(),
            ];
            Some(gaps.into_iter().fold(0.0, f64::max))
        } else {
            None
        };

        let mut density_error: f64 = 0.0;
        let mut sandwich_violation: f64 = 0.0;
        let s = &traj.states[(2 * n).min(traj.len() - 1)];
        for (x, y) in &probes {
            if 2 * n < traj.len() {
                let lhs = -u.eval(x) + p.theta.log_transition(x, y) - v.eval(y);
                let rhs = p.eta.log_density(x) + s.theta.log_transition(x, y);
                density_error = density_error.max((lhs - rhs).exp_m1().abs());
            }
            if n >= 1 {
                let du = u.eval(x) - base_u.eval(x);
                let dv = v.eval(y) - base_v.eval(y);
                let tol = 1e-9 * (1.0 + du.abs() + dv.abs());
                let mut viol =
                    (-costs.c_mu.eval(x) + mu_base_v - du).max(-costs.c_eta.eval(y) - dv);
                if let Some(lq) = &costs.log_q {
                    viol = viol.max(du - lq.eval(x));
                }
                if let Some(lr) = &costs.log_r {
                    viol = viol.max(dv - (-mu_base_v + lr.eval(y)));
                }
                sandwich_violation = sandwich_violation.max((viol - tol).max(0.0));
            }
        }
        pairs.push(PotentialPair {
            n,
            u: u.clone(),
            v: v.clone(),
            v_with_base: v.add(&base_v),
            u_remainder,
            v_remainder,
            closed_form_gap,
            mu_v: v.integrate(&p.mu),
            eta_u: u.integrate(&p.eta),
            density_error,
            sandwich_violation,
        });
    }

    let mut monotone_identity_residual: f64 = 0.0;
    let mut monotone = true;
    for w in pairs.windows(2) {
        let n = w[0].n;
        let ent_mu = gaussian_kl(&p.mu, &traj.marginal(2 * n))?;
        let ent_eta = gaussian_kl(&p.eta, &traj.marginal(2 * n + 1))?;
        monotone_identity_residual = monotone_identity_residual
            .max((w[0].mu_v - w[1].mu_v - ent_mu).abs())
            .max((w[0].eta_u - w[1].eta_u - ent_eta).abs());
        let slack = 1e-12 * (1.0 + w[0].mu_v.abs() + w[0].eta_u.abs());
        monotone &= w[1].mu_v <= w[0].mu_v + slack && w[1].eta_u <= w[0].eta_u + slack;
    }
    Ok(PotentialFlow {
        pairs,
        limit,
        monotone_identity_residual,
        monotone,
        tail_steps,
    })
}

/// One row of the entropy budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyRow {
    pub n: usize,
    /// `Ent(μ|π_{2n})`.
    pub ent_mu: f64,
    /// `Ent(η|π_{2n+1})`, when recorded.
    pub ent_eta: Option<f64>,
    /// `Ent(P_{𝕊(θ)} | P_{θ_{2n}})`.
    pub ent_bridge: f64,
    /// `Ent(P_{𝕊(θ)} | P_{θ₀}) / n`, `n ≥ 1`.
    pub one_over_n: Option<f64>,
    /// Certified envelope on `ent_bridge`, a sum of `ρⁿ` and `ρ^{2n}`
    /// terms, `n ≥ 1`.
    pub envelope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyBudget {
    pub rows: Vec<EntropyRow>,
    /// Largest excess of a marginal entropy over the `1/n` bound, zero when
    /// it holds.
    pub one_over_n_violation: f64,
    /// Largest residual of the Pythagorean telescoping over all `p < q`.
    pub telescoping_residual: f64,
    pub burn_in: usize,
    /// `max(ρ, ρ̄)`.
    pub rate_cap: f64,
    /// Largest `ent_bridge[n+1]/ent_bridge[n]` for `n ≥ burn_in`, over
    /// entries above [`ENTROPY_FLOOR`].
    pub max_ratio: Option<f64>,
    /// The last such ratio.
    pub tail_ratio: Option<f64>,
    /// Largest `ent_bridge / envelope − 1` for `n ≥ burn_in`, clipped at 0.
    pub envelope_violation: f64,
}

impl EntropyBudget {
    /// Past burn-in the bridge entropy sits under an envelope that shrinks by
    /// at least `rate_cap` per step, and the envelope is available there.
    pub fn geometric(&self) -> bool {
        self.envelope_violation == 0.0
            && self
                .rows
                .iter()
                .skip(self.burn_in.max(1))
                .all(|r| r.envelope.is_some())
    }
}

/// Floor below which the bridge entropy is treated as rounding noise.
pub const ENTROPY_FLOOR: f64 = 1e-13;

pub fn entropy_budget(traj: &SinkhornTrajectory) -> Result<EntropyBudget> {
    let p = &traj.problem;
    let s = &traj.bridge.params;
    let ent0 = kernel_rel_entropy(s, &p.theta, &p.eta.mean, &p.eta.cov)?;
    let report = error_report(traj, 2.0)?;
    let mut rows = Vec::new();
    for (n, st) in traj.even().enumerate() {
        let ent_mu = gaussian_kl(&p.mu, &traj.marginal(2 * n))?;
        let ent_eta = if 2 * n + 1 < traj.len() {
            Some(gaussian_kl(&p.eta, &traj.marginal(2 * n + 1))?)
        } else {
            None
        };
        let ent_bridge = kernel_rel_entropy(s, &st.theta, &p.eta.mean, &p.eta.cov)?;
        let one_over_n = (n >= 1).then(|| ent0 / n as f64);
        let envelope = bridge_entropy_envelope(&report.even[n], traj);
        rows.push(EntropyRow {
            n,
            ent_mu,
            ent_eta,
            ent_bridge,
            one_over_n,
            envelope,
        });
    }
    let mut one_over_n_violation: f64 = 0.0;
    for r in &rows {
        if let Some(b) = r.one_over_n {
            let worst = r.ent_mu.max(r.ent_eta.unwrap_or(0.0));
            one_over_n_violation = one_over_n_violation.max(worst - b);
        }
    }
    // marginal sums per loop index l, defined while θ_{2l+1} is recorded
    let loop_terms: Vec<f64> = rows
        .iter()
        .map_while(|r| r.ent_eta.map(|e| r.ent_mu + e))
        .collect();
    let mut telescoping_residual: f64 = 0.0;
    for q in 0..=loop_terms.len().min(rows.len() - 1) {
        let mut sum = 0.0;
        for pp in (0..q).rev() {
            sum += loop_terms[pp];
            let lhs = rows[pp].ent_bridge - rows[q].ent_bridge;
            telescoping_residual = telescoping_residual.max((lhs - sum).abs());
        }
    }
    let burn_in = burn_in(traj);
    let rate_cap = traj.rates.rho.max(traj.rates.rho_bar);
    let ratios: Vec<f64> = rows
        .windows(2)
        .filter(|w| w[0].n >= burn_in && w[1].ent_bridge > ENTROPY_FLOOR)
        .map(|w| w[1].ent_bridge / w[0].ent_bridge)
        .collect();
    let max_ratio = ratios.iter().copied().reduce(f64::max);
    let tail_ratio = ratios.last().copied();
    let envelope_violation = rows
        .iter()
        .skip(burn_in)
        .filter_map(|r| r.envelope.map(|b| r.ent_bridge / b - 1.0))
        .fold(0.0, f64::max);
    Ok(EntropyBudget {
        rows,
        one_over_n_violation: one_over_n_violation.max(0.0),
        telescoping_residual,
        burn_in,
        rate_cap,
        max_ratio,
        tail_ratio,
        envelope_violation,
    })
}

/// Bound on `Ent(P_{𝕊(θ)} | P_{θ_{2n}}) = ½[D(ς|τ_{2n}) + ‖τ_{2n}^{-1/2}(m_{2n} − m̄)‖²
/// + ‖τ_{2n}^{-1/2}(κ − β_{2n})σ^{1/2}‖²]`, `n ≥ 1`, from the certified error
/// bounds. With `λ_min(τ_{2n}) ≥ ℓ` and `τ_{2n} ≤ σ̄`, the eigenvalues `λ` of
/// `τ_{2n}^{-1/2}ςτ_{2n}^{-1/2}` satisfy `|λ − 1| ≤ bound_tau/ℓ` and
/// `λ ≥ λ_min(ς)/‖σ̄‖₂ =: a`, so `λ − 1 − log λ ≤ (λ − 1)²/(2 min(1, a)²)`.
fn bridge_entropy_envelope(row: &ErrorRow, traj: &SinkhornTrajectory) -> Option<f64> {
    if row.n == 0 {
        return None;
    }
    let p = &traj.problem;
    let ell = traj.rates.sqrt_floor;
    let x = row.bound_tau / ell;
    let a = (traj.bridge.params.tau.lambda_min() / p.mu.cov.lambda_max()).min(1.0);
    let d = p.dim() as f64;
    let sigma = p.eta.cov.lambda_max();
    Some(
        0.5 * (d * x * x / (2.0 * a * a)
            + row.bound_mean.powi(2) / ell
            + sigma * row.bound_beta.powi(2) / ell),
    )
}

/// `½ d log 2π`, the constant separating the two conventions for `U(m)`.
pub fn half_log_2pi(d: usize) -> f64 {
    0.5 * d as f64 * (2.0 * PI).ln()
}
