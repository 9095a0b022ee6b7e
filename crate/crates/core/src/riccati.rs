//! Riccati maps `Ricc_ϖ(v) = (I + (ϖ + v)⁻¹)⁻¹`, their fixed points and the
//! Floquet representation of the linearized flow.
//!
//! The companion recursion `u ↦ Ricc⁻(u) = ϖ + (I + u)⁻¹u` drives the
//! shifted variable `u = ϖ + v`. All functions of `ϖ` alone are evaluated in
//! its eigenbasis.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spd::{right_solve, same_dim, spectral_norm, SpdMatrix, SymMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSpec {
    pub varpi: SpdMatrix,
}

impl RiccatiSpec {
    pub fn new(varpi: SpdMatrix) -> Self {
        Self { varpi }
    }

    pub fn scalar(varpi: f64) -> Result<Self> {
        Ok(Self {
            varpi: SpdMatrix::scalar(varpi)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.varpi.dim()
    }
}

/// `r_∞` and `u_∞ = r_∞ + ϖ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiFixedPoints {
    pub r: SpdMatrix,
    pub u: SpdMatrix,
}

#[derive(Debug, Clone)]
pub struct FloquetData {
    pub u_inf: SpdMatrix,
    /// `𝔾_n = Σ_{k<n} (I + u_∞)^{-(2k+1)}`.
    pub g_n: DMatrix<f64>,
    /// `𝔾 = (I + u_∞)⁻¹ (I − (I + u_∞)^{-2})⁻¹`.
    pub g_limit: DMatrix<f64>,
    pub psi: f64,
    pub phi: f64,
    /// Condition number of `I + (u_0 − u_∞)𝔾_n`.
    pub correction_condition: f64,
}

#[derive(Debug, Clone)]
pub struct FloquetResult {
    /// Directed product `(I + u_{n−1})⁻¹ ⋯ (I + u_0)⁻¹`.
    pub e_product: DMatrix<f64>,
    /// `(I + u_∞)^{-n} (I + (u_0 − u_∞)𝔾_n)⁻¹`.
    pub e_floquet: DMatrix<f64>,
    pub data: FloquetData,
}

/// Constants of the contraction estimate
/// `‖Ricc^{n+1}(v) − Ricc^{n+1}(w)‖₂ ≤ φ² rateⁿ ‖v − w‖₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionBound {
    /// `ψ(u_∞) = (1 + ‖u_∞⁻¹‖₂)(1 + ‖u_∞‖₂)`.
    pub psi: f64,
    /// `φ = ψ(u_∞) / (1 + λ_min(ϖ))`.
    pub phi: f64,
    /// `(1 + λ_min(u_∞))⁻²`.
    pub rate: f64,
}

fn check_psd(v: &SymMatrix) -> Result<()> {
    let lmin = v.lambda_min();
    if lmin < -1e-12 * v.matrix().norm().max(1.0) {
        return Err(Error::NotPsd { lambda_min: lmin });
    }
    Ok(())
}

/// `Ricc_ϖ(v) = (I + (ϖ + v)⁻¹)⁻¹`, evaluated as `I − (I + ϖ + v)⁻¹`.
pub fn ricc_map(spec: &RiccatiSpec, v: &SymMatrix) -> Result<SpdMatrix> {
    same_dim(spec.dim(), v.dim())?;
    check_psd(v)?;
    let d = spec.dim();
    let shifted = SpdMatrix::new(DMatrix::identity(d, d) + spec.varpi.matrix() + v.matrix())?;
    SpdMatrix::new(DMatrix::identity(d, d) - shifted.inverse().matrix())
}

/// `Ricc⁻(u) = ϖ + (I + u)⁻¹u`.
pub fn ricc_minus(spec: &RiccatiSpec, u: &SymMatrix) -> Result<SpdMatrix> {
    same_dim(spec.dim(), u.dim())?;
    check_psd(u)?;
    let d = spec.dim();
    let iu = SpdMatrix::new(DMatrix::identity(d, d) + u.matrix())?;
    SpdMatrix::new(spec.varpi.matrix() + DMatrix::identity(d, d) - iu.inverse().matrix())
}

/// `n` applications of `Ricc_ϖ` starting at `v0`.
pub fn iterate(spec: &RiccatiSpec, v0: &SymMatrix, n: usize) -> Result<SymMatrix> {
    let mut v = v0.clone();
    for _ in 0..n {
        v = ricc_map(spec, &v)?.sym();
    }
    Ok(v)
}

/// `r = −ϖ/2 + (ϖ + ϖ²/4)^{1/2}` and `u = ϖ/2 + (ϖ + ϖ²/4)^{1/2}`.
pub fn fixed_points(spec: &RiccatiSpec) -> RiccatiFixedPoints {
    // r solves r² + ϖr = ϖ; the form 2w / (w + √(w² + 4w)) avoids cancellation.
    let r_of = |w: f64| 2.0 * w / (w + (w * w + 4.0 * w).sqrt());
    let r = SpdMatrix::new(spec.varpi.map_spectrum(r_of)).expect("fixed point is SPD");
    let u = SpdMatrix::new(spec.varpi.map_spectrum(|w| r_of(w) + w))
        .expect("shifted fixed point is SPD");
    RiccatiFixedPoints { r, u }
}

/// Directed product of `(I + u_k)⁻¹` along `u_{k+1} = Ricc⁻(u_k)` and its
/// Floquet closed form.
pub fn floquet_semigroup(spec: &RiccatiSpec, u0: &SymMatrix, n: usize) -> Result<FloquetResult> {
    same_dim(spec.dim(), u0.dim())?;
    check_psd(u0)?;
    let d = spec.dim();
    let id = DMatrix::<f64>::identity(d, d);

    let mut e_product = id.clone();
    let mut u = u0.clone();
    for _ in 0..n {
        let iu = SpdMatrix::new(&id + u.matrix())?;
        e_product = iu.inverse().matrix() * e_product;
        u = ricc_minus(spec, &u)?.sym();
    }

    let fp = fixed_points(spec);
    let u_inf = fp.u;
    let nn = n as f64;
    let g_n = u_inf.map_spectrum(|x| {
        let q = 1.0 / (1.0 + x);
        q * (1.0 - q.powf(2.0 * nn)) / (1.0 - q * q)
    });
    let g_limit = u_inf.map_spectrum(|x| {
        let q = 1.0 / (1.0 + x);
        q / (1.0 - q * q)
    });
    let lead = u_inf.map_spectrum(|x| (1.0 + x).powf(-nn));
    let correction = &id + (u0.matrix() - u_inf.matrix()) * &g_n;
    let sv = correction.clone().singular_values();
    let correction_condition = sv.max() / sv.min();
    let e_floquet = right_solve(&lead, &correction)?;

    let bound = contraction_bound(spec);
    Ok(FloquetResult {
        e_product,
        e_floquet,
        data: FloquetData {
            u_inf,
            g_n,
            g_limit,
            psi: bound.psi,
            phi: bound.phi,
            correction_condition,
        },
    })
}

pub fn contraction_bound(spec: &RiccatiSpec) -> ContractionBound {
    let u = fixed_points(spec).u;
    let psi = (1.0 + 1.0 / u.lambda_min()) * (1.0 + u.lambda_max());
    let phi = psi / (1.0 + spec.varpi.lambda_min());
    let rate = (1.0 + u.lambda_min()).powi(-2);
    ContractionBound { psi, phi, rate }
}

/// Scalar flow `υ_n = Ricc_ϖ^n(υ_0)` in closed form.
pub fn closed_form_1d(varpi: f64, v0: f64, n: usize) -> Result<f64> {
    if !(varpi > 0.0 && varpi.is_finite()) || !(v0 >= 0.0 && v0.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "need varpi > 0 and v0 >= 0, got ({varpi}, {v0})"
        )));
    }
    let r = 2.0 * varpi / (varpi + (varpi * varpi + 4.0 * varpi).sqrt());
    let rho = (1.0 + r + varpi).powi(-2);
    let rn = rho.powi(n as i32);
    let num = (v0 - r) * (varpi + 2.0 * r) * rn;
    let den = (v0 + varpi + r) * (1.0 - rn) + (varpi + 2.0 * r) * rn;
    Ok(r + num / den)
}

/// Löwner envelopes `(I + ϖ⁻¹)⁻¹ ≤ Ricc^n(v) ≤ (I + (ϖ + I)⁻¹)⁻¹` for `v ≥ 0`.
///
/// The lower envelope holds from `n = 1`. The upper one needs the flow to
/// have entered `[0, I]` first, so it holds from `n = 2` (from `n = 1` when
/// `v ≤ I`).
pub fn monotone_envelopes(spec: &RiccatiSpec) -> (SpdMatrix, SpdMatrix) {
    let lower = SpdMatrix::new(spec.varpi.map_spectrum(|w| w / (1.0 + w))).expect("SPD");
    let upper = SpdMatrix::new(spec.varpi.map_spectrum(|w| (w + 1.0) / (w + 2.0))).expect("SPD");
    (lower, upper)
}

/// Fixed-point iteration from `v0`, stopping when `‖Ricc(v) − v‖₂ ≤ tol` or
/// after `10·⌈log(tol)/log(rate)⌉` steps. Returns the iterate and the
/// number of steps taken.
pub fn iterate_to_fixed_point(
    spec: &RiccatiSpec,
    v0: &SymMatrix,
    tol: f64,
) -> Result<(SpdMatrix, usize)> {
    let rate = contraction_bound(spec).rate;
    let cap = (10.0 * (tol.ln() / rate.ln()).ceil()).max(1.0) as usize;
    let mut v = ricc_map(spec, v0)?;
    for k in 1..=cap {
        let next = ricc_map(spec, &v.sym())?;
        let res = spectral_norm(&(next.matrix() - v.matrix()));
        v = next;
        if res <= tol {
            return Ok((v, k + 1));
        }
    }
    Ok((v, cap + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_spd, rng};
    use crate::spd::loewner_le;
    use approx::assert_abs_diff_eq;

    fn s(x: f64) -> SymMatrix {
        SymMatrix::from_rows(&[vec![x]]).unwrap()
    }

    #[test]
    fn ricc_map_scalar_cases() {
        let spec = RiccatiSpec::scalar(1.0).unwrap();
        assert_abs_diff_eq!(
            ricc_map(&spec, &s(0.0)).unwrap().matrix()[(0, 0)],
            0.5,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            ricc_map(&spec, &s(0.5)).unwrap().matrix()[(0, 0)],
            0.6,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            ricc_map(&spec, &s(0.618034)).unwrap().matrix()[(0, 0)],
            0.618034,
            epsilon = 1e-6
        );
        assert!(matches!(
            ricc_map(&spec, &s(-0.1)),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn fixed_point_cases() {
        let fp = fixed_points(&RiccatiSpec::scalar(1.0).unwrap());
        assert_abs_diff_eq!(
            fp.r.matrix()[(0, 0)],
            (5f64.sqrt() - 1.0) / 2.0,
            epsilon = 1e-15
        );
        let fp = fixed_points(&RiccatiSpec::new(
            SpdMatrix::from_diagonal(&[1.0, 4.0]).unwrap(),
        ));
        assert_abs_diff_eq!(fp.r.matrix()[(0, 0)], 0.618034, epsilon = 1e-6);
        assert_abs_diff_eq!(
            fp.r.matrix()[(1, 1)],
            -2.0 + 2.0 * 2f64.sqrt(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn fixed_point_invariants_on_random_varpi() {
        let mut g = rng(21);
        for d in 1..=6 {
            let spec = RiccatiSpec::new(random_spd(&mut g, d, 0.05));
            let fp = fixed_points(&spec);
            let id = DMatrix::identity(d, d);
            assert!(
                spectral_norm(&(ricc_map(&spec, &fp.r.sym()).unwrap().matrix() - fp.r.matrix()))
                    <= 1e-11
            );
            let quad =
                fp.r.matrix() + fp.r.matrix() * spec.varpi.inverse().matrix() * fp.r.matrix();
            assert!(spectral_norm(&(quad - &id)) <= 1e-10);
            let commut = spec.varpi.matrix() * fp.r.matrix() - fp.r.matrix() * spec.varpi.matrix();
            assert!(spectral_norm(&commut) <= 1e-10);
            let (lo, hi) = monotone_envelopes(&spec);
            assert!(loewner_le(lo.matrix(), fp.r.matrix(), 1e-12));
            assert!(loewner_le(fp.r.matrix(), &id, 1e-12));
            assert!(loewner_le(fp.r.matrix(), hi.matrix(), 1e-12));
        }
    }

    #[test]
    fn floquet_cases() {
        let spec = RiccatiSpec::scalar(1.0).unwrap();
        let f = floquet_semigroup(&spec, &s(1.0), 2).unwrap();
        assert_abs_diff_eq!(f.e_product[(0, 0)], 0.2, epsilon = 1e-14);
        assert_abs_diff_eq!(f.e_floquet[(0, 0)], 0.2, epsilon = 1e-12);
        let f0 = floquet_semigroup(&spec, &s(1.0), 0).unwrap();
        assert_eq!(f0.e_product[(0, 0)], 1.0);
        assert_abs_diff_eq!(f0.e_floquet[(0, 0)], 1.0, epsilon = 1e-15);
        let u_inf = fixed_points(&spec).u;
        let fs = floquet_semigroup(&spec, &u_inf.sym(), 3).unwrap();
        assert_abs_diff_eq!(
            fs.e_product[(0, 0)],
            (1.0 + u_inf.matrix()[(0, 0)]).powi(-3),
            epsilon = 1e-14
        );
    }

    #[test]
    fn floquet_matches_product_on_random_matrices() {
        let mut g = rng(22);
        for d in [2, 3, 5] {
            let spec = RiccatiSpec::new(random_spd(&mut g, d, 0.1));
            let u0 = random_spd(&mut g, d, 0.0).sym();
            for n in [1, 5, 20, 60] {
                let f = floquet_semigroup(&spec, &u0, n).unwrap();
                let scale = spectral_norm(&f.e_product).max(1e-300);
                assert!(
                    spectral_norm(&(&f.e_product - &f.e_floquet)) <= 1e-9 * scale.max(1.0),
                    "d={d} n={n}"
                );
                let bound = f.data.psi * (1.0 + f.data.u_inf.lambda_min()).powi(-(n as i32));
                assert!(spectral_norm(&f.e_product) <= bound * (1.0 + 1e-12));
                assert!(loewner_le(&f.data.g_n, &f.data.g_limit, 1e-12));
            }
        }
    }

    #[test]
    fn contraction_cases() {
        let b = contraction_bound(&RiccatiSpec::scalar(1.0).unwrap());
        assert_abs_diff_eq!(b.rate, 0.145898, epsilon = 1e-6);
        let b = contraction_bound(&RiccatiSpec::scalar(100.0).unwrap());
        let u = 50.0 + (100.0f64 + 2500.0).sqrt();
        assert_abs_diff_eq!(b.rate, (1.0 + u).powi(-2), epsilon = 1e-15);
        assert!((b.rate - 9.6e-5).abs() < 1e-6);
    }

    #[test]
    fn contraction_holds_on_random_pairs() {
        let mut g = rng(23);
        for _ in 0..50 {
            let spec = RiccatiSpec::new(random_spd(&mut g, 5, 0.02));
            let b = contraction_bound(&spec);
            let v0 = random_spd(&mut g, 5, 0.0).sym();
            let w0 = random_spd(&mut g, 5, 0.0).sym();
            let gap0 = spectral_norm(&(v0.matrix() - w0.matrix()));
            let (mut v, mut w) = (
                ricc_map(&spec, &v0).unwrap().sym(),
                ricc_map(&spec, &w0).unwrap().sym(),
            );
            for n in 0..25 {
                let gap = spectral_norm(&(v.matrix() - w.matrix()));
                assert!(gap <= b.phi * b.phi * b.rate.powi(n) * gap0 * (1.0 + 1e-9) + 1e-15);
                v = ricc_map(&spec, &v).unwrap().sym();
                w = ricc_map(&spec, &w).unwrap().sym();
            }
        }
    }

    #[test]
    fn closed_form_cases() {
        assert_abs_diff_eq!(
            closed_form_1d(1.0, 1.0, 1).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-15
        );
        assert_eq!(closed_form_1d(1.0, 0.3, 0).unwrap(), 0.3);
        assert_abs_diff_eq!(
            closed_form_1d(1.0, 1.0, 50).unwrap(),
            (5f64.sqrt() - 1.0) / 2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn closed_form_rate_is_sharp() {
        let (w, v0) = (0.7, 2.0);
        let r = fixed_points(&RiccatiSpec::scalar(w).unwrap()).r.matrix()[(0, 0)];
        let rho = (1.0 + r + w).powi(-2);
        let ratios: Vec<f64> = (10..14)
            .map(|n| (closed_form_1d(w, v0, n).unwrap() - r) / rho.powi(n as i32))
            .collect();
        assert!(ratios[0] > 0.0);
        assert!((ratios[3] - ratios[2]).abs() < 1e-6 * ratios[3]);
    }

    #[test]
    fn envelopes_contain_flow() {
        let spec = RiccatiSpec::scalar(1.0).unwrap();
        let (lo, hi) = monotone_envelopes(&spec);
        assert_abs_diff_eq!(lo.matrix()[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(hi.matrix()[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        let spec3 = RiccatiSpec::new(SpdMatrix::identity(3));
        let (lo, hi) = monotone_envelopes(&spec3);
        assert_abs_diff_eq!(
            lo.matrix(),
            &(DMatrix::identity(3, 3) * 0.5),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            hi.matrix(),
            &(DMatrix::identity(3, 3) * (2.0 / 3.0)),
            epsilon = 1e-15
        );
        let mut g = rng(24);
        let spec = RiccatiSpec::new(random_spd(&mut g, 4, 0.1));
        let (lo, hi) = monotone_envelopes(&spec);
        let mut v = (random_spd(&mut g, 4, 0.0).matrix() * 10.0).clone();
        for n in 1..=40 {
            v = ricc_map(&spec, &SymMatrix::new(v).unwrap())
                .unwrap()
                .matrix()
                .clone();
            assert!(loewner_le(lo.matrix(), &v, 1e-12));
            assert!(n == 1 || loewner_le(&v, hi.matrix(), 1e-12));
        }
    }

    #[test]
    fn monotone_in_loewner_order() {
        let mut g = rng(25);
        let spec = RiccatiSpec::new(random_spd(&mut g, 3, 0.1));
        for _ in 0..20 {
            let v = random_spd(&mut g, 3, 0.0);
            let w = SymMatrix::new(v.matrix() + random_spd(&mut g, 3, 0.0).matrix()).unwrap();
            let rv = ricc_map(&spec, &v.sym()).unwrap();
            let rw = ricc_map(&spec, &w).unwrap();
            assert!(loewner_le(rv.matrix(), rw.matrix(), 1e-13));
        }
    }

    #[test]
    fn fixed_point_iteration_converges() {
        let spec = RiccatiSpec::scalar(1.0).unwrap();
        let (v, steps) = iterate_to_fixed_point(&spec, &s(0.0), 1e-13).unwrap();
        assert_abs_diff_eq!(
            v.matrix()[(0, 0)],
            (5f64.sqrt() - 1.0) / 2.0,
            epsilon = 1e-12
        );
        assert!(steps < 40);
    }
}
