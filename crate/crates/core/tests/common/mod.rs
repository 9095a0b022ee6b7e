//! Problem generators shared by the integration tests.
#![allow(dead_code)]

use gbridge::bridge::BridgeProblem;
use gbridge::random::{random_invertible, random_spd, rng, standard_normal_vector};
use gbridge::{DMatrix, DVector, GaussianDist, KernelParams, SpdMatrix};
use rand::Rng;

pub fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

pub fn scalar_problem(m: f64, s: f64, mb: f64, sb: f64, a: f64, b: f64, t: f64) -> BridgeProblem {
    let g = |m: f64, s: f64| GaussianDist::new(v(&[m]), SpdMatrix::scalar(s).unwrap()).unwrap();
    let theta = KernelParams::new(
        v(&[a]),
        DMatrix::from_element(1, 1, b),
        SpdMatrix::scalar(t).unwrap(),
    )
    .unwrap();
    BridgeProblem::new(g(m, s), g(mb, sb), theta).unwrap()
}

/// Centered unit marginals with the heat kernel of unit variance.
pub fn c1() -> BridgeProblem {
    scalar_problem(0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0)
}

/// `C1` with means moved to 1 and 3.
pub fn c2() -> BridgeProblem {
    scalar_problem(1.0, 1.0, 3.0, 1.0, 0.0, 1.0, 1.0)
}

/// Nearly singular `σ` against `σ̄ = I`,
/// `θ = (0, I, I)`, `m ∼ N(0, 10 I)` from a fixed seed, `m̄ = 0`.
pub fn nearly_singular_2d() -> BridgeProblem {
    let mut g = rng(2);
    let m = standard_normal_vector(&mut g, 2) * 10f64.sqrt();
    let sigma = SpdMatrix::from_rows(&[vec![10.0, 9.99], vec![9.99, 10.0]]).unwrap();
    let eta = GaussianDist::new(m, sigma).unwrap();
    let mu = GaussianDist::new(DVector::zeros(2), SpdMatrix::identity(2)).unwrap();
    BridgeProblem::new(eta, mu, KernelParams::heat(2, 1.0).unwrap()).unwrap()
}

pub fn random_problem(seed: u64, d: usize) -> BridgeProblem {
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
    let theta = KernelParams::new(
        standard_normal_vector(&mut g, d),
        random_invertible(&mut g, d),
        random_spd(&mut g, d, 0.3),
    )
    .unwrap();
    BridgeProblem::new(eta, mu, theta).unwrap()
}

/// 1-D problem whose marginals sit well inside `[−8, 8]`.
pub fn random_scalar_problem(seed: u64) -> BridgeProblem {
    let mut g = rng(seed);
    let mut u = |lo: f64, hi: f64| g.random_range(lo..hi);
    let sign = if u(0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
    scalar_problem(
        u(-1.0, 1.0),
        u(0.4, 1.2),
        u(-1.0, 1.0),
        u(0.4, 1.2),
        u(-0.5, 0.5),
        sign * u(0.5, 1.5),
        u(0.5, 2.0),
    )
}
