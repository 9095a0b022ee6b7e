//! Seeded generators for reproducible sampling and random test problems.
//!
//! Streams come from ChaCha8 with a fixed seed; Gaussian variates use the
//! ziggurat transform of `rand_distr`, so draws are identical across platforms.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::spd::SpdMatrix;
use crate::spd::SymMatrix;

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn standard_normal_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

pub fn standard_normal_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `a a'/d + floor·I` for Gaussian `a`; eigenvalues are bounded below by `floor`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, d: usize, floor: f64) -> SpdMatrix {
    let a = standard_normal_matrix(rng, d, d);
    let m = &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * floor;
    SpdMatrix::new(m).expect("shifted Gram matrix is SPD")
}

pub fn random_sym<R: Rng + ?Sized>(rng: &mut R, d: usize) -> SymMatrix {
    SymMatrix::new(standard_normal_matrix(rng, d, d)).expect("finite")
}

/// Well-conditioned invertible matrix `1.5·I + a/(2√d)`.
///
/// `‖a‖₂ ≈ 2√d`, so the singular values stay near `[0.5, 2.5]` in every
/// dimension; the rejection loop only guards rare large draws.
pub fn random_invertible<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DMatrix<f64> {
    loop {
        let a = standard_normal_matrix(rng, d, d) / (2.0 * (d as f64).sqrt())
            + DMatrix::identity(d, d) * 1.5;
        let sv = a.clone().singular_values();
        if sv.min() > 0.2 * sv.max() {
            return a;
        }
    }
}
