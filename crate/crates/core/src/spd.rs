//! Symmetric and positive definite matrices.
//!
//! [`SpdMatrix`] caches its eigendecomposition on construction, so square
//! roots, inverses and log-determinants are all spectral functions of one
//! decomposition. Inputs whose smallest eigenvalue falls below
//! `SPD_RELATIVE_FLOOR * lambda_max` are rejected rather than regularized.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a matrix is not accepted as SPD.
pub const SPD_RELATIVE_FLOOR: f64 = 1e-12;

/// Symmetric matrix, symmetrized as `(a + a')/2` on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&m)?;
        Ok(Self { m: symmetrize(&m) })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn identity(d: usize) -> Self {
        Self {
            m: DMatrix::identity(d, d),
        }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            m: DMatrix::zeros(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.m.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues()[0]
    }
}

/// Symmetric positive definite matrix with a cached eigendecomposition.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    m: DMatrix<f64>,
    evals: DVector<f64>,
    evecs: DMatrix<f64>,
    lambda_min: f64,
    lambda_max: f64,
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m
    }
}

impl SpdMatrix {
    /// Symmetrizes `m` and certifies positive definiteness.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&m)?;
        let m = symmetrize(&m);
        let eig = SymmetricEigen::new(m.clone());
        let lambda_min = eig.eigenvalues.min();
        let lambda_max = eig.eigenvalues.max();
        if !(lambda_min > 0.0 && lambda_min > SPD_RELATIVE_FLOOR * lambda_max) {
            return Err(Error::NotSpd {
                lambda_min,
                lambda_max,
            });
        }
        Ok(Self {
            m,
            evals: eig.eigenvalues,
            evecs: eig.eigenvectors,
            lambda_min,
            lambda_max,
        })
    }

    pub fn from_sym(s: &SymMatrix) -> Result<Self> {
        Self::new(s.m.clone())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn identity(d: usize) -> Self {
        Self::new(DMatrix::identity(d, d)).expect("identity is SPD")
    }

    pub fn scaled_identity(d: usize, s: f64) -> Result<Self> {
        Self::new(DMatrix::identity(d, d) * s)
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn scalar(x: f64) -> Result<Self> {
        Self::from_diagonal(&[x])
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn sym(&self) -> SymMatrix {
        SymMatrix { m: self.m.clone() }
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.evals
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.evecs
    }

    /// `V f(Λ) V'` for a scalar function `f` of the eigenvalues.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let fl = self.evals.map(f);
        let scaled = &self.evecs * DMatrix::from_diagonal(&fl);
        symmetrize(&(scaled * self.evecs.transpose()))
    }

    pub fn sqrt(&self) -> SpdMatrix {
        self.spectral(f64::sqrt)
    }

    pub fn inv_sqrt(&self) -> SpdMatrix {
        self.spectral(|x| 1.0 / x.sqrt())
    }

    pub fn inverse(&self) -> SpdMatrix {
        self.spectral(|x| 1.0 / x)
    }

    pub fn powf(&self, p: f64) -> SpdMatrix {
        self.spectral(|x| x.powf(p))
    }

    fn spectral(&self, f: impl Fn(f64) -> f64) -> SpdMatrix {
        let evals = self.evals.map(&f);
        let m = {
            let scaled = &self.evecs * DMatrix::from_diagonal(&evals);
            symmetrize(&(scaled * self.evecs.transpose()))
        };
        let (lo, hi) = (evals.min(), evals.max());
        SpdMatrix {
            m,
            evals,
            evecs: self.evecs.clone(),
            lambda_min: lo,
            lambda_max: hi,
        }
    }

    pub fn log_det(&self) -> f64 {
        self.evals.iter().map(|x| x.ln()).sum()
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    /// `a * self * a'` as a symmetric matrix.
    pub fn congruence(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(a * &self.m * a.transpose()))
    }

    /// Spectral norm of `self^{-1}`.
    pub fn inverse_norm(&self) -> f64 {
        1.0 / self.lambda_min
    }

    pub fn condition_number(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.m)
    }
}

/// Spectral summary of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub log_det: Option<f64>,
    pub frobenius: f64,
    pub spectral_norm: f64,
    /// `max_i ‖a v_i − λ_i v_i‖` over the computed eigenpairs.
    pub residual: f64,
}

/// Principal symmetric square root.
pub fn sqrt_spd(a: &SpdMatrix) -> SpdMatrix {
    a.sqrt()
}

/// Geometric mean `u ♯ v = v^{1/2} (v^{-1/2} u v^{-1/2})^{1/2} v^{1/2}`, the
/// unique SPD solution of `g u⁻¹ g = v`.
pub fn geometric_mean(u: &SpdMatrix, v: &SpdMatrix) -> Result<SpdMatrix> {
    same_dim(u.dim(), v.dim())?;
    let vh = v.sqrt();
    let vih = v.inv_sqrt();
    let inner = SpdMatrix::new(u.congruence(vih.matrix()))?.sqrt();
    SpdMatrix::new(inner.congruence(vh.matrix()))
}

/// Bures–Wasserstein distance `(Tr u + Tr v − 2 Tr (v^{1/2} u v^{1/2})^{1/2})^{1/2}`.
pub fn bures_wasserstein(u: &SpdMatrix, v: &SpdMatrix) -> Result<f64> {
    same_dim(u.dim(), v.dim())?;
    let vh = v.sqrt();
    let cross = SpdMatrix::new(u.congruence(vh.matrix()))?.sqrt().trace();
    Ok((u.trace() + v.trace() - 2.0 * cross).max(0.0).sqrt())
}

/// Burg divergence `Tr(s1 s2⁻¹ − I) − log det(s1 s2⁻¹)`.
pub fn burg_divergence(s1: &SpdMatrix, s2: &SpdMatrix) -> Result<f64> {
    same_dim(s1.dim(), s2.dim())?;
    // Evaluated on the congruent matrix s2^{-1/2} s1 s2^{-1/2}.
    let w = SpdMatrix::new(s1.congruence(s2.inv_sqrt().matrix()))?;
    let d = s1.dim() as f64;
    Ok((w.trace() - d - w.log_det()).max(0.0))
}

pub fn spectral_report(a: &SymMatrix) -> SpectralReport {
    let eig = SymmetricEigen::new(a.m.clone());
    let lambda_min = eig.eigenvalues.min();
    let lambda_max = eig.eigenvalues.max();
    let mut residual: f64 = 0.0;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        residual = residual.max((&a.m * v - v * l).norm());
    }
    let log_det = if lambda_min > SPD_RELATIVE_FLOOR * lambda_max && lambda_min > 0.0 {
        Some(eig.eigenvalues.iter().map(|x| x.ln()).sum())
    } else {
        None
    };
    SpectralReport {
        lambda_min,
        lambda_max,
        log_det,
        frobenius: a.m.norm(),
        spectral_norm: lambda_min.abs().max(lambda_max.abs()),
        residual,
    }
}

/// `u ≤ v` in Löwner order, up to `tol` on the smallest eigenvalue of `v − u`.
pub fn loewner_le(u: &DMatrix<f64>, v: &DMatrix<f64>, tol: f64) -> bool {
    min_eigenvalue(&(v - u)) >= -tol
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(a)).eigenvalues.min()
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Solves `x a = b` for `x`, i.e. returns `b a⁻¹`.
pub fn right_solve(b: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let at = a.transpose();
    let lu = at.lu();
    lu.solve(&b.transpose())
        .map(|x| x.transpose())
        .ok_or_else(|| Error::InvalidArgument("singular system".into()))
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidArgument("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| a.row(i).iter().copied().collect())
        .collect()
}

pub(crate) fn same_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

fn check_square_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}
