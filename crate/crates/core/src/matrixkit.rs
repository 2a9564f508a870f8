//! Dense symmetric-matrix toolkit.
//!
//! Everything downstream (whitening, Schur complements, information matrices)
//! goes through the helpers here, so the numerical thresholds live in one
//! place:
//!
//! | threshold | value | used for |
//! |-----------|-------|----------|
//! | [`SYMMETRY_TOL`] | 1e-12 | accepting user matrices as symmetric |
//! | [`EIGEN_CLAMP`] | 1e-10 | eigenvalues clamped to zero before square-rooting |
//! | [`NOT_PSD_REL`] | 1e-8 | relative negativity that makes `sym_sqrt` fail |
//! | [`MAX_CONDITION`] | 1e12 | condition estimate treated as singular |
//! | [`PSD_TOL`] | 1e-10 | PSD test, scaled by the norm when it exceeds one |

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const EIGEN_CLAMP: f64 = 1e-10;
pub const NOT_PSD_REL: f64 = 1e-8;
pub const MAX_CONDITION: f64 = 1e12;
pub const PSD_TOL: f64 = 1e-10;

/// Square real matrix that is symmetric and finite.
///
/// Construction from user data checks symmetry to [`SYMMETRY_TOL`] and then
/// stores the exactly symmetrized matrix, so downstream code can rely on
/// `M == Mᵀ` bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let mut worst = 0.0_f64;
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                let gap = (a - b).abs();
                if gap > SYMMETRY_TOL * a.abs().max(b.abs()).max(1.0) {
                    worst = worst.max(gap);
                }
            }
        }
        if worst > 0.0 {
            return Err(Error::Asymmetric {
                max_asymmetry: worst,
            });
        }
        Ok(Self::symmetrize(&m))
    }

    /// Returns `(M + Mᵀ)/2` without validation. Intended for results of
    /// products that are symmetric in exact arithmetic.
    pub fn symmetrize(m: &Matrix) -> Self {
        debug_assert!(m.is_square());
        SymMatrix((m + m.transpose()) * 0.5)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Matrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Matrix::zeros(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(Matrix::from_diagonal(&Vector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &other.0)
    }

    pub fn scale(&self, factor: f64) -> SymMatrix {
        SymMatrix(&self.0 * factor)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        sorted_eigen(&self.0).0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues().last().copied().unwrap_or(0.0)
    }

    /// Largest absolute eigenvalue (the spectral norm for symmetric input).
    pub fn spectral_norm(&self) -> f64 {
        let ev = self.eigenvalues();
        ev.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        matrix_rows(&self.0)
    }
}

impl Deref for SymMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(Error::DimensionMismatch("empty matrix".into()));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch(format!(
            "row {bad} has {} entries, expected {ncols}",
            rows[bad].len()
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending and the
/// eigenvector columns permuted to match.
pub fn sorted_eigen(m: &Matrix) -> (Vec<f64>, Matrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), Matrix::zeros(0, 0));
    }
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Norm-scaled PSD tolerance: `PSD_TOL` absolute, times ‖M‖₂ when that exceeds one.
pub fn psd_tolerance(m: &SymMatrix) -> f64 {
    PSD_TOL * m.spectral_norm().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdCheck {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
}

pub fn is_psd(m: &SymMatrix, tol: f64) -> PsdCheck {
    let min_eigenvalue = m.min_eigenvalue();
    PsdCheck {
        is_psd: min_eigenvalue >= -tol,
        min_eigenvalue,
    }
}

/// Condition estimate `λ_max/λ_min` of a symmetric matrix; infinite when the
/// smallest eigenvalue is not positive.
pub fn spd_condition(m: &SymMatrix) -> f64 {
    let ev = m.eigenvalues();
    match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Condition estimate `σ_max/σ_min` of a general square matrix.
pub fn condition(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let hi = sv.max();
    let lo = sv.min();
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Unique symmetric PSD square root `L` with `L·Lᵀ = M`.
///
/// Eigenvalues down to `-EIGEN_CLAMP` are treated as zero; anything below
/// `-NOT_PSD_REL·‖M‖₂` is rejected. Negatives in between are also clamped.
pub fn sym_sqrt(m: &SymMatrix) -> Result<SymMatrix> {
    let (values, vectors) = sorted_eigen(m);
    let norm = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if let Some(&lo) = values.first() {
        if lo < -NOT_PSD_REL * norm && lo < -EIGEN_CLAMP {
            return Err(Error::NotPsd { min_eigenvalue: lo });
        }
    }
    let roots: Vec<f64> = values.iter().map(|&v| v.max(0.0).sqrt()).collect();
    Ok(spectral_map(&vectors, &roots))
}

/// `M^{-1/2}` for a positive definite matrix: the inverse of [`sym_sqrt`].
pub fn inv_sym_sqrt(m: &SymMatrix) -> Result<SymMatrix> {
    let (values, vectors) = sorted_eigen(m);
    let lo = values.first().copied().unwrap_or(1.0);
    let hi = values.last().copied().unwrap_or(1.0);
    if lo <= 0.0 {
        return Err(Error::NotPd { min_eigenvalue: lo });
    }
    if hi / lo > MAX_CONDITION {
        return Err(Error::Singular {
            what: "covariance",
            condition: hi / lo,
        });
    }
    let inv_roots: Vec<f64> = values.iter().map(|&v| 1.0 / v.sqrt()).collect();
    Ok(spectral_map(&vectors, &inv_roots))
}

fn spectral_map(vectors: &Matrix, diag: &[f64]) -> SymMatrix {
    let mut scaled = vectors.clone();
    for (j, d) in diag.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*d);
    }
    SymMatrix::symmetrize(&(scaled * vectors.transpose()))
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &SymMatrix, what: &'static str) -> Result<SymMatrix> {
    let chol = spd_cholesky(m, what)?;
    Ok(SymMatrix::symmetrize(&chol.inverse()))
}

/// Cholesky factorization guarded by a condition estimate.
pub fn spd_cholesky(m: &SymMatrix, what: &'static str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let min_eigenvalue = m.min_eigenvalue();
    if min_eigenvalue <= 0.0 {
        return Err(Error::NotPd { min_eigenvalue });
    }
    let cond = spd_condition(m);
    if cond > MAX_CONDITION {
        return Err(Error::Singular {
            what,
            condition: cond,
        });
    }
    nalgebra::Cholesky::new(m.as_matrix().clone()).ok_or(Error::NotPd { min_eigenvalue })
}

/// Inverse of a general square matrix via LU, with a condition check.
pub fn inverse(m: &Matrix, what: &'static str) -> Result<Matrix> {
    let cond = condition(m);
    if cond > MAX_CONDITION {
        return Err(Error::Singular {
            what,
            condition: cond,
        });
    }
    m.clone().lu().try_inverse().ok_or(Error::Singular {
        what,
        condition: cond,
    })
}

/// `‖a − b‖_F / max(‖a‖_F, ‖b‖_F)`, zero when both vanish.
pub fn frobenius_rel(a: &Matrix, b: &Matrix) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

/// Joint noise covariance of two sensor groups, stored by blocks.
///
/// The assembled matrix `[[Σ_v, Σ_vu], [Σ_vuᵀ, Σ_u]]` is checked positive
/// definite on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCovariance {
    sigma_v: SymMatrix,
    sigma_u: SymMatrix,
    sigma_vu: Matrix,
}

impl BlockCovariance {
    pub fn new(sigma_v: SymMatrix, sigma_u: SymMatrix, sigma_vu: Matrix) -> Result<Self> {
        if sigma_vu.nrows() != sigma_v.dim() || sigma_vu.ncols() != sigma_u.dim() {
            return Err(Error::DimensionMismatch(format!(
                "cross covariance is {}x{}, expected {}x{}",
                sigma_vu.nrows(),
                sigma_vu.ncols(),
                sigma_v.dim(),
                sigma_u.dim()
            )));
        }
        if sigma_vu.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let block = BlockCovariance {
            sigma_v,
            sigma_u,
            sigma_vu,
        };
        let joint = block.joint();
        let min_eigenvalue = joint.min_eigenvalue();
        if min_eigenvalue <= psd_tolerance(&joint) {
            return Err(Error::NotPd { min_eigenvalue });
        }
        Ok(block)
    }

    /// Block-diagonal joint covariance (uncorrelated groups).
    pub fn uncorrelated(sigma_v: SymMatrix, sigma_u: SymMatrix) -> Result<Self> {
        let zeros = Matrix::zeros(sigma_v.dim(), sigma_u.dim());
        Self::new(sigma_v, sigma_u, zeros)
    }

    pub fn sigma_v(&self) -> &SymMatrix {
        &self.sigma_v
    }

    pub fn sigma_u(&self) -> &SymMatrix {
        &self.sigma_u
    }

    pub fn sigma_vu(&self) -> &Matrix {
        &self.sigma_vu
    }

    pub fn sigma_uv(&self) -> Matrix {
        self.sigma_vu.transpose()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.sigma_v.dim(), self.sigma_u.dim())
    }

    pub fn joint(&self) -> SymMatrix {
        let (n1, n2) = self.dims();
        let mut m = Matrix::zeros(n1 + n2, n1 + n2);
        m.view_mut((0, 0), (n1, n1)).copy_from(self.sigma_v.as_matrix());
        m.view_mut((n1, n1), (n2, n2)).copy_from(self.sigma_u.as_matrix());
        m.view_mut((0, n1), (n1, n2)).copy_from(&self.sigma_vu);
        m.view_mut((n1, 0), (n2, n1)).copy_from(&self.sigma_vu.transpose());
        SymMatrix(m)
    }
}

/// The four blocks of `Σ⁻¹` for a [`BlockCovariance`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockInverse {
    pub top_left: SymMatrix,
    pub top_right: Matrix,
    pub bottom_left: Matrix,
    pub bottom_right: SymMatrix,
}

impl BlockInverse {
    pub fn assemble(&self) -> Matrix {
        let (n1, n2) = (self.top_left.dim(), self.bottom_right.dim());
        let mut m = Matrix::zeros(n1 + n2, n1 + n2);
        m.view_mut((0, 0), (n1, n1)).copy_from(self.top_left.as_matrix());
        m.view_mut((0, n1), (n1, n2)).copy_from(&self.top_right);
        m.view_mut((n1, 0), (n2, n1)).copy_from(&self.bottom_left);
        m.view_mut((n1, n1), (n2, n2)).copy_from(self.bottom_right.as_matrix());
        m
    }
}

/// Inverse Schur complements of the joint covariance.
///
/// `f = (Σ_u − Σ_uv Σ_v⁻¹ Σ_vu)⁻¹`, `g = (Σ_v − Σ_vu Σ_u⁻¹ Σ_uv)⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchurFactors {
    pub f: SymMatrix,
    pub g: SymMatrix,
}

pub fn schur_factors(b: &BlockCovariance) -> Result<SchurFactors> {
    let sv_inv = spd_inverse(b.sigma_v(), "Σ_v")?;
    let su_inv = spd_inverse(b.sigma_u(), "Σ_u")?;
    let suv = b.sigma_uv();
    let comp_u = SymMatrix::symmetrize(&(b.sigma_u().as_matrix() - &suv * sv_inv.as_matrix() * b.sigma_vu()));
    let comp_v = SymMatrix::symmetrize(&(b.sigma_v().as_matrix() - b.sigma_vu() * su_inv.as_matrix() * &suv));
    Ok(SchurFactors {
        f: spd_inverse(&comp_u, "Schur complement of Σ_v")?,
        g: spd_inverse(&comp_v, "Schur complement of Σ_u")?,
    })
}

/// Blocks of `Σ⁻¹` from the block inversion identity that pivots on `Σ_v`.
pub fn block_inverse(b: &BlockCovariance) -> Result<BlockInverse> {
    let a_inv = spd_inverse(b.sigma_v(), "Σ_v")?;
    let c = b.sigma_uv();
    let comp = SymMatrix::symmetrize(&(b.sigma_u().as_matrix() - &c * a_inv.as_matrix() * b.sigma_vu()));
    let f = spd_inverse(&comp, "Schur complement of Σ_v")?;
    let a_inv_b = a_inv.as_matrix() * b.sigma_vu();
    let top_right = -(&a_inv_b * f.as_matrix());
    let top_left = SymMatrix::symmetrize(&(a_inv.as_matrix() + &a_inv_b * f.as_matrix() * a_inv_b.transpose()));
    Ok(BlockInverse {
        top_left,
        bottom_left: top_right.transpose(),
        top_right,
        bottom_right: f,
    })
}

/// Blocks of `Σ⁻¹` from the alternative identity that pivots on `Σ_u`.
pub fn block_inverse_alt(b: &BlockCovariance) -> Result<BlockInverse> {
    let d_inv = spd_inverse(b.sigma_u(), "Σ_u")?;
    let c = b.sigma_uv();
    let comp = SymMatrix::symmetrize(&(b.sigma_v().as_matrix() - b.sigma_vu() * d_inv.as_matrix() * &c));
    let g = spd_inverse(&comp, "Schur complement of Σ_u")?;
    let d_inv_c = d_inv.as_matrix() * &c;
    let bottom_left = -(&d_inv_c * g.as_matrix());
    let bottom_right = SymMatrix::symmetrize(&(d_inv.as_matrix() + &d_inv_c * g.as_matrix() * d_inv_c.transpose()));
    Ok(BlockInverse {
        top_left: g,
        top_right: bottom_left.transpose(),
        bottom_left,
        bottom_right,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(r: &[&[f64]]) -> Matrix {
        matrix_from_rows(&r.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let i2 = SymMatrix::identity(2);
        assert_eq!(sym_sqrt(&i2).unwrap().as_matrix(), i2.as_matrix());
        let d = sym_sqrt(&SymMatrix::from_diagonal(&[4.0, 9.0])).unwrap();
        assert!((d[(0, 0)] - 2.0).abs() < 1e-14);
        assert!((d[(1, 1)] - 3.0).abs() < 1e-14);
        assert_eq!(d[(0, 1)], 0.0);
    }

    #[test]
    fn sqrt_clamps_tiny_negative_eigenvalues() {
        let m = SymMatrix::from_diagonal(&[1.0, -5e-11]);
        let l = sym_sqrt(&m).unwrap();
        assert_eq!(l[(1, 1)], 0.0);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let m = SymMatrix::from_diagonal(&[1.0, -0.5]);
        assert!(matches!(sym_sqrt(&m), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn asymmetric_input_rejected() {
        let m = rows(&[&[1.0, 0.2], &[0.1, 1.0]]);
        assert!(matches!(SymMatrix::new(m), Err(Error::Asymmetric { .. })));
        let m = Matrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 1.0]);
        assert_eq!(SymMatrix::new(m), Err(Error::NonFinite));
        assert_eq!(matrix_from_rows(&[vec![f64::INFINITY]]), Err(Error::NonFinite));
    }

    #[test]
    fn psd_checks() {
        let c = is_psd(&SymMatrix::identity(3), 1e-10);
        assert!(c.is_psd);
        assert!((c.min_eigenvalue - 1.0).abs() < 1e-15);
        let c = is_psd(&SymMatrix::from_diagonal(&[1.0, -0.5]), 1e-10);
        assert!(!c.is_psd);
        assert!((c.min_eigenvalue + 0.5).abs() < 1e-15);
        let a = Vector::from_vec(vec![0.3, -1.2, 2.0]);
        let c = is_psd(&SymMatrix::symmetrize(&(&a * a.transpose())), 1e-10);
        assert!(c.is_psd);
        assert!(c.min_eigenvalue.abs() < 1e-10);
    }

    #[test]
    fn block_inverse_of_block_diagonal_has_zero_off_blocks() {
        let b = BlockCovariance::uncorrelated(
            SymMatrix::from_diagonal(&[2.0, 4.0]),
            SymMatrix::from_diagonal(&[5.0]),
        )
        .unwrap();
        let inv = block_inverse(&b).unwrap();
        assert!(inv.top_right.iter().all(|&v| v == 0.0));
        assert!(inv.bottom_left.iter().all(|&v| v == 0.0));
        assert!((inv.top_left[(1, 1)] - 0.25).abs() < 1e-15);
        assert!((inv.bottom_right[(0, 0)] - 0.2).abs() < 1e-15);
        let sf = schur_factors(&b).unwrap();
        assert!((sf.f[(0, 0)] - 0.2).abs() < 1e-15);
        assert!((sf.g[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn scalar_blocks_match_two_by_two_formula() {
        let c = 0.5;
        let b = BlockCovariance::new(
            SymMatrix::identity(1),
            SymMatrix::identity(1),
            rows(&[&[c]]),
        )
        .unwrap();
        let k = 1.0 / (1.0 - c * c);
        for inv in [block_inverse(&b).unwrap(), block_inverse_alt(&b).unwrap()] {
            let m = inv.assemble();
            assert!((m[(0, 0)] - k).abs() < 1e-14);
            assert!((m[(0, 1)] + c * k).abs() < 1e-14);
            assert!((m[(1, 0)] + c * k).abs() < 1e-14);
            assert!((m[(1, 1)] - k).abs() < 1e-14);
        }
        let sf = schur_factors(&b).unwrap();
        assert!((sf.f[(0, 0)] - k).abs() < 1e-14);
        assert!((sf.g[(0, 0)] - k).abs() < 1e-14);
    }

    #[test]
    fn joint_not_pd_is_rejected() {
        let r = BlockCovariance::new(SymMatrix::identity(1), SymMatrix::identity(1), rows(&[&[1.0]]));
        assert!(matches!(r, Err(Error::NotPd { .. })));
        let r = BlockCovariance::new(SymMatrix::identity(2), SymMatrix::identity(1), rows(&[&[0.1, 0.1]]));
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn singular_matrix_inverse_fails() {
        let m = rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(inverse(&m, "m"), Err(Error::Singular { .. })));
        let s = SymMatrix::new(rows(&[&[1.0, 1.0], &[1.0, 1.0 + 1e-14]])).unwrap();
        assert!(spd_inverse(&s, "s").is_err());
    }
}
