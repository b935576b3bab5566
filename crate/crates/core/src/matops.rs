//! Dense linear algebra primitives with an explicit numerical-rank policy.
//!
//! All system data is real; complex numbers only appear as eigenvalues and in
//! the PBH rank test. Every rank decision in the crate goes through
//! [`Tolerance::threshold`], so span tests, data ranks and subspace oracles
//! agree on what "numerically zero" means.

use faer::Mat;
use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Numerical rank policy: a singular value counts as nonzero when it exceeds
/// `max(rows, cols) * sigma_max * rel_rank_tol + abs_floor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel_rank_tol: f64,
    pub abs_floor: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel_rank_tol: 1e-9,
            abs_floor: 1e-12,
        }
    }
}

impl Tolerance {
    pub fn new(rel_rank_tol: f64, abs_floor: f64) -> Result<Self> {
        if !(rel_rank_tol.is_finite() && rel_rank_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rel_rank_tol must be finite and > 0, got {rel_rank_tol}"
            )));
        }
        if !(abs_floor.is_finite() && abs_floor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "abs_floor must be finite and > 0, got {abs_floor}"
            )));
        }
        Ok(Self {
            rel_rank_tol,
            abs_floor,
        })
    }

    /// Default policy with a different relative cutoff.
    pub fn with_rel(rel_rank_tol: f64) -> Result<Self> {
        Self::new(rel_rank_tol, Self::default().abs_floor)
    }

    pub fn threshold(&self, sigma_max: f64, rows: usize, cols: usize) -> f64 {
        rows.max(cols) as f64 * sigma_max * self.rel_rank_tol + self.abs_floor
    }

    /// Residual bound for data consistency checks, relative to `scale`.
    /// With the default policy this is `1e-7 * scale + 1e-12`.
    pub fn consistency_threshold(&self, scale: f64) -> f64 {
        100.0 * self.rel_rank_tol * scale + self.abs_floor
    }
}

/// Thin singular value decomposition `M = U diag(S) V^T` with `S` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vector,
    pub v: Matrix,
}

pub fn ensure_finite(what: &'static str, m: &Matrix) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Builds a matrix from row slices, rejecting ragged or non-finite input.
pub fn from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<Matrix> {
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::DimensionMismatch(format!(
            "row {i} has {} entries, expected {ncols}",
            r.len()
        )));
    }
    let m = Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
    ensure_finite("matrix", &m)?;
    Ok(m)
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn svd(m: &Matrix) -> Result<Svd> {
    ensure_finite("svd input", m)?;
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(Svd {
            u: Matrix::zeros(rows, 0),
            singular_values: Vector::zeros(0),
            v: Matrix::zeros(cols, 0),
        });
    }
    let dec = to_faer(m).thin_svd().map_err(|_| Error::SvdNoConvergence)?;
    let k = rows.min(cols);
    Ok(Svd {
        u: from_faer(dec.U()),
        singular_values: Vector::from_fn(k, |i, _| dec.S()[i]),
        v: from_faer(dec.V()),
    })
}

fn to_faer(m: &Matrix) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn count_above(s: &Vector, rows: usize, cols: usize, tol: &Tolerance) -> usize {
    let sigma_max = s.iter().copied().fold(0.0, f64::max);
    let cut = tol.threshold(sigma_max, rows, cols);
    s.iter().filter(|&&x| x > cut).count()
}

pub fn rank(m: &Matrix, tol: &Tolerance) -> Result<usize> {
    let dec = svd(m)?;
    Ok(count_above(&dec.singular_values, m.nrows(), m.ncols(), tol))
}

/// Rank of a complex matrix under the same policy (used by the PBH test).
pub fn rank_complex(m: &DMatrix<Complex<f64>>, tol: &Tolerance) -> Result<usize> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(0);
    }
    if !m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::NonFinite("complex rank input"));
    }
    let sv = Mat::from_fn(rows, cols, |i, j| m[(i, j)])
        .singular_values()
        .map_err(|_| Error::SvdNoConvergence)?;
    Ok(count_above(&Vector::from_vec(sv), rows, cols, tol))
}

/// Moore-Penrose pseudoinverse; singular values under the rank threshold are
/// treated as exact zeros.
pub fn pinv(m: &Matrix, tol: &Tolerance) -> Result<Matrix> {
    let (rows, cols) = m.shape();
    let dec = svd(m)?;
    let r = count_above(&dec.singular_values, rows, cols, tol);
    let mut out = Matrix::zeros(cols, rows);
    for k in 0..r {
        let inv = 1.0 / dec.singular_values[k];
        out += dec.v.column(k) * dec.u.column(k).transpose() * inv;
    }
    Ok(out)
}

/// Orthonormal basis (as columns) of the span of `columns`.
///
/// Columns are normalized before the SVD so the span decision does not depend
/// on how the generators are scaled; columns with norm at or below
/// `abs_floor` are treated as zero.
pub fn orthonormal_basis(dim: usize, columns: &[Vector], tol: &Tolerance) -> Result<Matrix> {
    let mut kept = Vec::with_capacity(columns.len());
    for c in columns {
        if c.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} in a {dim}-dimensional span",
                c.len()
            )));
        }
        let norm = c.norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite("span generator"));
        }
        if norm > tol.abs_floor {
            kept.push(c / norm);
        }
    }
    if kept.is_empty() || dim == 0 {
        return Ok(Matrix::zeros(dim, 0));
    }
    let c = Matrix::from_columns(&kept);
    let dec = svd(&c)?;
    let r = count_above(&dec.singular_values, c.nrows(), c.ncols(), tol);
    Ok(dec.u.columns(0, r).into_owned())
}

/// Least-squares residual of projecting `v` onto the column span of `basis`,
/// which must have orthonormal columns.
pub fn projection_residual(basis: &Matrix, v: &Vector) -> f64 {
    if basis.ncols() == 0 {
        return v.norm();
    }
    let coeffs = basis.tr_mul(v);
    (v - basis * coeffs).norm()
}

/// Residual bound used by [`span_contains`] for a vector `v` tested against
/// `k` generators in `dim` dimensions.
pub fn span_threshold(v: &Vector, k: usize, tol: &Tolerance) -> f64 {
    tol.threshold(v.norm().max(1.0), v.len(), k)
}

/// Whether `v` lies in the span of `candidates`. An empty list spans `{0}`.
pub fn span_contains(candidates: &[Vector], v: &Vector, tol: &Tolerance) -> Result<bool> {
    let dim = v.len();
    let basis = orthonormal_basis(dim, candidates, tol)?;
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("span test vector"));
    }
    Ok(projection_residual(&basis, v) <= span_threshold(v, candidates.len(), tol))
}

pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalues of a non-square {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    ensure_finite("eigenvalue input", m)?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let eig = to_faer(m)
        .eigenvalues()
        .map_err(|_| Error::EigenNoConvergence)?;
    Ok(eig.into_iter().map(|z| Complex::new(z.re, z.im)).collect())
}

pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}
