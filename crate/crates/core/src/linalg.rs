//! Small dense linear-algebra helpers on top of `nalgebra`.
//!
//! Complex eigen-decompositions come from the complex Schur form
//! `M = Q T Q^H`; eigenvectors are recovered by back substitution on the
//! triangular factor, and the left eigenvectors are the rows of `V^{-1}`,
//! so spectral projectors read
//!
//! ```text
//!   Pi_S = sum_{k in S} v_k w_k ,   W = V^{-1}
//! ```

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;
pub type CVec = DVector<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| C64::new(x, 0.0))
}

pub fn to_complex_vec(v: &RVec) -> CVec {
    v.map(|x| C64::new(x, 0.0))
}

/// Eigenvalues with right eigenvectors (columns of `vectors`) and the dual
/// basis of left eigenvectors (rows of `left`).
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<C64>,
    pub vectors: CMat,
    pub left: CMat,
}

impl Eigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Spectral projector onto the span of the listed eigenvectors.
    pub fn projector(&self, idx: &[usize]) -> CMat {
        let n = self.dim();
        let mut p = CMat::zeros(n, n);
        for &k in idx {
            p += self.vectors.column(k) * self.left.row(k);
        }
        p
    }

    /// Columns of the listed eigenvectors, in the given order.
    pub fn columns(&self, idx: &[usize]) -> CMat {
        let n = self.dim();
        let mut m = CMat::zeros(n, idx.len());
        for (c, &k) in idx.iter().enumerate() {
            m.set_column(c, &self.vectors.column(k));
        }
        m
    }
}

/// Complex eigen-decomposition of a square matrix.
pub fn eigen(m: &CMat) -> Result<Eigen> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch(format!("eigen of {}x{} matrix", n, m.ncols())));
    }
    if n == 0 {
        return Ok(Eigen { values: vec![], vectors: CMat::zeros(0, 0), left: CMat::zeros(0, 0) });
    }
    let scale = m.iter().map(|z| z.norm()).fold(0.0_f64, f64::max).max(1e-300);
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Degenerate("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let values: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    let tiny = 1e3 * f64::EPSILON * scale;
    let mut y = CMat::zeros(n, n);
    for k in 0..n {
        y[(k, k)] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = C64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                s += t[(i, j)] * y[(j, k)];
            }
            let mut den = t[(i, i)] - t[(k, k)];
            if den.norm() < tiny {
                den = C64::new(tiny, 0.0);
            }
            y[(i, k)] = -s / den;
        }
    }
    let mut v = q * y;
    for k in 0..n {
        let nrm = v.column(k).norm();
        if nrm > 0.0 {
            let inv = 1.0 / nrm;
            v.column_mut(k).scale_mut(inv);
        }
    }
    let left = v
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("eigenvector matrix is singular (defective matrix)".into()))?;
    Ok(Eigen { values, vectors: v, left })
}

/// Thin orthonormal basis of the column span (QR, `Q` factor).
pub fn orthonormal_columns(v: &CMat) -> CMat {
    if v.ncols() == 0 {
        return CMat::zeros(v.nrows(), 0);
    }
    v.clone().qr().q()
}

pub fn det_c(m: &CMat) -> C64 {
    if m.nrows() == 0 {
        return C64::new(1.0, 0.0);
    }
    m.clone().lu().determinant()
}

pub fn inv_c(m: &CMat) -> Option<CMat> {
    if m.nrows() == 0 {
        return Some(CMat::zeros(0, 0));
    }
    m.clone().try_inverse()
}

pub fn inv_r(m: &RMat) -> Option<RMat> {
    m.clone().try_inverse()
}

/// Singular values of a complex matrix, descending.
pub fn singular_values_c(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return vec![];
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// 2-norm condition number; infinite for singular input.
pub fn cond_c(m: &CMat) -> f64 {
    let s = singular_values_c(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (None, None) => 1.0,
        _ => f64::INFINITY,
    }
}

/// Spectral (operator 2-) norm of a real matrix.
pub fn op_norm(m: &RMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.iter().copied().fold(0.0, f64::max)
}

pub fn op_norm_c(m: &CMat) -> f64 {
    singular_values_c(m).first().copied().unwrap_or(0.0)
}

/// Largest eigenvalue of the symmetric part `(M + M^T)/2`.
pub fn sym_max_eig(m: &RMat) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(s).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn sym_min_eig(m: &RMat) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(s).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Maximum of `|a_ij|` off the diagonal.
pub fn offdiag_max(m: &RMat) -> f64 {
    let mut best = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                best = best.max(m[(i, j)].abs());
            }
        }
    }
    best
}

/// Frobenius norm of the off-diagonal part.
pub fn offdiag_fro(m: &RMat) -> f64 {
    let mut s = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

pub fn diag(v: &[f64]) -> RMat {
    RMat::from_diagonal(&RVec::from_column_slice(v))
}

pub fn max_abs(m: &RMat) -> f64 {
    m.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub fn max_abs_c(m: &CMat) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// Row-major nested vector view, used for JSON output.
pub fn rows_of(m: &RMat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<RMat> {
    let r = rows.len();
    let c = rows.first().map(|x| x.len()).unwrap_or(0);
    if rows.iter().any(|x| x.len() != c) {
        return Err(Error::DimensionMismatch("ragged matrix rows".into()));
    }
    Ok(RMat::from_fn(r, c, |i, j| rows[i][j]))
}
