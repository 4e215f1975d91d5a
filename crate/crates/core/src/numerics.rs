//! Dense linear algebra shared by every other module.
//!
//! Matrices are small (the largest LMI block in practice is around 12x12),
//! so everything here is dense and backed by `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

/// Dense real matrix, row/column counts may be zero.
pub type Mat = DMatrix<f64>;
/// Dense real column vector.
pub type Vector = DVector<f64>;

/// Condition number above which a linear system is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("NonFiniteMatrix: matrix contains NaN or infinite entries")]
    NonFiniteMatrix,
    #[error("SingularSystem: condition estimate {condition:.3e} exceeds {SINGULAR_CONDITION:.0e}")]
    SingularSystem { condition: f64 },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Symmetric matrix stored as its packed upper triangle (row-major).
///
/// Only `dim * (dim + 1) / 2` entries exist, so the represented matrix is
/// symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat {
    dim: usize,
    upper: Vec<f64>,
}

impl SymMat {
    pub fn zeros(dim: usize) -> Self {
        SymMat {
            dim,
            upper: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut s = Self::zeros(dim);
        for i in 0..dim {
            s.set(i, i, 1.0);
        }
        s
    }

    /// Builds from the packed upper triangle (row-major).
    pub fn from_packed(dim: usize, upper: Vec<f64>) -> Result<Self, NumericsError> {
        if upper.len() != dim * (dim + 1) / 2 {
            return Err(NumericsError::DimensionMismatch(format!(
                "packed length {} does not match dim {dim}",
                upper.len()
            )));
        }
        Ok(SymMat { dim, upper })
    }

    /// Takes the upper triangle of a square matrix; the lower triangle is ignored.
    pub fn from_upper(m: &Mat) -> Result<Self, NumericsError> {
        ensure_square(m)?;
        let dim = m.nrows();
        let mut upper = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in i..dim {
                upper.push(m[(i, j)]);
            }
        }
        Ok(SymMat { dim, upper })
    }

    /// Symmetric part `(m + m^T) / 2` of a square matrix.
    pub fn symmetric_part(m: &Mat) -> Result<Self, NumericsError> {
        ensure_square(m)?;
        let dim = m.nrows();
        let mut upper = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in i..dim {
                upper.push(0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
        Ok(SymMat { dim, upper })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn packed(&self) -> &[f64] {
        &self.upper
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[self.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let k = self.index(i, j);
        self.upper[k] = value;
    }

    fn index(&self, i: usize, j: usize) -> usize {
        assert!(i < self.dim && j < self.dim, "index ({i},{j}) out of range");
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // rows 0..i hold dim + (dim-1) + ... + (dim-i+1) entries
        i * self.dim - (i * i - i) / 2 + (j - i)
    }

    pub fn to_mat(&self) -> Mat {
        Mat::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn is_finite(&self) -> bool {
        self.upper.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, factor: f64) -> Self {
        SymMat {
            dim: self.dim,
            upper: self.upper.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn add(&self, other: &SymMat) -> Result<Self, NumericsError> {
        if self.dim != other.dim {
            return Err(NumericsError::DimensionMismatch(format!(
                "cannot add symmetric matrices of dim {} and {}",
                self.dim, other.dim
            )));
        }
        Ok(SymMat {
            dim: self.dim,
            upper: self
                .upper
                .iter()
                .zip(&other.upper)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// Eigenvalues in no particular order.
    pub fn eigenvalues(&self) -> Result<Vector, NumericsError> {
        if !self.is_finite() {
            return Err(NumericsError::NonFiniteMatrix);
        }
        if self.dim == 0 {
            return Ok(Vector::zeros(0));
        }
        Ok(SymmetricEigen::new(self.to_mat()).eigenvalues)
    }
}

fn ensure_square(m: &Mat) -> Result<(), NumericsError> {
    if m.is_square() {
        Ok(())
    } else {
        Err(NumericsError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

/// Largest eigenvalue of a symmetric matrix. An empty matrix yields `-inf`.
pub fn sym_eig_max(m: &SymMat) -> Result<f64, NumericsError> {
    Ok(m.eigenvalues()?
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Smallest eigenvalue of a symmetric matrix. An empty matrix yields `+inf`.
pub fn sym_eig_min(m: &SymMat) -> Result<f64, NumericsError> {
    Ok(m.eigenvalues()?
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min))
}

/// 2-norm condition number from the singular values.
pub fn condition_number(a: &Mat) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Smallest singular value.
pub fn min_singular_value(a: &Mat) -> f64 {
    if a.is_empty() {
        return f64::INFINITY;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Solves `a x = b` for square `a`, rejecting systems whose condition number
/// exceeds [`SINGULAR_CONDITION`].
pub fn solve_linear(a: &Mat, b: &Mat) -> Result<Mat, NumericsError> {
    ensure_square(a)?;
    if b.nrows() != a.nrows() {
        return Err(NumericsError::DimensionMismatch(format!(
            "right-hand side has {} rows, expected {}",
            b.nrows(),
            a.nrows()
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFiniteMatrix);
    }
    if a.nrows() == 0 {
        return Ok(Mat::zeros(0, b.ncols()));
    }
    let condition = condition_number(a);
    if !(condition <= SINGULAR_CONDITION) {
        return Err(NumericsError::SingularSystem { condition });
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or(NumericsError::SingularSystem {
            condition: f64::INFINITY,
        })
}

/// `He{m} = m + m^T`.
pub fn he(m: &Mat) -> Result<SymMat, NumericsError> {
    ensure_square(m)?;
    let dim = m.nrows();
    let mut upper = Vec::with_capacity(dim * (dim + 1) / 2);
    for i in 0..dim {
        for j in i..dim {
            upper.push(m[(i, j)] + m[(j, i)]);
        }
    }
    Ok(SymMat { dim, upper })
}

/// Largest real part over the eigenvalues of a general square matrix.
pub fn spectral_abscissa(a: &Mat) -> Result<f64, NumericsError> {
    ensure_square(a)?;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFiniteMatrix);
    }
    if a.nrows() == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Orthonormal basis (as columns) of the null space of `a`, computed from the
/// full SVD. Singular values below `tol * max(1, sigma_max)` count as zero.
pub fn null_space(a: &Mat, tol: f64) -> Mat {
    let cols = a.ncols();
    if a.nrows() == 0 {
        return Mat::identity(cols, cols);
    }
    // pad to at least `cols` rows so the SVD yields a full right basis
    let rows = a.nrows().max(cols);
    let mut padded = Mat::zeros(rows, cols);
    padded.view_mut((0, 0), (a.nrows(), cols)).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = tol * sigma_max.max(1.0);
    let kept: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] <= cutoff)
        .collect();
    let mut basis = Mat::zeros(cols, kept.len());
    for (c, &k) in kept.iter().enumerate() {
        for r in 0..cols {
            basis[(r, c)] = v_t[(k, r)];
        }
    }
    basis
}

/// Horizontal concatenation; all parts must share a row count.
pub fn hstack(parts: &[&Mat]) -> Mat {
    let rows = parts.first().map_or(0, |p| p.nrows());
    let cols = parts.iter().map(|p| p.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c = 0;
    for p in parts {
        assert_eq!(p.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c), (rows, p.ncols())).copy_from(*p);
        c += p.ncols();
    }
    out
}

/// Vertical concatenation; all parts must share a column count.
pub fn vstack(parts: &[&Mat]) -> Mat {
    let cols = parts.first().map_or(0, |p| p.ncols());
    let rows = parts.iter().map(|p| p.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        assert_eq!(p.ncols(), cols, "vstack column mismatch");
        out.view_mut((r, 0), (p.nrows(), cols)).copy_from(*p);
        r += p.nrows();
    }
    out
}

/// Block-diagonal matrix.
pub fn block_diag(parts: &[&Mat]) -> Mat {
    let rows = parts.iter().map(|p| p.nrows()).sum();
    let cols = parts.iter().map(|p| p.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for p in parts {
        out.view_mut((r, c), (p.nrows(), p.ncols())).copy_from(*p);
        r += p.nrows();
        c += p.ncols();
    }
    out
}

/// `rows x dim` selector whose rows pick `len` consecutive coordinates
/// starting at `start`; its transpose embeds a block into the full space.
pub fn selector(start: usize, len: usize, dim: usize) -> Mat {
    let mut e = Mat::zeros(len, dim);
    for k in 0..len {
        e[(k, start + k)] = 1.0;
    }
    e
}

/// Max-abs entry; zero for empty matrices.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
