//! Structured square matrices and the Cholesky kernel.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Relative pivot threshold below which a matrix is declared not positive definite.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

const SYMMETRY_TOLERANCE: f64 = 1e-12;
const ORTHOGONALITY_TOLERANCE: f64 = 1e-10;

fn check_square(m: &Matrix) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "expected a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if let Some(i) = m.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

/// Lower triangular matrix with strictly positive diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerTriangular(Matrix);

impl LowerTriangular {
    pub fn new(m: Matrix) -> Result<Self> {
        check_square(&m)?;
        let q = m.nrows();
        for j in 0..q {
            if m[(j, j)] <= 0.0 {
                return Err(Error::NonPositiveDiagonal { index: j, value: m[(j, j)] });
            }
            for i in 0..j {
                if m[(i, j)] != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({i}, {j}) above the diagonal is nonzero"
                    )));
                }
            }
        }
        Ok(LowerTriangular(m))
    }

    pub fn identity(q: usize) -> Self {
        LowerTriangular(Matrix::identity(q, q))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn log_det(&self) -> f64 {
        self.0.diagonal().iter().map(|d| d.ln()).sum()
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        LowerTriangular::new(&self.0 * c)
    }

    /// Solves `L Y = B` by forward substitution.
    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        if b.nrows() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "cannot solve a {q}x{q} triangular system against {} rows",
                b.nrows(),
                q = self.dim()
            )));
        }
        let mut y = b.clone();
        forward_substitute(&self.0, &mut y);
        Ok(y)
    }

    /// Solves `L^T Y = B` by back substitution.
    pub fn solve_transpose(&self, b: &Matrix) -> Result<Matrix> {
        if b.nrows() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "cannot solve a {q}x{q} triangular system against {} rows",
                b.nrows(),
                q = self.dim()
            )));
        }
        let mut y = b.clone();
        let q = self.dim();
        for c in 0..y.ncols() {
            for i in (0..q).rev() {
                let mut s = y[(i, c)];
                for k in i + 1..q {
                    s -= self.0[(k, i)] * y[(k, c)];
                }
                y[(i, c)] = s / self.0[(i, i)];
            }
        }
        Ok(y)
    }

    pub fn inverse(&self) -> Matrix {
        let q = self.dim();
        let mut inv = Matrix::identity(q, q);
        forward_substitute(&self.0, &mut inv);
        inv
    }

    /// `L L^T`.
    pub fn gram(&self) -> Matrix {
        &self.0 * self.0.transpose()
    }
}

fn forward_substitute(l: &Matrix, y: &mut Matrix) {
    let q = l.nrows();
    for c in 0..y.ncols() {
        for i in 0..q {
            let mut s = y[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * y[(k, c)];
            }
            y[(i, c)] = s / l[(i, i)];
        }
    }
}

/// Upper triangular matrix with strictly positive diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct UpperTriangular(Matrix);

impl UpperTriangular {
    pub fn new(m: Matrix) -> Result<Self> {
        let lower = LowerTriangular::new(m.transpose())?;
        Ok(UpperTriangular(lower.into_matrix().transpose()))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// Symmetric positive definite matrix, stored with its lower Cholesky factor.
#[derive(Clone, Debug, PartialEq)]
pub struct Spd {
    matrix: Matrix,
    chol: LowerTriangular,
}

impl Spd {
    /// Validates symmetry (relative to the largest entry) and positive
    /// definiteness, then stores the exactly symmetrized matrix.
    pub fn new(m: Matrix) -> Result<Self> {
        check_square(&m)?;
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_TOLERANCE * scale {
            return Err(Error::NotSymmetric(asym / scale));
        }
        let matrix = (&m + m.transpose()) * 0.5;
        let chol = cholesky_lower(&matrix)?;
        Ok(Spd { matrix, chol })
    }

    /// Symmetrizes before validating; for matrices that are symmetric only up
    /// to accumulated rounding (products like `A S A^T`).
    pub fn from_symmetrized(m: Matrix) -> Result<Self> {
        check_square(&m)?;
        Spd::new((&m + m.transpose()) * 0.5)
    }

    pub fn from_lower(l: &LowerTriangular) -> Self {
        Spd::from_symmetrized(l.gram()).expect("L L^T with positive diagonal is positive definite")
    }

    pub fn identity(q: usize) -> Self {
        Spd {
            matrix: Matrix::identity(q, q),
            chol: LowerTriangular::identity(q),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Lower Cholesky factor `L` with `L L^T = self`.
    pub fn chol(&self) -> &LowerTriangular {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.log_det()
    }

    pub fn inverse(&self) -> Spd {
        let linv = self.chol.inverse();
        Spd::from_symmetrized(linv.transpose() * linv).expect("inverse of an SPD matrix is SPD")
    }

    pub fn scale(&self, c: f64) -> Result<Spd> {
        if c <= 0.0 || !c.is_finite() {
            return Err(Error::InvalidArgument(format!("SPD scale factor {c} must be positive")));
        }
        Spd::new(&self.matrix * c)
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

/// Orthogonal matrix, `||Q^T Q - I||_max <= 1e-10`.
#[derive(Clone, Debug, PartialEq)]
pub struct Orthogonal(Matrix);

impl Orthogonal {
    pub fn new(m: Matrix) -> Result<Self> {
        check_square(&m)?;
        let q = m.nrows();
        let dev = (m.transpose() * &m - Matrix::identity(q, q)).amax();
        if dev > ORTHOGONALITY_TOLERANCE {
            return Err(Error::NotOrthogonal(dev));
        }
        Ok(Orthogonal(m))
    }

    pub fn identity(q: usize) -> Self {
        Orthogonal(Matrix::identity(q, q))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// Lower Cholesky factor of a symmetric matrix (only the lower triangle is
/// read). Fails when a pivot drops to `1e-12 * max diagonal` or below.
pub fn cholesky_lower(m: &Matrix) -> Result<LowerTriangular> {
    check_square(m)?;
    let q = m.nrows();
    let max_diag = m.diagonal().iter().fold(0.0f64, |a, &d| a.max(d));
    let threshold = PIVOT_TOLERANCE * max_diag;
    let mut l = Matrix::zeros(q, q);
    for j in 0..q {
        let mut pivot = m[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > threshold) || max_diag <= 0.0 {
            return Err(Error::NotPositiveDefinite { column: j, pivot });
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in j + 1..q {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(LowerTriangular(l))
}

/// Lower Cholesky factor `L`, `L L^T = M`.
pub fn chol_lower(m: &Spd) -> LowerTriangular {
    m.chol().clone()
}

/// Upper Cholesky factor `U`, `U U^T = M`, computed as `J chol_lower(J M J) J`
/// with `J` the exchange permutation.
pub fn chol_upper(m: &Spd) -> UpperTriangular {
    let flipped = exchange(m.matrix());
    let l = cholesky_lower(&flipped).expect("a permuted SPD matrix is SPD");
    UpperTriangular(exchange(l.matrix()))
}

/// `J M J`: reverses both row and column order.
fn exchange(m: &Matrix) -> Matrix {
    let (r, c) = m.shape();
    Matrix::from_fn(r, c, |i, j| m[(r - 1 - i, c - 1 - j)])
}
