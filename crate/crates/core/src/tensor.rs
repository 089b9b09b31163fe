//! Dense K-way tensors and the multilinear operations on them.
//!
//! Entries are stored column-major: the first index varies fastest. Modes are
//! indexed from zero. The mode-k matricization places index `i_k` on the rows
//! and enumerates the remaining indices on the columns, again with the lowest
//! remaining mode varying fastest. Under these two conventions
//!
//! ```text
//! vec(X x {A_1, ..., A_K}) = (A_K ⊗ ... ⊗ A_1) vec(X)
//! (X x {A_1, ..., A_K})_(k) = A_k X_(k) (A_K ⊗ ... ⊗ A_{k+1} ⊗ A_{k-1} ⊗ ... ⊗ A_1)^T
//! ```
//!
//! hold without any permutation.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::LowerTriangular;

pub type Matrix = DMatrix<f64>;

/// Largest Kronecker product dimension `kron_list` builds by default.
pub const DEFAULT_KRON_CAP: usize = 4096;

/// Tensor dimensions `(p_1, ..., p_K)`, each at least one.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    dims: Vec<usize>,
    len: usize,
}

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidShape("a tensor needs at least one mode".into()));
        }
        let mut len = 1usize;
        for &d in &dims {
            if d == 0 {
                return Err(Error::InvalidShape(format!("zero dimension in {dims:?}")));
            }
            len = len
                .checked_mul(d)
                .ok_or_else(|| Error::InvalidShape(format!("product of {dims:?} overflows")))?;
        }
        Ok(Shape { dims, len })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    /// Total number of entries.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Shape with `extra` appended as a new trailing mode.
    pub fn with_trailing(&self, extra: usize) -> Result<Shape> {
        let mut dims = self.dims.clone();
        dims.push(extra);
        Shape::new(dims)
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            Err(Error::ModeOutOfRange { mode, order: self.order() })
        } else {
            Ok(())
        }
    }

    /// Products of the dims strictly before and strictly after `mode`.
    fn split(&self, mode: usize) -> (usize, usize) {
        let left = self.dims[..mode].iter().product();
        let right = self.dims[mode + 1..].iter().product();
        (left, right)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from column-major data, rejecting non-finite entries.
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if data.len() != shape.len() {
            return Err(Error::DimensionMismatch(format!(
                "shape {:?} needs {} entries, got {}",
                shape.dims(),
                shape.len(),
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        let data = vec![0.0; shape.len()];
        Tensor { shape, data }
    }

    pub fn from_shape_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        Tensor::new(shape.dims, data)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn order(&self) -> usize {
        self.shape.order()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Entry at a multi-index.
    pub fn get(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.order());
        let mut flat = 0;
        let mut stride = 1;
        for (&i, &d) in index.iter().zip(self.dims()) {
            assert!(i < d, "index {i} out of bounds for dimension {d}");
            flat += i * stride;
            stride *= d;
        }
        self.data[flat]
    }

    pub fn scale(&self, c: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    /// Sum of squared entries.
    pub fn frob_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// The mode-k matricization, a `p_k x (p / p_k)` matrix.
    pub fn matricize(&self, mode: usize) -> Result<Matrix> {
        self.shape.check_mode(mode)?;
        let pk = self.dims()[mode];
        let (left, right) = self.shape.split(mode);
        let cols = left * right;
        let mut out = Matrix::zeros(pk, cols);
        for b in 0..right {
            for i in 0..pk {
                let src = left * (i + pk * b);
                for a in 0..left {
                    out[(i, a + left * b)] = self.data[src + a];
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`Tensor::matricize`].
    pub fn unmatricize(m: &Matrix, mode: usize, shape: &Shape) -> Result<Tensor> {
        shape.check_mode(mode)?;
        let pk = shape.dims()[mode];
        let (left, right) = shape.split(mode);
        if m.nrows() != pk || m.ncols() != left * right {
            return Err(Error::DimensionMismatch(format!(
                "a {}x{} matrix cannot be the mode-{mode} unfolding of {:?}",
                m.nrows(),
                m.ncols(),
                shape.dims()
            )));
        }
        let mut data = vec![0.0; shape.len()];
        for b in 0..right {
            for i in 0..pk {
                let dst = left * (i + pk * b);
                for a in 0..left {
                    data[dst + a] = m[(i, a + left * b)];
                }
            }
        }
        Ok(Tensor { shape: shape.clone(), data })
    }

    /// Multiplies along a single mode: `Y_(k) = A X_(k)`. `A` may be
    /// rectangular; mode k of the result has `A.nrows()` entries.
    pub fn mode_product(&self, mode: usize, a: &Matrix) -> Result<Tensor> {
        self.shape.check_mode(mode)?;
        let pk = self.dims()[mode];
        if a.ncols() != pk {
            return Err(Error::DimensionMismatch(format!(
                "mode {mode} has {pk} entries but the matrix has {} columns",
                a.ncols()
            )));
        }
        let unfolded = self.matricize(mode)?;
        let product = a * unfolded;
        let mut dims = self.dims().to_vec();
        dims[mode] = a.nrows();
        Tensor::unmatricize(&product, mode, &Shape::new(dims)?)
    }

    /// Tucker product `X x {A_k}` over the listed modes; unlisted modes act
    /// as the identity.
    pub fn tucker_product(&self, mats: &[(usize, &Matrix)]) -> Result<Tensor> {
        check_distinct(mats.iter().map(|(m, _)| *m))?;
        let mut out = self.clone();
        for &(mode, a) in mats {
            out = out.mode_product(mode, a)?;
        }
        Ok(out)
    }

    /// `X x {Psi_k^{-1}}` over the listed modes, by forward substitution.
    pub fn tucker_solve_lower(&self, factors: &[(usize, &LowerTriangular)]) -> Result<Tensor> {
        check_distinct(factors.iter().map(|(m, _)| *m))?;
        let mut out = self.clone();
        for &(mode, psi) in factors {
            out.shape.check_mode(mode)?;
            let solved = psi.solve(&out.matricize(mode)?)?;
            out = Tensor::unmatricize(&solved, mode, &out.shape)?;
        }
        Ok(out)
    }

    /// Removes the sample mean along the trailing mode by applying the
    /// `(n-1) x n` Helmert contrast matrix to it.
    pub fn center_samples(&self) -> Result<Tensor> {
        let last = self.order() - 1;
        let n = self.dims()[last];
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "centering needs at least two samples, got {n}"
            )));
        }
        self.mode_product(last, &helmert(n))
    }

    /// Reads a `.tnsr.json` file.
    pub fn read_json(path: impl AsRef<Path>) -> Result<Tensor> {
        let text = std::fs::read_to_string(path)?;
        Tensor::from_json_str(&text)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Tensor> {
        let file: TensorFile = serde_json::from_str(text)?;
        if file.order != COL_MAJOR {
            return Err(Error::InvalidArgument(format!(
                "unsupported entry order {:?}, expected {COL_MAJOR:?}",
                file.order
            )));
        }
        Tensor::new(file.dims, file.data)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let file = TensorFileRef {
            dims: self.dims(),
            order: COL_MAJOR,
            data: &self.data,
        };
        Ok(serde_json::to_string(&file)?)
    }
}

const COL_MAJOR: &str = "col-major";

#[derive(Deserialize)]
struct TensorFile {
    dims: Vec<usize>,
    order: String,
    data: Vec<f64>,
}

#[derive(Serialize)]
struct TensorFileRef<'a> {
    dims: &'a [usize],
    order: &'a str,
    data: &'a [f64],
}

fn check_distinct(modes: impl Iterator<Item = usize>) -> Result<()> {
    let mut seen = Vec::new();
    for m in modes {
        if seen.contains(&m) {
            return Err(Error::DuplicateMode(m));
        }
        seen.push(m);
    }
    Ok(())
}

/// The `(n-1) x n` Helmert sub-matrix: orthonormal rows, each orthogonal to
/// the ones vector.
pub fn helmert(n: usize) -> Matrix {
    assert!(n >= 2);
    let mut h = Matrix::zeros(n - 1, n);
    for i in 1..n {
        let norm = ((i * (i + 1)) as f64).sqrt();
        for j in 0..i {
            h[(i - 1, j)] = 1.0 / norm;
        }
        h[(i - 1, i)] = -(i as f64) / norm;
    }
    h
}

/// Kronecker product `M_1 ⊗ M_2 ⊗ ...` of square matrices in the given order,
/// refused above [`DEFAULT_KRON_CAP`].
pub fn kron_list(mats: &[&Matrix]) -> Result<Matrix> {
    kron_list_with_cap(mats, DEFAULT_KRON_CAP)
}

pub fn kron_list_with_cap(mats: &[&Matrix], cap: usize) -> Result<Matrix> {
    let mut dim = 1usize;
    for m in mats {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "Kronecker factor is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        dim = dim.saturating_mul(m.nrows());
    }
    if dim > cap {
        return Err(Error::KronCapExceeded { dim, cap });
    }
    let mut out = Matrix::from_element(1, 1, 1.0);
    for m in mats {
        out = out.kronecker(*m);
    }
    Ok(out)
}
