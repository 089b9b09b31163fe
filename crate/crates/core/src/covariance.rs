//! The separable covariance parameter `(sigma^2, Sigma_1, ..., Sigma_K)` and
//! the group actions on data and parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{LowerTriangular, Spd};
use crate::tensor::{kron_list, Matrix, Tensor};

/// Allowed deviation of each `det(Sigma_k)` from one.
pub const DET_TOLERANCE: f64 = 1e-8;

/// `Cov(vec X) = sigma2 * (Sigma_K ⊗ ... ⊗ Sigma_1)` with every `det(Sigma_k) = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparableCovariance {
    sigma2: f64,
    factors: Vec<Spd>,
}

impl SeparableCovariance {
    /// Validates an already normalized parameter.
    pub fn new(sigma2: f64, factors: Vec<Spd>) -> Result<Self> {
        check_sigma2(sigma2)?;
        if factors.is_empty() {
            return Err(Error::InvalidArgument("at least one factor is required".into()));
        }
        for f in &factors {
            let dev = (f.log_det().exp() - 1.0).abs();
            if dev > DET_TOLERANCE {
                return Err(Error::Determinant(dev));
            }
        }
        Ok(SeparableCovariance { sigma2, factors })
    }

    /// Rescales each factor to unit determinant and moves the scale into
    /// `sigma^2`, leaving the Kronecker covariance unchanged.
    pub fn normalize_factors(sigma2_raw: f64, raw: Vec<Spd>) -> Result<Self> {
        check_sigma2(sigma2_raw)?;
        if raw.is_empty() {
            return Err(Error::InvalidArgument("at least one factor is required".into()));
        }
        let mut log_scale = sigma2_raw.ln();
        let mut factors = Vec::with_capacity(raw.len());
        for f in raw {
            let log_root = f.log_det() / f.dim() as f64;
            log_scale += log_root;
            factors.push(f.scale((-log_root).exp())?);
        }
        SeparableCovariance::new(log_scale.exp(), factors)
    }

    pub fn identity(dims: &[usize]) -> Self {
        SeparableCovariance {
            sigma2: 1.0,
            factors: dims.iter().map(|&q| Spd::identity(q)).collect(),
        }
    }

    pub fn with_sigma2(&self, sigma2: f64) -> Result<Self> {
        check_sigma2(sigma2)?;
        Ok(SeparableCovariance { sigma2, factors: self.factors.clone() })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn factors(&self) -> &[Spd] {
        &self.factors
    }

    /// `Psi_k`, the lower Cholesky factor of `Sigma_k`.
    pub fn factor_chol(&self, k: usize) -> &LowerTriangular {
        self.factors[k].chol()
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(Spd::dim).collect()
    }

    /// `p = prod p_k`.
    pub fn total_dim(&self) -> usize {
        self.factors.iter().map(Spd::dim).product()
    }

    /// The dense `p x p` covariance `sigma2 * (Sigma_K ⊗ ... ⊗ Sigma_1)`.
    pub fn full_matrix(&self) -> Result<Matrix> {
        let mats: Vec<&Matrix> = self.factors.iter().rev().map(Spd::matrix).collect();
        Ok(kron_list(&mats)? * self.sigma2)
    }

    /// `sigma2 * Sigma_k`.
    pub fn scaled_factor(&self, k: usize) -> Matrix {
        self.factors[k].matrix() * self.sigma2
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(CovarianceFile::from(self)).expect("covariance serializes")
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let file: CovarianceFile = serde_json::from_value(value)?;
        file.try_into()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(&CovarianceFile::from(self))?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: CovarianceFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("sigma2 = {sigma2} must be positive and finite")))
    }
}

/// On-disk form: factors as arrays of rows.
#[derive(Serialize, Deserialize)]
pub(crate) struct CovarianceFile {
    pub sigma2: f64,
    pub factors: Vec<Vec<Vec<f64>>>,
}

impl From<&SeparableCovariance> for CovarianceFile {
    fn from(c: &SeparableCovariance) -> Self {
        let factors = c
            .factors
            .iter()
            .map(|f| {
                let m = f.matrix();
                (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
            })
            .collect();
        CovarianceFile { sigma2: c.sigma2, factors }
    }
}

impl TryFrom<CovarianceFile> for SeparableCovariance {
    type Error = Error;

    fn try_from(file: CovarianceFile) -> Result<Self> {
        let mut factors = Vec::with_capacity(file.factors.len());
        for rows in file.factors {
            let q = rows.len();
            if rows.iter().any(|r| r.len() != q) {
                return Err(Error::DimensionMismatch("factor matrices must be square".into()));
            }
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            factors.push(Spd::new(Matrix::from_row_slice(q, q, &flat))?);
        }
        SeparableCovariance::new(file.sigma2, factors)
    }
}

/// `(a, A_1, ..., A_K)` with `a > 0` and each `det(A_k) = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    a: f64,
    mats: Vec<Matrix>,
}

impl GroupElement {
    pub fn new(a: f64, mats: Vec<Matrix>) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidArgument(format!("group scale {a} must be positive")));
        }
        for m in &mats {
            if !m.is_square() {
                return Err(Error::DimensionMismatch("group matrices must be square".into()));
            }
            let dev = (m.determinant() - 1.0).abs();
            if dev > DET_TOLERANCE {
                return Err(Error::Determinant(dev));
            }
        }
        Ok(GroupElement { a, mats })
    }

    pub fn identity(dims: &[usize]) -> Self {
        GroupElement {
            a: 1.0,
            mats: dims.iter().map(|&q| Matrix::identity(q, q)).collect(),
        }
    }

    pub fn scale(&self) -> f64 {
        self.a
    }

    pub fn mats(&self) -> &[Matrix] {
        &self.mats
    }

    pub fn inverse(&self) -> Result<Self> {
        let mats = self
            .mats
            .iter()
            .map(|m| {
                m.clone()
                    .try_inverse()
                    .ok_or_else(|| Error::InvalidArgument("group matrix is singular".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        GroupElement::new(1.0 / self.a, mats)
    }

    /// `X -> a X x {A_1, ..., A_K, I_n}` for data with a trailing sample mode.
    pub fn act_on_data(&self, x: &Tensor) -> Result<Tensor> {
        if x.order() != self.mats.len() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "group acts on {} modes but the data has {} (including the sample mode)",
                self.mats.len(),
                x.order()
            )));
        }
        let pairs: Vec<(usize, &Matrix)> = self.mats.iter().enumerate().collect();
        Ok(x.tucker_product(&pairs)?.scale(self.a))
    }

    /// `(sigma, Psi_k) -> (a sigma, A_k Psi_k)`, re-expressed through
    /// `Sigma_k -> A_k Sigma_k A_k^T` and renormalized.
    pub fn act_on_param(&self, cov: &SeparableCovariance) -> Result<SeparableCovariance> {
        if cov.order() != self.mats.len() {
            return Err(Error::DimensionMismatch(format!(
                "group has {} modes, parameter has {}",
                self.mats.len(),
                cov.order()
            )));
        }
        let mut raw = Vec::with_capacity(self.mats.len());
        for (a, f) in self.mats.iter().zip(cov.factors()) {
            if a.nrows() != f.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "group matrix is {0}x{0}, factor is {1}x{1}",
                    a.nrows(),
                    f.dim()
                )));
            }
            raw.push(Spd::from_symmetrized(a * f.matrix() * a.transpose())?);
        }
        SeparableCovariance::normalize_factors(self.a * self.a * cov.sigma2(), raw)
    }
}
