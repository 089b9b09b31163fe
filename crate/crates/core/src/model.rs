//! Array normal density and sampling.
//!
//! Data tensors carry a trailing sample mode: `n` draws of a
//! `p_1 x ... x p_K` array are stored as a `p_1 x ... x p_K x n` tensor.

use rand::Rng;

use crate::covariance::SeparableCovariance;
use crate::error::{Error, Result};
use crate::linalg::{LowerTriangular, Spd};
use crate::samplers::standard_normal_matrix;
use crate::tensor::{Matrix, Shape, Tensor};

/// Checks that `x` is `dims x n` and returns `n`.
pub fn sample_count(x: &Tensor, dims: &[usize]) -> Result<usize> {
    let xd = x.dims();
    if xd.len() != dims.len() + 1 || &xd[..dims.len()] != dims {
        return Err(Error::DimensionMismatch(format!(
            "data of shape {xd:?} does not match parameter dims {dims:?} plus a sample mode"
        )));
    }
    Ok(xd[dims.len()])
}

/// `||X x {Psi_1^{-1}, ..., Psi_K^{-1}, I_n}||^2`.
pub fn whitened_norm_sq(x: &Tensor, chols: &[&LowerTriangular]) -> Result<f64> {
    let pairs: Vec<(usize, &LowerTriangular)> = chols.iter().copied().enumerate().collect();
    Ok(x.tucker_solve_lower(&pairs)?.frob_norm_sq())
}

/// Log density of `x` under `N(0, sigma2 (Sigma_K ⊗ ... ⊗ Sigma_1))` for
/// factors that need not have unit determinant.
pub fn log_density_raw(x: &Tensor, sigma2: f64, factors: &[Spd]) -> Result<f64> {
    let dims: Vec<usize> = factors.iter().map(Spd::dim).collect();
    let n = sample_count(x, &dims)? as f64;
    let p: f64 = dims.iter().map(|&d| d as f64).product();
    let chols: Vec<&LowerTriangular> = factors.iter().map(Spd::chol).collect();
    let quad = whitened_norm_sq(x, &chols)?;
    let det_term: f64 = factors.iter().map(|f| (p / f.dim() as f64) * f.log_det()).sum();
    Ok(-0.5 * n * p * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * n * p * sigma2.ln()
        - 0.5 * n * det_term
        - quad / (2.0 * sigma2))
}

pub fn log_density(x: &Tensor, cov: &SeparableCovariance) -> Result<f64> {
    log_density_raw(x, cov.sigma2(), cov.factors())
}

/// `sigma Z x {Psi_1, ..., Psi_K, I_n}` with `Z` iid standard normal.
pub fn sample_array_normal<R: Rng + ?Sized>(cov: &SeparableCovariance, n: usize, rng: &mut R) -> Result<Tensor> {
    let dims = cov.dims();
    let shape = Shape::new(dims.clone())?.with_trailing(n)?;
    let z = standard_normal_matrix(shape.len(), 1, rng);
    let z = Tensor::from_shape_vec(shape, z.as_slice().to_vec())?;
    let factors: Vec<&Matrix> = (0..dims.len()).map(|k| cov.factor_chol(k).matrix()).collect();
    let pairs: Vec<(usize, &Matrix)> = factors.into_iter().enumerate().collect();
    Ok(z.tucker_product(&pairs)?.scale(cov.sigma2().sqrt()))
}
