//! Matrix-variate samplers built on Bartlett decompositions.
//!
//! All Wishart-type samplers here use the identity scale; non-identity scales
//! enter through triangular multiplies by the caller.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{chol_upper, LowerTriangular, Orthogonal, Spd};
use crate::tensor::Matrix;

/// Gamma variate with the given shape and rate.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma shape and rate must be positive")
        .sample(rng)
}

pub fn sample_chi_square<R: Rng + ?Sized>(dof: f64, rng: &mut R) -> f64 {
    sample_gamma(dof / 2.0, 0.5, rng)
}

pub fn standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    // Column-major fill order is part of the reproducibility contract.
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data)
}

fn check_dof(nu: f64, q: usize) -> Result<()> {
    let min = q as f64 - 1.0;
    if !(nu > min) || q == 0 {
        return Err(Error::DegreesOfFreedom { nu, min });
    }
    Ok(())
}

/// Bartlett factor `V` of a `Wishart_q(nu, I)` draw: `V[i,i]^2 ~ chi^2_{nu-i}`
/// (zero-based `i`), strictly lower entries standard normal.
pub fn sample_wishart_chol<R: Rng + ?Sized>(nu: f64, q: usize, rng: &mut R) -> Result<LowerTriangular> {
    check_dof(nu, q)?;
    let mut v = Matrix::zeros(q, q);
    for i in 0..q {
        v[(i, i)] = sample_chi_square(nu - i as f64, rng).sqrt();
        for j in 0..i {
            v[(i, j)] = rng.sample(StandardNormal);
        }
    }
    LowerTriangular::new(v)
}

/// Lower triangular `W` built row by row: `W[i,i]^2 ~ inverse-gamma(shapes[i], 1/2)`
/// and `W[i, ..i] ~ N(0, W[i,i]^2 W_1^T W_1)` given the leading block `W_1`.
///
/// With `shapes[i] = (nu - q + i + 1) / 2` this is the Cholesky factor of an
/// inverse-Wishart draw; with `shapes[i] = (nu - i) / 2` it is the factor whose
/// inverse is a Wishart Bartlett factor.
pub fn sample_inverse_gamma_triangular<R: Rng + ?Sized>(shapes: &[f64], rng: &mut R) -> Result<LowerTriangular> {
    let q = shapes.len();
    if q == 0 || shapes.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::InvalidArgument(format!("inverse-gamma shapes {shapes:?} must be positive")));
    }
    let mut w = Matrix::zeros(q, q);
    for i in 0..q {
        let d = (1.0 / sample_gamma(shapes[i], 0.5, rng)).sqrt();
        w[(i, i)] = d;
        if i > 0 {
            // r = d z^T W_1 has covariance d^2 W_1^T W_1.
            let z: Vec<f64> = (0..i).map(|_| rng.sample(StandardNormal)).collect();
            for j in 0..i {
                let s: f64 = (j..i).map(|k| z[k] * w[(k, j)]).sum();
                w[(i, j)] = d * s;
            }
        }
    }
    LowerTriangular::new(w)
}

/// Lower Cholesky factor `W` of an `inverse-Wishart_q(nu, I)` draw.
pub fn sample_inverse_wishart_chol<R: Rng + ?Sized>(nu: f64, q: usize, rng: &mut R) -> Result<LowerTriangular> {
    check_dof(nu, q)?;
    let shapes: Vec<f64> = (1..=q).map(|i| (nu - q as f64 + i as f64) / 2.0).collect();
    sample_inverse_gamma_triangular(&shapes, rng)
}

/// `S = U V^T V U^T` with `V` a Wishart Bartlett factor and `U U^T` the upper
/// Cholesky decomposition of `phi`.
pub fn sample_mirror_wishart<R: Rng + ?Sized>(nu: f64, phi: &Spd, rng: &mut R) -> Result<Spd> {
    let q = phi.dim();
    let v = sample_wishart_chol(nu, q, rng)?;
    let vu = v.matrix() * chol_upper(phi).matrix().transpose();
    Spd::from_symmetrized(vu.transpose() * vu)
}

/// Mean of the mirror-Wishart law, `nu U D U^T` with
/// `D = diag((nu + q + 1 - 2j) / nu)` for `j = 1..q`.
pub fn mirror_wishart_mean(nu: f64, phi: &Spd) -> Result<Spd> {
    let q = phi.dim();
    check_dof(nu, q)?;
    let u = chol_upper(phi).into_matrix();
    let mut ud = u.clone();
    for j in 0..q {
        let d = nu + q as f64 + 1.0 - 2.0 * (j + 1) as f64;
        ud.column_mut(j).scale_mut(d);
    }
    Spd::from_symmetrized(ud * u.transpose())
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// columns of `Q` sign-corrected by the diagonal of `R`.
pub fn sample_haar_orthogonal<R: Rng + ?Sized>(q: usize, rng: &mut R) -> Orthogonal {
    assert!(q >= 1);
    loop {
        let g = standard_normal_matrix(q, q, rng);
        let qr = g.qr();
        let r = qr.r();
        if r.diagonal().iter().any(|d| d.abs() < 1e-12) {
            continue;
        }
        let mut qm = qr.q();
        for j in 0..q {
            if r[(j, j)] < 0.0 {
                qm.column_mut(j).neg_mut();
            }
        }
        match Orthogonal::new(qm) {
            Ok(o) => return o,
            Err(_) => continue,
        }
    }
}
