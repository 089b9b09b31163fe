#![allow(dead_code)]

use arraynormal::{Matrix, RngStream, SeparableCovariance, Spd, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_matrix<R: Rng>(r: usize, c: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn random_tensor<R: Rng>(dims: &[usize], rng: &mut R) -> Tensor {
    let len = dims.iter().product();
    Tensor::new(dims.to_vec(), (0..len).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

/// Random SPD matrix with eigenvalues bounded away from zero.
pub fn random_spd<R: Rng>(q: usize, rng: &mut R) -> Spd {
    let g = gaussian_matrix(q, q, rng);
    Spd::from_symmetrized(&g * g.transpose() / q as f64 + Matrix::identity(q, q) * 0.5).unwrap()
}

/// Random `q x q` matrix with determinant exactly one up to rounding.
pub fn random_sl<R: Rng>(q: usize, rng: &mut R) -> Matrix {
    loop {
        let mut g = gaussian_matrix(q, q, rng) + Matrix::identity(q, q);
        let det = g.determinant();
        if det.abs() < 0.05 {
            continue;
        }
        if det < 0.0 {
            g.row_mut(0).neg_mut();
        }
        let det = g.determinant();
        return g / det.powf(1.0 / q as f64);
    }
}

/// Random lower triangular matrix with positive diagonal and unit determinant.
pub fn random_lower_unit_det<R: Rng>(q: usize, rng: &mut R) -> Matrix {
    let mut m = Matrix::zeros(q, q);
    for i in 0..q {
        m[(i, i)] = (0.5 * rng.sample::<f64, _>(StandardNormal)).exp();
        for j in 0..i {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let log_det: f64 = (0..q).map(|i| m[(i, i)].ln()).sum();
    m * (-log_det / q as f64).exp()
}

pub fn random_covariance<R: Rng>(dims: &[usize], rng: &mut R) -> SeparableCovariance {
    let raw = dims.iter().map(|&q| random_spd(q, rng)).collect();
    SeparableCovariance::normalize_factors((0.5 * rng.sample::<f64, _>(StandardNormal)).exp(), raw).unwrap()
}

/// Tucker product by explicit enumeration of all index tuples.
pub fn brute_force_tucker(x: &Tensor, mats: &[Matrix]) -> Tensor {
    let in_dims = x.dims().to_vec();
    let out_dims: Vec<usize> = mats.iter().map(|m| m.nrows()).collect();
    let out_len: usize = out_dims.iter().product();
    let in_len: usize = in_dims.iter().product();
    let unflatten = |mut flat: usize, dims: &[usize]| -> Vec<usize> {
        dims.iter()
            .map(|&d| {
                let i = flat % d;
                flat /= d;
                i
            })
            .collect()
    };
    let mut out = vec![0.0; out_len];
    for (o, slot) in out.iter_mut().enumerate() {
        let oi = unflatten(o, &out_dims);
        for f in 0..in_len {
            let ii = unflatten(f, &in_dims);
            let mut w = x.data()[f];
            for k in 0..mats.len() {
                w *= mats[k][(oi[k], ii[k])];
            }
            *slot += w;
        }
    }
    Tensor::new(out_dims, out).unwrap()
}

pub fn rel_frob(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm()
}

pub fn stream(seed: u64) -> RngStream {
    RngStream::new(seed, 0)
}
