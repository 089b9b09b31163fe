use crate::covariance::SeparableCovariance;
use crate::error::{Error, Result};
use crate::linalg::{Orthogonal, Spd};
use crate::rng::RngStream;
use crate::samplers::sample_haar_orthogonal;
use crate::tensor::{Matrix, Tensor};

use super::{data_dims, gibbs_chain, umree, Diagnostics, EstimatorOutput, GibbsConfig, Method};

/// An estimate computed from rotated data `X x {Gamma_1, ..., Gamma_K, I_n}`.
/// The factors are in rotated coordinates and need not have unit determinant.
#[derive(Clone, Debug)]
pub struct RotatedEstimate {
    pub rotations: Vec<Orthogonal>,
    pub sigma2: f64,
    pub factors: Vec<Matrix>,
}

/// Averages back-rotated, trace-normalized factors and the scales:
/// `S_k = T^{-1} sum_t Gamma_k^T Sigma_{k,t} Gamma_k / tr(Sigma_{k,t})`,
/// `Sigma_k = S_k / |S_k|^{1/p_k}` and `sigma^2 = T^{-1} sum_t sigma^2_t`.
pub fn takemura_average(parts: &[RotatedEstimate]) -> Result<SeparableCovariance> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("at least one rotated estimate is required".into()))?;
    let dims: Vec<usize> = first.factors.iter().map(Matrix::nrows).collect();
    let mut sums: Vec<Matrix> = dims.iter().map(|&q| Matrix::zeros(q, q)).collect();
    let mut sigma2 = 0.0;
    for part in parts {
        if part.factors.len() != dims.len() || part.rotations.len() != dims.len() {
            return Err(Error::DimensionMismatch("rotated estimates disagree on the number of modes".into()));
        }
        for ((sum, f), g) in sums.iter_mut().zip(&part.factors).zip(&part.rotations) {
            if f.nrows() != sum.nrows() || g.dim() != sum.nrows() {
                return Err(Error::DimensionMismatch("rotated estimates disagree on mode sizes".into()));
            }
            let g = g.matrix();
            *sum += g.transpose() * f * g / f.trace();
        }
        sigma2 += part.sigma2;
    }
    let t = parts.len() as f64;
    let raw = sums
        .into_iter()
        .map(|s| Spd::from_symmetrized(s / t))
        .collect::<Result<Vec<_>>>()?;
    let normalized = SeparableCovariance::normalize_factors(1.0, raw)?;
    SeparableCovariance::new(sigma2 / t, normalized.factors().to_vec())
}

/// MWTE with `T` Haar rotations per mode drawn from `rotation_rng`. Rotation
/// `t` runs its chain on `cfg.rng.derive(t)`.
pub fn mwte(x: &Tensor, rotations: usize, cfg: &GibbsConfig, rotation_rng: RngStream) -> Result<EstimatorOutput> {
    if rotations == 0 {
        return Err(Error::InvalidArgument("the MWTE needs at least one rotation".into()));
    }
    let (dims, _) = data_dims(x)?;
    let mut rng = rotation_rng.rng();
    let draws: Vec<Vec<Orthogonal>> = (0..rotations)
        .map(|_| dims.iter().map(|&q| sample_haar_orthogonal(q, &mut rng)).collect())
        .collect();
    let mut out = mwte_with_rotations(x, &draws, cfg)?;
    out.diagnostics.seed = Some(rotation_rng.seed);
    Ok(out)
}

/// MWTE over the given rotations.
pub fn mwte_with_rotations(x: &Tensor, rotations: &[Vec<Orthogonal>], cfg: &GibbsConfig) -> Result<EstimatorOutput> {
    let (dims, _) = data_dims(x)?;
    let mut parts = Vec::with_capacity(rotations.len());
    let mut kept = 0;
    for (t, gammas) in rotations.iter().enumerate() {
        if gammas.len() != dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} rotations for {} modes",
                gammas.len(),
                dims.len()
            )));
        }
        let pairs: Vec<(usize, &Matrix)> = gammas.iter().map(Orthogonal::matrix).enumerate().collect();
        let rotated = x.tucker_product(&pairs)?;
        let chain = gibbs_chain(&rotated, &cfg.with_rng(cfg.rng.derive(t as u64)))?;
        kept += chain.kept_draws();
        let est = umree(&chain)?.estimate;
        parts.push(RotatedEstimate {
            rotations: gammas.clone(),
            sigma2: est.sigma2(),
            factors: est.factors().iter().map(|f| f.matrix().clone()).collect(),
        });
    }
    Ok(EstimatorOutput {
        estimate: takemura_average(&parts)?,
        method: Method::Mwte,
        diagnostics: Diagnostics {
            iterations: rotations.len(),
            kept_draws: kept,
            seed: Some(cfg.rng.seed),
            ..Diagnostics::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_array_normal;

    fn spd(rows: usize, data: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, rows, data)
    }

    #[test]
    fn identity_rotation_reproduces_umree() {
        let truth = SeparableCovariance::identity(&[2, 3]);
        let x = sample_array_normal(&truth, 2, &mut RngStream::new(1, 0).rng()).unwrap();
        let cfg = GibbsConfig { total_iters: 200, burn_in: 50, rng: RngStream::new(3, 0), ..GibbsConfig::default() };
        let ids = vec![vec![Orthogonal::identity(2), Orthogonal::identity(3)]];
        let m = mwte_with_rotations(&x, &ids, &cfg).unwrap().estimate;
        let u = umree(&gibbs_chain(&x, &cfg.with_rng(cfg.rng.derive(0))).unwrap()).unwrap().estimate;
        assert!((m.sigma2() - u.sigma2()).abs() < 1e-12 * u.sigma2());
        for (a, b) in m.factors().iter().zip(u.factors()) {
            assert!((a.matrix() - b.matrix()).amax() < 1e-12);
        }
    }

    #[test]
    fn trace_normalization_removes_factor_scale() {
        let (c, s) = (0.6f64.cos(), 0.6f64.sin());
        let g = Orthogonal::new(spd(2, &[c, -s, s, c])).unwrap();
        let parts = vec![
            RotatedEstimate {
                rotations: vec![g.clone()],
                sigma2: 1.5,
                factors: vec![spd(2, &[2., 0.3, 0.3, 0.5])],
            },
            RotatedEstimate {
                rotations: vec![Orthogonal::identity(2)],
                sigma2: 0.5,
                factors: vec![spd(2, &[1., -0.2, -0.2, 1.])],
            },
        ];
        let base = takemura_average(&parts).unwrap();
        assert!((base.sigma2() - 1.0).abs() < 1e-15);
        let mut scaled = parts.clone();
        scaled[0].factors[0] *= 7.5;
        scaled[1].factors[0] *= 0.01;
        let other = takemura_average(&scaled).unwrap();
        assert!((base.factors()[0].matrix() - other.factors()[0].matrix()).amax() < 1e-13);
    }

    #[test]
    fn zero_rotations_rejected() {
        let x = Tensor::new(vec![2, 1], vec![1.0, 2.0]).unwrap();
        assert!(mwte(&x, 0, &GibbsConfig::default(), RngStream::new(0, 0)).is_err());
        assert!(takemura_average(&[]).is_err());
    }
}
