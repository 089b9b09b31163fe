use crate::covariance::SeparableCovariance;
use crate::error::{Error, Result};
use crate::linalg::Spd;

use super::{Diagnostics, EstimatorOutput, GibbsChain, Method};

/// Equivariant estimator under multiway Stein's loss from a completed chain.
///
/// With `E_k = (E[(sigma^2 Sigma_k)^{-1} | X])^{-1}` the estimate is
/// `Sigma_k = E_k / |E_k|^{1/p_k}` and
/// `sigma^2 = (K^{-1} sum_k |E_k|^{-1/p_k})^{-1}`.
pub fn umree(chain: &GibbsChain) -> Result<EstimatorOutput> {
    let k = chain.dims().len();
    weighted(chain, &vec![1.0; k], Method::Umree)
}

/// As [`umree`] under weighted multiway Stein's loss; only the scale changes:
/// `sigma^2 = (sum_k (w_k / sum w) |E_k|^{-1/p_k})^{-1}`.
pub fn umree_weighted(chain: &GibbsChain, weights: &[f64]) -> Result<EstimatorOutput> {
    weighted(chain, weights, Method::UmreeWeighted)
}

fn weighted(chain: &GibbsChain, weights: &[f64], method: Method) -> Result<EstimatorOutput> {
    let means = chain.mean_precisions()?;
    let (estimate, scales) = umree_from_mean_precisions(&means, weights)?;
    Ok(EstimatorOutput {
        estimate,
        method,
        diagnostics: Diagnostics {
            kept_draws: chain.kept_draws(),
            posterior_scales: Some(scales.iter().map(|s| s.matrix().clone()).collect()),
            seed: chain.seed(),
            ..Diagnostics::default()
        },
    })
}

/// The closed-form minimizer given the posterior mean precisions. Also returns
/// the `E_k`.
pub fn umree_from_mean_precisions(means: &[Spd], weights: &[f64]) -> Result<(SeparableCovariance, Vec<Spd>)> {
    if weights.len() != means.len() {
        return Err(Error::DimensionMismatch(format!("{} weights for {} modes", weights.len(), means.len())));
    }
    if let Some(w) = weights.iter().find(|&&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidArgument(format!("loss weight {w} must be positive")));
    }
    let total: f64 = weights.iter().sum();
    let scales: Vec<Spd> = means.iter().map(Spd::inverse).collect();
    let mut inv_scale = 0.0;
    let mut factors = Vec::with_capacity(scales.len());
    for (e, w) in scales.iter().zip(weights) {
        let log_root = e.log_det() / e.dim() as f64;
        inv_scale += w / total * (-log_root).exp();
        factors.push(e.scale((-log_root).exp())?);
    }
    let estimate = SeparableCovariance::new(1.0 / inv_scale, factors)?;
    Ok((estimate, scales))
}

/// Posterior expected multiway Stein's loss of a candidate, up to an additive
/// constant not depending on the candidate:
/// `s^2 sum_k (p / p_k) tr(S_k E[(sigma^2 Sigma_k)^{-1} | X]) - K p log s^2`.
pub fn posterior_expected_multiway_loss(means: &[Spd], candidate: &SeparableCovariance) -> Result<f64> {
    let dims: Vec<usize> = means.iter().map(Spd::dim).collect();
    if dims != candidate.dims() {
        return Err(Error::DimensionMismatch(format!(
            "posterior dims {dims:?} vs candidate {:?}",
            candidate.dims()
        )));
    }
    let p: f64 = dims.iter().map(|&d| d as f64).product();
    let k = dims.len() as f64;
    let s2 = candidate.sigma2();
    let traces: f64 = means
        .iter()
        .zip(candidate.factors())
        .map(|(m, s)| p / m.dim() as f64 * (s.matrix() * m.matrix()).trace())
        .sum();
    Ok(s2 * traces - k * p * s2.ln())
}
