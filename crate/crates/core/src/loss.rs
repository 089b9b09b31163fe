//! Loss functions for separable covariance estimates.

use crate::covariance::SeparableCovariance;
use crate::error::{Error, Result};
use crate::linalg::Spd;

fn check_compatible(truth: &SeparableCovariance, est: &SeparableCovariance) -> Result<()> {
    if truth.dims() != est.dims() {
        return Err(Error::DimensionMismatch(format!(
            "true parameter has dims {:?}, estimate has {:?}",
            truth.dims(),
            est.dims()
        )));
    }
    Ok(())
}

/// `tr(S Sigma^{-1})` through the Cholesky factor of `Sigma`.
fn trace_ratio(est: &Spd, truth: &Spd) -> f64 {
    let linv = truth.chol().inverse();
    (&linv * est.matrix() * linv.transpose()).trace()
}

/// Weighted multiway Stein's loss
///
/// ```text
/// (s2 / sigma2) sum_k (w_k / p_k) tr(S_k Sigma_k^{-1}) - (sum w) log(s2 / sigma2) - sum w
/// ```
pub fn weighted_stein_loss(truth: &SeparableCovariance, est: &SeparableCovariance, weights: &[f64]) -> Result<f64> {
    check_compatible(truth, est)?;
    if weights.len() != truth.order() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} modes",
            weights.len(),
            truth.order()
        )));
    }
    if let Some(w) = weights.iter().find(|&&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidArgument(format!("loss weight {w} must be positive")));
    }
    let ratio = est.sigma2() / truth.sigma2();
    let traces: f64 = truth
        .factors()
        .iter()
        .zip(est.factors())
        .zip(weights)
        .map(|((t, e), w)| w / t.dim() as f64 * trace_ratio(e, t))
        .sum();
    let total: f64 = weights.iter().sum();
    Ok(ratio * traces - total * ratio.ln() - total)
}

/// Multiway Stein's loss: the weighted loss with every `w_k = p`.
pub fn multiway_stein_loss(truth: &SeparableCovariance, est: &SeparableCovariance) -> Result<f64> {
    let p = truth.total_dim() as f64;
    weighted_stein_loss(truth, est, &vec![p; truth.order()])
}

/// Stein's loss `tr(S Sigma^{-1}) - log|S Sigma^{-1}| - p` on the dense
/// Kronecker covariances.
pub fn stein_loss_full(truth: &SeparableCovariance, est: &SeparableCovariance) -> Result<f64> {
    check_compatible(truth, est)?;
    let sigma = Spd::from_symmetrized(truth.full_matrix()?)?;
    let s = Spd::from_symmetrized(est.full_matrix()?)?;
    let p = sigma.dim() as f64;
    Ok(trace_ratio(&s, &sigma) - (s.log_det() - sigma.log_det()) - p)
}
