use crate::covariance::SeparableCovariance;
use crate::error::Result;
use crate::linalg::LowerTriangular;
use crate::model::log_density;
use crate::tensor::Tensor;

use super::{converged, data_dims, mode_cross_product_spd, Diagnostics, EstimatorOutput, Method};

#[derive(Clone, Copy, Debug)]
pub struct FlipFlopOptions {
    /// Stop once the relative log-likelihood change over a sweep is at most this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FlipFlopOptions {
    fn default() -> Self {
        FlipFlopOptions { tol: 1e-10, max_iter: 1000 }
    }
}

/// Flip-flop maximum likelihood for zero-mean data with a trailing sample mode.
///
/// Each sweep sets `sigma^2 Sigma_k = M_k p_k / (n p)` for `k = 1..K` in turn,
/// where `M_k` is the mode-k cross-product whitened by the other factors; this
/// is the exact maximizer over the `k`-th block, so the log-likelihood never
/// decreases. The log-likelihood after initialization and after every sweep is
/// recorded in `diagnostics.objective_trace`.
pub fn mle_flipflop(x: &Tensor, opts: FlipFlopOptions) -> Result<EstimatorOutput> {
    let (dims, n) = data_dims(x)?;
    let p: usize = dims.iter().product();
    let np = (n * p) as f64;
    for (k, &pk) in dims.iter().enumerate() {
        if n * p / pk < pk {
            log::warn!("mode {k}: n p / p_k = {} < p_k = {pk}; the MLE may not exist", n * p / pk);
        }
    }

    let mut cov = SeparableCovariance::identity(&dims).with_sigma2(x.frob_norm_sq().max(f64::MIN_POSITIVE) / np)?;
    let mut chols: Vec<LowerTriangular> = dims.iter().map(|&q| LowerTriangular::identity(q)).collect();
    let mut loglik = log_density(x, &cov)?;
    let mut trace = vec![loglik];
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let mut sigma2 = cov.sigma2();
        let mut factors = cov.factors().to_vec();
        for k in 0..dims.len() {
            let m = mode_cross_product_spd(x, &chols, k)?;
            let block = m.scale(dims[k] as f64 / np)?;
            let updated = SeparableCovariance::normalize_factors(1.0, vec![block])?;
            sigma2 = updated.sigma2();
            factors[k] = updated.factors()[0].clone();
            chols[k] = factors[k].chol().clone();
        }
        cov = SeparableCovariance::new(sigma2, factors)?;
        let next = log_density(x, &cov)?;
        trace.push(next);
        let done = converged(loglik, next, opts.tol);
        loglik = next;
        if done {
            break;
        }
    }

    Ok(EstimatorOutput {
        estimate: cov,
        method: Method::Mle,
        diagnostics: Diagnostics {
            iterations,
            final_objective: Some(loglik),
            objective_trace: trace,
            ..Diagnostics::default()
        },
    })
}
