use nalgebra::SymmetricEigen;

use crate::covariance::SeparableCovariance;
use crate::error::{Error, Result};
use crate::linalg::Spd;
use crate::tensor::{kron_list, Matrix, Shape, Tensor, DEFAULT_KRON_CAP};

use super::{converged, Diagnostics, EstimatorOutput, GibbsChain, Method};

#[derive(Clone, Copy, Debug)]
pub struct SteinOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SteinOptions {
    fn default() -> Self {
        SteinOptions { tol: 1e-12, max_iter: 500 }
    }
}

/// Equivariant estimator under Stein's loss on the full covariance, from a
/// chain run with `full_precision` enabled.
pub fn stein_umree(chain: &GibbsChain, opts: SteinOptions) -> Result<EstimatorOutput> {
    let mean = chain
        .mean_full_precision()
        .ok_or_else(|| Error::InvalidArgument("chain was run without the full precision accumulator".into()))??;
    let mut out = stein_umree_from_mean(&mean, chain.dims(), opts)?;
    out.diagnostics.kept_draws = chain.kept_draws();
    out.diagnostics.seed = chain.seed();
    Ok(out)
}

/// Posterior expected Stein's loss of `s^2 (S_K ⊗ ... ⊗ S_1)` up to a constant:
/// `s^2 tr((S_K ⊗ ... ⊗ S_1) A) - p log s^2` for unit-determinant `S_k`, with `A`
/// the posterior mean precision.
pub fn stein_objective(mean: &Spd, candidate: &SeparableCovariance) -> Result<f64> {
    let mats: Vec<&Matrix> = candidate.factors().iter().rev().map(Spd::matrix).collect();
    let s = kron_list(&mats)?;
    if s.nrows() != mean.dim() {
        return Err(Error::DimensionMismatch(format!(
            "candidate has dimension {}, posterior mean {}",
            s.nrows(),
            mean.dim()
        )));
    }
    let s2 = candidate.sigma2();
    let p = mean.dim() as f64;
    Ok(s2 * s.component_mul(mean.matrix()).sum() - p * s2.ln())
}

/// Block coordinate descent on [`stein_objective`]. With `K` the symmetric
/// square root of `mean` and `K~` the `p_1 x ... x p_K x p` array whose last
/// unfolding is `K`, each step sets
/// `s^2 S_k = (K~_(k) S_{-k} K~_(k)^T)^{-1} p / p_k`, the exact minimizer over
/// `(s^2, S_k)` with the other factors held fixed.
pub fn stein_umree_from_mean(mean: &Spd, dims: &[usize], opts: SteinOptions) -> Result<EstimatorOutput> {
    let p: usize = dims.iter().product();
    if p > DEFAULT_KRON_CAP {
        return Err(Error::KronCapExceeded { dim: p, cap: DEFAULT_KRON_CAP });
    }
    if mean.dim() != p {
        return Err(Error::DimensionMismatch(format!("posterior mean is {0}x{0}, dims give p = {p}", mean.dim())));
    }
    let root = symmetric_sqrt(mean);
    let order = dims.len();
    let shape = Shape::new(dims.to_vec())?.with_trailing(p)?;
    let rooted = Tensor::unmatricize(&root, order, &shape)?;

    let pf = p as f64;
    let mut factors: Vec<Spd> = dims.iter().map(|&q| Spd::identity(q)).collect();
    let mut estimate = SeparableCovariance::new(pf / mean.trace(), factors.clone())?;
    let mut objective = stein_objective(mean, &estimate)?;
    let mut trace = vec![objective];
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let start = objective;
        for k in 0..order {
            let others: Vec<(usize, &Matrix)> = factors
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .map(|(j, f)| (j, f.matrix()))
                .collect();
            let weighted = rooted.tucker_product(&others)?.matricize(k)?;
            let gram = rooted.matricize(k)? * weighted.transpose();
            let gram = Spd::from_symmetrized(gram).map_err(|e| Error::SingularMode { mode: k, source: Box::new(e) })?;
            let block = gram.inverse().scale(pf / dims[k] as f64)?;
            let step = SeparableCovariance::normalize_factors(1.0, vec![block])?;
            let mut proposal = factors.clone();
            proposal[k] = step.factors()[0].clone();
            let candidate = SeparableCovariance::new(step.sigma2(), proposal.clone())?;
            let value = stein_objective(mean, &candidate)?;
            // Near the optimum rounding can make the exact block minimizer
            // look marginally worse; keep the current point then.
            if value <= objective {
                factors = proposal;
                estimate = candidate;
                objective = value;
            }
            trace.push(objective);
        }
        if converged(start, objective, opts.tol) {
            break;
        }
    }

    Ok(EstimatorOutput {
        estimate,
        method: Method::SteinUmree,
        diagnostics: Diagnostics {
            iterations,
            final_objective: Some(objective),
            objective_trace: trace,
            ..Diagnostics::default()
        },
    })
}

fn symmetric_sqrt(m: &Spd) -> Matrix {
    let eig = SymmetricEigen::new(m.matrix().clone());
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let mut scaled = eig.eigenvectors.clone();
    for (j, r) in roots.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*r);
    }
    let root = scaled * eig.eigenvectors.transpose();
    (&root + root.transpose()) * 0.5
}
