//! Covariance estimators for the array normal model.
//!
//! - [`mle_flipflop`]: maximum likelihood by cyclic mode updates.
//! - [`gibbs_chain`] + [`umree`]: the minimum risk equivariant estimator under
//!   multiway Stein's loss, from posterior means of the per-mode precisions
//!   under the right-invariant prior. [`umree_weighted`] uses per-mode loss
//!   weights.
//! - [`stein_umree`]: the equivariant estimator under Stein's loss on the full
//!   covariance, from the posterior mean of the Kronecker precision.
//! - [`mwte`]: the orthogonally equivariant estimator averaging back-rotated
//!   estimates over Haar-random rotations of the data.

mod gibbs;
mod mle;
mod mwte;
mod stein;
mod umree;

pub use gibbs::{gibbs_chain, sample_precision_scale_conditional, GibbsChain, GibbsConfig, GibbsDraw};
pub use mle::{mle_flipflop, FlipFlopOptions};
pub use mwte::{mwte, mwte_with_rotations, takemura_average, RotatedEstimate};
pub use stein::{stein_objective, stein_umree, stein_umree_from_mean, SteinOptions};
pub use umree::{posterior_expected_multiway_loss, umree, umree_from_mean_precisions, umree_weighted};

use serde::{Deserialize, Serialize};

use crate::covariance::SeparableCovariance;
use crate::error::{Error, Result};
use crate::linalg::{LowerTriangular, Spd};
use crate::tensor::{Matrix, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mle,
    Umree,
    UmreeWeighted,
    SteinUmree,
    Mwte,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mle => "mle",
            Method::Umree => "umree",
            Method::UmreeWeighted => "umree-weighted",
            Method::SteinUmree => "stein-umree",
            Method::Mwte => "mwte",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Diagnostics {
    /// Sweeps for iterative methods, rotations for the MWTE.
    pub iterations: usize,
    pub kept_draws: usize,
    pub final_objective: Option<f64>,
    /// Objective after initialization and after every update.
    pub objective_trace: Vec<f64>,
    /// `(E[(sigma^2 Sigma_k)^{-1} | X])^{-1}` per mode, for posterior-based methods.
    pub posterior_scales: Option<Vec<Matrix>>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct EstimatorOutput {
    pub estimate: SeparableCovariance,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

impl EstimatorOutput {
    /// The covariance JSON object plus a `diagnostics` block.
    pub fn to_json_value(&self) -> serde_json::Value {
        let mut value = self.estimate.to_json_value();
        let d = &self.diagnostics;
        value["diagnostics"] = serde_json::json!({
            "method": self.method.name(),
            "iterations": d.iterations,
            "kept_draws": d.kept_draws,
            "final_objective": d.final_objective,
            "seed": d.seed,
        });
        value
    }
}

/// Splits a data tensor into its array dims and sample count.
pub(crate) fn data_dims(x: &Tensor) -> Result<(Vec<usize>, usize)> {
    if x.order() < 2 {
        return Err(Error::DimensionMismatch(
            "data needs at least one array mode and a trailing sample mode".into(),
        ));
    }
    let k = x.order() - 1;
    Ok((x.dims()[..k].to_vec(), x.dims()[k]))
}

/// `X_(k) Psi_{-k}^{-T} Psi_{-k}^{-1} X_(k)^T` from the current factors of the
/// other modes.
pub(crate) fn mode_cross_product(x: &Tensor, chols: &[LowerTriangular], k: usize) -> Result<Matrix> {
    let others: Vec<(usize, &LowerTriangular)> = chols.iter().enumerate().filter(|(j, _)| *j != k).collect();
    let y = x.tucker_solve_lower(&others)?.matricize(k)?;
    Ok(&y * y.transpose())
}

pub(crate) fn mode_cross_product_spd(x: &Tensor, chols: &[LowerTriangular], k: usize) -> Result<Spd> {
    Spd::from_symmetrized(mode_cross_product(x, chols, k)?)
        .map_err(|e| Error::SingularMode { mode: k, source: Box::new(e) })
}

/// Relative change test shared by the iterative methods.
pub(crate) fn converged(prev: f64, next: f64, tol: f64) -> bool {
    (next - prev).abs() <= tol * prev.abs().max(1.0)
}
