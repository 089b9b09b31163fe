use std::sync::Once;

use rand::Rng;

use crate::covariance::SeparableCovariance;
use crate::error::{Error, Result};
use crate::linalg::{LowerTriangular, Spd};
use crate::model::whitened_norm_sq;
use crate::rng::RngStream;
use crate::samplers::{sample_gamma, sample_wishart_chol};
use crate::tensor::{kron_list, Matrix, Tensor};

use super::{data_dims, mode_cross_product_spd};

#[derive(Clone, Debug)]
pub struct GibbsConfig {
    pub total_iters: usize,
    pub burn_in: usize,
    /// Starting parameter; `None` starts from identity factors.
    pub init: Option<SeparableCovariance>,
    pub rng: RngStream,
    /// Keep every post-burn-in `(sigma^2, Psi_1..Psi_K)` state.
    pub store_draws: bool,
    /// Also average the full `p x p` precision, needed by the Stein-loss estimator.
    pub full_precision: bool,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            total_iters: 1250,
            burn_in: 250,
            init: None,
            rng: RngStream::new(0, 0),
            store_draws: false,
            full_precision: false,
        }
    }
}

impl GibbsConfig {
    pub fn with_rng(&self, rng: RngStream) -> Self {
        GibbsConfig { rng, ..self.clone() }
    }

    fn validate(&self) -> Result<()> {
        if self.burn_in >= self.total_iters {
            return Err(Error::InvalidArgument(format!(
                "burn-in {} must be smaller than the iteration count {}",
                self.burn_in, self.total_iters
            )));
        }
        Ok(())
    }
}

/// State of the chain at the end of a sweep.
#[derive(Clone, Debug)]
pub struct GibbsDraw {
    pub sigma2: f64,
    pub chols: Vec<LowerTriangular>,
}

/// Running posterior sums of a completed chain.
#[derive(Clone, Debug)]
pub struct GibbsChain {
    dims: Vec<usize>,
    precision_sums: Vec<Matrix>,
    full_precision_sum: Option<Matrix>,
    kept: usize,
    draws: Option<Vec<GibbsDraw>>,
    seed: Option<u64>,
}

impl GibbsChain {
    /// A chain summary with given posterior mean precisions `E[(sigma^2 Sigma_k)^{-1} | X]`,
    /// for working with synthetic posteriors.
    pub fn from_mean_precisions(means: Vec<Spd>, full_precision: Option<Spd>) -> Self {
        GibbsChain {
            dims: means.iter().map(Spd::dim).collect(),
            precision_sums: means.into_iter().map(|m| m.matrix().clone()).collect(),
            full_precision_sum: full_precision.map(|m| m.matrix().clone()),
            kept: 1,
            draws: None,
            seed: None,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn kept_draws(&self) -> usize {
        self.kept
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn draws(&self) -> Option<&[GibbsDraw]> {
        self.draws.as_deref()
    }

    /// Posterior mean of `(sigma^2 Sigma_k)^{-1}` for every mode.
    pub fn mean_precisions(&self) -> Result<Vec<Spd>> {
        let t = self.kept as f64;
        self.precision_sums
            .iter()
            .enumerate()
            .map(|(k, s)| {
                Spd::from_symmetrized(s / t).map_err(|e| Error::SingularMode { mode: k, source: Box::new(e) })
            })
            .collect()
    }

    /// Posterior mean of `(Sigma_K^{-1} ⊗ ... ⊗ Sigma_1^{-1}) / sigma^2`, when accumulated.
    pub fn mean_full_precision(&self) -> Option<Result<Spd>> {
        self.full_precision_sum
            .as_ref()
            .map(|s| Spd::from_symmetrized(s / self.kept as f64))
    }
}

/// Runs the Gibbs sampler on zero-mean data with a trailing sample mode.
///
/// A sweep visits `k = 1..K` in order. For mode `k` with
/// `M_k = X_(k) Psi_{-k}^{-T} Psi_{-k}^{-1} X_(k)^T = Phi Phi^T` it draws a
/// Wishart Bartlett factor `V` with `n p / p_k` degrees of freedom, sets the
/// precision `(sigma^2 Sigma_k)^{-1} = Phi^{-T} V^T V Phi^{-1}` (a
/// mirror-Wishart draw with scale `M_k^{-1}`) and recovers
/// `L_k = Phi V^{-1}`, `sigma = |L_k|^{1/p_k}`, `Psi_k = L_k / sigma`.
pub fn gibbs_chain(x: &Tensor, cfg: &GibbsConfig) -> Result<GibbsChain> {
    cfg.validate()?;
    let (dims, n) = data_dims(x)?;
    let p: usize = dims.iter().product();
    if n <= p {
        static WARNED: Once = Once::new();
        WARNED.call_once(|| log::warn!("n = {n} <= prod p_k = {p}: posterior propriety is not guaranteed"));
        log::debug!("n = {n} <= prod p_k = {p}");
    }
    let mut chols: Vec<LowerTriangular> = match &cfg.init {
        Some(init) => {
            if init.dims() != dims {
                return Err(Error::DimensionMismatch(format!(
                    "initial parameter dims {:?} do not match data dims {dims:?}",
                    init.dims()
                )));
            }
            (0..dims.len()).map(|k| init.factor_chol(k).clone()).collect()
        }
        None => dims.iter().map(|&q| LowerTriangular::identity(q)).collect(),
    };
    let mut sigma2 = match &cfg.init {
        Some(init) => init.sigma2(),
        None => x.frob_norm_sq() / (n * p) as f64,
    };

    let mut rng = cfg.rng.rng();
    let mut precision_sums: Vec<Matrix> = dims.iter().map(|&q| Matrix::zeros(q, q)).collect();
    let mut full_sum = if cfg.full_precision { Some(Matrix::zeros(p, p)) } else { None };
    let mut draws = if cfg.store_draws { Some(Vec::new()) } else { None };

    for iter in 0..cfg.total_iters {
        let keep = iter >= cfg.burn_in;
        for k in 0..dims.len() {
            let (precision, l) = mode_draw(x, &chols, k, (n * p / dims[k]) as f64, &mut rng)?;
            let sigma = (l.log_det() / dims[k] as f64).exp();
            sigma2 = sigma * sigma;
            chols[k] = l.scale(1.0 / sigma)?;
            if keep {
                precision_sums[k] += precision;
            }
        }
        if keep {
            if let Some(sum) = full_sum.as_mut() {
                *sum += full_precision(&chols, sigma2)?;
            }
            if let Some(d) = draws.as_mut() {
                d.push(GibbsDraw { sigma2, chols: chols.clone() });
            }
        }
    }

    Ok(GibbsChain {
        dims,
        precision_sums,
        full_precision_sum: full_sum,
        kept: cfg.total_iters - cfg.burn_in,
        draws,
        seed: Some(cfg.rng.seed),
    })
}

/// One mode-k full-conditional draw: the precision `(sigma^2 Sigma_k)^{-1}` and
/// its inverse Cholesky factor `L_k = Phi V^{-1}`.
fn mode_draw<R: Rng + ?Sized>(
    x: &Tensor,
    chols: &[LowerTriangular],
    k: usize,
    dof: f64,
    rng: &mut R,
) -> Result<(Matrix, LowerTriangular)> {
    let m = mode_cross_product_spd(x, chols, k)?;
    let phi = m.chol();
    let v = sample_wishart_chol(dof, phi.dim(), rng)?;
    // L^{-1} = V Phi^{-1}
    let l_inv = v.matrix() * phi.inverse();
    let precision = l_inv.transpose() * &l_inv;
    let l = LowerTriangular::new(lower_part(phi.matrix() * v.inverse()))?;
    Ok((precision, l))
}

/// Zeroes the strict upper triangle (rounding residue of triangular products).
fn lower_part(mut m: Matrix) -> Matrix {
    for j in 1..m.ncols() {
        for i in 0..j {
            m[(i, j)] = 0.0;
        }
    }
    m
}

fn full_precision(chols: &[LowerTriangular], sigma2: f64) -> Result<Matrix> {
    let inverses: Vec<Matrix> = chols
        .iter()
        .rev()
        .map(|c| {
            let inv = c.inverse();
            inv.transpose() * inv
        })
        .collect();
    let refs: Vec<&Matrix> = inverses.iter().collect();
    Ok(kron_list(&refs)? / sigma2)
}

/// Draws `1 / sigma^2` from its full conditional
/// `gamma(n p / 2, rate = ||X x {Psi_1^{-1}, ..., Psi_K^{-1}, I_n}||^2 / 2)`.
/// The sampler itself never uses this step; it exists for checking.
pub fn sample_precision_scale_conditional<R: Rng + ?Sized>(
    x: &Tensor,
    chols: &[LowerTriangular],
    rng: &mut R,
) -> Result<f64> {
    let (dims, n) = data_dims(x)?;
    let p: usize = dims.iter().product();
    let refs: Vec<&LowerTriangular> = chols.iter().collect();
    let rate = whitened_norm_sq(x, &refs)? / 2.0;
    Ok(sample_gamma((n * p) as f64 / 2.0, rate, rng))
}
