//! Monte Carlo risk studies.
//!
//! Replicate `r` draws everything from `RngStream::new(master_seed, r)`: the
//! data from child stream 0 and estimator `i` from child stream `i + 1`. The
//! report therefore depends only on the configuration, not on scheduling, and
//! every estimator sees the same data tensor within a replicate.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::SeparableCovariance;
use crate::error::{Error, Result};
use crate::estimators::{gibbs_chain, mle_flipflop, mwte, umree, FlipFlopOptions, GibbsConfig};
use crate::loss::multiway_stein_loss;
use crate::model::sample_array_normal;
use crate::rng::RngStream;
use crate::tensor::{Tensor, DEFAULT_KRON_CAP};

/// Environment variable that overrides `master_seed`.
pub const SEED_ENV: &str = "ARRAYNORMAL_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Mle,
    Umree,
    Mwte,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Mle => "mle",
            EstimatorKind::Umree => "umree",
            EstimatorKind::Mwte => "mwte",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsSettings {
    pub total_iters: usize,
    pub burn_in: usize,
}

impl Default for GibbsSettings {
    fn default() -> Self {
        let d = GibbsConfig::default();
        GibbsSettings { total_iters: d.total_iters, burn_in: d.burn_in }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// One entry `(p_1, ..., p_K)` per configuration.
    pub dims: Vec<Vec<usize>>,
    pub n: usize,
    pub replicates: usize,
    pub estimators: Vec<EstimatorKind>,
    #[serde(rename = "mwte_T", alias = "mwte_t")]
    pub mwte_t: usize,
    pub gibbs: GibbsSettings,
    /// True parameter in the covariance JSON format; identity when absent.
    pub truth: Option<serde_json::Value>,
    pub master_seed: u64,
    /// Worker threads; zero uses every available core.
    pub parallelism: usize,
    pub mle_tol: f64,
    pub mle_max_iter: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        let ff = FlipFlopOptions::default();
        SimConfig {
            dims: vec![vec![4, 4, 4]],
            n: 1,
            replicates: 100,
            estimators: vec![EstimatorKind::Mle, EstimatorKind::Umree, EstimatorKind::Mwte],
            mwte_t: 3,
            gibbs: GibbsSettings::default(),
            truth: None,
            master_seed: 0,
            parallelism: 1,
            mle_tol: ff.tol,
            mle_max_iter: ff.max_iter,
        }
    }
}

impl SimConfig {
    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Applies `ARRAYNORMAL_SEED` when set.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.master_seed = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("{SEED_ENV}={v:?} is not a 64-bit unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidArgument("the estimator set is empty".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        if self.dims.is_empty() {
            return Err(Error::InvalidArgument("no dimension configurations given".into()));
        }
        for d in &self.dims {
            if d.is_empty() || d.contains(&0) {
                return Err(Error::InvalidShape(format!("invalid dims {d:?}")));
            }
            let p = d.iter().try_fold(1usize, |a, &b| a.checked_mul(b)).unwrap_or(usize::MAX);
            if p > DEFAULT_KRON_CAP {
                return Err(Error::InvalidArgument(format!("dims {d:?} give p = {p} > {DEFAULT_KRON_CAP}")));
            }
        }
        if self.estimators.contains(&EstimatorKind::Mwte) && self.mwte_t == 0 {
            return Err(Error::InvalidArgument("mwte_T must be at least 1".into()));
        }
        if self.gibbs.burn_in >= self.gibbs.total_iters {
            return Err(Error::InvalidArgument("gibbs.burn_in must be smaller than gibbs.total_iters".into()));
        }
        Ok(())
    }

    fn truth_for(&self, dims: &[usize]) -> Result<SeparableCovariance> {
        match &self.truth {
            None => Ok(SeparableCovariance::identity(dims)),
            Some(v) => {
                let truth = SeparableCovariance::from_json_value(v.clone())?;
                if truth.dims() != dims {
                    return Err(Error::DimensionMismatch(format!(
                        "truth has dims {:?} but a configuration has {dims:?}",
                        truth.dims()
                    )));
                }
                Ok(truth)
            }
        }
    }

    fn gibbs_config(&self, rng: RngStream) -> GibbsConfig {
        GibbsConfig {
            total_iters: self.gibbs.total_iters,
            burn_in: self.gibbs.burn_in,
            rng,
            ..GibbsConfig::default()
        }
    }
}

/// An estimator evaluated by [`run_risk_study_with`].
pub trait ReplicateEstimator: Sync {
    fn name(&self) -> &str;

    /// Estimates from `x`. `truth` is available to oracle estimators used in
    /// testing; `rng` is this estimator's stream for the replicate.
    fn estimate(&self, x: &Tensor, truth: &SeparableCovariance, rng: RngStream) -> Result<SeparableCovariance>;
}

struct Standard<'a> {
    kind: EstimatorKind,
    cfg: &'a SimConfig,
}

impl ReplicateEstimator for Standard<'_> {
    fn name(&self) -> &str {
        self.kind.name()
    }

    fn estimate(&self, x: &Tensor, _truth: &SeparableCovariance, rng: RngStream) -> Result<SeparableCovariance> {
        let out = match self.kind {
            EstimatorKind::Mle => mle_flipflop(x, FlipFlopOptions { tol: self.cfg.mle_tol, max_iter: self.cfg.mle_max_iter })?,
            EstimatorKind::Umree => umree(&gibbs_chain(x, &self.cfg.gibbs_config(rng))?)?,
            EstimatorKind::Mwte => mwte(x, self.cfg.mwte_t, &self.cfg.gibbs_config(rng.derive(0)), rng.derive(1))?,
        };
        Ok(out.estimate)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub dims: Vec<usize>,
    pub n: usize,
    pub replicate: usize,
    pub estimator: String,
    /// Multiway Stein's loss; `None` when the estimator failed.
    pub loss: Option<f64>,
    pub error: Option<String>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub dims: Vec<usize>,
    pub estimator: String,
    /// Mean loss over successful replicates.
    pub risk: f64,
    /// Monte Carlo standard error of `risk`.
    pub risk_se: f64,
    /// Ratio of mean losses against the MLE over replicates where both succeeded.
    pub ratio_vs_mle: Option<f64>,
    /// Standard deviation of the per-replicate loss ratio against the MLE.
    pub ratio_sd: Option<f64>,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiskReport {
    pub master_seed: u64,
    pub records: Vec<ReplicateRecord>,
    pub summaries: Vec<EstimatorSummary>,
}

/// Mean and Monte Carlo standard error of paired differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairedDifference {
    pub mean: f64,
    pub se: f64,
    pub pairs: usize,
}

impl RiskReport {
    pub fn summary(&self, dims: &[usize], estimator: &str) -> Option<&EstimatorSummary> {
        self.summaries.iter().find(|s| s.dims == dims && s.estimator == estimator)
    }

    /// Per-replicate losses of one estimator, `None` for failures.
    pub fn losses(&self, dims: &[usize], estimator: &str) -> Vec<Option<f64>> {
        self.records
            .iter()
            .filter(|r| r.dims == dims && r.estimator == estimator)
            .map(|r| r.loss)
            .collect()
    }

    /// `loss(a) - loss(b)` over replicates where both succeeded.
    pub fn paired_difference(&self, dims: &[usize], a: &str, b: &str) -> PairedDifference {
        let diffs: Vec<f64> = self
            .losses(dims, a)
            .into_iter()
            .zip(self.losses(dims, b))
            .filter_map(|(x, y)| Some(x? - y?))
            .collect();
        let (mean, sd) = mean_sd(&diffs);
        PairedDifference { mean, se: sd / (diffs.len() as f64).sqrt(), pairs: diffs.len() }
    }

    /// Per-replicate rows: `dims,n,replicate,estimator,loss,seed`.
    pub fn write_replicates_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["dims", "n", "replicate", "estimator", "loss", "seed"])?;
        for r in &self.records {
            w.write_record([
                format_dims(&r.dims),
                r.n.to_string(),
                r.replicate.to_string(),
                r.estimator.clone(),
                r.loss.map(|v| v.to_string()).unwrap_or_default(),
                r.seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Aggregates: `dims,estimator,risk,ratio_vs_mle,ratio_sd,risk_se,failures`.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["dims", "estimator", "risk", "ratio_vs_mle", "ratio_sd", "risk_se", "failures"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.summaries {
            w.write_record([
                format_dims(&s.dims),
                s.estimator.clone(),
                s.risk.to_string(),
                opt(s.ratio_vs_mle),
                opt(s.ratio_sd),
                s.risk_se.to_string(),
                s.failures.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn format_dims(dims: &[usize]) -> String {
    dims.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Runs the configured study with the built-in estimators.
pub fn run_risk_study(cfg: &SimConfig) -> Result<RiskReport> {
    cfg.validate()?;
    let estimators: Vec<Standard> = cfg.estimators.iter().map(|&kind| Standard { kind, cfg }).collect();
    let refs: Vec<&dyn ReplicateEstimator> = estimators.iter().map(|e| e as &dyn ReplicateEstimator).collect();
    run_risk_study_with(cfg, &refs)
}

/// Runs a study with arbitrary estimators; `cfg.estimators` is ignored.
pub fn run_risk_study_with(cfg: &SimConfig, estimators: &[&dyn ReplicateEstimator]) -> Result<RiskReport> {
    if cfg.replicates == 0 || estimators.is_empty() || cfg.n == 0 {
        return Err(Error::InvalidArgument("need at least one replicate, sample and estimator".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;

    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for dims in &cfg.dims {
        let truth = cfg.truth_for(dims)?;
        let rows: Vec<Result<Vec<ReplicateRecord>>> = pool.install(|| {
            (0..cfg.replicates)
                .into_par_iter()
                .map(|r| run_replicate(cfg, dims, &truth, r, estimators))
                .collect()
        });
        let mut block = Vec::with_capacity(cfg.replicates * estimators.len());
        for row in rows {
            block.extend(row?);
        }
        summaries.extend(summarize(dims, &block, estimators));
        records.extend(block);
    }
    Ok(RiskReport { master_seed: cfg.master_seed, records, summaries })
}

fn run_replicate(
    cfg: &SimConfig,
    dims: &[usize],
    truth: &SeparableCovariance,
    replicate: usize,
    estimators: &[&dyn ReplicateEstimator],
) -> Result<Vec<ReplicateRecord>> {
    let stream = RngStream::new(cfg.master_seed, replicate as u64);
    let x = sample_array_normal(truth, cfg.n, &mut stream.derive(0).rng())?;
    let mut rows = Vec::with_capacity(estimators.len());
    for (i, est) in estimators.iter().enumerate() {
        let outcome = est
            .estimate(&x, truth, stream.derive(i as u64 + 1))
            .and_then(|e| multiway_stein_loss(truth, &e));
        let (loss, error) = match outcome {
            Ok(l) => (Some(l), None),
            Err(e) if e.is_numerical() => {
                log::warn!("replicate {replicate}, {}: {e}", est.name());
                (None, Some(e.to_string()))
            }
            Err(e) => return Err(e),
        };
        rows.push(ReplicateRecord {
            dims: dims.to_vec(),
            n: cfg.n,
            replicate,
            estimator: est.name().to_string(),
            loss,
            error,
            seed: cfg.master_seed,
        });
    }
    Ok(rows)
}

fn summarize(dims: &[usize], block: &[ReplicateRecord], estimators: &[&dyn ReplicateEstimator]) -> Vec<EstimatorSummary> {
    let losses = |name: &str| -> Vec<Option<f64>> {
        block.iter().filter(|r| r.estimator == name).map(|r| r.loss).collect()
    };
    let has_mle = estimators.iter().any(|e| e.name() == "mle");
    let mle = losses("mle");
    estimators
        .iter()
        .map(|est| {
            let own = losses(est.name());
            let ok: Vec<f64> = own.iter().flatten().copied().collect();
            let (risk, sd) = mean_sd(&ok);
            let (ratio_vs_mle, ratio_sd) = if has_mle {
                let pairs: Vec<(f64, f64)> = own
                    .iter()
                    .zip(&mle)
                    .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
                    .collect();
                let num: f64 = pairs.iter().map(|p| p.0).sum();
                let den: f64 = pairs.iter().map(|p| p.1).sum();
                let ratios: Vec<f64> = pairs.iter().map(|p| p.0 / p.1).collect();
                (Some(num / den), Some(mean_sd(&ratios).1))
            } else {
                (None, None)
            };
            EstimatorSummary {
                dims: dims.to_vec(),
                estimator: est.name().to_string(),
                risk,
                risk_se: sd / (ok.len() as f64).sqrt(),
                ratio_vs_mle,
                ratio_sd,
                successes: ok.len(),
                failures: own.len() - ok.len(),
            }
        })
        .collect()
}
