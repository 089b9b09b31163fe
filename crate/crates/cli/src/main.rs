//! Command-line front end: data generation, estimation, losses and risk
//! studies.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arraynormal::estimators::{
    gibbs_chain, mle_flipflop, mwte, stein_umree, umree, umree_weighted, EstimatorOutput, FlipFlopOptions,
    GibbsConfig, SteinOptions,
};
use arraynormal::loss::{multiway_stein_loss, stein_loss_full, weighted_stein_loss};
use arraynormal::model::sample_array_normal;
use arraynormal::risk::{run_risk_study, SimConfig};
use arraynormal::{Error, RngStream, SeparableCovariance, Tensor};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "arraynormal", version, about = "Separable covariance estimation for array normal data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw n arrays from the array normal model.
    Sample {
        /// Mode sizes, e.g. 4,4,4.
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Covariance JSON; identity factors with unit scale when absent.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the covariance from a data tensor whose last mode indexes samples.
    Estimate {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long = "in")]
        input: PathBuf,
        /// Total Gibbs iterations.
        #[arg(long, default_value_t = 1250)]
        iters: usize,
        #[arg(long, default_value_t = 250)]
        burnin: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Haar rotations for mwte.
        #[arg(long, default_value_t = 3)]
        rotations: usize,
        /// Per-mode loss weights for umree-weighted.
        #[arg(long, value_delimiter = ',')]
        weights: Vec<f64>,
        /// Convergence tolerance for mle and stein-umree.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Output path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Loss of an estimate against a true parameter.
    Loss {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long, value_enum, default_value_t = LossArg::Multiway)]
        kind: LossArg,
        /// Per-mode weights for the weighted loss.
        #[arg(long, value_delimiter = ',')]
        weights: Vec<f64>,
    },
    /// Run a Monte Carlo risk study.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Per-replicate CSV.
        #[arg(long)]
        out: PathBuf,
        /// Aggregate CSV; defaults to `<out stem>_summary.csv`.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Overrides the configured worker count.
        #[arg(long)]
        parallelism: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Mle,
    Umree,
    UmreeWeighted,
    SteinUmree,
    Mwte,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LossArg {
    Multiway,
    Weighted,
    Stein,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> arraynormal::Result<()> {
    match command {
        Command::Sample { dims, n, seed, truth, out } => {
            let cov = match truth {
                Some(path) => SeparableCovariance::read_json(path)?,
                None => SeparableCovariance::identity(&dims),
            };
            if cov.dims() != dims {
                return Err(Error::DimensionMismatch(format!(
                    "--dims {dims:?} does not match the truth dims {:?}",
                    cov.dims()
                )));
            }
            let x = sample_array_normal(&cov, n, &mut RngStream::new(seed, 0).rng())?;
            x.write_json(out)
        }
        Command::Estimate { method, input, iters, burnin, seed, rotations, weights, tol, max_iter, out } => {
            let x = Tensor::read_json(input)?;
            let cfg = GibbsConfig {
                total_iters: iters,
                burn_in: burnin,
                rng: RngStream::new(seed, 0),
                full_precision: matches!(method, MethodArg::SteinUmree),
                ..GibbsConfig::default()
            };
            let result = estimate(&x, method, &cfg, rotations, &weights, tol, max_iter)?;
            let text = serde_json::to_string_pretty(&result.to_json_value())?;
            match out {
                Some(path) => std::fs::write(path, text + "\n")?,
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::Loss { truth, estimate, kind, weights } => {
            let truth = SeparableCovariance::read_json(truth)?;
            // Estimate files carry an extra diagnostics block, which is ignored.
            let est = SeparableCovariance::read_json(estimate)?;
            let value = match kind {
                LossArg::Multiway => multiway_stein_loss(&truth, &est)?,
                LossArg::Weighted => weighted_stein_loss(&truth, &est, &weights)?,
                LossArg::Stein => stein_loss_full(&truth, &est)?,
            };
            println!("{value}");
            Ok(())
        }
        Command::Simulate { config, out, summary, json, parallelism } => {
            let mut cfg = SimConfig::read_json(config)?;
            cfg.apply_env_overrides()?;
            if let Some(p) = parallelism {
                cfg.parallelism = p;
            }
            let report = run_risk_study(&cfg)?;
            report.write_replicates_csv(BufWriter::new(File::create(&out)?))?;
            let summary = summary.unwrap_or_else(|| summary_path(&out));
            report.write_summary_csv(BufWriter::new(File::create(&summary)?))?;
            if let Some(path) = json {
                let mut w = BufWriter::new(File::create(path)?);
                w.write_all(report.to_json_string()?.as_bytes())?;
                w.flush()?;
            }
            for s in &report.summaries {
                log::info!(
                    "{} {}: risk {:.4} (se {:.4}), {} failures",
                    arraynormal::risk::format_dims(&s.dims),
                    s.estimator,
                    s.risk,
                    s.risk_se,
                    s.failures
                );
            }
            Ok(())
        }
    }
}

fn estimate(
    x: &Tensor,
    method: MethodArg,
    cfg: &GibbsConfig,
    rotations: usize,
    weights: &[f64],
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> arraynormal::Result<EstimatorOutput> {
    match method {
        MethodArg::Mle => {
            let d = FlipFlopOptions::default();
            mle_flipflop(x, FlipFlopOptions { tol: tol.unwrap_or(d.tol), max_iter: max_iter.unwrap_or(d.max_iter) })
        }
        MethodArg::Umree => umree(&gibbs_chain(x, cfg)?),
        MethodArg::UmreeWeighted => {
            if weights.is_empty() {
                return Err(Error::InvalidArgument("umree-weighted needs --weights".into()));
            }
            umree_weighted(&gibbs_chain(x, cfg)?, weights)
        }
        MethodArg::SteinUmree => {
            let d = SteinOptions::default();
            stein_umree(
                &gibbs_chain(x, cfg)?,
                SteinOptions { tol: tol.unwrap_or(d.tol), max_iter: max_iter.unwrap_or(d.max_iter) },
            )
        }
        // Same stream layout as the risk harness.
        MethodArg::Mwte => mwte(x, rotations, &cfg.with_rng(cfg.rng.derive(0)), cfg.rng.derive(1)),
    }
}

fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    out.with_file_name(format!("{stem}_summary.csv"))
}
