//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use arraynormal::estimators::*;
use arraynormal::loss::multiway_stein_loss;
use arraynormal::model::sample_array_normal;
use arraynormal::risk::{run_risk_study, EstimatorKind, SimConfig};
use arraynormal::samplers::*;
use arraynormal::{GroupElement, Matrix, RngStream, SeparableCovariance, Spd};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 mirror-Wishart mean", c1_mirror_wishart_mean),
        ("2 James-Stein recovery", c2_james_stein),
        ("3 multiway loss invariance", c3_loss_invariance),
        ("4 flip-flop monotonicity and K=1", c4_flipflop),
        ("5 closed-form optimality", c5_optimality),
        ("6 Stein iteration monotonicity", c6_stein_monotone),
        ("7 risk ordering (4,4,4)", c7_risk_ordering),
        ("8 determinism", c8_determinism),
        ("9 Bartlett laws", c9_bartlett),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {name}: PASS ({secs:.1} s) {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {name}: FAIL ({secs:.1} s) {d}")
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}

/// Largest entrywise error, with entry (i, j) measured relative to
/// `sqrt(want_ii want_jj)` so that zero off-diagonals are comparable.
fn entrywise_rel(got: &Matrix, want: &Matrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..want.nrows() {
        for j in 0..want.ncols() {
            let scale = (want[(i, i)] * want[(j, j)]).sqrt();
            worst = worst.max((got[(i, j)] - want[(i, j)]).abs() / scale);
        }
    }
    worst
}

fn c1_mirror_wishart_mean() -> Outcome {
    let start = Instant::now();
    let draws = 100_000;
    let mut worst: f64 = 0.0;
    let mut setup = ChaCha8Rng::seed_from_u64(101);
    for (case, &(q, nu)) in [(2usize, 5.0), (3, 8.0), (4, 10.0)].iter().enumerate() {
        let diag: Vec<f64> = (0..q).map(|i| ((i + 2) * (i + 2)) as f64).collect();
        let phis = [
            Spd::identity(q),
            Spd::new(Matrix::from_diagonal(&nalgebra::DVector::from_vec(diag))).unwrap(),
            random_spd(q, &mut setup),
        ];
        for (j, phi) in phis.iter().enumerate() {
            let mut rng = RngStream::new(102, (3 * case + j) as u64).rng();
            let mut sum = Matrix::zeros(q, q);
            for _ in 0..draws {
                sum += sample_mirror_wishart(nu, phi, &mut rng).unwrap().matrix();
            }
            let want = mirror_wishart_mean(nu, phi).unwrap();
            worst = worst.max(entrywise_rel(&(sum / draws as f64), want.matrix()));
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 0.03 && elapsed < Duration::from_secs(30),
        format!("max entrywise relative error {worst:.4} (limit 0.03), {:.1} s (limit 30 s)", elapsed.as_secs_f64()),
    )
}

/// `U^{-T} D^{-1} U^{-1} / n`, `U U^T = (X X^T)^{-1}` upper Cholesky via
/// nalgebra on the exchanged matrix.
fn james_stein(xm: &Matrix, n: usize) -> Matrix {
    let q = xm.nrows();
    let inv = (xm * xm.transpose()).try_inverse().unwrap();
    let j = Matrix::from_fn(q, q, |r, c| if r + c == q - 1 { 1.0 } else { 0.0 });
    let u = &j * nalgebra::Cholesky::new(&j * &inv * &j).unwrap().l() * &j;
    let u_inv = u.try_inverse().unwrap();
    let d_inv = Matrix::from_fn(q, q, |r, c| if r == c { n as f64 / (n + q + 1 - 2 * (r + 1)) as f64 } else { 0.0 });
    u_inv.transpose() * d_inv * u_inv / n as f64
}

fn c2_run() -> (String, f64) {
    let (p, n) = (3, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    let truth = random_covariance(&[p], &mut rng);
    let x = sample_array_normal(&truth, n, &mut rng).unwrap();
    let cfg = GibbsConfig { total_iters: 10_250, burn_in: 250, rng: RngStream::new(202, 0), ..GibbsConfig::default() };
    let out = umree(&gibbs_chain(&x, &cfg).unwrap()).unwrap();
    let err = rel_frob(&out.estimate.scaled_factor(0), &james_stein(&x.matricize(0).unwrap(), n));
    (out.to_json_value().to_string(), err)
}

fn c2_james_stein() -> Outcome {
    let start = Instant::now();
    let (_, err) = c2_run();
    let elapsed = start.elapsed();
    check(
        err <= 0.02 && elapsed < Duration::from_secs(30),
        format!("relative Frobenius error {err:.4} (limit 0.02), {:.1} s", elapsed.as_secs_f64()),
    )
}

fn c3_loss_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    let dims = [2, 3, 4];
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let truth = random_covariance(&dims, &mut rng);
        let est = random_covariance(&dims, &mut rng);
        let g = GroupElement::new(1.0, dims.iter().map(|&q| random_sl(q, &mut rng)).collect()).unwrap();
        let before = multiway_stein_loss(&truth, &est).unwrap();
        let after = multiway_stein_loss(&g.act_on_param(&truth).unwrap(), &g.act_on_param(&est).unwrap()).unwrap();
        worst = worst.max((before - after).abs() / (1.0 + before.abs()));
    }
    check(worst <= 1e-9, format!("max |dL| / (1 + |L|) = {worst:.2e} (limit 1e-9)"))
}

fn c4_flipflop() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    let configs: [(&[usize], usize); 5] = [(&[2, 3], 3), (&[3, 3, 2], 2), (&[4, 2], 5), (&[2, 2, 2], 4), (&[4, 4, 4], 1)];
    let mut worst_drop: f64 = 0.0;
    for i in 0..100 {
        let (dims, n) = configs[i % configs.len()];
        let truth = random_covariance(dims, &mut rng);
        let x = sample_array_normal(&truth, n, &mut rng).unwrap();
        let out = mle_flipflop(&x, FlipFlopOptions::default()).unwrap();
        for w in out.diagnostics.objective_trace.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
    }
    let mut worst_k1: f64 = 0.0;
    for (q, n) in [(3usize, 5usize), (4, 9), (5, 20)] {
        let x = random_tensor(&[q, n], &mut rng);
        let out = mle_flipflop(&x, FlipFlopOptions::default()).unwrap();
        let xm = x.matricize(0).unwrap();
        worst_k1 = worst_k1.max(rel_frob(&out.estimate.scaled_factor(0), &(&xm * xm.transpose() / n as f64)));
    }
    check(
        worst_drop <= 0.0 && worst_k1 <= 1e-8,
        format!("largest log-likelihood decrease {worst_drop:.2e} (must be <= 0); K=1 relative error {worst_k1:.2e} (limit 1e-8)"),
    )
}

/// Random candidates: broad draws plus perturbations of the optimum at
/// several scales.
fn candidate<R: Rng>(best: &SeparableCovariance, i: usize, rng: &mut R) -> SeparableCovariance {
    let dims = best.dims();
    if i % 2 == 0 {
        let raw: Vec<Spd> = dims.iter().map(|&q| random_spd(q, rng)).collect();
        let s2 = best.sigma2() * (2.0 * rng.random::<f64>() - 1.0).exp();
        return SeparableCovariance::normalize_factors(s2, raw).unwrap();
    }
    let eps = [0.3, 0.03, 0.003][(i / 2) % 3];
    let raw: Vec<Spd> = best
        .factors()
        .iter()
        .map(|f| {
            let e = gaussian_matrix(f.dim(), f.dim(), rng) * eps + Matrix::identity(f.dim(), f.dim());
            Spd::from_symmetrized(&e * f.matrix() * e.transpose()).unwrap()
        })
        .collect();
    let s2 = best.sigma2() * (eps * (2.0 * rng.random::<f64>() - 1.0)).exp();
    SeparableCovariance::normalize_factors(s2, raw).unwrap()
}

fn c5_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(501);
    let shapes: [&[usize]; 3] = [&[2, 3, 4], &[3, 3], &[2, 2, 2, 2]];
    let mut worst_gap = f64::INFINITY;
    for post in 0..10 {
        let dims = shapes[post % shapes.len()];
        let means: Vec<Spd> = dims
            .iter()
            .map(|&q| random_spd(q, &mut rng).scale((rng.random::<f64>() * 3.0 - 1.5).exp()).unwrap())
            .collect();
        let (best, _) = umree_from_mean_precisions(&means, &vec![1.0; dims.len()]).unwrap();
        let f0 = posterior_expected_multiway_loss(&means, &best).unwrap();
        for i in 0..10_000 {
            let cand = candidate(&best, i, &mut rng);
            let f = posterior_expected_multiway_loss(&means, &cand).unwrap();
            worst_gap = worst_gap.min(f - f0);
        }
    }
    let elapsed = start.elapsed();
    check(
        worst_gap >= -1e-9 && elapsed < Duration::from_secs(60),
        format!("min candidate - closed form = {worst_gap:.2e} (limit -1e-9), {:.1} s", elapsed.as_secs_f64()),
    )
}

fn c6_stein_monotone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(601);
    let shapes: [&[usize]; 6] = [&[2, 3], &[3, 4], &[2, 2, 3], &[2, 6], &[2, 2, 2], &[4, 3]];
    let mut worst_rise = f64::NEG_INFINITY;
    let mut steps = 0;
    for i in 0..100 {
        let dims = shapes[i % shapes.len()];
        let p: usize = dims.iter().product();
        // Alternate unstructured accumulators with near-separable ones.
        let a = if i % 2 == 0 {
            random_spd(p, &mut rng)
        } else {
            let mats: Vec<Matrix> = dims.iter().rev().map(|&q| random_spd(q, &mut rng).matrix().clone()).collect();
            let refs: Vec<&Matrix> = mats.iter().collect();
            let noise = random_spd(p, &mut rng).scale(0.1).unwrap();
            Spd::from_symmetrized(arraynormal::kron_list(&refs).unwrap() + noise.matrix()).unwrap()
        };
        let out = stein_umree_from_mean(&a, dims, SteinOptions::default()).unwrap();
        for w in out.diagnostics.objective_trace.windows(2) {
            worst_rise = worst_rise.max((w[1] - w[0]) / w[0].abs().max(1.0));
            steps += 1;
        }
    }
    check(
        worst_rise <= 0.0,
        format!("largest relative objective increase {worst_rise:.2e} over {steps} steps (must be <= 0)"),
    )
}

const C7_SEED: u64 = 20_250_701;

fn c7_config(parallelism: usize) -> SimConfig {
    SimConfig {
        dims: vec![vec![4, 4, 4]],
        n: 1,
        replicates: 100,
        estimators: vec![EstimatorKind::Mle, EstimatorKind::Umree, EstimatorKind::Mwte],
        mwte_t: 3,
        master_seed: C7_SEED,
        parallelism,
        ..SimConfig::default()
    }
}

fn report_bytes(report: &arraynormal::risk::RiskReport) -> Vec<u8> {
    let mut out = Vec::new();
    report.write_replicates_csv(&mut out).unwrap();
    report.write_summary_csv(&mut out).unwrap();
    out
}

static C7_OUTPUT: OnceLock<Vec<u8>> = OnceLock::new();

fn c7_risk_ordering() -> Outcome {
    let start = Instant::now();
    let cfg = c7_config(4);
    let report = run_risk_study(&cfg).unwrap();
    let elapsed = start.elapsed();
    let _ = C7_OUTPUT.set(report_bytes(&report));
    let dims = [4, 4, 4];
    let risk = |e: &str| report.summary(&dims, e).unwrap().risk;
    let failures: usize = report.summaries.iter().map(|s| s.failures).sum();
    let um = report.paired_difference(&dims, "umree", "mle");
    let mw = report.paired_difference(&dims, "mwte", "umree");
    let ok = failures == 0
        && um.pairs == 100
        && um.mean <= -2.0 * um.se
        && mw.mean <= 2.0 * mw.se
        && elapsed < Duration::from_secs(240);
    check(
        ok,
        format!(
            "risk mle {:.3}, umree {:.3}, mwte {:.3}; umree-mle {:.3} (se {:.3}), mwte-umree {:.3} (se {:.3}); {failures} failures; {:.1} s at 4 workers (limit 240 s)",
            risk("mle"),
            risk("umree"),
            risk("mwte"),
            um.mean,
            um.se,
            mw.mean,
            mw.se,
            elapsed.as_secs_f64()
        ),
    )
}

fn c8_determinism() -> Outcome {
    let (a, _) = c2_run();
    let (b, _) = c2_run();
    let c2_same = a == b;

    let start = Instant::now();
    let serial = report_bytes(&run_risk_study(&c7_config(1)).unwrap());
    let serial_time = start.elapsed();
    let parallel = match C7_OUTPUT.get() {
        Some(bytes) => bytes.clone(),
        None => report_bytes(&run_risk_study(&c7_config(4)).unwrap()),
    };
    let c7_same = serial == parallel;
    check(
        c2_same && c7_same && serial_time < Duration::from_secs(900),
        format!(
            "criterion 2 output identical: {c2_same}; criterion 7 CSV identical across 1 and 4 workers: {c7_same} ({} bytes); single-threaded run {:.1} s (limit 900 s)",
            serial.len(),
            serial_time.as_secs_f64()
        ),
    )
}

struct Moments {
    sum: f64,
    sum_sq: f64,
    n: usize,
}

impl Moments {
    fn new() -> Self {
        Moments { sum: 0.0, sum_sq: 0.0, n: 0 }
    }
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.sum_sq += v * v;
        self.n += 1;
    }
    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }
    fn var(&self) -> f64 {
        self.sum_sq / self.n as f64 - self.mean().powi(2)
    }
}

/// Relative error against a nonzero target, or error in target-sd units for a
/// zero-mean target.
fn moment_error(got: f64, want: f64, sd: f64) -> f64 {
    if want == 0.0 {
        (got / sd).abs()
    } else {
        (got / want - 1.0).abs()
    }
}

fn c9_bartlett() -> Outcome {
    let (q, nu) = (3usize, 9.0);
    let draws = 100_000;
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();

    // Inverse-Wishart factor: diag^2 ~ inverse-gamma((nu - q + i)/2, 1/2), and
    // the standardized off-diagonal row W_1^{-T} r / W_ii is standard normal.
    // The inverse V = W^{-1} satisfies V^T V ~ Wishart(nu, I), so
    // V_ii^2 ~ chi^2_{nu - q + i} and V_ij ~ N(0, 1).
    let mut rng = RngStream::new(901, 0).rng();
    let mut diag: Vec<Moments> = (0..q).map(|_| Moments::new()).collect();
    let mut inv_diag: Vec<Moments> = (0..q).map(|_| Moments::new()).collect();
    let mut z: Vec<Moments> = (0..q * (q - 1) / 2).map(|_| Moments::new()).collect();
    let mut inv_off: Vec<Moments> = (0..q * (q - 1) / 2).map(|_| Moments::new()).collect();
    let mut wishart_sum = Matrix::zeros(q, q);
    for _ in 0..draws {
        let w = sample_inverse_wishart_chol(nu, q, &mut rng).unwrap();
        let wm = w.matrix();
        let v = w.inverse();
        let mut slot = 0;
        for i in 0..q {
            diag[i].push(wm[(i, i)].powi(2));
            inv_diag[i].push(v[(i, i)].powi(2));
            if i > 0 {
                let lead = wm.view((0, 0), (i, i)).into_owned();
                let row = wm.view((i, 0), (1, i)).transpose();
                let zi = lead.transpose().try_inverse().unwrap() * row / wm[(i, i)];
                for j in 0..i {
                    z[slot + j].push(zi[j]);
                    inv_off[slot + j].push(v[(i, j)]);
                }
                slot += i;
            }
        }
        wishart_sum += v.transpose() * v;
    }
    for i in 0..q {
        let a = (nu - q as f64 + (i + 1) as f64) / 2.0;
        let ig_mean = 0.5 / (a - 1.0);
        worst = worst.max(moment_error(diag[i].mean(), ig_mean, 0.0));
        let dof = 2.0 * a;
        worst = worst.max(moment_error(inv_diag[i].mean(), dof, 0.0));
        worst = worst.max(moment_error(inv_diag[i].var(), 2.0 * dof, 0.0));
    }
    for m in z.iter().chain(&inv_off) {
        worst = worst.max(moment_error(m.mean(), 0.0, 1.0));
        worst = worst.max(moment_error(m.var(), 1.0, 0.0));
    }
    let wishart_err = entrywise_rel(&(wishart_sum / draws as f64), &(Matrix::identity(q, q) * nu));
    worst = worst.max(wishart_err);
    notes.push(format!("inverse-Wishart factor worst {worst:.4}"));

    // Triangular factor with inverse-gamma((nu - i + 1)/2, 1/2) diagonals: its
    // inverse has V_ii^2 ~ gamma((nu - i + 1)/2, 1/2), V_ij ~ N(0, 1)
    // independently.
    let shapes: Vec<f64> = (1..=q).map(|i| (nu - i as f64 + 1.0) / 2.0).collect();
    let mut rng = RngStream::new(902, 0).rng();
    let mut vd: Vec<Moments> = (0..q).map(|_| Moments::new()).collect();
    let mut vo: Vec<Moments> = (0..q * (q - 1) / 2).map(|_| Moments::new()).collect();
    let mut cross = Moments::new();
    for _ in 0..draws {
        let v = sample_inverse_gamma_triangular(&shapes, &mut rng).unwrap().inverse();
        let mut slot = 0;
        for i in 0..q {
            vd[i].push(v[(i, i)].powi(2));
            for j in 0..i {
                vo[slot + j].push(v[(i, j)]);
            }
            slot += i;
        }
        // Independence: the product of two off-diagonal entries that share a
        // column has mean zero.
        cross.push(v[(1, 0)] * v[(2, 0)]);
    }
    let mut worst4: f64 = 0.0;
    for i in 0..q {
        let dof = 2.0 * shapes[i];
        worst4 = worst4.max(moment_error(vd[i].mean(), dof, 0.0));
        worst4 = worst4.max(moment_error(vd[i].var(), 2.0 * dof, 0.0));
    }
    for m in &vo {
        worst4 = worst4.max(moment_error(m.mean(), 0.0, 1.0));
        worst4 = worst4.max(moment_error(m.var(), 1.0, 0.0));
    }
    worst4 = worst4.max(moment_error(cross.mean(), 0.0, 1.0));
    notes.push(format!("triangular inverse-gamma factor worst {worst4:.4}"));
    let worst = worst.max(worst4);
    check(worst <= 0.05, format!("{} (limit 0.05)", notes.join("; ")))
}
