//! Empirical checks of the analytical claims behind LocalNewton: local
//! Hessian concentration, sampled-gradient deviation, per-worker descent,
//! and the error floor left by local averaging.
//!
//! Probabilistic statements are checked against binomial confidence bands
//! or scaling fits over fixed seeds, never on a single draw.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index;
use rayon::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::data::{self, Partition};
use crate::error::{Error, Result};
use crate::fabric::Fabric;
use crate::linalg;
use crate::localnewton::{localnewton_round, newton_step_on, WorkerState};
use crate::newton::{self, CgConfig, LineSearchConfig};
use crate::objective::{CurvatureBounds, ObjectiveModel};
use crate::rng;
use crate::synth::{self, SynthSpec, SynthTask};

/// Constants of the convergence analysis, all derived from
/// [`CurvatureBounds`] and the tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    pub epsilon: f64,
    pub epsilon1: f64,
    pub delta_prob: f64,
    pub s: usize,
    pub workers: usize,
    pub beta: f64,
    pub bounds: CurvatureBounds,
    pub alpha_star: f64,
    /// Per-step descent constant `alpha* beta / (M (1 + eps))`.
    pub psi: f64,
    /// Gradient deviation scale `Gamma (1 + sqrt(2 ln(1/delta))) / sqrt(s)`.
    pub eta: f64,
    pub c1: f64,
    pub c2: f64,
    pub rho1: f64,
    pub rho2: f64,
    /// The two forms given for the multi-step descent constant.
    pub c_thm44_a: f64,
    pub c_thm44_b: f64,
    /// Smallest local gradient norm, when measured.
    pub g_min: Option<f64>,
}

impl TheoryParams {
    #[allow(clippy::too_many_arguments)]
    pub fn derive(
        bounds: CurvatureBounds,
        epsilon: f64,
        epsilon1: f64,
        delta_prob: f64,
        s: usize,
        workers: usize,
        beta: f64,
        g_min: Option<f64>,
    ) -> Result<Self> {
        bounds.validate()?;
        if !(epsilon > 0.0 && epsilon <= 0.5) {
            return Err(Error::invalid(format!("epsilon must lie in (0, 1/2], got {epsilon}")));
        }
        if !(epsilon1 > 0.0 && epsilon1 < 0.5) {
            return Err(Error::invalid(format!("epsilon1 must lie in (0, 1/2), got {epsilon1}")));
        }
        if !(delta_prob > 0.0 && delta_prob < 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta_prob}")));
        }
        if s == 0 || workers == 0 {
            return Err(Error::invalid("s and K must be at least 1"));
        }
        let alpha_star = newton::alpha_star(&bounds, beta)?;
        let (kappa, m) = (bounds.kappa, bounds.smoothness);
        let psi = alpha_star * beta / (m * (1.0 + epsilon));
        if !(psi > 0.0) {
            return Err(Error::invalid("descent constant psi is not positive"));
        }
        let eta = eta(s, delta_prob, bounds.grad_bound);
        let one_m = 1.0 - epsilon;
        let c1 = one_m * psi / 2.0 - epsilon1 / (kappa * one_m);
        let c2 = psi * one_m / 2.0;
        let c_thm44_a = psi - (m - kappa * one_m * one_m) / (2.0 * workers as f64 * kappa * kappa * one_m * one_m);
        let c_thm44_b = psi * one_m.powi(3) / 2.0;
        Ok(TheoryParams {
            epsilon,
            epsilon1,
            delta_prob,
            s,
            workers,
            beta,
            bounds,
            alpha_star,
            psi,
            eta,
            c1,
            c2,
            rho1: 1.0 - 2.0 * kappa * c1,
            rho2: 1.0 - 2.0 * kappa * c2,
            c_thm44_a,
            c_thm44_b,
            g_min,
        })
    }

    /// Additive floor of the single-sync recursion, `eta Gamma / (kappa (1 - eps))`.
    pub fn floor_l1(&self) -> f64 {
        self.eta * self.bounds.grad_bound / (self.bounds.kappa * (1.0 - self.epsilon))
    }

    /// Additive floor with `L` local steps per sync.
    pub fn floor(&self, local_iters: usize) -> f64 {
        local_iters as f64 * self.floor_l1()
    }

    /// Line-search cap for descent checks.
    pub fn capped_line_search(&self, base: &LineSearchConfig) -> LineSearchConfig {
        LineSearchConfig {
            beta: self.beta,
            alpha_star_cap: Some(self.alpha_star),
            ..*base
        }
    }
}

/// `Gamma (1 + sqrt(2 ln(1/delta))) / sqrt(s)`
pub fn eta(s: usize, delta_prob: f64, grad_bound: f64) -> f64 {
    grad_bound * (1.0 + (2.0 * (1.0 / delta_prob).ln()).sqrt()) / (s as f64).sqrt()
}

/// Smallest shard size for which every local Hessian is within
/// `[(1-eps) kappa, (1+eps) M]` with probability `1 - delta`:
/// `ceil(4B / (kappa eps^2) ln(2d / delta))`.
pub fn required_sample_size(bounds: &CurvatureBounds, epsilon: f64, delta_prob: f64, d: usize) -> u64 {
    let raw = 4.0 * bounds.sample_curvature / (bounds.kappa * epsilon * epsilon) * (2.0 * d as f64 / delta_prob).ln();
    raw.ceil() as u64
}

/// Same bound with the union over `K` workers, `ln(2dK / delta)`.
pub fn required_sample_size_all_workers(bounds: &CurvatureBounds, epsilon: f64, delta_prob: f64, d: usize, workers: usize) -> u64 {
    required_sample_size(bounds, epsilon, delta_prob / workers as f64, d)
}

fn subset(seed: u64, tag: u64, n: usize, s: usize, trial: usize) -> Vec<usize> {
    let mut rng = rng::stream(seed, rng::purpose::THEORY, &[tag, s as u64, trial as u64]);
    let mut idx = index::sample(&mut rng, n, s).into_vec();
    idx.sort_unstable();
    idx
}

fn extreme_eigenvalues(h: &crate::linalg::Matrix) -> Result<(f64, f64)> {
    let eig = SymmetricEigen::new(h.to_nalgebra());
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::NonFinite("symmetric eigensolve"));
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationTrial {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationResult {
    pub s: usize,
    pub epsilon: f64,
    pub failures: usize,
    pub trials: Vec<ConcentrationTrial>,
}

impl ConcentrationResult {
    pub fn failure_rate(&self) -> f64 {
        self.failures as f64 / self.trials.len() as f64
    }

    /// One-sided test of `H0: rate <= p`: true unless the observed failure
    /// count would be improbable (below `1 - confidence`) under `p`.
    pub fn consistent_with_rate(&self, p: f64, confidence: f64) -> bool {
        binomial_upper_tail(self.failures as u64, self.trials.len() as u64, p) > 1.0 - confidence
    }
}

/// `P[X >= k]` for `X ~ Binomial(n, p)`.
pub fn binomial_upper_tail(k: u64, n: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let b = Binomial::new(p, n).expect("valid binomial parameters");
    b.sf(k - 1)
}

/// Draws `trials` subsets of size `s` and checks
/// `(1-eps) kappa <= lambda_min(H_S)` and `lambda_max(H_S) <= (1+eps) M`.
pub fn check_hessian_concentration(
    model: &ObjectiveModel<'_>,
    w: &[f64],
    bounds: &CurvatureBounds,
    s: usize,
    trials: usize,
    epsilon: f64,
    seed: u64,
) -> Result<ConcentrationResult> {
    let n = model.data().n();
    if s == 0 || s > n {
        return Err(Error::invalid(format!("subset size {s} outside 1..={n}")));
    }
    if model.dim() > 500 {
        return Err(Error::invalid("dense eigensolves are limited to d <= 500"));
    }
    let lo_bound = (1.0 - epsilon) * bounds.kappa;
    let hi_bound = (1.0 + epsilon) * bounds.smoothness;
    let results: Vec<Result<ConcentrationTrial>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let idx = subset(seed, 1, n, s, t);
            let (lambda_min, lambda_max) = extreme_eigenvalues(&model.explicit_hessian(w, &idx)?)?;
            Ok(ConcentrationTrial {
                lambda_min,
                lambda_max,
                failed: lambda_min < lo_bound || lambda_max > hi_bound,
            })
        })
        .collect();
    let trials = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ConcentrationResult {
        s,
        epsilon,
        failures: trials.iter().filter(|t| t.failed).count(),
        trials,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationSummary {
    pub s: usize,
    pub mean: f64,
    pub quantile95: f64,
    pub samples: Vec<f64>,
}

/// Nearest-rank quantile of unsorted data.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// `|g_S(w) - g(w)|` over random subsets, summarised per subset size.
pub fn check_gradient_deviation(
    model: &ObjectiveModel<'_>,
    w: &[f64],
    s_values: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<DeviationSummary>> {
    let n = model.data().n();
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let all: Vec<usize> = (0..n).collect();
    let g = model.gradient(w, &all)?;
    let mut out = Vec::with_capacity(s_values.len());
    for &s in s_values {
        if s == 0 || s > n {
            return Err(Error::invalid(format!("subset size {s} outside 1..={n}")));
        }
        let samples: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let idx = if s == n { all.clone() } else { subset(seed, 2, n, s, t) };
                let gs = model.gradient(w, &idx)?;
                let diff: Vec<f64> = gs.iter().zip(&g).map(|(a, b)| a - b).collect();
                Ok(linalg::norm(&diff))
            })
            .collect::<Vec<Result<f64>>>()
            .into_iter()
            .collect::<Result<_>>()?;
        let mean = linalg::pairwise_sum(&samples) / samples.len() as f64;
        out.push(DeviationSummary {
            s,
            mean,
            quantile95: quantile(&samples, 0.95),
            samples,
        });
    }
    Ok(out)
}

/// Largest per-sample gradient norm at the given iterates.
pub fn measured_grad_bound(model: &ObjectiveModel<'_>, iterates: &[Vec<f64>]) -> f64 {
    let n = model.data().n();
    iterates
        .iter()
        .flat_map(|w| (0..n).map(move |j| linalg::norm(&model.sample_gradient(w, j))))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentRecord {
    pub worker: usize,
    pub grad_norm: f64,
    pub alpha: f64,
    /// `f^k(w) - f^k(w')`.
    pub decrease: f64,
    /// `psi |g^k|^2`.
    pub bound: f64,
    pub satisfied: bool,
}

/// One capped local Newton step per worker from `w`, compared against the
/// per-step descent guarantee. Failures are reported, not raised.
pub fn check_descent_lemma(
    model: &ObjectiveModel<'_>,
    partition: &Partition,
    w: &[f64],
    params: &TheoryParams,
    ls: &LineSearchConfig,
    cg: &CgConfig,
) -> Result<Vec<DescentRecord>> {
    let capped = params.capped_line_search(ls);
    let fabric = Fabric::new(0)?;
    fabric.map(partition.worker_count(), |k| {
        let step = newton_step_on(model, w, partition.shard(k), &capped, cg)?;
        let decrease = step.loss_before - step.loss_after;
        let bound = params.psi * step.grad_norm * step.grad_norm;
        Ok(DescentRecord {
            worker: k,
            grad_norm: step.grad_norm,
            alpha: step.alpha,
            decrease,
            bound,
            satisfied: decrease >= bound,
        })
    })
}

/// How shard count varies with the shard size in an error-floor sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FloorScaling {
    /// `n` samples split into `K = n / s` shards.
    FixedTotal(usize),
    /// `K` shards of `s` samples each (`n = K s`).
    FixedWorkers(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloorDesign {
    pub d: usize,
    pub noise: f64,
    pub scaling: FloorScaling,
    /// Local iterations per sync, at least 2.
    pub local_iters: usize,
    pub max_rounds: usize,
    /// Round-over-round loss change that counts as stagnation.
    pub stall_tol: f64,
}

impl FloorDesign {
    pub fn new(d: usize, scaling: FloorScaling) -> Self {
        FloorDesign {
            d,
            noise: 1.0,
            scaling,
            local_iters: 2,
            max_rounds: 50,
            stall_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloorPoint {
    pub s: usize,
    pub workers: usize,
    pub gap: f64,
    pub rounds: usize,
}

/// Exact minimiser of a least-squares model over `idx` from the normal
/// equations `(2/n X^T X + gamma I) w = 2/n X^T y`.
pub fn least_squares_optimum(model: &ObjectiveModel<'_>, idx: &[usize]) -> Result<Vec<f64>> {
    let d = model.dim();
    let zero = vec![0.0; d];
    let h = model.explicit_hessian(&zero, idx)?;
    let g0 = model.gradient(&zero, idx)?;
    let a = DMatrix::from_row_slice(d, d, h.as_slice());
    let chol = a.cholesky().ok_or_else(|| Error::invalid("normal equations are singular"))?;
    let sol = chol.solve(&DVector::from_vec(g0.iter().map(|v| -v).collect()));
    Ok(sol.iter().copied().collect())
}

/// Runs LocalNewton to stagnation and returns `(f(w_bar) - f(w*), rounds)`
/// over the union of shards.
pub fn error_floor_gap(
    model: &ObjectiveModel<'_>,
    partition: &Partition,
    local_iters: usize,
    max_rounds: usize,
    stall_tol: f64,
) -> Result<(f64, usize)> {
    if local_iters < 2 {
        return Err(Error::invalid("the floor experiment needs L >= 2"));
    }
    let d = model.dim();
    let union = partition.union();
    let w_star = least_squares_optimum(model, &union)?;
    let f_star = model.value(&w_star, &union)?;
    let ls = LineSearchConfig::default();
    let cg = CgConfig {
        tol: 1e-12,
        max_iters: 4 * d.max(1),
    };
    let mut fabric = Fabric::new(0)?;
    let mut states = WorkerState::for_partition(partition, &vec![0.0; d]);
    let mut prev = model.value(&vec![0.0; d], &union)?;
    let mut w_bar = vec![0.0; d];
    let mut rounds = 0;
    for _ in 0..max_rounds {
        w_bar = localnewton_round(model, &mut states, local_iters, &ls, &cg, &mut fabric)?;
        rounds += 1;
        let f = model.value(&w_bar, &union)?;
        let change = (prev - f).abs();
        prev = f;
        if change < stall_tol {
            break;
        }
    }
    Ok((model.value(&w_bar, &union)? - f_star, rounds))
}

/// Error floor of LocalNewton on unregularized least squares for each shard
/// size, with data drawn from a fixed Gaussian linear model.
pub fn measure_error_floor(design: &FloorDesign, s_values: &[usize], seed: u64) -> Result<Vec<FloorPoint>> {
    let mut out = Vec::with_capacity(s_values.len());
    for &s in s_values {
        if s < design.d {
            return Err(Error::invalid(format!("shard size {s} is below d = {}", design.d)));
        }
        let (n, k) = match design.scaling {
            FloorScaling::FixedTotal(n) => (n, n / s),
            FloorScaling::FixedWorkers(k) => (k * s, k),
        };
        if k < 1 {
            return Err(Error::invalid(format!("shard size {s} exceeds the sample budget {n}")));
        }
        let mut spec = SynthSpec::new(n, design.d, SynthTask::LeastSquares, seed);
        spec.noise = design.noise;
        let data = synth::generate(&spec)?.train;
        let model = ObjectiveModel::least_squares(&data, 0.0)?;
        let partition = data::partition_uniform(n, k, seed ^ (s as u64).rotate_left(32))?;
        let (gap, rounds) = error_floor_gap(&model, &partition, design.local_iters, design.max_rounds, design.stall_tol)?;
        out.push(FloorPoint {
            s,
            workers: k,
            gap,
            rounds,
        });
    }
    Ok(out)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            r[o] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}

/// Settings of the full theory-check suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub epsilon: f64,
    pub epsilon1: f64,
    pub delta_prob: f64,
    pub trials: usize,
    pub workers: usize,
    pub beta: f64,
    pub seed: u64,
    /// Local Newton rounds whose iterates serve as probe points.
    pub probe_rounds: usize,
    pub floor_n: usize,
    pub floor_d: usize,
    pub floor_seeds: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            epsilon: 0.5,
            epsilon1: 0.1,
            delta_prob: 0.1,
            trials: 200,
            workers: 16,
            beta: 0.1,
            seed: 0,
            probe_rounds: 3,
            floor_n: 1 << 14,
            floor_d: 8,
            floor_seeds: 10,
        }
    }
}

/// Human-readable summary plus one CSV row per raw trial.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub text: String,
    pub trials_csv: String,
    pub params: TheoryParams,
}

pub const TRIALS_CSV_HEADER: &str = "check,key,index,a,b,flag";

/// Runs every check on `model` (logistic or least squares) and the error
/// floor experiment on synthetic least-squares data.
pub fn run_suite(model: &ObjectiveModel<'_>, cfg: &SuiteConfig) -> Result<SuiteReport> {
    use std::fmt::Write as _;
    let n = model.data().n();
    let d = model.dim();
    if cfg.workers == 0 || n / cfg.workers < 1 {
        return Err(Error::Config(format!("cannot split {n} samples over {} workers", cfg.workers)));
    }
    if cfg.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let partition = data::partition_uniform(n, cfg.workers, cfg.seed)?;
    let ls = LineSearchConfig::default();
    let cg = CgConfig::for_dim(d);

    // Probe iterates: the start and the first few averaged LocalNewton models.
    let mut iterates = vec![vec![0.0; d]];
    let mut states = WorkerState::for_partition(&partition, &iterates[0]);
    let mut fabric = Fabric::new(0)?;
    for _ in 0..cfg.probe_rounds {
        let w = localnewton_round(model, &mut states, 1, &ls, &cg, &mut fabric)?;
        iterates.push(w);
    }
    let bounds = model.estimate_bounds(&iterates)?;
    let s = partition.shard_size();
    let params = TheoryParams::derive(bounds, cfg.epsilon, cfg.epsilon1, cfg.delta_prob, s, cfg.workers, cfg.beta, None)?;
    let w_probe = iterates.last().cloned().unwrap_or_else(|| vec![0.0; d]);

    let mut text = String::new();
    let mut csv = String::from(TRIALS_CSV_HEADER);
    csv.push('\n');
    let _ = writeln!(text, "model: {} n={n} d={d} gamma={}", model.kind().name(), model.gamma());
    let _ = writeln!(
        text,
        "bounds: kappa={:.6e} M={:.6e} B={:.6e} Gamma={:.6e} (Gamma measured on {} visited iterates)",
        bounds.kappa,
        bounds.smoothness,
        bounds.sample_curvature,
        bounds.grad_bound,
        iterates.len()
    );
    let _ = writeln!(
        text,
        "params: K={} s={s} eps={} eps1={} delta={} beta={}",
        cfg.workers, cfg.epsilon, cfg.epsilon1, cfg.delta_prob, cfg.beta
    );
    let _ = writeln!(
        text,
        "  alpha*={:.6e} (sampled-curvature form {:.6e})",
        params.alpha_star,
        newton::alpha_star_sampled(&bounds, cfg.beta, cfg.epsilon).unwrap_or(f64::NAN)
    );
    let _ = writeln!(text, "  psi={:.6e} eta={:.6e}", params.psi, params.eta);
    let _ = writeln!(
        text,
        "  C1={:.6e} C2={:.6e} rho1={:.6e} rho2={:.6e}",
        params.c1, params.c2, params.rho1, params.rho2
    );
    let _ = writeln!(
        text,
        "  C (multi-step, first form)={:.6e}  C (second form)={:.6e}",
        params.c_thm44_a, params.c_thm44_b
    );

    // Hessian concentration at the required and the actual shard size.
    let required = required_sample_size(&bounds, cfg.epsilon, cfg.delta_prob, d);
    let _ = writeln!(text, "\n[hessian concentration] required s = {required}");
    let mut sizes = vec![s];
    if (required as usize) <= n && required as usize != s {
        sizes.push(required as usize);
    }
    if d <= 500 {
        for &sz in &sizes {
            let r = check_hessian_concentration(model, &w_probe, &bounds, sz, cfg.trials, cfg.epsilon, cfg.seed)?;
            for (t, tr) in r.trials.iter().enumerate() {
                let _ = writeln!(
                    csv,
                    "concentration,{sz},{t},{:e},{:e},{}",
                    tr.lambda_min,
                    tr.lambda_max,
                    u8::from(tr.failed)
                );
            }
            let _ = writeln!(
                text,
                "  s={sz}: failures {}/{} rate={:.4} consistent with rate<=delta at 99%: {}",
                r.failures,
                r.trials.len(),
                r.failure_rate(),
                r.consistent_with_rate(cfg.delta_prob, 0.99)
            );
        }
    } else {
        let _ = writeln!(text, "  skipped (d > 500)");
    }

    // Gradient deviation.
    let s_values: Vec<usize> = (5..=20).map(|e| 1usize << e).filter(|&v| v < n).take(8).collect();
    if s_values.len() >= 2 {
        let dev = check_gradient_deviation(model, &w_probe, &s_values, cfg.trials, cfg.seed)?;
        let _ = writeln!(text, "\n[gradient deviation] delta=0.05");
        let mut all_below = true;
        for dsum in &dev {
            let e = eta(dsum.s, 0.05, bounds.grad_bound);
            all_below &= dsum.quantile95 <= e;
            for (t, v) in dsum.samples.iter().enumerate() {
                let _ = writeln!(csv, "deviation,{},{t},{v:e},,", dsum.s);
            }
            let _ = writeln!(
                text,
                "  s={:>7} mean={:.4e} q95={:.4e} eta={:.4e}",
                dsum.s, dsum.mean, dsum.quantile95, e
            );
        }
        let xs: Vec<f64> = dev.iter().map(|v| v.s as f64).collect();
        let q: Vec<f64> = dev.iter().map(|v| v.quantile95).collect();
        let _ = writeln!(
            text,
            "  log-log slope of q95: {:.4}; q95 below eta everywhere: {all_below}",
            loglog_slope(&xs, &q)
        );
    }

    // Per-worker descent with the capped line search.
    let _ = writeln!(text, "\n[descent] step cap alpha*={:.4e}", params.alpha_star);
    for (i, w) in iterates.iter().enumerate() {
        let recs = check_descent_lemma(model, &partition, w, &params, &ls, &cg)?;
        let ok = recs.iter().filter(|r| r.satisfied).count();
        for r in &recs {
            let _ = writeln!(
                csv,
                "descent,{i},{},{:e},{:e},{}",
                r.worker,
                r.decrease,
                r.bound,
                u8::from(r.satisfied)
            );
        }
        let _ = writeln!(text, "  iterate {i}: {ok}/{} workers satisfy decrease >= psi |g|^2", recs.len());
    }

    // Error floor of local averaging on least squares.
    let floor_s: Vec<usize> = (6..=11)
        .map(|e| 1usize << e)
        .filter(|&v| v >= cfg.floor_d && 2 * v <= cfg.floor_n)
        .collect();
    if floor_s.len() >= 2 {
        let design = FloorDesign::new(cfg.floor_d, FloorScaling::FixedTotal(cfg.floor_n));
        let mut mean = vec![0.0; floor_s.len()];
        for seed in 0..cfg.floor_seeds {
            let pts = measure_error_floor(&design, &floor_s, cfg.seed.wrapping_add(seed))?;
            for (m, p) in mean.iter_mut().zip(&pts) {
                *m += p.gap / cfg.floor_seeds as f64;
                let _ = writeln!(csv, "floor,{},{seed},{:e},{},", p.s, p.gap, p.rounds);
            }
        }
        let xs: Vec<f64> = floor_s.iter().map(|&v| v as f64).collect();
        let _ = writeln!(
            text,
            "\n[error floor] least squares n={} d={} L=2, {} seeds",
            cfg.floor_n, cfg.floor_d, cfg.floor_seeds
        );
        for (sv, g) in floor_s.iter().zip(&mean) {
            let _ = writeln!(text, "  s={sv:>5} K={:>5} mean gap={g:.4e}", cfg.floor_n / sv);
        }
        let _ = writeln!(
            text,
            "  log-log slope={:.4} spearman(s, gap)={:.4}",
            loglog_slope(&xs, &mean),
            spearman(&xs, &mean)
        );
    }
    Ok(SuiteReport {
        text,
        trials_csv: csv,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds(kappa: f64, m: f64, b: f64, g: f64) -> CurvatureBounds {
        CurvatureBounds {
            kappa,
            smoothness: m,
            sample_curvature: b,
            grad_bound: g,
        }
    }

    #[test]
    fn sample_size_bound() {
        let b = bounds(0.1, 0.5, 1.0, 1.0);
        assert_eq!(required_sample_size(&b, 0.5, 0.1, 10), 848);
        let base = 4.0 * 1.0 / (0.1 * 0.25) * (200.0f64).ln();
        let quarter = 4.0 * 1.0 / (0.1 * 0.0625) * (200.0f64).ln();
        assert!((quarter / base - 4.0).abs() < 1e-12);
        assert_eq!(required_sample_size(&b, 0.25, 0.1, 10), quarter.ceil() as u64);
        let halved_delta = 4.0 / (0.1 * 0.25) * (400.0f64).ln();
        assert!((halved_delta - base - 160.0 * 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn eta_formula() {
        let e = eta(100, 0.05, 2.0);
        assert!((e - 2.0 * (1.0 + (2.0 * 20f64.ln()).sqrt()) / 10.0).abs() < 1e-15);
    }

    #[test]
    fn binomial_tail() {
        assert_eq!(binomial_upper_tail(0, 10, 0.3), 1.0);
        // P[X >= 10] for Binomial(10, 0.5) = 2^-10
        assert!((binomial_upper_tail(10, 10, 0.5) - 2f64.powi(-10)).abs() < 1e-15);
    }

    #[test]
    fn quantile_nearest_rank() {
        let xs: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(quantile(&xs, 0.95), 19.0);
        assert_eq!(quantile(&xs, 1.0), 20.0);
        assert_eq!(quantile(&[3.0], 0.5), 3.0);
    }

    #[test]
    fn slope_and_rank_stats() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert!((loglog_slope(&xs, &ys) + 0.5).abs() < 1e-12);
        assert!((spearman(&xs, &ys) + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]) - 0.5).abs() < 1e-12);
        assert!((spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]) - 0.866_025_403_784_438_6).abs() < 1e-12);
    }
}
