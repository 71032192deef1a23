//! Baselines run under the same partition and round accounting as
//! LocalNewton: GIANT, Local SGD and full-memory BFGS.

use rand::seq::SliceRandom;

use crate::data::Partition;
use crate::error::{Error, Result};
use crate::fabric::Fabric;
use crate::linalg::{self, Matrix};
use crate::localnewton::{average_vectors, RunContext, WorkerState};
use crate::metrics::Phase;
use crate::newton::{self, CgConfig, LineSearchConfig};
use crate::objective::ObjectiveModel;
use crate::rng;

/// Communication rounds one GIANT iteration costs: gradient averaging,
/// direction averaging and the distributed line search.
pub const GIANT_ROUNDS_PER_ITER: u64 = 3;

/// Candidate steps broadcast in GIANT's line-search round: `2^0 .. 2^-9`.
pub const GIANT_STEP_GRID: [f64; 10] = [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625, 0.001953125];

const STALL_SLOPE: f64 = 1e3 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq)]
pub struct GiantOutcome {
    pub w: Vec<f64>,
    pub alpha: f64,
    /// False when no grid step satisfied the Armijo test and the smallest
    /// one was taken anyway.
    pub accepted: bool,
    pub grad_norm: f64,
}

/// One GIANT iteration; charges [`GIANT_ROUNDS_PER_ITER`] rounds.
pub fn giant_iteration(
    model: &ObjectiveModel<'_>,
    partition: &Partition,
    w: &[f64],
    ls: &LineSearchConfig,
    cg: &CgConfig,
    fabric: &mut Fabric,
) -> Result<GiantOutcome> {
    if !linalg::all_finite(w) {
        return Err(Error::NonFinite("giant iterate"));
    }
    let k = partition.worker_count();

    // Round 1: global gradient.
    let grads = fabric.map(k, |i| model.gradient(w, partition.shard(i)))?;
    let g_bar = average_vectors(&grads.iter().map(Vec::as_slice).collect::<Vec<_>>())?;
    fabric.charge(1);
    let grad_norm = linalg::norm(&g_bar);
    let unchanged = |fabric: &mut Fabric| {
        fabric.charge(GIANT_ROUNDS_PER_ITER - 1);
        GiantOutcome {
            w: w.to_vec(),
            alpha: 0.0,
            accepted: true,
            grad_norm,
        }
    };
    if grad_norm == 0.0 {
        return Ok(unchanged(fabric));
    }

    // Round 2: locally solved directions against the global gradient.
    let dirs = fabric.map(k, |i| {
        let hess = model.hessian_at(w, partition.shard(i))?;
        Ok(newton::cg_solve(|v| hess.apply(v), &g_bar, cg)?.p)
    })?;
    let p_bar = average_vectors(&dirs.iter().map(Vec::as_slice).collect::<Vec<_>>())?;
    fabric.charge(1);

    // Round 3: every worker reports its loss at w and at each candidate.
    let losses = fabric.map(k, |i| {
        let shard = partition.shard(i);
        let mut out = Vec::with_capacity(GIANT_STEP_GRID.len() + 1);
        out.push(model.value(w, shard)?);
        for &a in &GIANT_STEP_GRID {
            out.push(model.value(&linalg::sub_scaled(w, a, &p_bar), shard)?);
        }
        Ok(out)
    })?;
    let global = average_vectors(&losses.iter().map(Vec::as_slice).collect::<Vec<_>>())?;
    fabric.charge(1);

    let f_w = global[0];
    let slope = linalg::dot(&p_bar, &g_bar);
    if !(slope > STALL_SLOPE * f_w.abs()) {
        return Ok(GiantOutcome {
            w: w.to_vec(),
            alpha: 0.0,
            accepted: true,
            grad_norm,
        });
    }
    let hit = GIANT_STEP_GRID
        .iter()
        .zip(&global[1..])
        .find(|&(&a, &f)| newton::armijo_holds(f_w, f, a, ls.beta, slope));
    let (alpha, accepted) = match hit {
        Some((&a, _)) => (a, true),
        None => (GIANT_STEP_GRID[GIANT_STEP_GRID.len() - 1], false),
    };
    Ok(GiantOutcome {
        w: linalg::sub_scaled(w, alpha, &p_bar),
        alpha,
        accepted,
        grad_norm,
    })
}

/// GIANT from `w0` until the round budget cannot fit another iteration.
pub fn run_giant(
    model: &ObjectiveModel<'_>,
    partition: &Partition,
    ls: &LineSearchConfig,
    cg: &CgConfig,
    w0: &[f64],
    budget: u64,
    ctx: &mut RunContext<'_>,
) -> Result<Vec<f64>> {
    run_giant_from(model, partition, ls, cg, w0.to_vec(), 0, budget, ctx)
}

/// GIANT continuation used by the adaptive controller: `iters` is the
/// iteration count already recorded.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_giant_from(
    model: &ObjectiveModel<'_>,
    partition: &Partition,
    ls: &LineSearchConfig,
    cg: &CgConfig,
    mut w: Vec<f64>,
    mut iters: u64,
    budget: u64,
    ctx: &mut RunContext<'_>,
) -> Result<Vec<f64>> {
    ls.validate()?;
    cg.validate()?;
    while ctx.fabric.rounds() + GIANT_ROUNDS_PER_ITER <= budget {
        let round = ctx.fabric.rounds() + 1;
        let out = giant_iteration(model, partition, &w, ls, cg, &mut ctx.fabric).map_err(|e| e.in_round(round))?;
        if !out.accepted {
            ctx.recorder.flag(format!(
                "round {}: no grid step passed the line search; took {}",
                ctx.fabric.rounds(),
                out.alpha
            ));
        }
        w = out.w;
        iters += 1;
        ctx.recorder.record(&w, ctx.fabric.rounds(), iters, 1, Phase::Giant)?;
    }
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub step_size: f64,
    pub batch_size: usize,
    pub epochs_per_round: usize,
}

impl SgdConfig {
    pub fn new(step_size: f64) -> Self {
        SgdConfig {
            step_size,
            batch_size: 1,
            epochs_per_round: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid(format!("sgd step must be finite and > 0, got {}", self.step_size)));
        }
        if self.batch_size == 0 || self.epochs_per_round == 0 {
            return Err(Error::invalid("sgd batch size and epochs must be at least 1"));
        }
        Ok(())
    }
}

/// Tuned step sizes for the public benchmark datasets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunedSteps {
    /// Local SGD step is `sgd_scale / s`.
    pub sgd_scale: f64,
    /// BFGS initial line-search step.
    pub bfgs_initial: f64,
}

pub fn tuned_steps(dataset: &str) -> Option<TunedSteps> {
    let (sgd_scale, bfgs_initial) = match dataset.to_ascii_lowercase().as_str() {
        "w8a" => (10.0, 100.0),
        "covtype" => (10.0, 1.0),
        "epsilon" => (500.0, 10.0),
        "a9a" => (10.0, 1.0),
        "ijcnn1" => (100.0, 10.0),
        _ => return None,
    };
    Some(TunedSteps { sgd_scale, bfgs_initial })
}

/// Every worker runs `epochs_per_round` epochs of mini-batch SGD over a
/// seeded permutation of its shard; the master then averages (one round).
/// `round` keys the permutation streams.
pub fn local_sgd_round(
    model: &ObjectiveModel<'_>,
    states: &mut [WorkerState],
    cfg: &SgdConfig,
    seed: u64,
    round: u64,
    fabric: &mut Fabric,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let snapshot: &[WorkerState] = states;
    let updated = fabric.map(snapshot.len(), |k| {
        let st = &snapshot[k];
        let mut w = st.w.clone();
        let mut order = st.shard.clone();
        for epoch in 0..cfg.epochs_per_round {
            let mut rng = rng::stream(seed, rng::purpose::SGD, &[round, st.worker_id as u64, epoch as u64]);
            order.copy_from_slice(&st.shard);
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                let mut g = vec![0.0; w.len()];
                for &j in batch {
                    linalg::axpy(1.0, &model.sample_gradient(&w, j), &mut g);
                }
                linalg::axpy(-cfg.step_size / batch.len() as f64, &g, &mut w);
            }
            if !linalg::all_finite(&w) {
                return Err(Error::NonFinite("sgd iterate (diverged)"));
            }
        }
        Ok(w)
    })?;
    let avg = average_vectors(&updated.iter().map(Vec::as_slice).collect::<Vec<_>>())?;
    fabric.charge(1);
    for st in states.iter_mut() {
        st.w.clone_from(&avg);
    }
    Ok(avg)
}

pub fn run_local_sgd(
    model: &ObjectiveModel<'_>,
    partition: &Partition,
    cfg: &SgdConfig,
    seed: u64,
    w0: &[f64],
    budget: u64,
    ctx: &mut RunContext<'_>,
) -> Result<Vec<f64>> {
    let mut states = WorkerState::for_partition(partition, w0);
    let mut w = w0.to_vec();
    let mut epochs = 0u64;
    while ctx.fabric.rounds() < budget {
        let round = ctx.fabric.rounds() + 1;
        w = local_sgd_round(model, &mut states, cfg, seed, round, &mut ctx.fabric).map_err(|e| e.in_round(round))?;
        epochs += cfg.epochs_per_round as u64;
        ctx.recorder.record(&w, ctx.fabric.rounds(), epochs, 1, Phase::LocalSgd)?;
    }
    Ok(w)
}

/// BFGS inverse-Hessian approximation and the current point.
#[derive(Debug, Clone, PartialEq)]
pub struct BfgsState {
    pub inverse_hessian: Matrix,
    pub w: Vec<f64>,
    pub grad: Vec<f64>,
    pub loss: f64,
    pub resets: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsConfig {
    /// First trial step of the backtracking search; may exceed 1.
    pub initial_step: f64,
    pub beta: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl BfgsConfig {
    pub fn new(initial_step: f64, ls: &LineSearchConfig) -> Self {
        BfgsConfig {
            initial_step,
            beta: ls.beta,
            shrink: ls.shrink,
            max_backtracks: ls.max_backtracks,
        }
    }
}

/// Curvature pairs with `s.y <= CURVATURE_EPS |s| |y|` reset the approximation.
pub const CURVATURE_EPS: f64 = 1e-12;

impl BfgsState {
    pub fn new(model: &ObjectiveModel<'_>, w0: &[f64], idx: &[usize]) -> Result<Self> {
        Ok(BfgsState {
            inverse_hessian: Matrix::identity(w0.len()),
            w: w0.to_vec(),
            grad: model.gradient(w0, idx)?,
            loss: model.value(w0, idx)?,
            resets: 0,
        })
    }

    /// `H^{-1} g`; the step is `w - alpha * direction`.
    pub fn direction(&self) -> Vec<f64> {
        self.inverse_hessian.mul_vec(&self.grad)
    }

    /// Standard inverse update with `s = w' - w`, `y = g' - g`, written so
    /// that symmetric input stays bitwise symmetric.
    pub fn update_inverse(&mut self, s: &[f64], y: &[f64]) {
        let sy = linalg::dot(s, y);
        if !(sy > CURVATURE_EPS * linalg::norm(s) * linalg::norm(y)) {
            self.inverse_hessian = Matrix::identity(s.len());
            self.resets += 1;
            return;
        }
        let rho = 1.0 / sy;
        let hy = self.inverse_hessian.mul_vec(y);
        let yhy = linalg::dot(y, &hy);
        let c = rho * rho * yhy + rho;
        let d = s.len();
        for i in 0..d {
            for j in 0..d {
                let h = &mut self.inverse_hessian[(i, j)];
                *h += c * (s[i] * s[j]) - rho * (s[i] * hy[j] + hy[i] * s[j]);
            }
        }
    }
}

/// One BFGS iteration on the full objective over `idx`.
pub fn bfgs_iteration(model: &ObjectiveModel<'_>, idx: &[usize], state: &BfgsState, cfg: &BfgsConfig) -> Result<BfgsState> {
    let mut next = state.clone();
    if linalg::norm(&state.grad) == 0.0 {
        return Ok(next);
    }
    let mut p = state.direction();
    if !(linalg::dot(&p, &state.grad) > 0.0) {
        next.inverse_hessian = Matrix::identity(p.len());
        next.resets += 1;
        p = state.grad.clone();
    }
    if linalg::dot(&p, &state.grad) <= STALL_SLOPE * state.loss.abs() {
        return Ok(next);
    }
    let alpha = newton::backtrack_from(
        |trial| model.value(trial, idx),
        &state.w,
        state.loss,
        &p,
        &state.grad,
        cfg.initial_step,
        cfg.beta,
        cfg.shrink,
        cfg.max_backtracks,
    )?;
    let w_new = linalg::sub_scaled(&state.w, alpha, &p);
    let g_new = model.gradient(&w_new, idx)?;
    let s: Vec<f64> = w_new.iter().zip(&state.w).map(|(a, b)| a - b).collect();
    let y: Vec<f64> = g_new.iter().zip(&state.grad).map(|(a, b)| a - b).collect();
    next.update_inverse(&s, &y);
    next.loss = model.value(&w_new, idx)?;
    next.w = w_new;
    next.grad = g_new;
    Ok(next)
}

/// Centralized BFGS charged one round (gradient aggregation) per iteration.
pub fn run_bfgs(
    model: &ObjectiveModel<'_>,
    partition: &Partition,
    cfg: &BfgsConfig,
    w0: &[f64],
    budget: u64,
    ctx: &mut RunContext<'_>,
) -> Result<Vec<f64>> {
    let idx = partition.union();
    let mut state = BfgsState::new(model, w0, &idx)?;
    let mut iters = 0u64;
    while ctx.fabric.rounds() < budget {
        let round = ctx.fabric.rounds() + 1;
        state = bfgs_iteration(model, &idx, &state, cfg).map_err(|e| e.in_round(round))?;
        ctx.fabric.charge(1);
        iters += 1;
        ctx.recorder.record(&state.w, ctx.fabric.rounds(), iters, 1, Phase::Bfgs)?;
    }
    Ok(state.w)
}
