//! LocalNewton: every worker takes `L` damped Newton steps on its own shard
//! between syncs, and the master averages the local models at each sync.

use crate::data::Partition;
use crate::error::{Error, Result};
use crate::fabric::Fabric;
use crate::linalg;
use crate::metrics::{Phase, Recorder};
use crate::newton::{self, CgConfig, LineSearchConfig};
use crate::objective::ObjectiveModel;

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerState {
    pub worker_id: usize,
    pub shard: Vec<usize>,
    pub w: Vec<f64>,
    pub last_grad_norm: f64,
}

impl WorkerState {
    pub fn new(worker_id: usize, shard: Vec<usize>, w: Vec<f64>) -> Self {
        WorkerState {
            worker_id,
            shard,
            w,
            last_grad_norm: f64::NAN,
        }
    }

    /// One state per shard, all starting at `w0`.
    pub fn for_partition(partition: &Partition, w0: &[f64]) -> Vec<WorkerState> {
        partition
            .shards()
            .iter()
            .enumerate()
            .map(|(k, s)| WorkerState::new(k, s.clone(), w0.to_vec()))
            .collect()
    }
}

/// Local iterations `L` per communication round, over a horizon of `T`
/// local iterations. Syncs happen at `0, L, 2L, ...` below `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncSchedule {
    local_iters: usize,
    horizon: usize,
}

impl SyncSchedule {
    pub fn new(local_iters: usize, horizon: usize) -> Result<Self> {
        if local_iters == 0 {
            return Err(Error::invalid("L must be at least 1"));
        }
        Ok(SyncSchedule { local_iters, horizon })
    }

    /// `rounds` full blocks of `L`.
    pub fn rounds_of(local_iters: usize, rounds: usize) -> Result<Self> {
        Self::new(local_iters, local_iters * rounds)
    }

    pub fn local_iters(&self) -> usize {
        self.local_iters
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn sync_points(&self) -> Vec<usize> {
        (0..self.horizon).step_by(self.local_iters).collect()
    }

    /// Number of syncs, `ceil(T / L)`.
    pub fn rounds(&self) -> usize {
        self.horizon.div_ceil(self.local_iters)
    }

    /// Local iterations run in round `r` (0-based); the last block may be short.
    pub fn block_len(&self, r: usize) -> usize {
        let start = r * self.local_iters;
        self.local_iters.min(self.horizon.saturating_sub(start))
    }
}

/// Everything one damped Newton step on a subset produced.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonStep {
    pub w_next: Vec<f64>,
    pub grad_norm: f64,
    /// Zero when the step was skipped at a stationary point.
    pub alpha: f64,
    pub loss_before: f64,
    pub loss_after: f64,
    pub cg_iters: usize,
}

/// Relative size of `p.g` under which the Armijo test is below the
/// resolution of the loss value and the iterate is treated as stationary.
const STALL_SLOPE: f64 = 1e3 * f64::EPSILON;

/// Newton direction from CG on the subset Hessian, Armijo step on the subset
/// loss, update `w - alpha p`.
pub fn newton_step_on(model: &ObjectiveModel<'_>, w: &[f64], subset: &[usize], ls: &LineSearchConfig, cg: &CgConfig) -> Result<NewtonStep> {
    let loss_before = model.value(w, subset)?;
    let g = model.gradient(w, subset)?;
    let grad_norm = linalg::norm(&g);
    if !grad_norm.is_finite() {
        return Err(Error::NonFinite("local gradient"));
    }
    let skip = |cg_iters| NewtonStep {
        w_next: w.to_vec(),
        grad_norm,
        alpha: 0.0,
        loss_before,
        loss_after: loss_before,
        cg_iters,
    };
    if grad_norm == 0.0 {
        return Ok(skip(0));
    }
    let hess = model.hessian_at(w, subset)?;
    let sol = newton::cg_solve(|v| hess.apply(v), &g, cg)?;
    let slope = linalg::dot(&sol.p, &g);
    if slope <= STALL_SLOPE * loss_before.abs() {
        return Ok(skip(sol.iters));
    }

    let mut loss_after = f64::NAN;
    let alpha = newton::armijo_backtrack(
        |trial| {
            let f = model.value(trial, subset)?;
            loss_after = f;
            Ok(f)
        },
        w,
        loss_before,
        &sol.p,
        &g,
        ls,
    )?;
    Ok(NewtonStep {
        w_next: linalg::sub_scaled(w, alpha, &sol.p),
        grad_norm,
        alpha,
        loss_before,
        loss_after,
        cg_iters: sol.iters,
    })
}

pub fn local_newton_step(model: &ObjectiveModel<'_>, state: &WorkerState, ls: &LineSearchConfig, cg: &CgConfig) -> Result<WorkerState> {
    let step = newton_step_on(model, &state.w, &state.shard, ls, cg).map_err(|e| e.in_worker(state.worker_id))?;
    Ok(WorkerState {
        worker_id: state.worker_id,
        shard: state.shard.clone(),
        w: step.w_next,
        last_grad_norm: step.grad_norm,
    })
}

/// Mean of equally sized vectors, pairwise-summed in slice order.
pub fn average_vectors(vs: &[&[f64]]) -> Result<Vec<f64>> {
    let Some(first) = vs.first() else {
        return Err(Error::invalid("nothing to average"));
    };
    if let Some(bad) = vs.iter().find(|v| v.len() != first.len()) {
        return Err(Error::Dimension {
            expected: first.len(),
            got: bad.len(),
        });
    }
    let mut sum = linalg::pairwise_sum_vectors(vs);
    linalg::scale(1.0 / vs.len() as f64, &mut sum);
    Ok(sum)
}

/// Master-side average of the worker models, in ascending worker id.
pub fn average_models(states: &[WorkerState]) -> Result<Vec<f64>> {
    let mut order: Vec<&WorkerState> = states.iter().collect();
    order.sort_by_key(|s| s.worker_id);
    let vs: Vec<&[f64]> = order.iter().map(|s| s.w.as_slice()).collect();
    average_vectors(&vs)
}

/// One communication round: each worker runs `steps` local Newton steps from
/// its current iterate, the master averages, and the average is broadcast
/// back into every state. Returns the average.
pub fn localnewton_round(
    model: &ObjectiveModel<'_>,
    states: &mut [WorkerState],
    steps: usize,
    ls: &LineSearchConfig,
    cg: &CgConfig,
    fabric: &mut Fabric,
) -> Result<Vec<f64>> {
    let snapshot: &[WorkerState] = states;
    let updated = fabric.map(snapshot.len(), |k| {
        let mut st = snapshot[k].clone();
        for _ in 0..steps {
            st = local_newton_step(model, &st, ls, cg)?;
        }
        Ok(st)
    })?;
    let avg = average_models(&updated)?;
    fabric.charge(1);
    for (dst, src) in states.iter_mut().zip(updated) {
        dst.last_grad_norm = src.last_grad_norm;
        dst.w.clone_from(&avg);
    }
    Ok(avg)
}

/// Shared run plumbing: the fabric that executes workers and counts rounds,
/// and the recorder that evaluates each averaged model.
pub struct RunContext<'a> {
    pub fabric: Fabric,
    pub recorder: Recorder<'a>,
}

impl<'a> RunContext<'a> {
    pub fn new(fabric: Fabric, recorder: Recorder<'a>) -> Self {
        RunContext { fabric, recorder }
    }
}

/// Runs LocalNewton from `w0` over the whole schedule; returns the final
/// averaged model.
pub fn run_localnewton(
    model: &ObjectiveModel<'_>,
    partition: &Partition,
    sched: &SyncSchedule,
    ls: &LineSearchConfig,
    cg: &CgConfig,
    w0: &[f64],
    ctx: &mut RunContext<'_>,
) -> Result<Vec<f64>> {
    ls.validate()?;
    cg.validate()?;
    if !linalg::all_finite(w0) {
        return Err(Error::NonFinite("initial iterate"));
    }
    let mut states = WorkerState::for_partition(partition, w0);
    let mut w_bar = w0.to_vec();
    let mut iters = 0u64;
    let mut f_prev = ctx.recorder.loss(w0)?;
    for r in 0..sched.rounds() {
        let steps = sched.block_len(r);
        let round = ctx.fabric.rounds() + 1;
        w_bar = localnewton_round(model, &mut states, steps, ls, cg, &mut ctx.fabric).map_err(|e| e.in_round(round))?;
        iters += steps as u64;
        let f = ctx
            .recorder
            .record(&w_bar, ctx.fabric.rounds(), iters, sched.local_iters(), Phase::LocalNewton)?
            .train_loss;
        // Averaging may overshoot; report it rather than abort.
        if f > f_prev {
            ctx.recorder
                .flag(format!("round {}: training loss rose by {:.3e}", ctx.fabric.rounds(), f - f_prev));
        }
        f_prev = f;
    }
    Ok(w_bar)
}
