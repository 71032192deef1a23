//! Adaptive LocalNewton: the master watches the global loss at every sync,
//! lowers `L` when the decrease falls short of `delta`, and hands over to
//! GIANT once `L = 1` stalls.

use crate::baselines;
use crate::data::Partition;
use crate::error::{Error, Result};
use crate::linalg;
use crate::localnewton::{localnewton_round, RunContext, WorkerState};
use crate::metrics::{Phase, Transition};
use crate::newton::{CgConfig, LineSearchConfig};
use crate::objective::ObjectiveModel;

/// `delta` defaults to this fraction of the starting loss.
pub const DEFAULT_RELATIVE_DELTA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveState {
    pub l_current: usize,
    pub f_prev: f64,
    pub delta: f64,
    pub phase: Phase,
}

impl AdaptiveState {
    pub fn new(l0: usize, f0: f64, delta: f64) -> Result<Self> {
        if l0 == 0 {
            return Err(Error::invalid("L0 must be at least 1"));
        }
        if !(delta > 0.0) {
            return Err(Error::invalid(format!("delta must be positive, got {delta}")));
        }
        Ok(AdaptiveState {
            l_current: l0,
            f_prev: f0,
            delta,
            phase: Phase::LocalNewton,
        })
    }

    /// Controller update after a sync that produced global loss `f_now`.
    #[must_use]
    pub fn adapt(self, f_now: f64) -> AdaptiveState {
        let mut next = AdaptiveState { f_prev: f_now, ..self };
        if self.phase == Phase::LocalNewton && self.f_prev - f_now < self.delta {
            if self.l_current == 1 {
                next.phase = Phase::Giant;
            } else {
                next.l_current = self.l_current - 1;
            }
        }
        next
    }
}

/// Runs the controller until the round budget is spent. GIANT picks up from
/// the last averaged model after the switch.
#[allow(clippy::too_many_arguments)]
pub fn run_adaptive(
    model: &ObjectiveModel<'_>,
    partition: &Partition,
    l0: usize,
    delta: f64,
    ls: &LineSearchConfig,
    cg: &CgConfig,
    w0: &[f64],
    budget: u64,
    ctx: &mut RunContext<'_>,
) -> Result<Vec<f64>> {
    ls.validate()?;
    cg.validate()?;
    if !linalg::all_finite(w0) {
        return Err(Error::NonFinite("initial iterate"));
    }
    let f0 = ctx.recorder.loss(w0)?;
    let mut state = AdaptiveState::new(l0, f0, delta)?;
    let mut workers = WorkerState::for_partition(partition, w0);
    let mut w_bar = w0.to_vec();
    let mut iters = 0u64;

    while state.phase == Phase::LocalNewton && ctx.fabric.rounds() < budget {
        let round = ctx.fabric.rounds() + 1;
        let l = state.l_current;
        w_bar = localnewton_round(model, &mut workers, l, ls, cg, &mut ctx.fabric).map_err(|e| e.in_round(round))?;
        iters += l as u64;
        let f_now = ctx
            .recorder
            .record(&w_bar, ctx.fabric.rounds(), iters, l, Phase::LocalNewton)?
            .train_loss;
        let next = state.adapt(f_now);
        if next.l_current != state.l_current || next.phase != state.phase {
            ctx.recorder.transition(Transition {
                round: ctx.fabric.rounds(),
                from_l: state.l_current,
                to_l: next.l_current,
                from: state.phase,
                to: next.phase,
                decrement: state.f_prev - f_now,
            });
        }
        state = next;
    }

    if state.phase == Phase::Giant {
        w_bar = baselines::run_giant_from(model, partition, ls, cg, w_bar, iters, budget, ctx)?;
    }
    Ok(w_bar)
}
