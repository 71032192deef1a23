//! Distributed second-order optimisation with local Newton steps.
//!
//! Workers hold disjoint shards of the training set, run a few damped
//! Newton iterations on their own shard, and periodically average. The
//! crate simulates the workers in one process (in parallel, with
//! deterministic reduction order) and counts communication rounds.
//!
//! The main entry points are [`localnewton::run_localnewton`],
//! [`adaptive::run_adaptive`], the baselines in [`baselines`], and the
//! config-driven [`harness`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod baselines;
pub mod data;
pub mod error;
pub mod fabric;
pub mod harness;
pub mod linalg;
pub mod localnewton;
pub mod metrics;
pub mod newton;
pub mod objective;
pub mod rng;
pub mod synth;
pub mod theory;

pub use adaptive::{run_adaptive, AdaptiveState};
pub use baselines::{run_bfgs, run_giant, run_local_sgd, BfgsConfig, SgdConfig};
pub use data::{Dataset, Partition, Task};
pub use error::{Error, Result};
pub use fabric::Fabric;
pub use harness::{Algo, Comparison, ExperimentConfig};
pub use linalg::Matrix;
pub use localnewton::{run_localnewton, RunContext, SyncSchedule, WorkerState};
pub use metrics::{Phase, Recorder, RoundRecord, RunMetrics, CSV_HEADER};
pub use newton::{CgConfig, LineSearchConfig};
pub use objective::{CurvatureBounds, LossKind, ObjectiveModel};
pub use theory::TheoryParams;
