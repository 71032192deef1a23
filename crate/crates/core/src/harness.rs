//! Experiment executor: resolves a flat key=value config into a model,
//! partition and algorithm, runs it to a round budget and collects metrics.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::adaptive::{self, DEFAULT_RELATIVE_DELTA};
use crate::baselines::{self, BfgsConfig, SgdConfig};
use crate::data::{self, Dataset, Partition, Task};
use crate::error::{Error, Result};
use crate::fabric::Fabric;
use crate::localnewton::{self, RunContext, SyncSchedule};
use crate::metrics::{Recorder, RunMeta, RunMetrics};
use crate::newton::{CgConfig, LineSearchConfig};
use crate::objective::{LossKind, ObjectiveModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algo {
    LocalNewton,
    Adaptive,
    Giant,
    LocalSgd,
    Bfgs,
}

impl Algo {
    pub const ALL: [Algo; 5] = [Algo::LocalNewton, Algo::Adaptive, Algo::Giant, Algo::LocalSgd, Algo::Bfgs];

    pub fn as_str(self) -> &'static str {
        match self {
            Algo::LocalNewton => "localnewton",
            Algo::Adaptive => "adaptive",
            Algo::Giant => "giant",
            Algo::LocalSgd => "local_sgd",
            Algo::Bfgs => "bfgs",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Algo::ALL
            .into_iter()
            .find(|a| a.as_str() == norm)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Every knob of a run. Each field has a key of the same name in config
/// files and a matching `--key` flag.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algo: Algo,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub loss: LossKind,
    /// Dimension hint for the LIBSVM reader.
    pub dim: Option<usize>,
    /// Apply pairwise feature expansion after loading.
    pub expand: bool,
    pub dataset_name: Option<String>,
    pub k: usize,
    /// Local iterations per round for fixed-L LocalNewton.
    pub l: usize,
    /// Starting L for the adaptive controller.
    pub l0: usize,
    /// Absolute loss decrement threshold; overrides `delta_rel`.
    pub delta: Option<f64>,
    pub delta_rel: f64,
    /// Defaults to `1/n`.
    pub gamma: Option<f64>,
    pub seed: u64,
    pub max_rounds: u64,
    /// Worker threads; 0 means one per core.
    pub threads: usize,
    pub beta: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
    pub alpha_init: f64,
    pub alpha_cap: Option<f64>,
    pub cg_tol: f64,
    pub cg_max_iters: Option<usize>,
    pub sgd_step: Option<f64>,
    pub sgd_batch: usize,
    pub sgd_epochs: usize,
    pub bfgs_step: Option<f64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let ls = LineSearchConfig::default();
        ExperimentConfig {
            algo: Algo::Adaptive,
            train: None,
            test: None,
            loss: LossKind::LogisticL2,
            dim: None,
            expand: false,
            dataset_name: None,
            k: 100,
            l: 1,
            l0: 3,
            delta: None,
            delta_rel: DEFAULT_RELATIVE_DELTA,
            gamma: None,
            seed: 0,
            max_rounds: 100,
            threads: 0,
            beta: ls.beta,
            shrink: ls.shrink,
            max_backtracks: ls.max_backtracks,
            alpha_init: ls.alpha_init,
            alpha_cap: None,
            cg_tol: CgConfig::DEFAULT_TOL,
            cg_max_iters: None,
            sgd_step: None,
            sgd_batch: 1,
            sgd_epochs: 1,
            bfgs_step: None,
            output_dir: PathBuf::from("."),
        }
    }
}

/// Canonical key names, in serialization order.
pub const CONFIG_KEYS: [&str; 28] = [
    "algo",
    "train",
    "test",
    "loss",
    "dim",
    "expand",
    "dataset_name",
    "k",
    "l",
    "l0",
    "delta",
    "delta_rel",
    "gamma",
    "seed",
    "max_rounds",
    "threads",
    "beta",
    "shrink",
    "max_backtracks",
    "alpha_init",
    "alpha_cap",
    "cg_tol",
    "cg_max_iters",
    "sgd_step",
    "sgd_batch",
    "sgd_epochs",
    "bfgs_step",
    "output_dir",
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
}

fn parse_opt<T: std::str::FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    match v.trim() {
        "" | "none" | "off" | "auto" => Ok(None),
        s => parse_num(key, s).map(Some),
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got `{v}`"))),
    }
}

fn parse_loss(v: &str) -> Result<LossKind> {
    match v.trim() {
        "logistic" | "logistic_l2" => Ok(LossKind::LogisticL2),
        "least_squares" | "least-squares" => Ok(LossKind::LeastSquares),
        _ => Err(Error::Config(format!("loss: unknown loss `{v}`"))),
    }
}

fn opt_str<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

/// Normalizes `max-rounds` and `max_rounds` to the same key.
pub fn normalize_key(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('-', "_")
}

/// Parses flat `key = value` text. Blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", i + 1)))?;
        out.push((normalize_key(k), v.trim().to_string()));
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Applies one setting. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalize_key(key);
        let v = value.trim();
        match key.as_str() {
            "algo" => self.algo = Algo::parse(v)?,
            "train" => self.train = Some(PathBuf::from(v)),
            "test" => self.test = parse_opt::<String>(&key, v)?.map(PathBuf::from),
            // `task` is accepted as an alias so synthetic-data commands and
            // runs can share a config file.
            "loss" | "task" => self.loss = parse_loss(v)?,
            "dim" => self.dim = parse_opt(&key, v)?,
            "expand" => self.expand = parse_bool(&key, v)?,
            "dataset_name" => self.dataset_name = parse_opt(&key, v)?,
            "k" => self.k = parse_num(&key, v)?,
            "l" => self.l = parse_num(&key, v)?,
            "l0" => self.l0 = parse_num(&key, v)?,
            "delta" => self.delta = parse_opt(&key, v)?,
            "delta_rel" => self.delta_rel = parse_num(&key, v)?,
            "gamma" => self.gamma = parse_opt(&key, v)?,
            "seed" => self.seed = parse_num(&key, v)?,
            "max_rounds" => self.max_rounds = parse_num(&key, v)?,
            "threads" => self.threads = parse_num(&key, v)?,
            "beta" => self.beta = parse_num(&key, v)?,
            "shrink" => self.shrink = parse_num(&key, v)?,
            "max_backtracks" => self.max_backtracks = parse_num(&key, v)?,
            "alpha_init" => self.alpha_init = parse_num(&key, v)?,
            "alpha_cap" => self.alpha_cap = parse_opt(&key, v)?,
            "cg_tol" => self.cg_tol = parse_num(&key, v)?,
            "cg_max_iters" => self.cg_max_iters = parse_opt(&key, v)?,
            "sgd_step" => self.sgd_step = parse_opt(&key, v)?,
            "sgd_batch" => self.sgd_batch = parse_num(&key, v)?,
            "sgd_epochs" => self.sgd_epochs = parse_num(&key, v)?,
            "bfgs_step" => self.bfgs_step = parse_opt(&key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Defaults overridden by `pairs` in order (later pairs win).
    pub fn from_pairs<'p, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'p str, &'p str)>,
    {
        let mut cfg = ExperimentConfig::default();
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Every field as `(key, value)`, in [`CONFIG_KEYS`] order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or_else(|| "none".to_string(), |p| p.display().to_string());
        let loss = match self.loss {
            LossKind::LogisticL2 => "logistic",
            LossKind::LeastSquares => "least_squares",
        };
        let vals = [
            self.algo.to_string(),
            path(&self.train),
            path(&self.test),
            loss.to_string(),
            opt_str(&self.dim),
            self.expand.to_string(),
            opt_str(&self.dataset_name),
            self.k.to_string(),
            self.l.to_string(),
            self.l0.to_string(),
            opt_str(&self.delta),
            self.delta_rel.to_string(),
            opt_str(&self.gamma),
            self.seed.to_string(),
            self.max_rounds.to_string(),
            self.threads.to_string(),
            self.beta.to_string(),
            self.shrink.to_string(),
            self.max_backtracks.to_string(),
            self.alpha_init.to_string(),
            opt_str(&self.alpha_cap),
            self.cg_tol.to_string(),
            opt_str(&self.cg_max_iters),
            opt_str(&self.sgd_step),
            self.sgd_batch.to_string(),
            self.sgd_epochs.to_string(),
            opt_str(&self.bfgs_step),
            self.output_dir.display().to_string(),
        ];
        CONFIG_KEYS.iter().zip(vals).map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// SHA-256 over the canonical key=value listing.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.to_pairs() {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.l == 0 || self.l0 == 0 {
            return bad("l and l0 must be at least 1".into());
        }
        if let Some(g) = self.gamma {
            if !(g >= 0.0 && g.is_finite()) {
                return bad(format!("gamma must be finite and >= 0, got {g}"));
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0) {
                return bad(format!("delta must be positive, got {d}"));
            }
        }
        if !(self.delta_rel > 0.0) {
            return bad(format!("delta_rel must be positive, got {}", self.delta_rel));
        }
        self.line_search().validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return bad(format!("cg_tol must lie in (0, 1), got {}", self.cg_tol));
        }
        if self.cg_max_iters == Some(0) {
            return bad("cg_max_iters must be at least 1".into());
        }
        if self.sgd_batch == 0 || self.sgd_epochs == 0 {
            return bad("sgd_batch and sgd_epochs must be at least 1".into());
        }
        Ok(())
    }

    pub fn line_search(&self) -> LineSearchConfig {
        LineSearchConfig {
            beta: self.beta,
            alpha_init: self.alpha_init,
            shrink: self.shrink,
            max_backtracks: self.max_backtracks,
            alpha_star_cap: self.alpha_cap,
        }
    }

    pub fn cg(&self, d: usize) -> CgConfig {
        let mut cg = CgConfig::for_dim(d);
        cg.tol = self.cg_tol;
        if let Some(m) = self.cg_max_iters {
            cg.max_iters = m;
        }
        cg
    }

    /// Explicit `dataset_name`, else the train file stem without `.gz` or
    /// other extensions, else `"dataset"`.
    pub fn resolved_dataset_name(&self) -> String {
        if let Some(n) = &self.dataset_name {
            return n.clone();
        }
        self.train
            .as_deref()
            .and_then(Path::file_name)
            .and_then(|f| f.to_str())
            .and_then(|f| f.split('.').next())
            .filter(|s| !s.is_empty())
            .unwrap_or("dataset")
            .to_string()
    }

    /// `<algo>_<dataset>_<seed>.csv`
    pub fn csv_file_name(&self) -> String {
        format!("{}_{}_{}.csv", self.algo, self.resolved_dataset_name(), self.seed)
    }

    fn task(&self) -> Task {
        match self.loss {
            LossKind::LogisticL2 => Task::Binary,
            LossKind::LeastSquares => Task::Regression,
        }
    }

    /// Loads the train (and test) files named in the config.
    pub fn load_data(&self) -> Result<(Dataset, Option<Dataset>)> {
        let train_path = self
            .train
            .as_deref()
            .ok_or_else(|| Error::Config("no training data given (train)".into()))?;
        let mut train = data::load_libsvm(train_path, self.dim, self.task())?;
        let mut test = match &self.test {
            Some(p) => Some(data::load_libsvm(p, Some(train.d()), self.task())?),
            None => None,
        };
        if self.expand {
            train = data::expand_pairwise(&train, data::DEFAULT_EXPANSION_CAP)?;
            test = test.map(|t| data::expand_pairwise(&t, data::DEFAULT_EXPANSION_CAP)).transpose()?;
        }
        Ok((train, test))
    }
}

/// Resolved, validated inputs shared by the algorithms.
struct Prepared<'a> {
    model: ObjectiveModel<'a>,
    partition: Partition,
    ls: LineSearchConfig,
    cg: CgConfig,
    w0: Vec<f64>,
}

fn prepare<'a>(cfg: &ExperimentConfig, train: &'a Dataset, test: Option<&Dataset>) -> Result<Prepared<'a>> {
    cfg.validate()?;
    if let Some(t) = test {
        if t.d() != train.d() {
            return Err(Error::Config(format!("test set has {} features, train has {}", t.d(), train.d())));
        }
    }
    let gamma = cfg.gamma.unwrap_or(1.0 / train.n() as f64);
    let model = ObjectiveModel::new(cfg.loss, train, gamma)?;
    let partition = data::partition_uniform(train.n(), cfg.k, cfg.seed).map_err(|e| Error::Config(e.to_string()))?;
    Ok(Prepared {
        model,
        partition,
        ls: cfg.line_search(),
        cg: cfg.cg(train.d()),
        w0: vec![0.0; train.d()],
    })
}

/// Runs `cfg` on in-memory data, streaming CSV rows to `sink` if given.
pub fn run_on(cfg: &ExperimentConfig, train: &Dataset, test: Option<&Dataset>, sink: Option<Box<dyn Write + '_>>) -> Result<RunMetrics> {
    let p = prepare(cfg, train, test)?;
    let mut recorder = Recorder::new(p.model, p.partition.union(), test);
    if let Some(s) = sink {
        recorder.stream_to(s)?;
    }
    let initial_loss = recorder.loss(&p.w0)?;
    recorder.set_meta(RunMeta {
        algo: cfg.algo.to_string(),
        dataset: cfg.resolved_dataset_name(),
        workers: cfg.k,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        initial_loss,
        params: cfg.to_pairs(),
    });
    let mut ctx = RunContext::new(Fabric::new(cfg.threads)?, recorder);
    let budget = cfg.max_rounds;
    let (model, partition) = (&p.model, &p.partition);
    match cfg.algo {
        Algo::LocalNewton => {
            let sched = SyncSchedule::rounds_of(cfg.l, budget as usize)?;
            localnewton::run_localnewton(model, partition, &sched, &p.ls, &p.cg, &p.w0, &mut ctx)?;
        }
        Algo::Adaptive => {
            let delta = cfg.delta.unwrap_or(cfg.delta_rel * initial_loss.abs());
            adaptive::run_adaptive(model, partition, cfg.l0, delta, &p.ls, &p.cg, &p.w0, budget, &mut ctx)?;
        }
        Algo::Giant => {
            baselines::run_giant(model, partition, &p.ls, &p.cg, &p.w0, budget, &mut ctx)?;
        }
        Algo::LocalSgd => {
            let step = match cfg.sgd_step {
                Some(s) => s,
                None => baselines::tuned_steps(&cfg.resolved_dataset_name())
                    .map(|t| t.sgd_scale / partition.shard_size() as f64)
                    .ok_or_else(|| Error::Config("local_sgd needs sgd_step for this dataset".into()))?,
            };
            let sgd = SgdConfig {
                step_size: step,
                batch_size: cfg.sgd_batch,
                epochs_per_round: cfg.sgd_epochs,
            };
            baselines::run_local_sgd(model, partition, &sgd, cfg.seed, &p.w0, budget, &mut ctx)?;
        }
        Algo::Bfgs => {
            let initial = cfg
                .bfgs_step
                .or_else(|| baselines::tuned_steps(&cfg.resolved_dataset_name()).map(|t| t.bfgs_initial))
                .unwrap_or(1.0);
            let bfgs = BfgsConfig::new(initial, &p.ls);
            baselines::run_bfgs(model, partition, &bfgs, &p.w0, budget, &mut ctx)?;
        }
    }
    Ok(ctx.recorder.finish())
}

/// Loads the configured files and runs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunMetrics> {
    let (train, test) = cfg.load_data()?;
    run_on(cfg, &train, test.as_ref(), None)
}

/// `key=value` lines describing a finished run.
pub fn meta_text(metrics: &RunMetrics) -> String {
    let m = &metrics.meta;
    let mut s = String::new();
    s.push_str(&format!("config_hash={}\n", m.config_hash));
    s.push_str(&format!("initial_loss={:.16e}\n", m.initial_loss));
    for (k, v) in &m.params {
        s.push_str(&format!("{k}={v}\n"));
    }
    for t in &metrics.transitions {
        s.push_str(&format!(
            "transition=round:{} L:{}->{} phase:{}->{} decrement:{:.6e}\n",
            t.round, t.from_l, t.to_l, t.from, t.to, t.decrement
        ));
    }
    for f in &metrics.flags {
        s.push_str(&format!("flag={f}\n"));
    }
    s
}

/// One algorithm's outcome in a comparison.
#[derive(Debug, Clone)]
pub struct ComparisonEntry {
    pub algo: Algo,
    pub metrics: RunMetrics,
    pub rounds_to_target: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub target: f64,
    pub entries: Vec<ComparisonEntry>,
}

impl Comparison {
    /// Rounds of each algorithm divided by those of the slowest algorithm
    /// that reached the target.
    pub fn ratios(&self) -> Vec<Option<f64>> {
        let worst = self.entries.iter().filter_map(|e| e.rounds_to_target).max();
        self.entries
            .iter()
            .map(|e| match (e.rounds_to_target, worst) {
                (Some(r), Some(w)) if w > 0 => Some(r as f64 / w as f64),
                _ => None,
            })
            .collect()
    }

    pub fn report(&self) -> String {
        let mut s = format!("target training loss: {}\n", self.target);
        s.push_str(&format!("{:<12} {:>10} {:>10} {:>22}\n", "algo", "rounds", "ratio", "final_loss"));
        for (e, ratio) in self.entries.iter().zip(self.ratios()) {
            let rounds = e.rounds_to_target.map_or("—".to_string(), |r| r.to_string());
            let ratio = ratio.map_or("—".to_string(), |r| format!("{r:.3}"));
            let fin = e.metrics.final_loss().map_or("—".to_string(), |f| format!("{f:.16e}"));
            s.push_str(&format!("{:<12} {:>10} {:>10} {:>22}\n", e.algo.as_str(), rounds, ratio, fin));
        }
        s
    }

    /// All runs in one CSV with a leading `algo` column.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "algo,{}", crate::metrics::CSV_HEADER)?;
        for e in &self.entries {
            let body = e.metrics.to_csv_string();
            for line in body.lines().skip(1) {
                writeln!(out, "{},{line}", e.algo)?;
            }
        }
        Ok(())
    }
}

/// Runs every algorithm with the same seed (hence the same partition).
pub fn run_comparison(base: &ExperimentConfig, algos: &[Algo], target: f64, train: &Dataset, test: Option<&Dataset>) -> Result<Comparison> {
    if algos.len() < 2 {
        return Err(Error::Config("compare needs at least two algorithms".into()));
    }
    if !target.is_finite() {
        return Err(Error::Config("target loss must be finite".into()));
    }
    let mut entries = Vec::with_capacity(algos.len());
    for &algo in algos {
        let cfg = ExperimentConfig { algo, ..base.clone() };
        let metrics = run_on(&cfg, train, test, None)?;
        let rounds_to_target = metrics.rounds_to_target(target);
        entries.push(ComparisonEntry {
            algo,
            metrics,
            rounds_to_target,
        });
    }
    Ok(Comparison { target, entries })
}
