//! Synthetic stand-ins for the benchmark datasets.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthTask {
    Logistic,
    LeastSquares,
}

impl SynthTask {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(SynthTask::Logistic),
            "least_squares" | "least-squares" => Ok(SynthTask::LeastSquares),
            _ => Err(Error::Config(format!("unknown task `{s}` (logistic | least_squares)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SynthTask::Logistic => "logistic",
            SynthTask::LeastSquares => "least_squares",
        }
    }
}

/// Gaussian design with independent coordinates, ground truth
/// `w ~ N(0, signal^2 I)`. Coordinate `j` has standard deviation
/// proportional to `(j + 1)^-decay`, normalised so `E|x|^2 = 1`; `decay = 0`
/// is the isotropic `N(0, I/d)`, larger values concentrate the spectrum the
/// way real feature sets do.
///
/// With `active = Some(a)` the design is instead sparse and binary, like
/// bag-of-words data: coordinate `j` is 1 with probability proportional to
/// `(j + 1)^-decay` (capped at 1), scaled so about `a` coordinates are on
/// per row, and `w.x` is divided by `sqrt(a)`.
///
/// Logistic labels are `sign(w.x + noise * e)`; least-squares targets are
/// `w.x + noise * e`, with `e ~ N(0, 1)`. A `margin` replaces the noisy
/// logistic labels by noise-free ones and rejects samples with
/// `|w.x| < margin |w| / sqrt(d)`, which makes the data separable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub task: SynthTask,
    pub seed: u64,
    pub signal: f64,
    pub noise: f64,
    pub margin: Option<f64>,
    pub decay: f64,
    pub active: Option<f64>,
}

impl SynthSpec {
    pub fn new(n: usize, d: usize, task: SynthTask, seed: u64) -> Self {
        SynthSpec {
            n,
            d,
            task,
            seed,
            signal: 3.0,
            noise: 1.0,
            margin: None,
            decay: 0.0,
            active: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::Config("n and d must both be at least 1".into()));
        }
        if !(self.signal > 0.0 && self.noise >= 0.0) {
            return Err(Error::Config("signal must be > 0 and noise >= 0".into()));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return Err(Error::Config("decay must be finite and >= 0".into()));
        }
        if let Some(a) = self.active {
            if !(a > 0.0 && a <= self.d as f64) {
                return Err(Error::Config(format!("active must lie in (0, d], got {a}")));
            }
            if self.margin.is_some() {
                return Err(Error::Config("margin needs the Gaussian design".into()));
            }
        }
        if let Some(m) = self.margin {
            if self.task != SynthTask::Logistic || !(m > 0.0 && m < 1.0) {
                return Err(Error::Config("margin applies to logistic data and must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        let margin = self.margin.map_or("none".to_string(), |m| m.to_string());
        let active = self.active.map_or("none".to_string(), |a| a.to_string());
        format!(
            "task={} n={} d={} seed={} signal={} noise={} margin={} decay={} active={}",
            self.task.name(),
            self.n,
            self.d,
            self.seed,
            self.signal,
            self.noise,
            margin,
            self.decay,
            active
        )
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub train: Dataset,
    pub w_true: Vec<f64>,
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Activation probabilities of the sparse binary design.
fn activation_probs(d: usize, decay: f64, active: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..d).map(|j| ((j + 1) as f64).powf(-decay)).collect();
    let c = active / linalg::pairwise_sum(&raw);
    raw.into_iter().map(|r| (c * r).min(1.0)).collect()
}

fn feature_scales(d: usize, decay: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..d).map(|j| ((j + 1) as f64).powf(-decay)).collect();
    let norm = linalg::norm(&raw);
    raw.into_iter().map(|r| r / norm).collect()
}

/// Draws the ground truth from the seed alone, so train and test sets drawn
/// with different `stream` ids share it.
pub fn ground_truth(spec: &SynthSpec) -> Vec<f64> {
    let mut rng = rng::stream(spec.seed, rng::purpose::SYNTH, &[0]);
    (0..spec.d).map(|_| spec.signal * normal(&mut rng)).collect()
}

/// Draws `spec.n` samples from sample stream `stream` (use distinct values
/// for train and test).
pub fn sample(spec: &SynthSpec, w_true: &[f64], stream: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, rng::purpose::SYNTH, &[1, stream]);
    let d = spec.d;
    let scale = 1.0 / (d as f64).sqrt();
    let stds = feature_scales(d, spec.decay);
    let probs = spec.active.map(|a| activation_probs(d, spec.decay, a));
    let z_scale = spec.active.map_or(1.0, |a| 1.0 / a.sqrt());
    let w_norm = linalg::norm(w_true);
    let mut data = Vec::with_capacity(spec.n * d);
    let mut labels = Vec::with_capacity(spec.n);
    let mut x = vec![0.0; d];
    while labels.len() < spec.n {
        match &probs {
            Some(p) => {
                for (xi, &pj) in x.iter_mut().zip(p) {
                    *xi = if rng.random::<f64>() < pj { 1.0 } else { 0.0 };
                }
            }
            None => {
                for (xi, sd) in x.iter_mut().zip(&stds) {
                    *xi = sd * normal(&mut rng);
                }
            }
        }
        let z = z_scale * linalg::dot(&x, w_true);
        let label = match (spec.task, spec.margin) {
            (SynthTask::Logistic, Some(m)) => {
                if z.abs() < m * w_norm * scale {
                    continue;
                }
                z.signum()
            }
            (SynthTask::Logistic, None) => {
                if z + spec.noise * normal(&mut rng) >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            (SynthTask::LeastSquares, _) => z + spec.noise * normal(&mut rng),
        };
        data.extend_from_slice(&x);
        labels.push(label);
    }
    let task = match spec.task {
        SynthTask::Logistic => Task::Binary,
        SynthTask::LeastSquares => Task::Regression,
    };
    Dataset::new(Matrix::from_row_major(spec.n, d, data), labels, task)
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let w_true = ground_truth(spec);
    let train = sample(spec, &w_true, 0)?;
    if let Some(m) = spec.margin {
        let bound = m * linalg::norm(&w_true) / (spec.d as f64).sqrt();
        let ok = (0..train.n()).all(|j| train.y(j) * linalg::dot(&w_true, train.x(j)) >= bound);
        if !ok {
            return Err(Error::invalid("generated data violates the requested margin"));
        }
    }
    Ok(SynthData { train, w_true })
}
