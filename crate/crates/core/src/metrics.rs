//! Per-round metrics and their CSV form.

use std::fmt;
use std::io::Write;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::objective::ObjectiveModel;

pub const CSV_HEADER: &str = "round,local_iters,train_loss,test_acc,grad_norm,L,phase";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    LocalNewton,
    Giant,
    LocalSgd,
    Bfgs,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::LocalNewton => "localnewton",
            Phase::Giant => "giant",
            Phase::LocalSgd => "local_sgd",
            Phase::Bfgs => "bfgs",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// Cumulative communication rounds charged so far.
    pub round: u64,
    /// Cumulative local (or global) iterations.
    pub local_iters: u64,
    pub train_loss: f64,
    pub test_accuracy: Option<f64>,
    /// Norm of the full-objective gradient at the averaged model.
    pub grad_norm: f64,
    pub l_current: usize,
    pub phase: Phase,
}

/// A controller decision taken after the round it is attached to.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub round: u64,
    pub from_l: usize,
    pub to_l: usize,
    pub from: Phase,
    pub to: Phase,
    /// `f_prev - f_now` that triggered the change.
    pub decrement: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMeta {
    pub algo: String,
    pub dataset: String,
    pub workers: usize,
    pub seed: u64,
    pub config_hash: String,
    /// Loss at the starting point, before any round.
    pub initial_loss: f64,
    /// Every resolved config key with its value.
    pub params: Vec<(String, String)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub rows: Vec<RoundRecord>,
    pub meta: RunMeta,
    pub transitions: Vec<Transition>,
    /// Solver warnings, e.g. a distributed line search that accepted no candidate.
    pub flags: Vec<String>,
}

impl RunMetrics {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.rows {
            write_row(&mut out, r)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is ascii")
    }

    /// First round whose training loss is at or below `target`.
    pub fn rounds_to_target(&self, target: f64) -> Option<u64> {
        self.rows.iter().find(|r| r.train_loss <= target).map(|r| r.round)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.train_loss)
    }
}

/// Reals use 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_row<W: Write>(out: &mut W, r: &RoundRecord) -> Result<()> {
    let acc = r.test_accuracy.map(fmt_real).unwrap_or_default();
    writeln!(
        out,
        "{},{},{},{},{},{},{}",
        r.round,
        r.local_iters,
        fmt_real(r.train_loss),
        acc,
        fmt_real(r.grad_norm),
        r.l_current,
        r.phase
    )?;
    Ok(())
}

/// Fraction of samples with `sign(w.x) == y`, counting `sign(0)` as +1.
pub fn accuracy(w: &[f64], test: &Dataset) -> Result<f64> {
    if test.n() == 0 {
        return Err(Error::invalid("empty test set"));
    }
    if w.len() != test.d() {
        return Err(Error::Dimension {
            expected: test.d(),
            got: w.len(),
        });
    }
    let hits = (0..test.n())
        .filter(|&j| {
            let pred = if linalg::dot(w, test.x(j)) >= 0.0 { 1.0 } else { -1.0 };
            pred == test.y(j)
        })
        .count();
    Ok(hits as f64 / test.n() as f64)
}

/// Evaluates the averaged model after each charged round and appends a row,
/// optionally streaming it to a CSV sink that is flushed per row.
pub struct Recorder<'a> {
    model: ObjectiveModel<'a>,
    eval_idx: Vec<usize>,
    test: Option<&'a Dataset>,
    sink: Option<Box<dyn Write + 'a>>,
    metrics: RunMetrics,
}

impl<'a> Recorder<'a> {
    /// Train loss is measured over `eval_idx`, normally the union of shards.
    pub fn new(model: ObjectiveModel<'a>, eval_idx: Vec<usize>, test: Option<&'a Dataset>) -> Self {
        Recorder {
            model,
            eval_idx,
            test,
            sink: None,
            metrics: RunMetrics::default(),
        }
    }

    /// Writes the header now and each row as it is recorded.
    pub fn stream_to(&mut self, mut sink: Box<dyn Write + 'a>) -> Result<()> {
        writeln!(sink, "{CSV_HEADER}")?;
        sink.flush()?;
        self.sink = Some(sink);
        Ok(())
    }

    pub fn set_meta(&mut self, meta: RunMeta) {
        self.metrics.meta = meta;
    }

    pub fn loss(&self, w: &[f64]) -> Result<f64> {
        self.model.value(w, &self.eval_idx)
    }

    pub fn record(&mut self, w: &[f64], round: u64, local_iters: u64, l_current: usize, phase: Phase) -> Result<&RoundRecord> {
        let train_loss = self.model.value(w, &self.eval_idx)?;
        let grad_norm = linalg::norm(&self.model.gradient(w, &self.eval_idx)?);
        if !(train_loss.is_finite() && grad_norm.is_finite()) {
            return Err(Error::NonFinite("training loss").in_round(round));
        }
        let test_accuracy = self.test.map(|t| accuracy(w, t)).transpose()?;
        if let Some(last) = self.metrics.rows.last() {
            debug_assert!(round > last.round, "rounds must increase");
        }
        let row = RoundRecord {
            round,
            local_iters,
            train_loss,
            test_accuracy,
            grad_norm,
            l_current,
            phase,
        };
        if let Some(sink) = self.sink.as_mut() {
            write_row(sink, &row)?;
            sink.flush()?;
        }
        self.metrics.rows.push(row);
        Ok(self.metrics.rows.last().expect("just pushed"))
    }

    pub fn transition(&mut self, t: Transition) {
        self.metrics.transitions.push(t);
    }

    pub fn flag(&mut self, msg: String) {
        self.metrics.flags.push(msg);
    }

    pub fn rows(&self) -> &[RoundRecord] {
        &self.metrics.rows
    }

    pub fn finish(self) -> RunMetrics {
        self.metrics
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;

    #[test]
    fn accuracy_rules() {
        let ds = Dataset::from_rows(&[vec![1.0], vec![-2.0], vec![3.0]], vec![1.0, -1.0, -1.0], Task::Binary).unwrap();
        assert!((accuracy(&[1.0], &ds).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        // sign(0) = +1, so only the first sample is right.
        assert!((accuracy(&[0.0], &ds).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let empty = Dataset::from_rows(&[], vec![], Task::Binary);
        if let Ok(empty) = empty {
            assert!(accuracy(&[], &empty).is_err());
        }
    }

    #[test]
    fn csv_format() {
        let m = RunMetrics {
            rows: vec![RoundRecord {
                round: 3,
                local_iters: 1,
                train_loss: 0.5,
                test_accuracy: None,
                grad_norm: 1.0 / 3.0,
                l_current: 1,
                phase: Phase::Giant,
            }],
            ..Default::default()
        };
        assert_eq!(
            m.to_csv_string(),
            "round,local_iters,train_loss,test_acc,grad_norm,L,phase\n\
             3,1,5.0000000000000000e-1,,3.3333333333333331e-1,1,giant\n"
        );
    }
}
