//! Datasets: LIBSVM parsing, pairwise feature expansion and uniform
//! partitioning of samples across workers.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

/// Largest feature count `expand_pairwise` will produce unless told otherwise.
pub const DEFAULT_EXPANSION_CAP: usize = 4096;

/// What the labels mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Labels are normalized to {-1, +1}.
    Binary,
    /// Labels are arbitrary reals.
    Regression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<f64>,
    task: Task,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<f64>, task: Task) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Dimension {
                expected: features.rows(),
                got: labels.len(),
            });
        }
        if task == Task::Binary {
            if let Some(i) = labels.iter().position(|&y| y != 1.0 && y != -1.0) {
                return Err(Error::invalid(format!(
                    "sample {i}: binary label {} is not in {{-1, +1}}",
                    labels[i]
                )));
            }
        }
        if !labels.iter().all(|y| y.is_finite()) {
            return Err(Error::NonFinite("labels"));
        }
        if !features.as_slice().iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        Ok(Dataset { features, labels, task })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<f64>, task: Task) -> Result<Self> {
        Dataset::new(Matrix::from_rows(rows), labels, task)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.features.cols()
    }

    #[inline]
    pub fn x(&self, j: usize) -> &[f64] {
        self.features.row(j)
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.labels[j]
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// Keeps only the listed samples, in the given order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        let d = self.d();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &j in idx {
            data.extend_from_slice(self.x(j));
        }
        Dataset {
            features: Matrix::from_row_major(idx.len(), d, data),
            labels: idx.iter().map(|&j| self.labels[j]).collect(),
            task: self.task,
        }
    }
}

fn normalize_label(raw: f64, task: Task) -> f64 {
    match task {
        Task::Binary if raw > 0.0 => 1.0,
        Task::Binary => -1.0,
        Task::Regression => raw,
    }
}

/// Parses binary-classification LIBSVM text.
pub fn parse_libsvm<R: BufRead>(reader: R, d_hint: Option<usize>) -> Result<Dataset> {
    parse_libsvm_with(reader, d_hint, Task::Binary)
}

pub fn parse_libsvm_with<R: BufRead>(reader: R, d_hint: Option<usize>, task: Task) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut sparse_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_idx = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line?;
        let mut tokens = line.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        let perr = |msg: String| Error::Parse { line: line_no, msg };
        let raw: f64 = label_tok.parse().map_err(|_| perr(format!("malformed label `{label_tok}`")))?;
        if !raw.is_finite() {
            return Err(perr(format!("non-finite label `{label_tok}`")));
        }

        let mut row = Vec::new();
        let mut prev = 0usize;
        for tok in tokens {
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| perr(format!("malformed token `{tok}`")))?;
            let idx: usize = idx_s.parse().map_err(|_| perr(format!("malformed index in `{tok}`")))?;
            let val: f64 = val_s.parse().map_err(|_| perr(format!("malformed value in `{tok}`")))?;
            if idx == 0 {
                return Err(perr("feature indices are 1-based".into()));
            }
            if idx <= prev {
                return Err(perr(format!("index {idx} does not increase (previous {prev})")));
            }
            if let Some(d) = d_hint {
                if idx > d {
                    return Err(perr(format!("index {idx} exceeds dimension {d}")));
                }
            }
            if !val.is_finite() {
                return Err(perr(format!("non-finite value in `{tok}`")));
            }
            prev = idx;
            row.push((idx - 1, val));
        }
        max_idx = max_idx.max(prev);
        labels.push(normalize_label(raw, task));
        sparse_rows.push(row);
    }

    let d = d_hint.unwrap_or(max_idx);
    let mut features = Matrix::zeros(sparse_rows.len(), d);
    for (i, row) in sparse_rows.iter().enumerate() {
        let dense = features.row_mut(i);
        for &(j, v) in row {
            dense[j] = v;
        }
    }
    Dataset::new(features, labels, task)
}

/// Writes nonzero entries in LIBSVM format. Floats use the shortest
/// representation that round-trips.
pub fn write_libsvm<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    for i in 0..ds.n() {
        match ds.task() {
            Task::Binary if ds.y(i) > 0.0 => write!(out, "+1")?,
            Task::Binary => write!(out, "-1")?,
            Task::Regression => write!(out, "{:?}", ds.y(i))?,
        }
        for (j, &v) in ds.x(i).iter().enumerate() {
            if v != 0.0 {
                write!(out, " {}:{:?}", j + 1, v)?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Loads a LIBSVM file; `.gz` files are decompressed on the fly.
pub fn load_libsvm(path: &Path, d_hint: Option<usize>, task: Task) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "gz") {
        parse_libsvm_with(BufReader::new(GzDecoder::new(file)), d_hint, task)
    } else {
        parse_libsvm_with(BufReader::new(file), d_hint, task)
    }
}

/// Replaces each row `x` by all ordered products `x_i * x_j`, row-major,
/// giving `d * d` features.
pub fn expand_pairwise(ds: &Dataset, max_dim: usize) -> Result<Dataset> {
    let d = ds.d();
    if d == 0 {
        return Err(Error::invalid("cannot expand an empty feature set"));
    }
    let d2 = d
        .checked_mul(d)
        .filter(|&d2| d2 <= max_dim)
        .ok_or_else(|| Error::invalid(format!("{d}^2 features exceeds the cap of {max_dim}")))?;
    let mut out = Matrix::zeros(ds.n(), d2);
    for r in 0..ds.n() {
        let x = ds.x(r);
        let row = out.row_mut(r);
        for i in 0..d {
            for j in 0..d {
                row[i * d + j] = x[i] * x[j];
            }
        }
    }
    Dataset::new(out, ds.labels().to_vec(), ds.task())
}

/// Disjoint, equally sized sample shards, one per worker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    shards: Vec<Vec<usize>>,
    shard_size: usize,
}

impl Partition {
    /// Validates caller-built shards against `n` samples.
    pub fn from_shards(shards: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let Some(first) = shards.first() else {
            return Err(Error::invalid("a partition needs at least one shard"));
        };
        let s = first.len();
        if s == 0 {
            return Err(Error::invalid("shards must be nonempty"));
        }
        let mut seen = vec![false; n];
        for (k, shard) in shards.iter().enumerate() {
            if shard.len() != s {
                return Err(Error::invalid(format!("shard {k} has {} samples, expected {s}", shard.len())));
            }
            for &j in shard {
                if j >= n {
                    return Err(Error::invalid(format!("shard {k} holds index {j} >= n = {n}")));
                }
                if std::mem::replace(&mut seen[j], true) {
                    return Err(Error::invalid(format!("index {j} appears in more than one shard")));
                }
            }
        }
        Ok(Partition { shards, shard_size: s })
    }

    /// Like `from_shards` but allows the same sample on several workers.
    /// Used to build replicated-shard experiments.
    pub fn replicated(shard: Vec<usize>, workers: usize) -> Result<Self> {
        if shard.is_empty() || workers == 0 {
            return Err(Error::invalid("replicated partition needs a nonempty shard and K >= 1"));
        }
        Ok(Partition {
            shard_size: shard.len(),
            shards: vec![shard; workers],
        })
    }

    #[inline]
    pub fn worker_count(&self) -> usize {
        self.shards.len()
    }

    #[inline]
    pub fn shard_size(&self) -> usize {
        self.shard_size
    }

    #[inline]
    pub fn shard(&self, k: usize) -> &[usize] {
        &self.shards[k]
    }

    pub fn shards(&self) -> &[Vec<usize>] {
        &self.shards
    }

    /// All retained sample indices, shard by shard.
    pub fn union(&self) -> Vec<usize> {
        self.shards.iter().flatten().copied().collect()
    }
}

/// Shuffles `0..n` with the seeded partition stream and cuts it into `k`
/// consecutive blocks of `n / k`; the `n % k` leftovers are dropped.
pub fn partition_uniform(n: usize, k: usize, seed: u64) -> Result<Partition> {
    if k == 0 {
        return Err(Error::invalid("worker count must be at least 1"));
    }
    if n < k {
        return Err(Error::invalid(format!("{n} samples cannot fill {k} workers")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(seed, rng::purpose::PARTITION, &[n as u64, k as u64]));
    let s = n / k;
    let shards = perm.chunks_exact(s).take(k).map(<[usize]>::to_vec).collect();
    Ok(Partition { shards, shard_size: s })
}
