//! Simulated master-worker fabric.
//!
//! Workers run on a thread pool; every reduction happens on the caller in
//! worker-id order so results never depend on scheduling. The fabric also
//! owns the communication-round counter.

use rayon::prelude::*;

use crate::error::{Error, Result};

pub struct Fabric {
    pool: Option<rayon::ThreadPool>,
    rounds: u64,
}

impl std::fmt::Debug for Fabric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fabric")
            .field("threads", &self.threads())
            .field("rounds", &self.rounds)
            .finish()
    }
}

impl Fabric {
    /// `threads == 1` runs workers inline; `0` uses one thread per core.
    pub fn new(threads: usize) -> Result<Self> {
        let pool = if threads == 1 {
            None
        } else {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
            )
        };
        Ok(Fabric { pool, rounds: 0 })
    }

    pub fn sequential() -> Self {
        Fabric { pool: None, rounds: 0 }
    }

    pub fn threads(&self) -> usize {
        self.pool.as_ref().map_or(1, rayon::ThreadPool::current_num_threads)
    }

    /// Runs `job(k)` for every worker `k < workers` and returns the results in
    /// worker order. The first failing worker (by id) determines the error.
    pub fn map<T, F>(&self, workers: usize, job: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        let results: Vec<Result<T>> = match &self.pool {
            None => (0..workers).map(&job).collect(),
            Some(pool) => pool.install(|| (0..workers).into_par_iter().map(&job).collect()),
        };
        results
            .into_iter()
            .enumerate()
            .map(|(k, r)| r.map_err(|e| e.in_worker(k)))
            .collect()
    }

    pub fn charge(&mut self, rounds: u64) {
        self.rounds += rounds;
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_keep_worker_order() {
        let f = Fabric::new(4).unwrap();
        let out = f.map(16, |k| Ok(k * k)).unwrap();
        assert_eq!(out, (0..16).map(|k| k * k).collect::<Vec<_>>());
    }

    #[test]
    fn first_failing_worker_wins() {
        let f = Fabric::new(3).unwrap();
        let err = f
            .map(10, |k| if k % 4 == 3 { Err(Error::invalid(format!("w{k}"))) } else { Ok(k) })
            .unwrap_err();
        match err {
            Error::Worker { worker, .. } => assert_eq!(worker, 3),
            e => panic!("{e:?}"),
        }
    }
}
