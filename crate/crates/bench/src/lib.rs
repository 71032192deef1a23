//! Fixtures for the kernel benchmarks under `benches/`.

use localnewton_core::synth::{self, SynthSpec, SynthTask};
use localnewton_core::{data, Dataset, Partition};

/// Logistic data with `n` samples and `d` features, seeded for repeatability.
pub fn logistic_data(n: usize, d: usize) -> Dataset {
    synth::generate(&SynthSpec::new(n, d, SynthTask::Logistic, 1))
        .expect("valid spec")
        .train
}

/// `n` samples split evenly over `k` workers.
pub fn partition(n: usize, k: usize) -> Partition {
    data::partition_uniform(n, k, 1).expect("n >= k")
}

/// A point away from the origin so the logistic weights vary.
pub fn probe_point(d: usize) -> Vec<f64> {
    (0..d).map(|i| ((i as f64) * 0.7).sin() * 0.3).collect()
}
