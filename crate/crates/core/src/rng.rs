//! Seed fan-out: one experiment seed feeds independent per-purpose streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Stream tags. Adding a new purpose never perturbs existing streams.
pub mod purpose {
    pub const PARTITION: &str = "partition";
    pub const SGD: &str = "sgd";
    pub const SYNTH: &str = "synth";
    pub const THEORY: &str = "theory";
}

/// A generator keyed by `(seed, tag, path)`.
pub fn stream(seed: u64, tag: &str, path: &[u64]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag.as_bytes());
    for p in path {
        h.update(p.to_le_bytes());
    }
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}
