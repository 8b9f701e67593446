//! Deterministic seeding.
//!
//! Every stochastic component of a run draws from its own ChaCha stream whose
//! seed is a labeled hash of the run seed, so results do not depend on the
//! order in which components are stepped.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Seed of ensemble member `run_index`.
pub fn run_seed(master: u64, run_index: u64) -> u64 {
    master ^ run_index
}

/// Stable 64-bit seed for the substream named `label` of a run.
pub fn substream_seed(run_seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(run_seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn substream(run_seed: u64, label: &str) -> StreamRng {
    StreamRng::seed_from_u64(substream_seed(run_seed, label))
}

pub fn rng(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

/// Hex SHA-256 of arbitrary bytes.
pub fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
