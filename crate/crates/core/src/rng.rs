//! Deterministic named random substreams derived from one global seed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha20Rng;

/// Independent stream for `name` under `global_seed`.
pub fn substream(global_seed: u64, name: &str) -> Stream {
    indexed_substream(global_seed, name, 0)
}

/// Stream for the `index`-th unit of work under `name` (one per block,
/// calibration point, and so on).
pub fn indexed_substream(global_seed: u64, name: &str, index: u64) -> Stream {
    let mut h = Sha256::new();
    h.update(b"sdiqrng-substream/v1");
    h.update(global_seed.to_le_bytes());
    h.update((name.len() as u64).to_le_bytes());
    h.update(name.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(seed)
}
