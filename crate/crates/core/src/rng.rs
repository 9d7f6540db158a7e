//! Named, counter-based random streams derived from a single run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Independent stream for `(seed, name, index)`. Streams for different
/// names or indices do not overlap and do not depend on call order.
pub fn stream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((name.len() as u64).to_le_bytes());
    h.update(name.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Derived seed for handing a sub-stream to another component.
pub fn sub_seed(seed: u64, name: &str) -> u64 {
    use rand::RngCore;
    stream(seed, name, 0).next_u64()
}
