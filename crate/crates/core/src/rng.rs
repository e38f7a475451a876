//! Seed expansion into reproducible, independently addressable streams.
//!
//! A master seed (arbitrary bytes) and a domain label are hashed with
//! SHA-256 into a ChaCha20 key. Each key addresses 2^64 independent
//! streams through the ChaCha stream id, so a shard of work indexed by `k`
//! always sees the same random numbers no matter which thread runs it or
//! in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Domain label for spot-check bits and setting choices.
pub const DOMAIN_PROTOCOL: &str = "ctxrand/protocol";
/// Domain label for simulated device noise and measurement sampling.
pub const DOMAIN_DEVICE: &str = "ctxrand/device";
/// Domain label for extractor seeds generated from a master seed.
pub const DOMAIN_EXTRACTOR: &str = "ctxrand/extractor";

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey([u8; 32]);

impl StreamKey {
    pub fn derive(master: &[u8], domain: &str) -> Self {
        let mut h = Sha256::new();
        h.update((domain.len() as u64).to_le_bytes());
        h.update(domain.as_bytes());
        h.update(master);
        StreamKey(h.finalize().into())
    }

    /// Generator for stream `index`, positioned at its start.
    pub fn stream(&self, index: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::from_seed(self.0);
        rng.set_stream(index);
        rng
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl std::fmt::Debug for StreamKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "StreamKey({})", hex::encode(&self.0[..8]))
    }
}
