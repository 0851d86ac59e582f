//! Counter-style random substreams.
//!
//! Every stream is keyed by a master seed plus a tuple of tags (scenario,
//! sample size, repetition, degree, order, ...). The key is hashed into a
//! ChaCha seed, so the numbers a stream produces never depend on the order
//! in which streams are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Tag separating simulation noise from other consumers of the master seed.
pub const TAG_NOISE: u64 = 0x6e6f_6973_65;
pub const TAG_REPETITION: u64 = 0x7265_7065_6174;

/// Derives a child seed from `seed` and `tags`.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let digest = digest(seed, tags);
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Independent generator for the stream identified by `(seed, tags)`.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(digest(seed, tags))
}

fn digest(seed: u64, tags: &[u64]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"mfreg-stream-v1");
    h.update(seed.to_le_bytes());
    h.update((tags.len() as u64).to_le_bytes());
    for t in tags {
        h.update(t.to_le_bytes());
    }
    h.finalize().into()
}
