//! Named random sub-streams derived from one global seed.
//!
//! Every stream is a ChaCha8 generator keyed by the global seed with a stream
//! id derived from the stream name (and optionally an index), so adding a
//! consumer never perturbs the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn fnv1a(bytes: &[u8], mut hash: u64) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

/// Generator for the named stream.
pub fn stream(seed: u64, name: &str) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.as_bytes(), FNV_OFFSET));
    rng
}

/// Generator for item `index` of the named stream family.
pub fn substream(seed: u64, name: &str, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = fnv1a(&index.to_le_bytes(), fnv1a(name.as_bytes(), FNV_OFFSET));
    rng.set_stream(id);
    rng
}
