//! Deterministic stream derivation.
//!
//! Every consumer of randomness (a simulation replica, a spread draw, a
//! sampler test) gets its own ChaCha8 stream keyed by `(seed, tag, replica)`.
//! Streams never depend on worker count or scheduling order, which is what
//! makes runs byte-reproducible under `--replicas`/thread-pool changes.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 finalizer; full-period mixer over u64.
fn mix(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// FNV-1a over bytes. DefaultHasher is not stable across releases/platforms,
/// and stream identity must be.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive an independent ChaCha8 stream for `(seed, tag, replica)`.
///
/// The 32-byte key is squeezed from a splitmix64 chain that absorbs the three
/// identifiers sequentially, so distinct tuples give unrelated streams.
pub fn stream(seed: u64, tag: &str, replica: u64) -> ChaCha8Rng {
    let mut x = mix(seed ^ GOLDEN);
    x = mix(x.wrapping_add(fnv1a(tag.as_bytes())));
    x = mix(x.wrapping_add(replica).wrapping_add(GOLDEN));
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        x = mix(x.wrapping_add(GOLDEN));
        chunk.copy_from_slice(&x.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
