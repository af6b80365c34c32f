//! Keyed deterministic random streams.
//!
//! Every source of randomness in the pipeline is derived from one root seed
//! plus a named purpose and a tuple of integer keys (fold, epoch, clip index,
//! ...). Streams for different keys are independent, so work keyed this way
//! can be generated in any order and still reproduce bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a hash of a byte string.
pub fn fnv1a_bytes(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

fn fnv1a(label: &str) -> u64 {
    fnv1a_bytes(label.as_bytes())
}

/// Derive a 64-bit sub-seed from a root seed, a purpose label and keys.
pub fn derive_seed(seed: u64, purpose: &str, keys: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ fnv1a(purpose));
    for &k in keys {
        h = splitmix64(h ^ splitmix64(k));
    }
    h
}

/// A generator for `(seed, purpose, keys)`.
pub fn stream(seed: u64, purpose: &str, keys: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, purpose, keys))
}

/// Purpose labels of every stream the pipeline draws from. Written into run
/// metadata so a run's randomness can be audited.
pub const STREAM_NAMES: &[&str] = &["augment", "folds", "init", "shuffle", "dropout", "synth"];
