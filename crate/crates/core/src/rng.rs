//! Deterministic seed derivation and keyed noise.
//!
//! All randomness in the crate flows from explicit 64-bit seeds. Sub-seeds
//! derive from a parent seed plus a textual label, and per-entry noise is a
//! pure function of `(seed, key, index)`, so results never depend on
//! iteration order or thread schedule. Bulk sampling (shuffles, synthetic
//! data) uses a seeded ChaCha stream instead; this module only covers the
//! keyed, counter-style draws that a stream generator cannot express.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 finalizer: a bijective 64-bit mix with good avalanche.
fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(init: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ init;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derive a labeled sub-seed from a parent seed.
///
/// Distinct labels yield independent-looking streams; the same
/// `(seed, label)` always yields the same sub-seed.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    mix64(fnv1a(mix64(seed), label.as_bytes()))
}

/// Uniform draw in `[0, 1)` that is a pure function of `(seed, key, index)`.
pub fn keyed_unit(seed: u64, key: &str, index: u64) -> f64 {
    let h = fnv1a(mix64(seed), key.as_bytes());
    unit_from_bits(mix64(h ^ index.wrapping_mul(GOLDEN_GAMMA)))
}

/// Map 64 random bits to a double in `[0, 1)` using the top 53 bits.
pub fn unit_from_bits(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
