//! Deterministic sub-seed derivation so one top-level seed drives every
//! random choice in a run.

/// Derives a sub-seed from a base seed, a domain tag, and an index.
/// FNV-1a over the tag, then a splitmix64 finalizer.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in tag.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
    }
    let mut z = base
        ^ h.rotate_left(32)
        ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
