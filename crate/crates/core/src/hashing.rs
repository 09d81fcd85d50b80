//! Small deterministic mixing helpers.
//!
//! Seed derivation and the noisy oracle both need a stable hash that does not
//! depend on process state, platform, or library version, so coordinates and
//! seeds are folded through SplitMix64 by hand.

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `value` into `state`. Order-sensitive, so distinct field orders give
/// distinct streams.
pub(crate) fn mix64(state: u64, value: u64) -> u64 {
    splitmix64(state ^ splitmix64(value))
}

/// Maps a hash onto `[0, 1)` with 53 bits of precision.
pub(crate) fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
