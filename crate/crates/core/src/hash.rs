//! Stateless 64-bit mixing used by the synthetic models.

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold `value` into `state`. Not commutative.
pub(crate) fn combine(state: u64, value: u64) -> u64 {
    mix64(state.rotate_left(23) ^ mix64(value))
}

/// Uniform in `[0, 1)` from the top 53 bits.
pub(crate) fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
