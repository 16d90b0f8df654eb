//! Small deterministic hashing helpers used for seeded perturbations,
//! checksums and management-data digests.

/// SplitMix64 mixing step.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic hash of a byte string (FNV-1a folded through splitmix).
pub fn digest_bytes(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = splitmix64(seed ^ 0xcbf2_9ce4_8422_2325);
    for &b in bytes {
        h = splitmix64(h ^ b as u64);
    }
    h
}

/// Uniform value in [-1, 1] derived from a hash state.
pub fn unit_from_hash(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_range() {
        for i in 0..1000 {
            let v = unit_from_hash(splitmix64(i));
            assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn digest_is_order_sensitive() {
        assert_ne!(digest_bytes(1, b"ab"), digest_bytes(1, b"ba"));
        assert_eq!(digest_bytes(7, b"xyz"), digest_bytes(7, b"xyz"));
    }
}
