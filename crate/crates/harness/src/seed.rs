//! Order-independent per-trial seeds.

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// One SplitMix64 output for state `z`.
pub fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `words` into `base`, one SplitMix64 round per word.
pub fn mix(base: u64, words: &[u64]) -> u64 {
    words.iter().fold(splitmix64(base), |h, &w| splitmix64(h ^ w))
}

/// Bytes folded eight at a time, with the length as a final word so that
/// prefixes do not collide.
pub fn hash_bytes(bytes: &[u8]) -> u64 {
    let mut h = 0;
    for chunk in bytes.chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        h = splitmix64(h ^ u64::from_le_bytes(word));
    }
    splitmix64(h ^ bytes.len() as u64)
}

/// Seed for one sweep cell; depends only on its coordinates.
pub fn trial_seed(base: u64, image_id: &str, budget: usize, snr_db: f64) -> u64 {
    mix(base, &[hash_bytes(image_id.as_bytes()), budget as u64, snr_db.to_bits()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        // first outputs of the reference generator seeded with 0
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
        assert_eq!(splitmix64(GAMMA), 0x6e78_9e6a_a1b9_65f4);
    }

    #[test]
    fn coordinates_matter() {
        let s = trial_seed(1, "kodim01", 30, 6.0);
        assert_eq!(s, trial_seed(1, "kodim01", 30, 6.0));
        assert_ne!(s, trial_seed(2, "kodim01", 30, 6.0));
        assert_ne!(s, trial_seed(1, "kodim02", 30, 6.0));
        assert_ne!(s, trial_seed(1, "kodim01", 10, 6.0));
        assert_ne!(s, trial_seed(1, "kodim01", 30, 0.0));
        assert_ne!(hash_bytes(b"ab"), hash_bytes(b"ab\0"));
    }
}
