//! Deterministic RNG streams.
//!
//! Every stochastic component takes a `u64` seed and derives independent
//! sub-streams with [`derive_seed`], so parallel and serial execution orders
//! produce identical results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a master seed with a salt and an index into a new stream seed.
///
/// SplitMix64 finalizer; distinct (salt, index) pairs give well-separated
/// streams from the same master seed.
pub fn derive_seed(master: u64, salt: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Creates the crate-standard RNG from a seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Salt constants separating the crate's independent stream families.
pub mod salt {
    pub const TREE: u64 = 1;
    pub const FOLD: u64 = 3;
    pub const SHAP_SUBJECT: u64 = 4;
    pub const SIM_COVARIATES: u64 = 5;
    pub const SIM_TREATMENT: u64 = 6;
    pub const SIM_OUTCOME: u64 = 7;
    pub const SIM_CENSORING: u64 = 8;
    pub const REPLICATE: u64 = 9;
    pub const BACKGROUND: u64 = 10;
    pub const NUIS_SURV0: u64 = 20;
    pub const NUIS_SURV1: u64 = 21;
    pub const NUIS_POOLED: u64 = 22;
    pub const NUIS_PROPENSITY: u64 = 23;
    pub const CATE_REGRESSOR: u64 = 24;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn derived_streams_are_stable_and_distinct() {
        let a = derive_seed(42, salt::TREE, 0);
        let b = derive_seed(42, salt::TREE, 1);
        let c = derive_seed(42, salt::FOLD, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(42, salt::TREE, 0));
        let mut r1 = seeded(a);
        let mut r2 = seeded(a);
        assert_eq!(r1.next_u64(), r2.next_u64());
    }
}
