//! Counter-based seed derivation.
//!
//! Every random stream in an experiment is keyed by a tuple of integers, e.g.
//! `(master_seed, experiment_tag, n, replicate)`. The tuple is folded through
//! the SplitMix64 finalizer, so any implementation that reproduces
//! [`splitmix64`] and [`derive_seed`] reproduces the streams:
//!
//! ```text
//! state = master
//! for part in parts: state = splitmix64(state ^ splitmix64(part))
//! ```
//!
//! The resulting 64-bit value seeds a ChaCha8 generator via
//! `SeedableRng::seed_from_u64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 output function applied to `x + golden gamma`.
pub const fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(master, |state, &p| splitmix64(state ^ splitmix64(p)))
}

/// 64-bit FNV-1a, used to turn experiment names into stream tags.
pub fn tag(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn rng_for(master: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, parts))
}
