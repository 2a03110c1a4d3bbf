//! Deterministic RNG substreams.
//!
//! Every randomized stage derives its own child seed from the run seed and a
//! tag path, so draws stay reproducible regardless of evaluation order or
//! parallelism.

use rand_chacha::ChaCha12Rng;
use rand_chacha::rand_core::SeedableRng;

/// Stage tags used when deriving substream seeds. Keeping them in one place
/// avoids accidental collisions between stages.
pub mod tag {
    pub const INIT_DESIGN: u64 = 0x01;
    pub const FIT: u64 = 0x02;
    pub const BASIS: u64 = 0x03;
    pub const PRIOR_WEIGHTS: u64 = 0x04;
    pub const REJECTION: u64 = 0x05;
    pub const MATHERON: u64 = 0x06;
    pub const ARGMAX: u64 = 0x07;
    pub const ACQ_OPT: u64 = 0x08;
    pub const MES_NOISE: u64 = 0x09;
    pub const THOMPSON: u64 = 0x0a;
    pub const FANTASY: u64 = 0x0b;
    pub const NOISE: u64 = 0x0c;
    pub const EXTRA_DRAWS: u64 = 0x0d;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a tag path.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    let mut s = splitmix(parent ^ 0x6a09_e667_f3bc_c908);
    for &t in path {
        s = splitmix(s ^ splitmix(t));
    }
    s
}

/// Seeded generator for a substream.
pub fn stream(parent: u64, path: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(parent, path))
}
