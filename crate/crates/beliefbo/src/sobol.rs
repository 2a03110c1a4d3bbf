//! Seeded scrambled Sobol points on the unit cube.
//!
//! Thin wrapper over `sobol_burley` (Owen-scrambled Sobol). For a fixed seed
//! the first `n` points are a prefix of the first `2n`, which several callers
//! rely on for nested candidate sets. Requests beyond the native sequence
//! length are served by chaining independently scrambled blocks.

use ndarray::Array2;

use crate::rng::derive_seed;

/// Native sequence length of one scrambled block.
pub const BLOCK: usize = 1 << 16;

/// First `n` scrambled Sobol points in `[0,1)^dim`.
pub fn sobol_points(n: usize, dim: usize, seed: u64) -> Array2<f64> {
    assert!(dim <= 256, "sobol dimension {dim} exceeds 256");
    let mut out = Array2::zeros((n, dim));
    for i in 0..n {
        let block = (i / BLOCK) as u64;
        let idx = (i % BLOCK) as u32;
        let s = derive_seed(seed, &[0x50b0, block]);
        let seed32 = (s ^ (s >> 32)) as u32;
        for j in 0..dim {
            out[[i, j]] = f64::from(sobol_burley::sample(idx, j as u32, seed32));
        }
    }
    out
}
