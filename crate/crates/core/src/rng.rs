//! Deterministic seeding. Every trial, sample and stream gets its own RNG
//! derived from a base seed by counter, so work can be split across threads
//! without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type LabRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `(stream, index)` under `base`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ stream) ^ index)
}

pub fn rng(seed: u64) -> LabRng {
    LabRng::seed_from_u64(seed)
}

pub fn child_rng(base: u64, stream: u64, index: u64) -> LabRng {
    rng(derive_seed(base, stream, index))
}

#[inline]
pub fn std_normal<R: rand::Rng + ?Sized>(r: &mut R) -> f64 {
    StandardNormal.sample(r)
}

pub fn std_normals<R: rand::Rng + ?Sized>(r: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| std_normal(r)).collect()
}

/// Stream identifiers, kept distinct so independent uses of one base seed
/// never share draws.
pub mod streams {
    pub const TRIAL: u64 = 1;
    pub const SAMPLE_NOISE: u64 = 2;
    pub const CLASSIFIER_FIT: u64 = 3;
    pub const EXPECTATION: u64 = 4;
    pub const TRAIN: u64 = 5;
    pub const GENERATE: u64 = 6;
    pub const CROP_MC: u64 = 7;
    pub const DATA_CLEAN: u64 = 8;
    pub const DATA_CORRUPT: u64 = 9;
    pub const INIT: u64 = 10;
}
