//! Seeded random sources.
//!
//! Every stochastic operation in the crate takes an explicit `u64` seed. Sub-streams
//! (trial `t` of a sweep, the noise draw of a sample, ...) are derived with
//! [`split_seed`], a counter-based mix, so any single stream can be regenerated in
//! isolation.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of sub-stream `counter` under `root`.
pub fn split_seed(root: u64, counter: u64) -> u64 {
    mix64(root ^ mix64(counter.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// Named sub-streams, so e.g. pilots and noise of the same trial never share draws.
pub fn stream_seed(root: u64, stream: Stream, counter: u64) -> u64 {
    split_seed(split_seed(root, stream as u64), counter)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Pilots = 1,
    Scatterers = 2,
    Noise = 3,
    Grid = 4,
    Dataset = 5,
    Trial = 6,
    Training = 7,
}

/// Circularly-symmetric complex Gaussian with variance `var` (E|z|^2 = var).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}
