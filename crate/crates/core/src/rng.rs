//! Deterministic, splittable random streams.
//!
//! Every independent unit of work (scenario, trial, role, ...) draws from its
//! own ChaCha stream whose seed is a hash of the master seed and the unit's
//! index path. Work can therefore be scheduled in any order, on any number of
//! threads, and still reproduce the sequential result bit for bit.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// Well-known role tags used as the last element of a stream path.
pub mod role {
    pub const WANTED: u64 = 1;
    pub const INTERFERER: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const CHANNEL: u64 = 4;
    pub const EVOLUTION: u64 = 5;
    pub const PAYLOAD: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for the unit addressed by `path` under `master`.
pub fn substream(master: u64, path: &[u64]) -> SimRng {
    let mut h = splitmix64(master);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Circularly-symmetric complex Gaussian sample with total variance `var`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

pub fn random_bits<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.random::<bool>() as u8).collect()
}
