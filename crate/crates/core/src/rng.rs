//! Counter-based random streams.
//!
//! A stream is keyed by `(seed, path, step, domain)`: the four words form the
//! 256-bit ChaCha key, so the draws for one `(path, step)` pair do not depend
//! on which thread asks for them or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Separates independent uses of the same `(seed, path, step)` triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamDomain {
    NoiseIncrement = 0x6e6f_6973_6500_0001,
}

pub fn stream(seed: u64, path: u64, step: u64, domain: StreamDomain) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&path.to_le_bytes());
    key[16..24].copy_from_slice(&step.to_le_bytes());
    key[24..32].copy_from_slice(&(domain as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Fill `out` with independent standard normals for `(seed, path, step)`.
pub fn fill_standard_normal(seed: u64, path: u64, step: u64, out: &mut [f64]) {
    let mut rng = stream(seed, path, step, StreamDomain::NoiseIncrement);
    for v in out.iter_mut() {
        *v = StandardNormal.sample(&mut rng);
    }
}
