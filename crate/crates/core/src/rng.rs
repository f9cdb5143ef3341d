//! Counter-keyed random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream addressed by
//! `(seed, domain, index)`. The same address always yields the same numbers,
//! whatever `ρ` the caller is simulating at and whichever worker runs it,
//! which is what makes common-random-number derivatives and parallel
//! replay exact.

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

/// Independent families of streams sharing one user seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    /// Outer message draws and channel noise, one stream per path.
    Outer = 0x006f_7574_6572,
    /// Inner prior draws used for posterior expectations, one stream per path.
    Inner = 0x0069_6e6e_6572,
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

#[inline]
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}
