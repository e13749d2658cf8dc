//! Portable random streams for synthetic data.
//!
//! The generator is xoshiro256++ whose 256-bit state is expanded from a
//! 64-bit seed with SplitMix64 (the reference seeding procedure). Derived
//! draws are fixed so other implementations can reproduce fixtures bit for
//! bit:
//!
//! * uniform: `(next_u64() >> 11) * 2^-53`, in `[0, 1)`;
//! * normal: Box–Muller cosine branch, `sqrt(-2 ln(1 - u1)) * cos(2π u2)`,
//!   consuming two uniforms per draw;
//! * child seeds: `splitmix64(seed ^ splitmix64(index))`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

pub struct Stream {
    inner: Xoshiro256PlusPlus,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
