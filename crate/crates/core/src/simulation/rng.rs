use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::special::normal_quantile;

/// Recorded in every simulated artifact.
pub const RNG_ALGORITHM: &str =
    "ChaCha20 (rand_chacha 0.3, seed_from_u64, one stream per component); \
uniforms ((u64 >> 11) + 0.5) / 2^53; normals by AS241 inverse CDF";

/// Standard normal draws from one ChaCha20 stream.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha20Rng,
}

impl NormalStream {
    /// Stream `stream` of the generator seeded with `seed`. Distinct streams
    /// of one seed are independent.
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    pub fn normal(&mut self) -> f64 {
        normal_quantile(self.uniform())
    }
}
