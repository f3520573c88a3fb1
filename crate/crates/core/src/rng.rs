//! Seeded, portable random sampling.
//!
//! Backed by ChaCha8 (`rand_chacha`), whose output stream is fixed by the
//! seed alone and does not depend on platform, endianness, or thread count.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{config_err, Result};
use crate::tensor::{Element, Shape, Tensor};

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream; `fork(k)` is a pure function of `(seed, k)`.
    pub fn fork(&self, stream: u64) -> Rng {
        Rng::new(self.seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(17))
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        // std validated by callers; Normal::new only fails on non-finite std.
        Normal::new(mean, std)
            .expect("finite std")
            .sample(&mut self.inner)
    }
}

pub fn random_gaussian<T: Element>(
    rng: &mut Rng,
    shape: impl Into<Shape>,
    mean: f64,
    std: f64,
) -> Result<Tensor<T>> {
    if !(std.is_finite() && std > 0.0) {
        return config_err(format!(
            "gaussian std must be positive and finite, got {std}"
        ));
    }
    let shape = shape.into();
    let dist = Normal::new(mean, std).map_err(|e| crate::Error::Config(e.to_string()))?;
    let data = (0..shape.numel())
        .map(|_| T::from_f64(dist.sample(&mut rng.inner)))
        .collect();
    Tensor::from_vec(shape, data)
}

pub fn random_uniform<T: Element>(
    rng: &mut Rng,
    shape: impl Into<Shape>,
    lo: f64,
    hi: f64,
) -> Tensor<T> {
    let shape = shape.into();
    let data = (0..shape.numel())
        .map(|_| T::from_f64(rng.uniform(lo, hi)))
        .collect();
    Tensor::from_parts(shape, data)
}
