//! Seeded random sources. All randomness in the pipeline flows through
//! [`Rng`] so that runs are a pure function of their seeds.

use alloc::vec::Vec;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::real::Real;
use crate::tensor::Tensor;

pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self) -> f64 {
        self.0.gen::<f64>()
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.0.gen_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.gen()
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform().max(1e-300);
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }

    pub fn normal_tensor<T: Real>(&mut self, shape: &[usize], std: f64) -> Tensor<T> {
        let n: usize = shape.iter().product();
        let data: Vec<T> = (0..n).map(|_| T::of(self.normal() * std)).collect();
        Tensor::new(shape, data).expect("shape")
    }

    pub fn uniform_tensor<T: Real>(&mut self, shape: &[usize], lo: f64, hi: f64) -> Tensor<T> {
        let n: usize = shape.iter().product();
        let data: Vec<T> = (0..n).map(|_| T::of(self.range(lo, hi))).collect();
        Tensor::new(shape, data).expect("shape")
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
