//! Seeded random streams. Everything stochastic in the crate draws from a
//! [`RunRng`], so a fixed seed reproduces a run bit for bit.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::Tensor;

pub type RunRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> RunRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An independent stream derived from a master seed and an index.
pub fn derived(master: u64, index: u64) -> RunRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn standard_normal_tensor<R: Rng + ?Sized>(rng: &mut R, shape: &[usize]) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = standard_normal(rng);
    }
    t
}

/// Uniformly random permutation of `0..n`.
pub fn permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}
