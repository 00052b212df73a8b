use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numerics::SymMatrix;

pub fn random_spd(rng: &mut ChaCha8Rng, p: usize) -> SymMatrix {
    let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    SymMatrix::symmetrize(&a * a.transpose() + DMatrix::identity(p, p) * 0.5)
}

/// MLE covariance of `n` correlated Gaussian draws.
pub fn random_cov(rng: &mut ChaCha8Rng, p: usize, n: usize) -> SymMatrix {
    let mix = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rng.random_range(-0.6..0.6) });
    let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = z * mix.transpose();
    let mean = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    SymMatrix::symmetrize(centered.transpose() * &centered / n as f64)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
