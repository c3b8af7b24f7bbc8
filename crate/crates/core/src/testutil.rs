use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{SpdMatrix, SymMatrix};
use crate::synthetic::{random_orthogonal, random_spd_with};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_sym(p: usize, rng: &mut impl Rng) -> SymMatrix {
    let m = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    SymMatrix::new(&m + m.transpose()).unwrap()
}

pub fn random_spd_matrix(p: usize, cond: f64, rng: &mut impl Rng) -> SpdMatrix {
    random_spd_with(p, cond, rng).unwrap()
}

/// `Q₁ diag(s) Q₂` with singular values in `[0.5, 2]`.
pub fn random_invertible(p: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let q1 = random_orthogonal(p, rng);
    let q2 = random_orthogonal(p, rng);
    let s = DMatrix::from_fn(p, p, |i, j| if i == j { 0.5 + 1.5 * rng.random::<f64>() } else { 0.0 });
    q1 * s * q2
}
