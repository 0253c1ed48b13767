#![allow(dead_code)]

use ddd_lqr_lab::lti_lab::{controllability_check, LqrWeights, LtiSystem};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Controllable `(A, B)` with `A` scaled to spectral radius around one.
pub fn random_system(seed: u64, n: usize, m: usize) -> LtiSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let a = gaussian(&mut rng, n, n, 1.0 / (n as f64).sqrt());
        let b = gaussian(&mut rng, n, m, 1.0);
        let sys = LtiSystem::new(a, b).unwrap();
        if controllability_check(&sys) {
            return sys;
        }
    }
}

/// Diagonal weights with entries in `[0.5, 2]`.
pub fn random_weights(seed: u64, n: usize, m: usize) -> LqrWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut diag = |k: usize| DMatrix::from_diagonal(&nalgebra::DVector::from_fn(k, |_, _| rng.random_range(0.5..2.0)));
    let q = diag(n);
    let r = diag(m);
    LqrWeights::new(q, r).unwrap()
}

/// Entrywise max, the vector infinity norm for row gains.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}
