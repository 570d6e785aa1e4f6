//! Deterministic generators shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lti::{Matrix, SignalTrace, StateSpace};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn next_u64(rng: &mut ChaCha8Rng) -> u64 {
    rng.random()
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Random Schur-stable system: a random matrix rescaled so its spectral
/// radius lands in (0, 0.9], plus random B, C, D and x0.
pub fn random_stable_system(rng: &mut ChaCha8Rng, n: usize, l: usize, m: usize) -> StateSpace {
    let target = uniform(rng, 0.2, 0.9);
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = uniform(rng, -1.0, 1.0);
        }
    }
    let rho = crate::lti::spectral_radius(&a).unwrap();
    if rho > 0.0 {
        a = a.scale(target / rho);
    }
    let mut b = Matrix::zeros(n, l);
    let mut c = Matrix::zeros(m, n);
    let mut d = Matrix::zeros(m, l);
    for v in 0..n * l {
        b[(v / l, v % l)] = uniform(rng, -1.0, 1.0);
    }
    for v in 0..m * n {
        c[(v / n, v % n)] = uniform(rng, -1.0, 1.0);
    }
    for v in 0..m * l {
        d[(v / l, v % l)] = uniform(rng, -1.0, 1.0);
    }
    let x0 = (0..n).map(|_| uniform(rng, -1.0, 1.0)).collect();
    StateSpace::new(a, b, c, d, x0).unwrap()
}

pub fn random_trace(rng: &mut ChaCha8Rng, width: usize, len: usize) -> SignalTrace {
    let samples = (0..len)
        .map(|_| (0..width).map(|_| uniform(rng, -2.0, 2.0)).collect())
        .collect();
    SignalTrace::from_samples(0.1, samples).unwrap()
}
