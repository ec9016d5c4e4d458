#![allow(dead_code)]

use ddmhe_core::lti::{role_rng, sample_noise, NoiseRole};
use ddmhe_core::numerics::spectral_norm;
use ddmhe_core::{LtiSystem, NoiseKind};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Random observable system with `‖A‖₂ ≤ 0.95`, dimensions up to `max_dim`.
pub fn random_system(seed: u64, max_dim: usize) -> LtiSystem {
    let mut rng = role_rng(seed, NoiseRole::Excitation);
    loop {
        let n = rng.random_range(1..=max_dim);
        let m = rng.random_range(1..=max_dim.min(2));
        let p = rng.random_range(1..=max_dim.min(2));
        let mut r = |rows, cols| DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        let mut a = r(n, n);
        let b = r(n, m);
        let c = r(p, n);
        let norm = spectral_norm(&a).unwrap();
        if norm > 0.95 {
            a *= 0.95 / norm;
        }
        let sys = LtiSystem::new(a, b, c).unwrap();
        if sys.is_observable() {
            return sys;
        }
    }
}

pub fn gaussian_vec(seed: u64, role: NoiseRole, dim: usize) -> DVector<f64> {
    sample_noise(NoiseKind::Gaussian, 1.0, dim, &mut role_rng(seed, role)).unwrap()
}
