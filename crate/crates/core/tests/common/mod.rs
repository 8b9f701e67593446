#![allow(dead_code)]

use detect_core::parametrization::{InteractionRateMatrix, RotationRateMatrix};
use detect_core::seed;
use detect_core::taxonomy::WealthVector;
use rand::Rng;

pub fn wv(v: &[f64]) -> WealthVector {
    WealthVector::new(v.to_vec(), 0)
}

/// Random antisymmetric `B` with entries in `[-b, b]` and rotation matrix with
/// rates in `[0, g]`.
pub fn random_rates(n: usize, b: f64, g: f64, seed_value: u64) -> (InteractionRateMatrix, RotationRateMatrix) {
    let mut rng = seed::rng(seed_value);
    let mut beta = InteractionRateMatrix::zeros(n);
    let mut rates = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i < j {
                beta.set(i, j, rng.random_range(-b..=b));
            }
            if i != j {
                rates.push((i, j, rng.random_range(0.0..=g)));
            }
        }
    }
    (beta, RotationRateMatrix::from_rates(n, rates).unwrap())
}

/// Random positive wealth summing to `m`.
pub fn random_wealth(n: usize, m: f64, seed_value: u64) -> WealthVector {
    let mut rng = seed::rng(seed_value);
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    WealthVector::new(raw.iter().map(|x| x * m / s).collect(), 0)
}

/// Straight loop over the update rule, written independently of the engine.
pub fn oracle_step(f: &[f64], beta: &InteractionRateMatrix, gamma: &RotationRateMatrix, m: f64, dt: f64) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|i| {
            let mut inter = 0.0;
            let mut rot = 0.0;
            for j in 0..n {
                inter += beta.get(i, j) * f[j];
                rot += gamma.get(i, j) * f[j];
            }
            f[i] + dt * (f[i] * inter / m + rot)
        })
        .collect()
}
