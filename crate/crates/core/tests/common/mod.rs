#![allow(dead_code)]

use prhc::costs::QuadraticCost;
use prhc::linsys::LinearSystem;
use prhc::{Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

pub fn vector(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vector {
    Vector::from_fn(dim, |_, _| rng.random_range(-scale..scale))
}

pub fn spd(rng: &mut ChaCha8Rng, dim: usize) -> Matrix {
    let l = matrix(rng, dim, dim, 1.0);
    &l * l.transpose() + Matrix::identity(dim, dim) * 0.2
}

pub fn system(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LinearSystem {
    LinearSystem::new(matrix(rng, n, n, 1.0), matrix(rng, n, m, 1.0)).unwrap()
}

pub fn quadratic(rng: &mut ChaCha8Rng, n: usize, m: usize, len: usize) -> QuadraticCost {
    let q = (0..len).map(|_| spd(rng, n)).collect();
    let r = (0..len).map(|_| spd(rng, m)).collect();
    QuadraticCost::new(q, r).unwrap()
}

pub fn vectors(rng: &mut ChaCha8Rng, count: usize, dim: usize, scale: f64) -> Vec<Vector> {
    (0..count).map(|_| vector(rng, dim, scale)).collect()
}
