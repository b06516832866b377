//! Random instances shared by unit tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::forward_model::Measurements;
use crate::C64;

pub fn complex(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

pub fn vector(n: usize, rng: &mut ChaCha8Rng) -> DVector<C64> {
    DVector::from_fn(n, |_, _| complex(rng))
}

pub fn matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| complex(rng))
}

pub fn unitary(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
    matrix(n, n, rng).qr().q()
}

pub fn positive(n: usize, rng: &mut ChaCha8Rng) -> Measurements {
    Measurements::from_normalized(DVector::from_fn(n, |_, _| rng.random_range(0.05..1.0)), 1.0)
        .unwrap()
}
