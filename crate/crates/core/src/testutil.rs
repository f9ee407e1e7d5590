use nalgebra::DMatrix;
use rand::Rng;

use crate::linalg::{c64, CMatrix, DensityMatrix};

pub fn random_complex_matrix<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    DMatrix::from_fn(n, n, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

pub fn random_hermitian<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    let a = random_complex_matrix(rng, n);
    (&a + a.adjoint()) * c64(0.5, 0.0)
}

/// Random full-rank density matrix `AA†/Tr(AA†)`.
pub fn random_density<R: Rng>(rng: &mut R, n: usize) -> DensityMatrix {
    let a = random_complex_matrix(rng, n);
    let m = &a * a.adjoint();
    let tr = m.trace();
    DensityMatrix::new(m / tr).expect("random density matrix is valid")
}
