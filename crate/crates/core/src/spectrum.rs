//! Energy levels and degeneracies.

use crate::cluster::{cluster_hamiltonian, ClusterGraph};
use crate::error::Result;
use crate::linalg::{eigenvalues_hermitian, HermitianOperator};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Level {
    pub energy: f64,
    pub multiplicity: usize,
}

/// Groups ascending eigenvalues into levels; consecutive values closer
/// than `tol` belong to the same level, whose energy is their mean.
pub fn group_levels(sorted: &[f64], tol: f64) -> Vec<Level> {
    let mut levels: Vec<(f64, usize, f64)> = Vec::new();
    for &e in sorted {
        match levels.last_mut() {
            Some((sum, count, last)) if (e - *last).abs() < tol => {
                *sum += e;
                *count += 1;
                *last = e;
            }
            _ => levels.push((e, 1, e)),
        }
    }
    levels.into_iter().map(|(sum, count, _)| Level { energy: sum / count as f64, multiplicity: count }).collect()
}

pub fn hamiltonian_levels(h: &HermitianOperator, tol: f64) -> Vec<Level> {
    group_levels(&eigenvalues_hermitian(h.matrix()), tol)
}

/// Levels of `H = −J Σ K_i` by full diagonalization.
pub fn cluster_levels(g: &ClusterGraph, j: f64) -> Result<Vec<Level>> {
    Ok(hamiltonian_levels(&cluster_hamiltonian(g, j)?, 1e-8 * j.max(1.0)))
}

/// `−nJ + 2Jk` with multiplicity `C(n, k)`: every stabilizer eigenvalue
/// flips independently.
pub fn stabilizer_levels(n: usize, j: f64) -> Vec<Level> {
    (0..=n)
        .map(|k| Level { energy: -(n as f64) * j + 2.0 * j * k as f64, multiplicity: binomial(n, k) })
        .collect()
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}
