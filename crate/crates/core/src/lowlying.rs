//! Low-lying eigenpairs of large real symmetric Hamiltonians, for thermal
//! states whose Boltzmann weight is concentrated near the ground energy.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Real symmetric matrix in compressed-row form (both triangles stored).
#[derive(Clone, Debug)]
pub struct SparseSymmetric {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSymmetric {
    /// Sums duplicate entries; `entries` must already describe a symmetric
    /// matrix (every off-diagonal entry appears with its mirror).
    pub fn from_triplets(dim: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        if entries.iter().any(|&(r, c, _)| r >= dim || c >= dim) {
            return invalid("sparse entry out of range");
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *vals.last_mut().expect("entry exists") += v;
                continue;
            }
            cols.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        let m = Self { dim, row_ptr, cols, vals };
        if m.asymmetry() > 1e-12 * m.max_abs().max(1.0) {
            return invalid("sparse matrix is not symmetric");
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn get(&self, r: usize, c: usize) -> f64 {
        let row = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
        row.binary_search(&c).map(|k| self.vals[self.row_ptr[r] + k]).unwrap_or(0.0)
    }

    fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                worst = worst.max((self.vals[k] - self.get(self.cols[k], r)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                d[(r, self.cols[k])] += self.vals[k];
            }
        }
        d
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.dim {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[r] = acc;
        }
    }

    pub fn mul_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.dim, x.ncols());
        for j in 0..x.ncols() {
            let xs = x.column(j);
            let xs = xs.as_slice();
            let mut ycol = y.column_mut(j);
            self.mul_vec(xs, ycol.as_mut_slice());
        }
        y
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in 0..self.dim {
            let mut diag = 0.0;
            let mut radius = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.cols[k] == r {
                    diag += self.vals[k];
                } else {
                    radius += self.vals[k].abs();
                }
            }
            lo = lo.min(diag - radius);
            hi = hi.max(diag + radius);
        }
        (lo, hi)
    }
}

/// Eigenpairs sorted by ascending energy; vectors are columns.
#[derive(Clone, Debug)]
pub struct LowLying {
    pub energies: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Problems up to this dimension are diagonalized densely.
pub const DENSE_LIMIT: usize = 600;

const FILTER_DEGREE: usize = 24;
const MAX_ITERATIONS: usize = 300;
const RESIDUAL_TOL: f64 = 1e-10;

/// All eigenpairs with energy below `E₀ + window`.
pub fn low_lying(h: &SparseSymmetric, window: f64) -> Result<LowLying> {
    if !(window >= 0.0) {
        return invalid(format!("energy window must be non-negative, got {window}"));
    }
    if h.dim() <= DENSE_LIMIT {
        return Ok(dense_window(h.to_dense(), window));
    }
    chebyshev_subspace(h, window)
}

fn dense_window(m: DMatrix<f64>, window: f64) -> LowLying {
    let dim = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let e0 = eig.eigenvalues[order[0]];
    let keep: Vec<usize> = order.into_iter().filter(|&i| eig.eigenvalues[i] <= e0 + window).collect();
    let energies = keep.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(dim, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])]);
    LowLying { energies, vectors }
}

// Deterministic start block; any full-rank block works.
fn start_block(dim: usize, cols: usize, offset: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, cols, |r, c| {
        let mut z = ((r as u64) << 20 ^ (c + offset) as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    })
}

fn orthonormalize(x: DMatrix<f64>) -> DMatrix<f64> {
    x.qr().q()
}

// Scaled Chebyshev filter damping the interval [a, b] relative to energies below a.
fn filter(h: &SparseSymmetric, x: &DMatrix<f64>, a: f64, b: f64, low: f64) -> DMatrix<f64> {
    let e = 0.5 * (b - a);
    let c = 0.5 * (b + a);
    let mut sigma = e / (low - c);
    let sigma1 = sigma;
    let mut y = (h.mul_block(x) - x * c) * (sigma1 / e);
    let mut prev = x.clone();
    for _ in 1..FILTER_DEGREE {
        let sigma_next = 1.0 / (2.0 / sigma1 - sigma);
        let next = (h.mul_block(&y) - &y * c) * (2.0 * sigma_next / e) - &prev * (sigma * sigma_next);
        prev = y;
        y = next;
        sigma = sigma_next;
    }
    y
}

fn chebyshev_subspace(h: &SparseSymmetric, window: f64) -> Result<LowLying> {
    let dim = h.dim();
    let (_, upper) = h.spectral_bounds();
    let mut block = 32.min(dim);
    let mut x = orthonormalize(start_block(dim, block, 0));
    let scale = h.max_abs().max(1.0);
    for _ in 0..MAX_ITERATIONS {
        // Rayleigh–Ritz on the current block
        let hx = h.mul_block(&x);
        let projected = x.transpose() * &hx;
        let projected = (&projected + projected.transpose()) * 0.5;
        let eig = projected.symmetric_eigen();
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let ritz: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let rotation = DMatrix::from_fn(block, block, |r, c| eig.eigenvectors[(r, order[c])]);
        x = &x * &rotation;
        let hx = hx * &rotation;

        let e0 = ritz[0];
        let wanted = ritz.iter().filter(|&&e| e <= e0 + window).count();
        let guard = (block / 4).max(8);
        if wanted + guard > block {
            if block >= dim / 2 {
                return Ok(dense_window(h.to_dense(), window));
            }
            let grow = (block / 2).max(16).min(dim - block);
            let extra = start_block(dim, grow, block);
            let mut wider = DMatrix::zeros(dim, block + grow);
            wider.columns_mut(0, block).copy_from(&x);
            wider.columns_mut(block, grow).copy_from(&extra);
            block += grow;
            x = orthonormalize(wider);
            continue;
        }
        let converged = (0..wanted).all(|j| {
            let r: DVector<f64> = hx.column(j) - x.column(j) * ritz[j];
            r.norm() < RESIDUAL_TOL * scale
        });
        if converged {
            let vectors = x.columns(0, wanted).into_owned();
            return Ok(LowLying { energies: ritz[..wanted].to_vec(), vectors });
        }
        let cut = ritz[block - 1];
        if !(upper > cut) {
            return Ok(dense_window(h.to_dense(), window));
        }
        x = orthonormalize(filter(h, &x, cut, upper, e0));
    }
    Err(Error::Convergence(format!("subspace iteration did not converge for dimension {dim}")))
}
