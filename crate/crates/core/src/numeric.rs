//! Qubits coupled to one truncated boson mode through
//! `g(a + a†) Σ_n (cos θ σ_z − sin θ σ_x)`: Hamiltonians, joint states,
//! exact dynamics and thermal fidelities.
//!
//! Joint basis index is `q·(N_max+1) + k` with the qubit register `q` most
//! significant and the Fock number `k` least significant.

use nalgebra::DMatrix;

use crate::analysis::FidelitySeries;
use crate::cluster::{cluster_state, stabilizers, ClusterGraph};
use crate::dephasing::{check_time_grid, QubitEnergies};
use crate::error::{invalid, Result};
use crate::gate::FidelityTarget;
use crate::linalg::{
    boltzmann_weights, c64, check_dim, clamp_unit, partial_trace, CMatrix, CVector, DensityMatrix, HermitianOperator,
    Pauli, PureState, C64, ZERO,
};
use crate::lowlying::{low_lying, SparseSymmetric};

/// Fock cutoff used for dynamics unless a convergence check raises it.
pub const DEFAULT_CUTOFF: usize = 20;

/// Boson populations below this are dropped from the initial mixture.
pub const POPULATION_FLOOR: f64 = 1e-12;

/// Relative Boltzmann weight below which thermal eigenstates are ignored.
pub const THERMAL_WEIGHT_CUTOFF: f64 = 1e-12;

/// Largest joint dimension that dense builders will allocate.
pub const DENSE_DIM_LIMIT: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BosonMode {
    omega: f64,
    g: f64,
    theta: f64,
    cutoff: usize,
}

impl BosonMode {
    pub fn new(omega: f64, g: f64, theta: f64, cutoff: usize) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return invalid(format!("mode frequency must be positive, got {omega}"));
        }
        if !(g >= 0.0) || !g.is_finite() {
            return invalid(format!("coupling g must be non-negative, got {g}"));
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        if !(theta >= -1e-12 && theta <= half_pi + 1e-12) {
            return invalid(format!("noise angle must lie in [0, pi/2], got {theta}"));
        }
        if cutoff == 0 {
            return invalid("Fock cutoff must be at least 1");
        }
        Ok(Self { omega, g, theta: theta.clamp(0.0, half_pi), cutoff })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Number of Fock levels, `N_max + 1`.
    pub fn levels(&self) -> usize {
        self.cutoff + 1
    }

    pub fn with_omega(self, omega: f64) -> Result<Self> {
        Self::new(omega, self.g, self.theta, self.cutoff)
    }

    pub fn with_g(self, g: f64) -> Result<Self> {
        Self::new(self.omega, g, self.theta, self.cutoff)
    }

    pub fn with_cutoff(self, cutoff: usize) -> Result<Self> {
        Self::new(self.omega, self.g, self.theta, cutoff)
    }
}

// Bit of `site` (0-based from the most significant qubit) in a register index.
fn qubit_bit(n: usize, site: usize) -> usize {
    1 << (n - 1 - site)
}

/// Entries of `Σ ε_n σ_z + ω a†a + g(a+a†)Σ(cos θ σ_z − sin θ σ_x)` plus
/// the qubit-only terms `qubit_terms` (register indices, boson identity).
fn joint_triplets(n: usize, eps: &[f64], qubit_terms: &[(usize, usize, f64)], mode: &BosonMode) -> Vec<(usize, usize, f64)> {
    let levels = mode.levels();
    let dim_q = 1usize << n;
    let (cos, sin) = (mode.theta.cos(), mode.theta.sin());
    let mut out = Vec::new();
    for q in 0..dim_q {
        let mut bare = 0.0;
        let mut spin = 0.0;
        for site in 0..n {
            let up = q & qubit_bit(n, site) == 0;
            bare += if up { eps[site] } else { -eps[site] };
            spin += if up { 1.0 } else { -1.0 };
        }
        for k in 0..levels {
            let row = q * levels + k;
            out.push((row, row, bare + mode.omega * k as f64));
            if k + 1 < levels {
                let amp = mode.g * ((k + 1) as f64).sqrt();
                let col = q * levels + k + 1;
                if cos * spin != 0.0 {
                    out.push((row, col, amp * cos * spin));
                    out.push((col, row, amp * cos * spin));
                }
                if sin != 0.0 && mode.g != 0.0 {
                    for site in 0..n {
                        let flipped = q ^ qubit_bit(n, site);
                        // −g sinθ σ_x (a + a†): connects (q, k) with (q', k ± 1)
                        out.push((row, flipped * levels + k + 1, -amp * sin));
                        out.push((flipped * levels + k + 1, row, -amp * sin));
                    }
                }
            }
        }
    }
    for &(r, c, v) in qubit_terms {
        for k in 0..levels {
            out.push((r * levels + k, c * levels + k, v));
        }
    }
    out
}

/// Sparse `H = Σ ε_n σ_z^(n) + ω a†a + g(a+a†) Σ_n (cos θ σ_z − sin θ σ_x)`.
pub fn qubit_boson_sparse(eps: &QubitEnergies, mode: &BosonMode) -> Result<SparseSymmetric> {
    let n = eps.len();
    if n == 0 || n > 16 {
        return invalid(format!("qubit count {n} outside 1..=16"));
    }
    SparseSymmetric::from_triplets((1 << n) * mode.levels(), joint_triplets(n, eps.as_slice(), &[], mode))
}

/// Dense form of [`qubit_boson_sparse`].
pub fn build_qubit_boson_hamiltonian(eps: &QubitEnergies, mode: &BosonMode) -> Result<HermitianOperator> {
    densify(&qubit_boson_sparse(eps, mode)?)
}

/// The single-mode model resonant with the qubit gap: `ω = 2ε`.
pub fn build_resonant_hamiltonian(n: usize, eps: f64, mode: &BosonMode) -> Result<HermitianOperator> {
    if !(eps > 0.0) || !eps.is_finite() {
        return invalid(format!("resonant model needs eps > 0, got {eps}"));
    }
    let mode = mode.with_omega(2.0 * eps)?;
    build_qubit_boson_hamiltonian(&QubitEnergies::uniform(n, eps)?, &mode)
}

/// Sparse `H_C = −J Σ K_i + 2J a†a + g(a+a†) Σ (cos θ σ_z − sin θ σ_x)`;
/// the mode frequency is set to the gap `2J`.
pub fn cluster_env_sparse(g: &ClusterGraph, j: f64, mode: &BosonMode) -> Result<SparseSymmetric> {
    if !(j > 0.0) || !j.is_finite() {
        return invalid(format!("cluster coupling J must be positive, got {j}"));
    }
    let mode = mode.with_omega(2.0 * j)?;
    let n = g.n();
    let mut terms = Vec::new();
    for k in stabilizers(g) {
        let mut xmask = 0usize;
        let mut zmask = 0usize;
        for site in 1..=n {
            match k.letter(site) {
                Pauli::X => xmask |= qubit_bit(n, site - 1),
                Pauli::Z => zmask |= qubit_bit(n, site - 1),
                _ => {}
            }
        }
        for q in 0..1usize << n {
            let sign = if (q & zmask).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            terms.push((q ^ xmask, q, -j * sign));
        }
    }
    SparseSymmetric::from_triplets((1 << n) * mode.levels(), joint_triplets(n, &vec![0.0; n], &terms, &mode))
}

pub fn build_cluster_env_hamiltonian(g: &ClusterGraph, j: f64, mode: &BosonMode) -> Result<HermitianOperator> {
    densify(&cluster_env_sparse(g, j, mode)?)
}

fn densify(h: &SparseSymmetric) -> Result<HermitianOperator> {
    if h.dim() > DENSE_DIM_LIMIT {
        return invalid(format!("dense Hamiltonian of dimension {} exceeds {DENSE_DIM_LIMIT}", h.dim()));
    }
    let real = h.to_dense();
    Ok(HermitianOperator::from_matrix_unchecked(real.map(|x| c64(x, 0.0))))
}

/// Truncated Gibbs populations `p_m ∝ e^{−βωm}`, renormalized over `0..=cutoff`.
pub fn boson_populations(omega: f64, beta: f64, cutoff: usize) -> Result<Vec<f64>> {
    if beta.is_nan() || beta <= 0.0 {
        return invalid(format!("inverse temperature must be positive, got {beta}"));
    }
    if !(omega > 0.0) {
        return invalid(format!("mode frequency must be positive, got {omega}"));
    }
    let mut p: Vec<f64> = if beta.is_infinite() {
        (0..=cutoff).map(|m| if m == 0 { 1.0 } else { 0.0 }).collect()
    } else {
        (0..=cutoff).map(|m| (-beta * omega * m as f64).exp()).collect()
    };
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    Ok(p)
}

/// `|Ψ_C⟩⟨Ψ_C| ⊗ ρ_B` with `ρ_B` the truncated Gibbs state of the mode.
pub fn initial_joint_state(g: &ClusterGraph, mode: &BosonMode, beta: f64) -> Result<DensityMatrix> {
    let dim = g.dim() * mode.levels();
    if dim > DENSE_DIM_LIMIT {
        return invalid(format!("joint dimension {dim} exceeds {DENSE_DIM_LIMIT}"));
    }
    let bath = boson_populations(mode.omega, beta, mode.cutoff)?;
    let bath = DensityMatrix::new(CMatrix::from_diagonal(&CVector::from_iterator(
        bath.len(),
        bath.iter().map(|&p| c64(p, 0.0)),
    )))?;
    Ok(cluster_state(g).projector().tensor(&bath))
}

/// Traces the boson out of a joint state.
pub fn reduced_qubit_state(rho: &DensityMatrix, n: usize, cutoff: usize) -> Result<DensityMatrix> {
    let dim_q = 1usize << n;
    if rho.dim() != dim_q * (cutoff + 1) {
        return invalid(format!("joint state of dimension {} does not match {n} qubits with cutoff {cutoff}", rho.dim()));
    }
    partial_trace(rho, &[dim_q, cutoff + 1], &[0])
}

/// Orthonormal basis `|j, m, α⟩` of `n` qubits adapted to total spin,
/// built from highest-weight vectors and the lowering operator.
#[derive(Clone, Debug)]
pub struct CollectiveBasis {
    n: usize,
    sectors: Vec<SpinSector>,
}

#[derive(Clone, Debug)]
struct SpinSector {
    two_j: usize,
    copies: usize,
    // 2ⁿ × copies·(2j+1); column α(2j+1) + (j − m)
    vectors: DMatrix<f64>,
}

impl SpinSector {
    fn width(&self) -> usize {
        self.two_j + 1
    }
}

impl CollectiveBasis {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > 14 {
            return invalid(format!("collective basis supports 1..=14 qubits, got {n}"));
        }
        let dim = 1usize << n;
        let by_popcount: Vec<Vec<usize>> =
            (0..=n).map(|p| (0..dim).filter(|b| b.count_ones() as usize == p).collect()).collect();
        let mut sectors = Vec::new();
        for p in 0..=n / 2 {
            let two_j = n - 2 * p;
            let highest = highest_weight_vectors(n, &by_popcount[p], p.checked_sub(1).map(|q| &by_popcount[q][..]));
            let copies = highest.len();
            let width = two_j + 1;
            let mut vectors = DMatrix::zeros(dim, copies * width);
            for (alpha, top) in highest.into_iter().enumerate() {
                let mut current = top;
                for step in 0..width {
                    vectors.column_mut(alpha * width + step).copy_from_slice(&current);
                    if step + 1 < width {
                        // J−|j,m⟩ = sqrt((j+m)(j−m+1)) |j,m−1⟩, in units of 2j and 2m
                        let two_m = two_j as f64 - 2.0 * step as f64;
                        let norm = 0.5 * ((two_j as f64 + two_m) * (two_j as f64 - two_m + 2.0)).sqrt();
                        current = lower(n, &current).into_iter().map(|x| x / norm).collect();
                    }
                }
            }
            sectors.push(SpinSector { two_j, copies, vectors });
        }
        Ok(Self { n, sectors })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `(2j, multiplicity)` for every spin sector, largest `j` first.
    pub fn sectors(&self) -> Vec<(usize, usize)> {
        self.sectors.iter().map(|s| (s.two_j, s.copies)).collect()
    }

    /// Coordinates of `v` in one sector as a `copies × (2j+1)` matrix.
    fn coordinates(&self, sector: usize, v: &CVector) -> CMatrix {
        let s = &self.sectors[sector];
        let width = s.width();
        CMatrix::from_fn(s.copies, width, |alpha, step| {
            let col = s.vectors.column(alpha * width + step);
            col.iter().zip(v.iter()).map(|(b, x)| x * *b).sum()
        })
    }
}

fn highest_weight_vectors(n: usize, sector: &[usize], below: Option<&[usize]>) -> Vec<Vec<f64>> {
    let dim = 1usize << n;
    let embed = |coeffs: &[f64]| {
        let mut v = vec![0.0; dim];
        for (c, &b) in coeffs.iter().zip(sector) {
            v[b] = *c;
        }
        v
    };
    let Some(below) = below else {
        return vec![embed(&[1.0])];
    };
    // J+ maps popcount p to p − 1; its kernel holds the highest weights
    let position = |b: usize| below.binary_search(&b).expect("state with one fewer excitation");
    let mut raise = DMatrix::<f64>::zeros(below.len(), sector.len());
    for (col, &b) in sector.iter().enumerate() {
        for site in 0..n {
            let bit = qubit_bit(n, site);
            if b & bit != 0 {
                raise[(position(b ^ bit), col)] += 1.0;
            }
        }
    }
    let gram = raise.transpose() * &raise;
    let eig = gram.symmetric_eigen();
    let mut kernel: Vec<usize> = (0..sector.len()).filter(|&i| eig.eigenvalues[i] < 0.5).collect();
    kernel.sort_unstable();
    kernel
        .into_iter()
        .map(|i| embed(eig.eigenvectors.column(i).as_slice()))
        .collect()
}

fn lower(n: usize, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (b, &x) in v.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for site in 0..n {
            let bit = qubit_bit(n, site);
            if b & bit == 0 {
                out[b | bit] += x;
            }
        }
    }
    out
}

/// Block of the uniform-ε model in one spin sector, basis `(j−m)·L + k`.
fn sector_hamiltonian(two_j: usize, eps: f64, mode: &BosonMode) -> DMatrix<f64> {
    let levels = mode.levels();
    let width = two_j + 1;
    let (cos, sin) = (mode.theta.cos(), mode.theta.sin());
    let j = two_j as f64 / 2.0;
    let mut h = DMatrix::zeros(width * levels, width * levels);
    for step in 0..width {
        let m = j - step as f64;
        for k in 0..levels {
            let row = step * levels + k;
            h[(row, row)] = eps * 2.0 * m + mode.omega * k as f64;
            if k + 1 < levels {
                let amp = mode.g * ((k + 1) as f64).sqrt();
                let col = step * levels + k + 1;
                h[(row, col)] += amp * cos * 2.0 * m;
                h[(col, row)] += amp * cos * 2.0 * m;
                if step > 0 {
                    // ⟨m+1|J+|m⟩ connects step to step − 1
                    let raise = ((j - m) * (j + m + 1.0)).sqrt();
                    let up = (step - 1) * levels;
                    for (a, b) in [(row, up + k + 1), (step * levels + k + 1, up + k)] {
                        h[(a, b)] += -amp * sin * raise;
                        h[(b, a)] += -amp * sin * raise;
                    }
                }
            }
        }
    }
    h
}

/// Amplitudes `⟨w, k'| e^{−iHt} |ψ, k⟩` stored as coefficients of
/// `e^{−iλt}`, one row per `(k, w, k')` weighted by `√p_k`.
#[derive(Clone, Debug)]
pub struct SpectralFidelity {
    frequencies: Vec<f64>,
    rows: CMatrix,
}

const TIME_CHUNK: usize = 256;

impl SpectralFidelity {
    pub fn frequency_count(&self) -> usize {
        self.frequencies.len()
    }

    pub fn row_count(&self) -> usize {
        self.rows.nrows()
    }

    pub fn evaluate(&self, times: &[f64]) -> Vec<f64> {
        let chunks: Vec<&[f64]> = times.chunks(TIME_CHUNK).collect();
        crate::par_map(&chunks, |chunk| {
            let phases = CMatrix::from_fn(self.frequencies.len(), chunk.len(), |l, t| {
                C64::from_polar(1.0, -self.frequencies[l] * chunk[t])
            });
            let amps = &self.rows * phases;
            (0..chunk.len()).map(|t| clamp_unit(amps.column(t).norm_squared())).collect::<Vec<f64>>()
        })
        .into_iter()
        .flatten()
        .collect()
    }

    pub fn series(&self, times: &[f64]) -> Result<FidelitySeries> {
        check_time_grid(times)?;
        FidelitySeries::new("t", times.to_vec(), self.evaluate(times))
    }
}

// Accumulates coefficient rows block by block; rows are fixed up front.
struct SpectralBuilder {
    rows: usize,
    frequencies: Vec<f64>,
    columns: Vec<Vec<C64>>,
}

impl SpectralBuilder {
    fn new(rows: usize) -> Self {
        Self { rows, frequencies: Vec::new(), columns: Vec::new() }
    }

    /// `initial[i][α]` and `targets[r][α]` are block-coordinate vectors of
    /// each copy; row `i·targets + r` receives `Σ_α ⟨target|V_λ⟩⟨V_λ|initial⟩`.
    fn add_block(&mut self, values: &[f64], vectors: &DMatrix<f64>, initial: &[Vec<CVector>], targets: &[Vec<CVector>]) {
        let d = values.len();
        let project = |v: &CVector, conj: bool| -> Vec<C64> {
            (0..d)
                .map(|l| {
                    let col = vectors.column(l);
                    v.iter().zip(col.iter()).map(|(x, b)| if conj { x.conj() * *b } else { x * *b }).sum()
                })
                .collect()
        };
        let init: Vec<Vec<Vec<C64>>> = initial.iter().map(|copies| copies.iter().map(|v| project(v, false)).collect()).collect();
        let targ: Vec<Vec<Vec<C64>>> = targets.iter().map(|copies| copies.iter().map(|v| project(v, true)).collect()).collect();
        let start = self.columns.len();
        for &lambda in values {
            self.frequencies.push(lambda);
            self.columns.push(vec![ZERO; self.rows]);
        }
        for (i, yi) in init.iter().enumerate() {
            for (r, xr) in targ.iter().enumerate() {
                let row = i * targ.len() + r;
                for l in 0..d {
                    let mut c = ZERO;
                    for (x, y) in xr.iter().zip(yi) {
                        c += x[l] * y[l];
                    }
                    self.columns[start + l][row] += c;
                }
            }
        }
    }

    fn finish(self) -> SpectralFidelity {
        // drop rows that can never contribute more than ~1e-16 to F
        let keep: Vec<usize> = (0..self.rows)
            .filter(|&r| {
                let bound: f64 = self.columns.iter().map(|c| c[r].norm()).sum();
                bound * bound > 1e-16 / self.rows as f64
            })
            .collect();
        let rows = CMatrix::from_fn(keep.len(), self.columns.len(), |r, l| self.columns[l][keep[r]]);
        SpectralFidelity { frequencies: self.frequencies, rows }
    }
}

fn kept_populations(omega: f64, beta: f64, cutoff: usize) -> Result<Vec<(usize, f64)>> {
    let p = boson_populations(omega, beta, cutoff)?;
    let kept: Vec<(usize, f64)> = p.into_iter().enumerate().filter(|&(_, x)| x >= POPULATION_FLOOR).collect();
    let z: f64 = kept.iter().map(|x| x.1).sum();
    Ok(kept.into_iter().map(|(k, x)| (k, x / z)).collect())
}

/// Exact fidelity dynamics of `|ψ⟩⟨ψ| ⊗ ρ_B(β)` under the uniform-ε model,
/// using the total-spin decomposition so each sector is diagonalized once.
pub fn collective_fidelity(
    eps: f64,
    mode: &BosonMode,
    beta: f64,
    initial: &PureState,
    witness: &[CVector],
) -> Result<SpectralFidelity> {
    let dim = initial.dim();
    if !dim.is_power_of_two() || dim < 2 {
        return invalid(format!("initial state dimension {dim} is not a qubit register"));
    }
    for w in witness {
        check_dim(dim, w.len())?;
    }
    let n = dim.trailing_zeros() as usize;
    let basis = CollectiveBasis::new(n)?;
    let levels = mode.levels();
    let pops = kept_populations(mode.omega, beta, mode.cutoff)?;
    let mut builder = SpectralBuilder::new(pops.len() * witness.len() * levels);
    for (sector, s) in basis.sectors.iter().enumerate() {
        let width = s.width();
        let block = width * levels;
        let h = sector_hamiltonian(s.two_j, eps, mode);
        let eig = h.symmetric_eigen();
        let psi = basis.coordinates(sector, initial.amplitudes());
        let ws: Vec<CMatrix> = witness.iter().map(|w| basis.coordinates(sector, w)).collect();
        let place = |coords: &CMatrix, alpha: usize, k: usize, scale: f64| {
            let mut v = CVector::zeros(block);
            for step in 0..width {
                v[step * levels + k] = coords[(alpha, step)] * scale;
            }
            v
        };
        let initial_rows: Vec<Vec<CVector>> =
            pops.iter().map(|&(k, p)| (0..s.copies).map(|a| place(&psi, a, k, p.sqrt())).collect()).collect();
        let target_rows: Vec<Vec<CVector>> = ws
            .iter()
            .flat_map(|w| (0..levels).map(move |k2| (w, k2)))
            .map(|(w, k2)| (0..s.copies).map(|a| place(w, a, k2, 1.0)).collect())
            .collect();
        builder.add_block(eig.eigenvalues.as_slice(), &eig.eigenvectors, &initial_rows, &target_rows);
    }
    Ok(builder.finish())
}

/// Same amplitudes from a dense diagonalization of the full joint
/// Hamiltonian; works for non-uniform energies.
pub fn dense_fidelity(h: &SparseSymmetric, beta: f64, omega: f64, initial: &PureState, witness: &[CVector]) -> Result<SpectralFidelity> {
    let dim_q = initial.dim();
    if h.dim() % dim_q != 0 {
        return invalid("Hamiltonian dimension is not a multiple of the register dimension");
    }
    if h.dim() > DENSE_DIM_LIMIT {
        return invalid(format!("dense dynamics of dimension {} exceeds {DENSE_DIM_LIMIT}", h.dim()));
    }
    let levels = h.dim() / dim_q;
    let pops = kept_populations(omega, beta, levels - 1)?;
    let eig = h.to_dense().symmetric_eigen();
    let joint = |v: &CVector, k: usize, scale: f64| {
        let mut out = CVector::zeros(h.dim());
        for q in 0..dim_q {
            out[q * levels + k] = v[q] * scale;
        }
        out
    };
    let initial_rows: Vec<Vec<CVector>> =
        pops.iter().map(|&(k, p)| vec![joint(initial.amplitudes(), k, p.sqrt())]).collect();
    let target_rows: Vec<Vec<CVector>> =
        witness.iter().flat_map(|w| (0..levels).map(move |k| vec![joint(w, k, 1.0)])).collect();
    let mut builder = SpectralBuilder::new(initial_rows.len() * target_rows.len());
    builder.add_block(eig.eigenvalues.as_slice(), &eig.eigenvectors, &initial_rows, &target_rows);
    Ok(builder.finish())
}

/// Fidelity series of `target` under the resonant model (`ω = 2ε`) with a
/// thermal boson at `beta`.
pub fn resonant_fidelity_series(
    target: &FidelityTarget,
    eps: f64,
    mode: &BosonMode,
    beta: f64,
    times: &[f64],
) -> Result<FidelitySeries> {
    if !(eps > 0.0) || !eps.is_finite() {
        return invalid(format!("resonant model needs eps > 0, got {eps}"));
    }
    let mode = mode.with_omega(2.0 * eps)?;
    let psi = cluster_state(target.graph());
    collective_fidelity(eps, &mode, beta, &psi, &target.witness())?.series(times)
}

/// Outcome of a cutoff-doubling check.
#[derive(Clone, Debug)]
pub struct Converged {
    pub series: FidelitySeries,
    pub cutoff: usize,
    pub max_change: f64,
}

/// Doubles the Fock cutoff from `mode.cutoff` until two successive series
/// differ by less than `tol` everywhere, up to `max_cutoff`.
pub fn converged_resonant_series(
    target: &FidelityTarget,
    eps: f64,
    mode: &BosonMode,
    beta: f64,
    times: &[f64],
    tol: f64,
    max_cutoff: usize,
) -> Result<Converged> {
    let mut cutoff = mode.cutoff;
    let mut current = resonant_fidelity_series(target, eps, mode, beta, times)?;
    loop {
        let next_cutoff = 2 * cutoff;
        let next = resonant_fidelity_series(target, eps, &mode.with_cutoff(next_cutoff)?, beta, times)?;
        let change = current.values().iter().zip(next.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if change < tol || next_cutoff >= max_cutoff {
            if change >= tol {
                return Err(crate::Error::Convergence(format!(
                    "fidelity still changes by {change:.3e} at cutoff {next_cutoff}"
                )));
            }
            return Ok(Converged { series: current, cutoff, max_change: change });
        }
        cutoff = next_cutoff;
        current = next;
    }
}

/// Thermal fidelities of `target` in the Gibbs state of `H_C` at each
/// temperature (`T = 0` means the ground space).
pub fn thermal_fidelities(target: &FidelityTarget, j: f64, mode: &BosonMode, temperatures: &[f64]) -> Result<Vec<f64>> {
    if temperatures.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return invalid("temperatures must be finite and non-negative");
    }
    let Some(t_max) = temperatures.iter().copied().reduce(f64::max) else {
        return Ok(Vec::new());
    };
    let h = cluster_env_sparse(target.graph(), j, mode)?;
    let window = (-THERMAL_WEIGHT_CUTOFF.ln()) * t_max + 1e-8 * j.max(1.0);
    let states = low_lying(&h, window)?;
    let witness = target.witness();
    let levels = mode.levels();
    let dim_q = target.graph().dim();
    let overlaps: Vec<f64> = (0..states.energies.len())
        .map(|i| {
            let v = states.vectors.column(i);
            let mut f = 0.0;
            for w in &witness {
                for k in 0..levels {
                    let mut amp = ZERO;
                    for q in 0..dim_q {
                        amp += w[q].conj() * v[q * levels + k];
                    }
                    f += amp.norm_sqr();
                }
            }
            f
        })
        .collect();
    temperatures
        .iter()
        .map(|&t| {
            let beta = if t == 0.0 { f64::INFINITY } else { 1.0 / t };
            let p = boltzmann_weights(&states.energies, beta)?;
            Ok(clamp_unit(p.iter().zip(&overlaps).map(|(a, b)| a * b).sum()))
        })
        .collect()
}

/// `F[g][T]` for the thermal state of `H_C` on a `(g, T)` grid.
pub fn thermal_gate_fidelity_grid(
    target: &FidelityTarget,
    j: f64,
    theta: f64,
    g_grid: &[f64],
    t_grid: &[f64],
    cutoff: usize,
) -> Result<Vec<Vec<f64>>> {
    for (name, grid) in [("g", g_grid), ("T", t_grid)] {
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid(format!("{name} grid must be strictly ascending"));
        }
    }
    let modes = g_grid.iter().map(|&g| BosonMode::new(2.0 * j, g, theta, cutoff)).collect::<Result<Vec<_>>>()?;
    crate::par_map(&modes, |mode| thermal_fidelities(target, j, mode, t_grid)).into_iter().collect()
}
