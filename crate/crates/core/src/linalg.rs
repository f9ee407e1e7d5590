//! Dense complex linear algebra shared by every physics module.
//!
//! Basis ordering: qubit 1 occupies the most-significant tensor slot, and a
//! boson Fock index, when present, is always the least-significant slot.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Tolerance for normalization, trace and Hermiticity checks.
pub const STATE_TOL: f64 = 1e-10;
/// Most negative eigenvalue a density matrix may carry.
pub const PSD_TOL: f64 = -1e-9;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Kronecker product with `self` as the most-significant factor.
pub trait Tensor {
    fn tensor(&self, other: &Self) -> Self;
}

impl Tensor for CMatrix {
    fn tensor(&self, other: &Self) -> Self {
        self.kronecker(other)
    }
}

impl Tensor for CVector {
    fn tensor(&self, other: &Self) -> Self {
        let mut out = CVector::zeros(self.len() * other.len());
        for (i, a) in self.iter().enumerate() {
            let base = i * other.len();
            for (j, b) in other.iter().enumerate() {
                out[base + j] = a * b;
            }
        }
        out
    }
}

pub fn tensor<T: Tensor>(a: &T, b: &T) -> T {
    a.tensor(b)
}

/// Folds a list of factors into one tensor product, first factor most significant.
pub fn tensor_all<T: Tensor + Clone>(factors: &[T]) -> Option<T> {
    let (first, rest) = factors.split_first()?;
    Some(rest.iter().fold(first.clone(), |acc, f| acc.tensor(f)))
}

/// Largest elementwise deviation `|A - A†|`.
pub fn hermiticity_residual(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            worst = worst.max(d);
        }
    }
    worst
}

fn hermitian_tolerance(m: &CMatrix) -> f64 {
    let scale = m.iter().fold(1.0f64, |acc, z| acc.max(z.norm()));
    STATE_TOL * scale
}

pub fn is_real(m: &CMatrix) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

pub fn hadamard() -> CMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_row_slice(2, 2, &[c64(h, 0.0), c64(h, 0.0), c64(h, 0.0), c64(-h, 0.0)])
}

/// Embeds a single-qubit operator at `site` (1-based) of an `n`-qubit register.
pub fn embed_single(op: &CMatrix, site: usize, n: usize) -> CMatrix {
    let dim = 1usize << n;
    let shift = n - site;
    let mut out = CMatrix::zeros(dim, dim);
    for col in 0..dim {
        let b = (col >> shift) & 1;
        for a in 0..2 {
            let v = op[(a, b)];
            if v != ZERO {
                let row = (col & !(1 << shift)) | (a << shift);
                out[(row, col)] += v;
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct PureState {
    amps: CVector,
}

impl PureState {
    pub fn new(amps: CVector) -> Result<Self> {
        let norm = amps.norm();
        if amps.is_empty() || (norm - 1.0).abs() > STATE_TOL {
            return invalid(format!("state norm {norm} is not 1"));
        }
        Ok(Self { amps })
    }

    pub fn normalized(amps: CVector) -> Result<Self> {
        let norm = amps.norm();
        if !(norm > 1e-300) || !norm.is_finite() {
            return invalid("cannot normalize a zero or non-finite vector");
        }
        Ok(Self { amps: amps / c64(norm, 0.0) })
    }

    pub(crate) fn from_vector_unchecked(amps: CVector) -> Self {
        Self { amps }
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amps = CVector::zeros(dim);
        amps[index] = ONE;
        Self { amps }
    }

    pub fn plus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self { amps: CVector::from_vec(vec![c64(h, 0.0), c64(h, 0.0)]) }
    }

    pub fn minus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self { amps: CVector::from_vec(vec![c64(h, 0.0), c64(-h, 0.0)]) }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amps
    }

    /// `⟨self|other⟩`.
    pub fn overlap(&self, other: &PureState) -> Result<C64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.amps.dotc(&other.amps))
    }

    pub fn tensor(&self, other: &PureState) -> PureState {
        Self { amps: self.amps.tensor(&other.amps) }
    }

    pub fn projector(&self) -> DensityMatrix {
        DensityMatrix { mat: &self.amps * self.amps.adjoint() }
    }
}

/// A validated density operator.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    mat: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity before accepting `mat`.
    pub fn new(mat: CMatrix) -> Result<Self> {
        if !mat.is_square() || mat.nrows() == 0 {
            return invalid("density matrix must be square and non-empty");
        }
        let rho = Self { mat };
        rho.check_invariants()?;
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(mat: CMatrix) -> Self {
        Self { mat }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { mat: CMatrix::identity(dim, dim) / c64(dim as f64, 0.0) }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigenvalues_hermitian(&self.mat)
    }

    pub fn check_invariants(&self) -> Result<()> {
        let herm = hermiticity_residual(&self.mat);
        if herm > STATE_TOL {
            return invalid(format!("density matrix not Hermitian (residual {herm:e})"));
        }
        let tr = self.mat.trace();
        if (tr - ONE).norm() > STATE_TOL {
            return invalid(format!("density matrix trace {tr} is not 1"));
        }
        let min = self.eigenvalues().first().copied().unwrap_or(0.0);
        if min < PSD_TOL {
            return invalid(format!("density matrix has negative eigenvalue {min:e}"));
        }
        Ok(())
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        Self { mat: self.mat.kronecker(&other.mat) }
    }

    /// `U ρ U†`.
    pub fn conjugate_by(&self, u: &CMatrix) -> Result<DensityMatrix> {
        check_dim(self.dim(), u.nrows())?;
        Ok(Self { mat: u * &self.mat * u.adjoint() })
    }
}

#[derive(Clone, Debug)]
pub struct HermitianOperator {
    mat: CMatrix,
}

impl HermitianOperator {
    pub fn new(mat: CMatrix) -> Result<Self> {
        if !mat.is_square() || mat.nrows() == 0 {
            return invalid("operator must be square and non-empty");
        }
        let herm = hermiticity_residual(&mat);
        if herm > hermitian_tolerance(&mat) {
            return invalid(format!("operator not Hermitian (residual {herm:e})"));
        }
        Ok(Self { mat })
    }

    pub(crate) fn from_matrix_unchecked(mat: CMatrix) -> Self {
        Self { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn expectation(&self, psi: &PureState) -> Result<f64> {
        check_dim(self.dim(), psi.dim())?;
        Ok(psi.amps.dotc(&(&self.mat * &psi.amps)).re)
    }

    pub fn eig(&self) -> Result<Eigh> {
        hermitian_eig(&self.mat)
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(Error::DimensionMismatch { expected, found })
    } else {
        Ok(())
    }
}

/// Reduced operator on the subsystems listed in `keep` (0-based, any order;
/// the result keeps them in ascending order). Works on any square matrix,
/// not only normalized states.
pub fn partial_trace_matrix(m: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    let total: usize = dims.iter().product();
    check_dim(total, m.nrows())?;
    if keep.is_empty() {
        return invalid("partial trace must keep at least one subsystem");
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.last().is_some_and(|&k| k >= dims.len()) {
        return invalid(format!("subsystem index out of range for {} subsystems", dims.len()));
    }

    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !kept.contains(k)).collect();
    let keep_offsets = offsets(&kept, dims, &strides);
    let trace_offsets = offsets(&traced, dims, &strides);

    let dk = keep_offsets.len();
    let mut out = CMatrix::zeros(dk, dk);
    for (a, &oa) in keep_offsets.iter().enumerate() {
        for (b, &ob) in keep_offsets.iter().enumerate() {
            let mut acc = ZERO;
            for &t in &trace_offsets {
                acc += m[(oa + t, ob + t)];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(out)
}

// Offsets of all joint configurations of `subsystems` into the full index,
// enumerated with the first listed subsystem most significant.
fn offsets(subsystems: &[usize], dims: &[usize], strides: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize];
    for &s in subsystems {
        let mut next = Vec::with_capacity(out.len() * dims[s]);
        for &o in &out {
            for d in 0..dims[s] {
                next.push(o + d * strides[s]);
            }
        }
        out = next;
    }
    out
}

pub fn partial_trace(rho: &DensityMatrix, dims: &[usize], keep: &[usize]) -> Result<DensityMatrix> {
    partial_trace_matrix(&rho.mat, dims, keep).map(DensityMatrix::from_matrix_unchecked)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigh {
    pub fn reconstruct(&self) -> CMatrix {
        self.apply_function(|e| c64(e, 0.0))
    }

    /// `V f(λ) V†` for a complex-valued spectral function.
    pub fn apply_function(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let w = f(self.values[j]);
            for i in 0..n {
                scaled[(i, j)] *= w;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

pub fn hermitian_eig(m: &CMatrix) -> Result<Eigh> {
    if !m.is_square() {
        return invalid("eigendecomposition needs a square matrix");
    }
    let herm = hermiticity_residual(m);
    if herm > hermitian_tolerance(m) {
        return invalid(format!("matrix not Hermitian (residual {herm:e})"));
    }
    Ok(eigh_unchecked(m))
}

pub(crate) fn eigh_unchecked(m: &CMatrix) -> Eigh {
    let n = m.nrows();
    let (values, vectors) = if is_real(m) {
        let real = DMatrix::<f64>::from_fn(n, n, |i, j| 0.5 * (m[(i, j)].re + m[(j, i)].re));
        let e = real.symmetric_eigen();
        let vecs = e.eigenvectors.map(|x| c64(x, 0.0));
        (e.eigenvalues.iter().copied().collect::<Vec<_>>(), vecs)
    } else {
        let sym = CMatrix::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
        let e = sym.symmetric_eigen();
        (e.eigenvalues.iter().copied().collect::<Vec<_>>(), e.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted_values = order.iter().map(|&k| values[k]).collect();
    let sorted_vectors = CMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]);
    Eigh { values: sorted_values, vectors: sorted_vectors }
}

pub(crate) fn eigenvalues_hermitian(m: &CMatrix) -> Vec<f64> {
    let n = m.nrows();
    let mut values: Vec<f64> = if is_real(m) {
        let real = DMatrix::<f64>::from_fn(n, n, |i, j| 0.5 * (m[(i, j)].re + m[(j, i)].re));
        real.symmetric_eigenvalues().iter().copied().collect()
    } else {
        let sym = CMatrix::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
        sym.symmetric_eigenvalues().iter().copied().collect()
    };
    values.sort_by(f64::total_cmp);
    values
}

/// Diagonalizes a Hamiltonian once so it can be applied at many times.
#[derive(Clone, Debug)]
pub struct Propagator {
    eig: Eigh,
}

impl Propagator {
    pub fn new(h: &HermitianOperator) -> Self {
        Self { eig: eigh_unchecked(h.matrix()) }
    }

    pub fn eigen(&self) -> &Eigh {
        &self.eig
    }

    /// `e^{-iHt}`.
    pub fn unitary(&self, t: f64) -> CMatrix {
        self.eig.apply_function(|e| C64::from_polar(1.0, -e * t))
    }

    pub fn evolve(&self, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
        check_dim(self.eig.values.len(), rho0.dim())?;
        if t == 0.0 {
            return Ok(rho0.clone());
        }
        let u = self.unitary(t);
        let mut out = &u * rho0.matrix() * u.adjoint();
        hermitize(&mut out);
        Ok(DensityMatrix::from_matrix_unchecked(out))
    }
}

/// `e^{-iHt} ρ₀ e^{iHt}` through the eigendecomposition of `H`.
pub fn evolve_unitary(h: &HermitianOperator, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    check_dim(h.dim(), rho0.dim())?;
    Propagator::new(h).evolve(rho0, t)
}

pub(crate) fn hermitize(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// Boltzmann weights `e^{-β(E-E₀)}/Z` for ascending energies. `β = +∞`
/// spreads the weight evenly over the ground eigenspace.
pub fn boltzmann_weights(energies: &[f64], beta: f64) -> Result<Vec<f64>> {
    if beta.is_nan() || beta < 0.0 {
        return invalid(format!("inverse temperature must be >= 0, got {beta}"));
    }
    let Some(&e0) = energies.iter().min_by(|a, b| a.total_cmp(b)) else {
        return Ok(Vec::new());
    };
    let mut w: Vec<f64> = if beta.is_infinite() {
        let tol = 1e-9 * e0.abs().max(1.0);
        energies.iter().map(|&e| if e - e0 <= tol { 1.0 } else { 0.0 }).collect()
    } else {
        energies.iter().map(|&e| (-beta * (e - e0)).exp()).collect()
    };
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    Ok(w)
}

/// Gibbs state `e^{-βH}/Tr e^{-βH}` with the ground energy shifted out.
pub fn thermal_state(h: &HermitianOperator, beta: f64) -> Result<DensityMatrix> {
    if beta.is_nan() || beta < 0.0 {
        return invalid(format!("inverse temperature must be >= 0, got {beta}"));
    }
    let eig = eigh_unchecked(h.matrix());
    let weights = boltzmann_weights(&eig.values, beta)?;
    let n = weights.len();
    let mut scaled = eig.vectors.clone();
    for j in 0..n {
        for i in 0..n {
            scaled[(i, j)] *= weights[j];
        }
    }
    let mut rho = scaled * eig.vectors.adjoint();
    hermitize(&mut rho);
    Ok(DensityMatrix::from_matrix_unchecked(rho))
}

/// `⟨ψ|ρ|ψ⟩`, clamped to `[0, 1]` when rounding pushes it just outside.
pub fn fidelity_pure(rho: &DensityMatrix, psi: &PureState) -> Result<f64> {
    check_dim(rho.dim(), psi.dim())?;
    let f = psi.amps.dotc(&(rho.matrix() * &psi.amps)).re;
    Ok(clamp_unit(f))
}

pub(crate) fn clamp_unit(f: f64) -> f64 {
    if f < 0.0 && f > -1e-9 {
        0.0
    } else if f > 1.0 && f < 1.0 + 1e-9 {
        1.0
    } else {
        f
    }
}

/// `½ Σ|λ(ρ - σ)|`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let diff = a.matrix() - b.matrix();
    Ok(0.5 * eigenvalues_hermitian(&diff).iter().map(|x| x.abs()).sum::<f64>())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> CMatrix {
        match self {
            Pauli::I => identity(2),
            Pauli::X => pauli_x(),
            Pauli::Y => pauli_y(),
            Pauli::Z => pauli_z(),
        }
    }

    fn flips(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }
}

/// Global phase of a Pauli string, as a power of `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    PlusOne,
    PlusI,
    MinusOne,
    MinusI,
}

impl Phase {
    fn power(self) -> u8 {
        match self {
            Phase::PlusOne => 0,
            Phase::PlusI => 1,
            Phase::MinusOne => 2,
            Phase::MinusI => 3,
        }
    }

    fn from_power(p: u8) -> Self {
        match p % 4 {
            0 => Phase::PlusOne,
            1 => Phase::PlusI,
            2 => Phase::MinusOne,
            _ => Phase::MinusI,
        }
    }

    pub fn value(self) -> C64 {
        match self {
            Phase::PlusOne => ONE,
            Phase::PlusI => I,
            Phase::MinusOne => -ONE,
            Phase::MinusI => -I,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    phase: Phase,
    letters: Vec<Pauli>,
}

impl PauliString {
    pub fn new(phase: Phase, letters: Vec<Pauli>) -> Self {
        Self { phase, letters }
    }

    pub fn identity(n: usize) -> Self {
        Self { phase: Phase::PlusOne, letters: vec![Pauli::I; n] }
    }

    /// A single non-identity letter at `site` (1-based).
    pub fn single(n: usize, site: usize, p: Pauli) -> Self {
        let mut s = Self::identity(n);
        s.letters[site - 1] = p;
        s
    }

    /// Parses strings such as `"XZI"` or `"-ZXZ"`.
    pub fn parse(text: &str) -> Result<Self> {
        let (phase, body) = match text.trim() {
            t if t.starts_with("-i") => (Phase::MinusI, &t[2..]),
            t if t.starts_with("+i") => (Phase::PlusI, &t[2..]),
            t if t.starts_with('-') => (Phase::MinusOne, &t[1..]),
            t if t.starts_with('+') => (Phase::PlusOne, &t[1..]),
            t => (Phase::PlusOne, t),
        };
        let letters = body
            .chars()
            .map(|c| match c {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => invalid(format!("unknown Pauli letter `{other}`")),
            })
            .collect::<Result<Vec<_>>>()?;
        if letters.is_empty() {
            return invalid("empty Pauli string");
        }
        Ok(Self { phase, letters })
    }

    pub fn num_qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn letter(&self, site: usize) -> Pauli {
        self.letters[site - 1]
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = phase;
        self
    }

    pub fn is_identity(&self) -> bool {
        self.letters.iter().all(|&p| p == Pauli::I)
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        let anti = self
            .letters
            .iter()
            .zip(&other.letters)
            .filter(|(a, b)| **a != Pauli::I && **b != Pauli::I && a != b)
            .count();
        anti % 2 == 0
    }

    /// Operator product `self · other`, tracking the phase exactly.
    pub fn mul(&self, other: &PauliString) -> PauliString {
        let mut power = self.phase.power() + other.phase.power();
        let letters = self
            .letters
            .iter()
            .zip(&other.letters)
            .map(|(&a, &b)| {
                power += single_product_phase(a, b);
                let (ax, az) = a.bits();
                let (bx, bz) = b.bits();
                Pauli::from_bits(ax ^ bx, az ^ bz)
            })
            .collect();
        PauliString { phase: Phase::from_power(power), letters }
    }

    /// Applies the string to a state vector on `num_qubits` qubits.
    pub fn apply(&self, v: &CVector) -> CVector {
        let n = self.letters.len();
        let mut out = CVector::zeros(v.len());
        let (flip, ..) = self.masks();
        let global = self.phase.value();
        for (b, &amp) in v.iter().enumerate() {
            if amp == ZERO {
                continue;
            }
            let mut coeff = global;
            for (k, &p) in self.letters.iter().enumerate() {
                let bit = (b >> (n - 1 - k)) & 1;
                coeff *= letter_factor(p, bit);
            }
            out[b ^ flip] += coeff * amp;
        }
        out
    }

    pub fn matrix(&self) -> CMatrix {
        let n = self.letters.len();
        let dim = 1usize << n;
        let (flip, ..) = self.masks();
        let global = self.phase.value();
        let mut m = CMatrix::zeros(dim, dim);
        for b in 0..dim {
            let mut coeff = global;
            for (k, &p) in self.letters.iter().enumerate() {
                let bit = (b >> (n - 1 - k)) & 1;
                coeff *= letter_factor(p, bit);
            }
            m[(b ^ flip, b)] = coeff;
        }
        m
    }

    fn masks(&self) -> (usize, usize) {
        let n = self.letters.len();
        let mut flip = 0usize;
        let mut zmask = 0usize;
        for (k, &p) in self.letters.iter().enumerate() {
            let bit = 1usize << (n - 1 - k);
            if p.flips() {
                flip |= bit;
            }
            if matches!(p, Pauli::Z | Pauli::Y) {
                zmask |= bit;
            }
        }
        (flip, zmask)
    }

    /// All `4^n` strings with phase +1, identity first, last qubit fastest.
    pub fn all(n: usize) -> impl Iterator<Item = PauliString> {
        let total = 1usize << (2 * n);
        (0..total).map(move |code| {
            let letters = (0..n)
                .map(|k| match (code >> (2 * (n - 1 - k))) & 3 {
                    0 => Pauli::I,
                    1 => Pauli::X,
                    2 => Pauli::Y,
                    _ => Pauli::Z,
                })
                .collect();
            PauliString { phase: Phase::PlusOne, letters }
        })
    }
}

// Factor picked up by a letter acting on computational bit `bit`.
fn letter_factor(p: Pauli, bit: usize) -> C64 {
    match (p, bit) {
        (Pauli::I, _) | (Pauli::X, _) | (Pauli::Z, 0) => ONE,
        (Pauli::Z, _) => -ONE,
        (Pauli::Y, 0) => I,
        (Pauli::Y, _) => -I,
    }
}

// Power of i in the single-qubit product a·b (XY = iZ and cyclic).
fn single_product_phase(a: Pauli, b: Pauli) -> u8 {
    use Pauli::*;
    match (a, b) {
        (X, Y) | (Y, Z) | (Z, X) => 1,
        (Y, X) | (Z, Y) | (X, Z) => 3,
        _ => 0,
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = match self.phase {
            Phase::PlusOne => "+",
            Phase::MinusOne => "-",
            Phase::PlusI => "+i",
            Phase::MinusI => "-i",
        };
        write!(f, "{sign}")?;
        for p in &self.letters {
            let c = match p {
                Pauli::I => 'I',
                Pauli::X => 'X',
                Pauli::Y => 'Y',
                Pauli::Z => 'Z',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_density, random_hermitian};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ket(bits: &[u8]) -> CVector {
        let mut v = CVector::from_vec(vec![ONE]);
        for &b in bits {
            let single = if b == 0 { CVector::from_vec(vec![ONE, ZERO]) } else { CVector::from_vec(vec![ZERO, ONE]) };
            v = v.tensor(&single);
        }
        v
    }

    #[test]
    fn tensor_basis_bookkeeping() {
        let v = ket(&[0, 1]);
        assert_eq!(v.len(), 4);
        assert_eq!(v[1], ONE);
        assert_eq!(identity(2).tensor(&identity(2)), identity(4));
        let xz = pauli_x().tensor(&pauli_z());
        assert_eq!(&xz * ket(&[0, 0]), ket(&[1, 0]));
    }

    #[test]
    fn tensor_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_hermitian(&mut rng, 2);
        let b = random_hermitian(&mut rng, 3);
        let c = random_hermitian(&mut rng, 2);
        assert!((a.tensor(&b).tensor(&c) - a.tensor(&b.tensor(&c))).norm() < 1e-15);
    }

    #[test]
    fn bell_state_reduces_to_identity_half() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = PureState::new(CVector::from_vec(vec![c64(h, 0.0), ZERO, ZERO, c64(h, 0.0)])).unwrap();
        let red = partial_trace(&bell.projector(), &[2, 2], &[0]).unwrap();
        assert!((red.matrix() - identity(2) * c64(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn product_state_partial_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_density(&mut rng, 2);
        let b = random_density(&mut rng, 3);
        let red = partial_trace(&a.tensor(&b), &[2, 3], &[0]).unwrap();
        assert!((red.matrix() - a.matrix()).norm() < 1e-14);
        let red_b = partial_trace(&a.tensor(&b), &[2, 3], &[1]).unwrap();
        assert!((red_b.matrix() - b.matrix()).norm() < 1e-14);
    }

    #[test]
    fn partial_trace_rejects_mismatch() {
        let rho = DensityMatrix::maximally_mixed(8);
        assert!(matches!(partial_trace(&rho, &[2, 2], &[0]), Err(Error::DimensionMismatch { .. })));
        assert!(partial_trace(&rho, &[2, 2, 2], &[]).is_err());
    }

    #[test]
    fn eig_of_paulis() {
        let z = hermitian_eig(&pauli_z()).unwrap();
        assert_eq!(z.values, vec![-1.0, 1.0]);
        let x = hermitian_eig(&pauli_x()).unwrap();
        assert!((x.values[0] + 1.0).abs() < 1e-14 && (x.values[1] - 1.0).abs() < 1e-14);
        // eigenvector of -1 is |->, up to phase
        let minus = PureState::minus();
        let overlap = x.vectors.column(0).dotc(minus.amplitudes()).norm();
        assert!((overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        assert!(matches!(hermitian_eig(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_hermitian(&mut rng, 32);
        let e = hermitian_eig(&h).unwrap();
        let rel = (e.reconstruct() - &h).norm() / h.norm();
        assert!(rel < 1e-9, "relative residual {rel}");
        let unit = (e.vectors.adjoint() * &e.vectors - identity(32)).camax();
        assert!(unit < 1e-10);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn evolution_full_period() {
        let eps = 0.7;
        let h = HermitianOperator::new(pauli_z() * c64(eps, 0.0)).unwrap();
        let rho = PureState::plus().projector();
        assert_eq!(evolve_unitary(&h, &rho, 0.0).unwrap().matrix(), rho.matrix());
        let out = evolve_unitary(&h, &rho, std::f64::consts::PI / eps).unwrap();
        assert!((out.matrix() - rho.matrix()).norm() < 1e-12);
    }

    #[test]
    fn thermal_closed_forms() {
        let delta = 1.3;
        let h = HermitianOperator::new(CMatrix::from_diagonal(&CVector::from_vec(vec![ZERO, c64(delta, 0.0)]))).unwrap();
        let inf = thermal_state(&h, 0.0).unwrap();
        assert!((inf.matrix() - identity(2) * c64(0.5, 0.0)).norm() < 1e-15);
        let beta = 0.8;
        let th = thermal_state(&h, beta).unwrap();
        let b = (-beta * delta).exp();
        assert!((th.matrix()[(0, 0)].re - 1.0 / (1.0 + b)).abs() < 1e-14);
        assert!((th.matrix()[(1, 1)].re - b / (1.0 + b)).abs() < 1e-14);
        let ground = thermal_state(&h, f64::INFINITY).unwrap();
        assert!((ground.matrix()[(0, 0)] - ONE).norm() < 1e-14);
        assert!(thermal_state(&h, -1.0).is_err());
        // large beta must not overflow
        let cold = thermal_state(&h, 1e6).unwrap();
        assert!(cold.check_invariants().is_ok());
    }

    #[test]
    fn fidelity_cases() {
        let psi = PureState::plus();
        assert!((fidelity_pure(&psi.projector(), &psi).unwrap() - 1.0).abs() < 1e-15);
        assert!((fidelity_pure(&DensityMatrix::maximally_mixed(2), &psi).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(fidelity_pure(&PureState::minus().projector(), &psi).unwrap(), 0.0);
        assert!(fidelity_pure(&DensityMatrix::maximally_mixed(4), &psi).is_err());
    }

    #[test]
    fn pauli_string_algebra() {
        let zxz = PauliString::parse("ZXZ").unwrap();
        let xzi = PauliString::parse("XZI").unwrap();
        assert!(zxz.commutes_with(&xzi));
        let prod = zxz.mul(&xzi);
        let dense = zxz.matrix() * xzi.matrix();
        assert!((prod.matrix() - dense).norm() < 1e-14);
        let y = PauliString::parse("Y").unwrap();
        assert!((y.matrix() - pauli_y()).norm() < 1e-15);
        let xy = PauliString::parse("X").unwrap().mul(&y);
        assert_eq!(xy.phase(), Phase::PlusI);
        assert_eq!(xy.letters(), &[Pauli::Z]);
        let v = CVector::from_fn(8, |i, _| c64(i as f64, 1.0));
        assert!((zxz.apply(&v) - zxz.matrix() * &v).norm() < 1e-14);
        assert_eq!(format!("{}", PauliString::parse("-ZXI").unwrap()), "-ZXI");
    }

    #[test]
    fn embed_matches_tensor() {
        let full = identity(2).tensor(&pauli_x()).tensor(&identity(2));
        assert_eq!(embed_single(&pauli_x(), 2, 3), full);
    }
}
