//! Gate fidelity through simulated gate teleportation on a cluster state:
//! measurement patterns with one level of adaptive sign, Pauli byproduct
//! corrections, and the resulting resource state on the output sites.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use crate::cluster::{cluster_state, ClusterGraph};
use crate::error::{invalid, Error, Result};
use crate::linalg::{
    c64, check_dim, clamp_unit, eigenvalues_hermitian, embed_single, fidelity_pure, hadamard, identity, pauli_x,
    pauli_z, CMatrix, CVector, DensityMatrix, HermitianOperator, PauliString, PureState, C64, I, ONE, ZERO,
};

/// Tolerance of the construction-time self-consistency gate.
pub const SELF_CONSISTENCY_TOL: f64 = 1e-10;

/// Default Z-rotation angle of the builtin rotation gate.
pub const DEFAULT_ZETA: f64 = std::f64::consts::FRAC_PI_8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Basis {
    /// Outcome 0 is `|+⟩`, outcome 1 is `|−⟩`.
    X,
    /// Eigenbasis of `cos θ̃ X + sin θ̃ Y` with `θ̃ = +zeta`, or `-zeta` when
    /// the outcome at site `condition` was 1. Outcome 0 is
    /// `cos(θ̃/2)|+⟩ − i sin(θ̃/2)|−⟩`, outcome 1 is `cos(θ̃/2)|−⟩ − i sin(θ̃/2)|+⟩`.
    Rotated { zeta: f64, condition: Option<usize> },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementStep {
    pub site: usize,
    pub basis: Basis,
}

impl MeasurementStep {
    pub fn x(site: usize) -> Self {
        Self { site, basis: Basis::X }
    }

    pub fn rotated(site: usize, zeta: f64, condition: Option<usize>) -> Self {
        Self { site, basis: Basis::Rotated { zeta, condition } }
    }
}

/// A teleported gate: graph, measurement pattern, byproduct rule and the
/// ideal resource state on the output sites.
#[derive(Clone, Debug)]
pub struct GateSpec {
    name: String,
    graph: ClusterGraph,
    outputs: Vec<usize>,
    steps: Vec<MeasurementStep>,
    byproducts: Vec<PauliString>,
    resource: PureState,
    stabilizers: Vec<HermitianOperator>,
}

/// How a [`GateSpec`] obtains its resource state.
#[derive(Clone, Debug)]
pub enum Resource {
    /// `(I ⊗ U)|Φ+⟩^{⊗k}` with the first half of the outputs as inputs.
    Unitary(CMatrix),
    /// The normalized post-measurement output state of outcome `m = 0`.
    FromPattern,
}

impl GateSpec {
    /// Builds and validates a spec. Byproducts default to a mechanical search
    /// over Pauli frames on the outputs; explicit byproducts are indexed by
    /// outcome code (first step is the most significant bit).
    pub fn build(
        name: &str,
        graph: ClusterGraph,
        outputs: Vec<usize>,
        steps: Vec<MeasurementStep>,
        resource: Resource,
        byproducts: Option<Vec<PauliString>>,
    ) -> Result<Self> {
        let fail = |reason: String| Error::Construction { name: name.to_string(), reason };
        validate_pattern(&graph, &outputs, &steps).map_err(|e| fail(e.to_string()))?;

        let mut spec = GateSpec {
            name: name.to_string(),
            graph,
            outputs,
            steps,
            byproducts: Vec::new(),
            resource: PureState::basis(1, 0),
            stabilizers: Vec::new(),
        };
        let k_out = spec.outputs.len();
        let (state, stabilizers) = match resource {
            Resource::Unitary(u) => {
                if k_out % 2 != 0 || u.nrows() != 1 << (k_out / 2) || !u.is_square() {
                    return Err(fail(format!("unitary of size {} does not fit {k_out} outputs", u.nrows())));
                }
                let unit = (u.adjoint() * &u - identity(u.nrows())).camax();
                if unit > 1e-12 {
                    return Err(fail("target matrix is not unitary".into()));
                }
                (choi_state(&u), choi_stabilizers(&u))
            }
            Resource::FromPattern => {
                let branch = spec.branch_state(0);
                let state = PureState::normalized(branch).map_err(|_| fail("outcome 0 has zero probability".into()))?;
                let stabs = householder_stabilizers(&state);
                (state, stabs)
            }
        };
        spec.resource = state;
        spec.stabilizers = stabilizers;
        spec.byproducts = match byproducts {
            Some(list) => {
                if list.len() != spec.outcome_count() || list.iter().any(|p| p.num_qubits() != k_out) {
                    return Err(fail("byproduct list does not match outcomes and outputs".into()));
                }
                list
            }
            None => spec.solve_byproducts().map_err(|e| fail(e.to_string()))?,
        };

        let f = gate_fidelity(&cluster_state(&spec.graph).projector(), &spec).map_err(|e| fail(e.to_string()))?;
        if (f - 1.0).abs() > SELF_CONSISTENCY_TOL {
            return Err(fail(format!("perfect cluster gives F_U = {f}, not 1")));
        }
        let via_stabilizers = gate_fidelity_stabilizer(&cluster_state(&spec.graph).projector(), &spec).map_err(|e| fail(e.to_string()))?;
        if (via_stabilizers - 1.0).abs() > SELF_CONSISTENCY_TOL {
            return Err(fail(format!("stabilizer projector gives F_U = {via_stabilizers}, not 1")));
        }
        Ok(spec)
    }

    /// Z rotation `R_ζ = diag(e^{iζ/2}, e^{−iζ/2})` on a linear 5-chain:
    /// site 2 in X, site 3 in the rotated basis conditioned on site 2, site 4
    /// in X, outputs 1 and 5, byproduct `X^{m₂} Z^{m₃} X^{m₄}` on site 5.
    pub fn zrot5(zeta: f64) -> Result<Self> {
        let name = if zeta == 0.0 { "identity5" } else { "zrot5" };
        let r = CMatrix::from_row_slice(
            2,
            2,
            &[C64::from_polar(1.0, zeta / 2.0), ZERO, ZERO, C64::from_polar(1.0, -zeta / 2.0)],
        );
        let byproducts = (0..8u32)
            .map(|m| {
                let (m2, m3, m4) = ((m >> 2) & 1, (m >> 1) & 1, m & 1);
                let mut p = PauliString::identity(2);
                for (bit, letter) in [(m2, "IX"), (m3, "IZ"), (m4, "IX")] {
                    if bit == 1 {
                        p = p.mul(&PauliString::parse(letter).expect("valid literal"));
                    }
                }
                p
            })
            .collect();
        Self::build(
            name,
            ClusterGraph::linear_chain(5)?,
            vec![1, 5],
            vec![MeasurementStep::x(2), MeasurementStep::rotated(3, zeta, Some(2)), MeasurementStep::x(4)],
            Resource::Unitary(r),
            Some(byproducts),
        )
    }

    pub fn identity5() -> Result<Self> {
        Self::zrot5(0.0)
    }

    /// Hadamard on a linear 8-chain: sites 2..7 measured in X, outputs 1 and 8.
    pub fn hadamard8() -> Result<Self> {
        Self::build(
            "hadamard8",
            ClusterGraph::linear_chain(8)?,
            vec![1, 8],
            (2..=7).map(MeasurementStep::x).collect(),
            Resource::Unitary(hadamard()),
            None,
        )
    }

    /// Controlled-Z on two 3-site wires `1-2-3` and `4-5-6` joined by the
    /// rung `1-4`; sites 2 and 5 measured in X, inputs 1 and 4, outputs 3 and 6.
    pub fn cz() -> Result<Self> {
        let graph = ClusterGraph::new(6, [(1, 2), (2, 3), (4, 5), (5, 6), (1, 4)])?;
        let cz = CMatrix::from_diagonal(&CVector::from_vec(vec![ONE, ONE, ONE, -ONE]));
        Self::build(
            "cz",
            graph,
            vec![1, 4, 3, 6],
            vec![MeasurementStep::x(2), MeasurementStep::x(5)],
            Resource::Unitary(cz),
            None,
        )
    }

    /// Looks up a builtin gate by name; `zeta` applies to `zrot5` only.
    pub fn builtin(name: &str, zeta: f64) -> Result<Self> {
        match name {
            "zrot5" => Self::zrot5(zeta),
            "identity5" => Self::identity5(),
            "hadamard8" => Self::hadamard8(),
            "cz" => Self::cz(),
            other => invalid(format!("unknown gate `{other}` (expected one of {})", BUILTIN_NAMES.join(", "))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn graph(&self) -> &ClusterGraph {
        &self.graph
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    pub fn steps(&self) -> &[MeasurementStep] {
        &self.steps
    }

    pub fn byproduct(&self, outcome: usize) -> &PauliString {
        &self.byproducts[outcome]
    }

    pub fn resource_state(&self) -> &PureState {
        &self.resource
    }

    pub fn resource_stabilizers(&self) -> &[HermitianOperator] {
        &self.stabilizers
    }

    pub fn outcome_count(&self) -> usize {
        1 << self.steps.len()
    }

    /// Outcome bit of step `k` inside outcome code `m`.
    fn bit(&self, m: usize, k: usize) -> usize {
        (m >> (self.steps.len() - 1 - k)) & 1
    }

    /// Basis vector measured at step `k` for outcome code `m`.
    fn basis_vector(&self, m: usize, k: usize) -> [C64; 2] {
        let plus = [c64(FRAC_1_SQRT_2, 0.0), c64(FRAC_1_SQRT_2, 0.0)];
        let minus = [c64(FRAC_1_SQRT_2, 0.0), c64(-FRAC_1_SQRT_2, 0.0)];
        let outcome = self.bit(m, k);
        match self.steps[k].basis {
            Basis::X => {
                if outcome == 0 {
                    plus
                } else {
                    minus
                }
            }
            Basis::Rotated { zeta, condition } => {
                let flipped = condition
                    .map(|site| {
                        let idx = self.steps.iter().position(|s| s.site == site).expect("validated");
                        self.bit(m, idx) == 1
                    })
                    .unwrap_or(false);
                let angle = if flipped { -zeta } else { zeta };
                let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
                let (main, other) = if outcome == 0 { (plus, minus) } else { (minus, plus) };
                [main[0] * c - I * s * other[0], main[1] * c - I * s * other[1]]
            }
        }
    }

    /// For every full basis index, the measured-site amplitude factor
    /// `⟨b_m|·⟩` and the output index (outputs in listed order).
    fn split_index(&self) -> (Vec<usize>, Vec<usize>) {
        let n = self.graph.n();
        let dim = 1usize << n;
        let bit_of = |b: usize, site: usize| (b >> (n - site)) & 1;
        let k = self.steps.len();
        let mut measured = vec![0usize; dim];
        let mut output = vec![0usize; dim];
        for b in 0..dim {
            measured[b] = self.steps.iter().fold(0, |acc, s| (acc << 1) | bit_of(b, s.site));
            output[b] = self.outputs.iter().fold(0, |acc, &s| (acc << 1) | bit_of(b, s));
        }
        debug_assert!(measured.iter().all(|&m| m < 1 << k));
        (measured, output)
    }

    /// Amplitude of the measured-site product state `|b_m⟩` on each
    /// configuration of the measured bits.
    fn measured_amplitudes(&self, m: usize) -> Vec<C64> {
        let k = self.steps.len();
        let vectors: Vec<[C64; 2]> = (0..k).map(|step| self.basis_vector(m, step)).collect();
        (0..1usize << k)
            .map(|bits| {
                (0..k).fold(ONE, |acc, step| acc * vectors[step][(bits >> (k - 1 - step)) & 1])
            })
            .collect()
    }

    /// Unnormalized output state `(⟨b_m| ⊗ I)|Ψ_C⟩`.
    fn branch_state(&self, m: usize) -> CVector {
        let psi = cluster_state(&self.graph);
        let (measured, output) = self.split_index();
        let amps = self.measured_amplitudes(m);
        let mut out = CVector::zeros(1 << self.outputs.len());
        for (b, a) in psi.amplitudes().iter().enumerate() {
            out[output[b]] += amps[measured[b]].conj() * a;
        }
        out
    }

    fn solve_byproducts(&self) -> Result<Vec<PauliString>> {
        let k_out = self.outputs.len();
        let target = self.resource.amplitudes();
        (0..self.outcome_count())
            .map(|m| {
                let branch = PureState::normalized(self.branch_state(m))
                    .map_err(|_| Error::InvalidInput(format!("outcome {m} has zero probability")))?;
                PauliString::all(k_out)
                    .find(|p| {
                        let corrected = p.apply(branch.amplitudes());
                        (target.dotc(&corrected).norm() - 1.0).abs() < SELF_CONSISTENCY_TOL
                    })
                    .ok_or_else(|| Error::InvalidInput(format!("no Pauli frame corrects outcome {m}")))
            })
            .collect()
    }

    /// Vectors `w_m = |b_m⟩ ⊗ B_m†|Ψ_U⟩` (interleaved by site) such that
    /// `F_U(ρ) = Σ_m ⟨w_m|ρ|w_m⟩`.
    pub fn witness_vectors(&self) -> Vec<CVector> {
        let (measured, output) = self.split_index();
        let dim = self.graph.dim();
        (0..self.outcome_count())
            .map(|m| {
                let amps = self.measured_amplitudes(m);
                let corrected = self.byproducts[m].apply(self.resource.amplitudes());
                // B_m is a Pauli string up to phase, so B_m† ∝ B_m and the phase drops out of |w⟩⟨w|
                CVector::from_fn(dim, |b, _| amps[measured[b]] * corrected[output[b]])
            })
            .collect()
    }
}

/// What a fidelity is measured against: the cluster state itself, or the
/// resource state of a gate teleported through it.
#[derive(Clone, Debug)]
pub enum FidelityTarget {
    Cluster(ClusterGraph),
    Gate(Box<GateSpec>),
}

impl FidelityTarget {
    pub fn graph(&self) -> &ClusterGraph {
        match self {
            FidelityTarget::Cluster(g) => g,
            FidelityTarget::Gate(spec) => spec.graph(),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            FidelityTarget::Cluster(_) => "cluster",
            FidelityTarget::Gate(spec) => spec.name(),
        }
    }

    /// Vectors `w` with fidelity `Σ_w ⟨w|ρ|w⟩` on the graph qubits.
    pub fn witness(&self) -> Vec<CVector> {
        match self {
            FidelityTarget::Cluster(g) => vec![cluster_state(g).into_amplitudes()],
            FidelityTarget::Gate(spec) => spec.witness_vectors(),
        }
    }
}

pub const BUILTIN_NAMES: [&str; 4] = ["identity5", "hadamard8", "zrot5", "cz"];

/// All builtin gates keyed by name, with `zeta` for the rotation gate.
pub fn builtin_specs(zeta: f64) -> Result<BTreeMap<String, GateSpec>> {
    BUILTIN_NAMES
        .iter()
        .map(|&name| GateSpec::builtin(name, zeta).map(|s| (name.to_string(), s)))
        .collect()
}

fn validate_pattern(graph: &ClusterGraph, outputs: &[usize], steps: &[MeasurementStep]) -> Result<()> {
    let n = graph.n();
    let mut seen = vec![false; n + 1];
    for &s in outputs.iter().chain(steps.iter().map(|s| &s.site)) {
        if s == 0 || s > n {
            return invalid(format!("site {s} out of range 1..={n}"));
        }
        if seen[s] {
            return invalid(format!("site {s} used twice"));
        }
        seen[s] = true;
    }
    if let Some(missing) = (1..=n).find(|&s| !seen[s]) {
        return invalid(format!("site {missing} is neither measured nor an output"));
    }
    if outputs.is_empty() {
        return invalid("at least one output site is required");
    }
    if steps.len() > 12 {
        return invalid("at most 12 measured sites are supported");
    }
    for (k, step) in steps.iter().enumerate() {
        if let Basis::Rotated { condition: Some(c), .. } = step.basis {
            if !steps[..k].iter().any(|s| s.site == c) {
                return invalid(format!("step on site {} is conditioned on site {c}, which is not measured earlier", step.site));
            }
        }
    }
    Ok(())
}

/// `(I ⊗ U)|Φ+⟩^{⊗k}` with inputs as the first `k` qubits.
pub fn choi_state(u: &CMatrix) -> PureState {
    let d = u.nrows();
    let norm = c64(1.0 / (d as f64).sqrt(), 0.0);
    let mut amps = CVector::zeros(d * d);
    for x in 0..d {
        for y in 0..d {
            amps[x * d + y] = u[(y, x)] * norm;
        }
    }
    PureState::from_vector_unchecked(amps)
}

/// Generators `X_in X_out`, `Z_in Z_out` of each Bell pair, conjugated by `I ⊗ U`.
pub fn choi_stabilizers(u: &CMatrix) -> Vec<HermitianOperator> {
    let d = u.nrows();
    let k = d.trailing_zeros() as usize;
    let full_u = identity(d).kronecker(u);
    let mut out = Vec::with_capacity(2 * k);
    for q in 1..=k {
        for p in [pauli_x(), pauli_z()] {
            let bell = embed_single(&p, q, 2 * k) * embed_single(&p, k + q, 2 * k);
            let mut s = &full_u * bell * full_u.adjoint();
            crate::linalg::hermitize(&mut s);
            out.push(HermitianOperator::from_matrix_unchecked(s));
        }
    }
    out
}

/// Commuting Hermitian generators `V Z_q V` with `V` a Householder
/// reflection taking `|0…0⟩` to `ψ` up to phase.
pub fn householder_stabilizers(psi: &PureState) -> Vec<HermitianOperator> {
    let d = psi.dim();
    let k = d.trailing_zeros() as usize;
    let a = psi.amplitudes();
    let phase = if a[0].norm() > 0.0 { a[0].conj() / a[0].norm() } else { ONE };
    let mut u = -(a * phase);
    u[0] += ONE;
    let un = u.norm_squared();
    let v = if un < 1e-30 { identity(d) } else { identity(d) - (&u * u.adjoint()) * c64(2.0 / un, 0.0) };
    (1..=k)
        .map(|q| {
            let mut s = &v * embed_single(&pauli_z(), q, k) * &v;
            crate::linalg::hermitize(&mut s);
            HermitianOperator::from_matrix_unchecked(s)
        })
        .collect()
}

/// Rank-one projector for outcome `m` on the measured sites, identity on
/// the outputs, as a dense matrix on the whole graph.
pub fn measurement_projector(spec: &GateSpec, outcome_bits: &[u8]) -> Result<CMatrix> {
    if outcome_bits.len() != spec.steps.len() || outcome_bits.iter().any(|&b| b > 1) {
        return invalid(format!("expected {} outcome bits", spec.steps.len()));
    }
    let m = outcome_bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
    let (measured, output) = spec.split_index();
    let amps = spec.measured_amplitudes(m);
    let dim = spec.graph.dim();
    Ok(CMatrix::from_fn(dim, dim, |r, c| {
        if output[r] == output[c] {
            amps[measured[r]] * amps[measured[c]].conj()
        } else {
            ZERO
        }
    }))
}

/// `ρ_U = Tr_p Σ_m B_m P_m ρ P_m B_m†` on the output sites.
pub fn gate_output_state(rho: &DensityMatrix, spec: &GateSpec) -> Result<DensityMatrix> {
    check_dim(spec.graph.dim(), rho.dim())?;
    let (measured, output) = spec.split_index();
    let d_out = 1usize << spec.outputs.len();
    let dim = spec.graph.dim();
    let r = rho.matrix();
    let mut total = CMatrix::zeros(d_out, d_out);
    for m in 0..spec.outcome_count() {
        let amps = spec.measured_amplitudes(m);
        let coeff: Vec<C64> = (0..dim).map(|b| amps[measured[b]].conj()).collect();
        let mut branch = CMatrix::zeros(d_out, d_out);
        for a in 0..dim {
            if coeff[a] == ZERO {
                continue;
            }
            for b in 0..dim {
                branch[(output[a], output[b])] += coeff[a] * r[(a, b)] * coeff[b].conj();
            }
        }
        let p = spec.byproducts[m].matrix();
        total += &p * branch * p.adjoint();
    }
    crate::linalg::hermitize(&mut total);
    Ok(DensityMatrix::from_matrix_unchecked(total))
}

/// `F_U = ⟨Ψ_U|ρ_U|Ψ_U⟩`.
pub fn gate_fidelity(rho: &DensityMatrix, spec: &GateSpec) -> Result<f64> {
    fidelity_pure(&gate_output_state(rho, spec)?, &spec.resource)
}

/// `F_U = Tr(ρ_U ∏_i (S_i + I)/2)` over the full generating set.
pub fn gate_fidelity_stabilizer(rho: &DensityMatrix, spec: &GateSpec) -> Result<f64> {
    let out = gate_output_state(rho, spec)?;
    let d = out.dim();
    let mut proj = identity(d);
    for s in &spec.stabilizers {
        proj = proj * (s.matrix() + identity(d)) * c64(0.5, 0.0);
    }
    Ok(clamp_unit((out.matrix() * proj).trace().re))
}

/// `Σ_m ⟨w_m|ρ|w_m⟩`, the same number as [`gate_fidelity`] without forming ρ_U.
pub fn gate_fidelity_witness(rho: &DensityMatrix, witness: &[CVector]) -> Result<f64> {
    let mut f = 0.0;
    for w in witness {
        check_dim(rho.dim(), w.len())?;
        f += w.dotc(&(rho.matrix() * w)).re;
    }
    Ok(clamp_unit(f))
}

/// Dimension of the joint +1 eigenspace of a commuting generator set.
pub fn joint_eigenspace_dim(stabilizers: &[HermitianOperator]) -> usize {
    let Some(first) = stabilizers.first() else {
        return 0;
    };
    let d = first.dim();
    let mut proj = identity(d);
    for s in stabilizers {
        proj = proj * (s.matrix() + identity(d)) * c64(0.5, 0.0);
    }
    crate::linalg::hermitize(&mut proj);
    eigenvalues_hermitian(&proj).iter().filter(|&&l| l > 0.5).count()
}
