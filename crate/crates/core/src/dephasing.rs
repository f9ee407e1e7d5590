//! Exactly solvable pure dephasing: decoherence kernels for ohmic and
//! discrete boson spectra and the closed-form map on the qubit density
//! matrix.
//!
//! In the computational basis, with spin labels `s = Σ i_n` (`i_n = ±1`,
//! bit 0 ↦ +1) and bare energies `E = Σ ε_n i_n`,
//!
//! ```text
//! ρ_ij(t) = ρ_ij(0) · exp(-Γ (s_i - s_j)²) · exp(iΘ (s_i² - s_j²)) · exp(-i t (E_i - E_j))
//! ```

use std::collections::HashMap;

use crate::analysis::FidelitySeries;
use crate::cluster::{cluster_state, ClusterGraph};
use crate::error::{invalid, Result};
use crate::gate::GateSpec;
use crate::linalg::{c64, check_dim, clamp_unit, CMatrix, CVector, DensityMatrix, PureState, C64};
use crate::special::ln_abs_gamma;

/// Ohmic spectral density `I(ω) = η ω e^{-ω/ω_c}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OhmicSpectrum {
    eta: f64,
    omega_c: f64,
}

impl OhmicSpectrum {
    pub fn new(eta: f64, omega_c: f64) -> Result<Self> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return invalid(format!("coupling strength eta must be >= 0, got {eta}"));
        }
        if !(omega_c > 0.0) || !omega_c.is_finite() {
            return invalid(format!("cutoff frequency must be > 0, got {omega_c}"));
        }
        Ok(Self { eta, omega_c })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn omega_c(&self) -> f64 {
        self.omega_c
    }

    pub fn density(&self, omega: f64) -> f64 {
        self.eta * omega * (-omega / self.omega_c).exp()
    }
}

/// A finite set of boson modes `(ω_k, g_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteSpectrum {
    modes: Vec<(f64, C64)>,
}

impl DiscreteSpectrum {
    pub fn new(modes: Vec<(f64, C64)>) -> Result<Self> {
        if let Some(&(w, _)) = modes.iter().find(|(w, _)| !(*w > 0.0) || !w.is_finite()) {
            return invalid(format!("mode frequency must be > 0, got {w}"));
        }
        Ok(Self { modes })
    }

    pub fn single(omega: f64, g: f64) -> Result<Self> {
        Self::new(vec![(omega, c64(g, 0.0))])
    }

    /// Midpoint discretization of an ohmic density on `(0, omega_max]`:
    /// `ω_k = (k + ½)Δ`, `|g_k|² = I(ω_k) Δ`.
    pub fn from_ohmic(s: &OhmicSpectrum, modes: usize, omega_max: f64) -> Result<Self> {
        if modes == 0 || !(omega_max > 0.0) {
            return invalid("discretization needs modes > 0 and omega_max > 0");
        }
        let dw = omega_max / modes as f64;
        let list = (0..modes)
            .map(|k| {
                let w = (k as f64 + 0.5) * dw;
                (w, c64((s.density(w) * dw).sqrt(), 0.0))
            })
            .collect();
        Self::new(list)
    }

    pub fn modes(&self) -> &[(f64, C64)] {
        &self.modes
    }
}

/// The pair `(Γ(t, T), Θ(t))` at one time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DephasingKernel {
    pub gamma: f64,
    pub theta: f64,
}

/// Per-qubit half gaps `ε_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct QubitEnergies(Vec<f64>);

impl QubitEnergies {
    pub fn new(eps: Vec<f64>) -> Result<Self> {
        if eps.is_empty() {
            return invalid("need at least one qubit energy");
        }
        if eps.iter().any(|e| !e.is_finite()) {
            return invalid("qubit energies must be finite");
        }
        Ok(Self(eps))
    }

    pub fn uniform(n: usize, eps: f64) -> Result<Self> {
        Self::new(vec![eps; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return invalid(format!("time must be finite and >= 0, got {t}"));
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0) {
        return invalid(format!("inverse temperature must be > 0, got {beta}"));
    }
    Ok(())
}

/// `Γ(t, T)` for the ohmic density, evaluated exactly at finite cutoff:
///
/// ```text
/// Γ = η [ ½ ln(1 + ω_c² t²) + Σ_{n≥1} ln(1 + t² / (nβ + 1/ω_c)²) ]
///   = η [ ½ ln(1 + ω_c² t²) + 2 ln|Γ(x)| - 2 ln|Γ(x + iy)| ],   x = 1 + 1/(ω_c β), y = t/β
/// ```
///
/// `beta = +∞` keeps only the vacuum term.
pub fn gamma_ohmic(t: f64, beta: f64, s: &OhmicSpectrum) -> Result<f64> {
    check_time(t)?;
    check_beta(beta)?;
    if t == 0.0 || s.eta == 0.0 {
        return Ok(0.0);
    }
    let vacuum = 0.5 * (s.omega_c * t).powi(2).ln_1p();
    if beta.is_infinite() {
        return Ok(s.eta * vacuum);
    }
    let x = 1.0 + 1.0 / (s.omega_c * beta);
    let y = t / beta;
    let thermal = 2.0 * (ln_abs_gamma(x, 0.0) - ln_abs_gamma(x, y));
    Ok(s.eta * (vacuum + thermal.max(0.0)))
}

/// Wide-band form `η/2 ln(1 + ω_c² t²) + η ln((β/πt) sinh(πt/β))`, whose
/// thermal part is exact only as `ω_c → ∞`.
pub fn gamma_wide_band(t: f64, beta: f64, s: &OhmicSpectrum) -> Result<f64> {
    check_time(t)?;
    check_beta(beta)?;
    if t == 0.0 || s.eta == 0.0 {
        return Ok(0.0);
    }
    let vacuum = 0.5 * (s.omega_c * t).powi(2).ln_1p();
    let x = std::f64::consts::PI * t / beta;
    Ok(s.eta * (vacuum + ln_sinhc(x)))
}

// ln(sinh(x)/x) for x ≥ 0, without cancellation at small x or overflow at large x.
pub(crate) fn ln_sinhc(x: f64) -> f64 {
    if x < 1e-4 {
        let x2 = x * x;
        x2 / 6.0 - x2 * x2 / 180.0
    } else if x < 20.0 {
        (x.sinh() / x).ln()
    } else {
        x + (-(-2.0 * x).exp()).ln_1p() - std::f64::consts::LN_2 - x.ln()
    }
}

/// `Θ(t) = η (ω_c t - arctan ω_c t)`.
pub fn theta_ohmic(t: f64, s: &OhmicSpectrum) -> Result<f64> {
    check_time(t)?;
    let u = s.omega_c * t;
    let core = if u < 1e-2 {
        let u2 = u * u;
        u * u2 / 3.0 * (1.0 - 0.6 * u2 + u2 * u2 * 3.0 / 7.0)
    } else {
        u - u.atan()
    };
    Ok(s.eta * core)
}

pub fn kernel_ohmic(t: f64, beta: f64, s: &OhmicSpectrum) -> Result<DephasingKernel> {
    Ok(DephasingKernel { gamma: gamma_ohmic(t, beta, s)?, theta: theta_ohmic(t, s)? })
}

/// Mode sums `Γ = Σ|g|²(1 - cos ωt)/ω² coth(ωβ/2)`, `Θ = Σ|g|²(ωt - sin ωt)/ω²`.
pub fn kernel_discrete(spec: &DiscreteSpectrum, t: f64, beta: f64) -> Result<DephasingKernel> {
    check_time(t)?;
    check_beta(beta)?;
    let mut kernel = DephasingKernel::default();
    for &(w, g) in &spec.modes {
        let g2 = g.norm_sqr();
        let coth = if beta.is_infinite() { 1.0 } else { 1.0 / (0.5 * w * beta).tanh() };
        let half = 0.5 * w * t;
        kernel.gamma += g2 * 2.0 * half.sin().powi(2) / (w * w) * coth;
        kernel.theta += g2 * (w * t - (w * t).sin()) / (w * w);
    }
    Ok(kernel)
}

/// Total spin label `Σ i_n` of every basis index on `n` qubits.
pub fn spin_labels(n: usize) -> Vec<i32> {
    (0..1usize << n).map(|b| n as i32 - 2 * b.count_ones() as i32).collect()
}

/// Bare energies `Σ ε_n i_n` of every basis index.
pub fn bare_energies(eps: &QubitEnergies) -> Vec<f64> {
    let n = eps.len();
    (0..1usize << n)
        .map(|b| {
            eps.0
                .iter()
                .enumerate()
                .map(|(k, e)| if (b >> (n - 1 - k)) & 1 == 0 { *e } else { -*e })
                .sum()
        })
        .collect()
}

/// Applies the exact dephasing map for time `t`, including the rotation by
/// the bare qubit Hamiltonian `Σ ε_n σ_z`. The kernel must belong to the
/// same `t`.
pub fn evolve_dephasing(rho0: &DensityMatrix, eps: &QubitEnergies, kernel: DephasingKernel, t: f64) -> Result<DensityMatrix> {
    check_time(t)?;
    let dim = rho0.dim();
    if !dim.is_power_of_two() {
        return invalid(format!("dimension {dim} is not a power of two"));
    }
    check_dim(1 << eps.len(), dim)?;
    let labels = spin_labels(eps.len());
    let energies = bare_energies(eps);
    let phase: Vec<C64> = (0..dim)
        .map(|i| {
            let s = labels[i] as f64;
            C64::from_polar(1.0, kernel.theta * s * s - t * energies[i])
        })
        .collect();
    let src = rho0.matrix();
    let out = CMatrix::from_fn(dim, dim, |i, j| {
        let ds = (labels[i] - labels[j]) as f64;
        src[(i, j)] * phase[i] * phase[j].conj() * (-kernel.gamma * ds * ds).exp()
    });
    Ok(DensityMatrix::from_matrix_unchecked(out))
}

/// Fidelity `Σ_w ⟨w|ρ(t)|w⟩` of a dephasing pure state, precomputed so each
/// time point costs O(labels²) instead of O(4ⁿ). Basis states are grouped by
/// their `(Σ i_n, E)` labels, which fully determine the time dependence.
#[derive(Clone, Debug)]
pub struct DephasingFidelity {
    spins: Vec<f64>,
    energies: Vec<f64>,
    weights: CMatrix,
}

impl DephasingFidelity {
    /// `witness` holds the vectors `w` of a positive operator `W = Σ |w⟩⟨w|`;
    /// a single normalized vector gives the ordinary state fidelity.
    pub fn new(initial: &PureState, witness: &[CVector], eps: &QubitEnergies) -> Result<Self> {
        let dim = initial.dim();
        check_dim(1 << eps.len(), dim)?;
        for w in witness {
            check_dim(dim, w.len())?;
        }
        let spins = spin_labels(eps.len());
        let energies = bare_energies(eps);
        let mut index: HashMap<(i32, u64), usize> = HashMap::new();
        let mut label_of = Vec::with_capacity(dim);
        let mut label_spin = Vec::new();
        let mut label_energy = Vec::new();
        for b in 0..dim {
            let key = (spins[b], energies[b].to_bits());
            let next = index.len();
            let id = *index.entry(key).or_insert_with(|| {
                label_spin.push(spins[b] as f64);
                label_energy.push(energies[b]);
                next
            });
            label_of.push(id);
        }
        let labels = label_spin.len();
        let psi = initial.amplitudes();
        let mut weights = CMatrix::zeros(labels, labels);
        let mut a = vec![C64::new(0.0, 0.0); labels];
        for w in witness {
            a.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
            for b in 0..dim {
                a[label_of[b]] += w[b].conj() * psi[b];
            }
            for l in 0..labels {
                for m in 0..labels {
                    weights[(l, m)] += a[l] * a[m].conj();
                }
            }
        }
        Ok(Self { spins: label_spin, energies: label_energy, weights })
    }

    pub fn label_count(&self) -> usize {
        self.spins.len()
    }

    pub fn evaluate(&self, kernel: DephasingKernel, t: f64) -> f64 {
        let phase: Vec<C64> = self
            .spins
            .iter()
            .zip(&self.energies)
            .map(|(s, e)| C64::from_polar(1.0, kernel.theta * s * s - t * e))
            .collect();
        let n = self.spins.len();
        let mut total = 0.0;
        for l in 0..n {
            for m in 0..n {
                let ds = self.spins[l] - self.spins[m];
                let term = self.weights[(l, m)] * phase[l] * phase[m].conj();
                total += term.re * (-kernel.gamma * ds * ds).exp();
            }
        }
        clamp_unit(total)
    }
}

pub(crate) fn check_time_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return invalid("time grid is empty");
    }
    if times[0] != 0.0 {
        return invalid(format!("time grid must start at 0, starts at {}", times[0]));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("time grid must be strictly ascending");
    }
    Ok(())
}

/// Cluster-state fidelity `F(t)` under ohmic dephasing.
pub fn dephasing_fidelity_series(
    g: &ClusterGraph,
    eps: &QubitEnergies,
    s: &OhmicSpectrum,
    beta: f64,
    times: &[f64],
) -> Result<FidelitySeries> {
    check_dim(g.n(), eps.len())?;
    let psi = cluster_state(g);
    let fid = DephasingFidelity::new(&psi, std::slice::from_ref(psi.amplitudes()), eps)?;
    series(&fid, s, beta, times)
}

/// Gate fidelity `F_U(t)` of a teleported gate built from the dephasing cluster.
pub fn dephasing_gate_fidelity_series(
    spec: &GateSpec,
    eps: &QubitEnergies,
    s: &OhmicSpectrum,
    beta: f64,
    times: &[f64],
) -> Result<FidelitySeries> {
    check_dim(spec.graph().n(), eps.len())?;
    let psi = cluster_state(spec.graph());
    let fid = DephasingFidelity::new(&psi, &spec.witness_vectors(), eps)?;
    series(&fid, s, beta, times)
}

fn series(fid: &DephasingFidelity, s: &OhmicSpectrum, beta: f64, times: &[f64]) -> Result<FidelitySeries> {
    check_time_grid(times)?;
    check_beta(beta)?;
    let values = times
        .iter()
        .map(|&t| kernel_ohmic(t, beta, s).map(|k| fid.evaluate(k, t)))
        .collect::<Result<Vec<_>>>()?;
    FidelitySeries::new("t", times.to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fidelity_pure, trace_distance};
    use crate::quadrature::{gamma_integral, theta_integral};
    use crate::testutil::random_density;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn reference_spectrum() -> OhmicSpectrum {
        OhmicSpectrum::new(1e-3, 100.0).unwrap()
    }

    #[test]
    fn kernels_vanish_at_origin() {
        let s = reference_spectrum();
        assert_eq!(gamma_ohmic(0.0, PI, &s).unwrap(), 0.0);
        assert_eq!(theta_ohmic(0.0, &s).unwrap(), 0.0);
        let quiet = OhmicSpectrum::new(0.0, 100.0).unwrap();
        for &t in &[0.3, 4.0, 20.0] {
            assert_eq!(gamma_ohmic(t, 1.0, &quiet).unwrap(), 0.0);
            assert_eq!(theta_ohmic(t, &quiet).unwrap(), 0.0);
        }
        assert!(gamma_ohmic(-1.0, 1.0, &s).is_err());
        assert!(gamma_ohmic(1.0, 0.0, &s).is_err());
        assert!(theta_ohmic(-0.1, &s).is_err());
    }

    #[test]
    fn gamma_matches_quadrature_at_reference_point() {
        let s = reference_spectrum();
        let closed = gamma_ohmic(1.0, PI, &s).unwrap();
        let quad = gamma_integral(1.0, PI, &s).unwrap().value;
        assert!(((closed - quad) / quad).abs() < 1e-6, "{closed} vs {quad}");
        let closed = theta_ohmic(1.0, &s).unwrap();
        let quad = theta_integral(1.0, &s).unwrap().value;
        assert!(((closed - quad) / quad).abs() < 1e-6, "{closed} vs {quad}");
    }

    #[test]
    fn theta_asymptote() {
        let s = reference_spectrum();
        let t = 50.0;
        let expected = 1e-3 * (100.0 * t - PI / 2.0);
        assert!((theta_ohmic(t, &s).unwrap() - expected).abs() < 1e-3 * 1e-3);
        // series branch agrees with the direct form at the switch point
        let u: f64 = 0.99e-2;
        let direct = 1e-3 * (u - u.atan());
        assert!((theta_ohmic(u / 100.0, &s).unwrap() - direct).abs() < 1e-18);
    }

    #[test]
    fn wide_band_form_approaches_exact_with_cutoff() {
        let mut last = f64::INFINITY;
        for &wc in &[10.0, 100.0, 1000.0, 10000.0] {
            let s = OhmicSpectrum::new(1e-3, wc).unwrap();
            let exact = gamma_ohmic(3.0, 0.7, &s).unwrap();
            let wide = gamma_wide_band(3.0, 0.7, &s).unwrap();
            let rel = ((exact - wide) / exact).abs();
            assert!(rel < last);
            last = rel;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn gamma_grows_with_temperature() {
        let s = reference_spectrum();
        for &t in &[0.1, 1.0, 8.0, 25.0] {
            let mut prev = gamma_ohmic(t, f64::INFINITY, &s).unwrap();
            for &beta in &[100.0, 10.0, 3.0, 1.0, 0.3, 0.05] {
                let g = gamma_ohmic(t, beta, &s).unwrap();
                assert!(g >= prev, "t={t} beta={beta}");
                prev = g;
            }
        }
    }

    #[test]
    fn discrete_kernel_cases() {
        let empty = DiscreteSpectrum::new(vec![]).unwrap();
        assert_eq!(kernel_discrete(&empty, 3.0, 1.0).unwrap(), DephasingKernel::default());
        let w = 2.5;
        let g = 0.3;
        let single = DiscreteSpectrum::single(w, g).unwrap();
        let k = kernel_discrete(&single, 2.0 * PI / w, 0.7).unwrap();
        assert!(k.gamma.abs() < 1e-15);
        assert!((k.theta - g * g * 2.0 * PI / (w * w)).abs() < 1e-14);
        assert!(DiscreteSpectrum::single(0.0, 1.0).is_err());
    }

    #[test]
    fn riemann_sum_converges_to_ohmic_kernels() {
        let s = OhmicSpectrum::new(1e-3, 10.0).unwrap();
        let (t, beta) = (2.0, 1.5);
        let exact = kernel_ohmic(t, beta, &s).unwrap();
        let mut errors = Vec::new();
        for &modes in &[100usize, 1000, 10000] {
            let d = DiscreteSpectrum::from_ohmic(&s, modes, 40.0 * s.omega_c()).unwrap();
            let k = kernel_discrete(&d, t, beta).unwrap();
            errors.push((((k.gamma - exact.gamma) / exact.gamma).abs(), ((k.theta - exact.theta) / exact.theta).abs()));
        }
        assert!(errors[2].0 < 1e-3 && errors[2].1 < 1e-3, "{errors:?}");
        assert!(errors[2].0 < errors[0].0);
    }

    #[test]
    fn dephasing_preserves_diagonal_and_identity_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rho = random_density(&mut rng, 8);
        let eps = QubitEnergies::new(vec![0.3, 1.1, -0.4]).unwrap();
        let zero = evolve_dephasing(&rho, &eps, DephasingKernel::default(), 0.0).unwrap();
        assert_eq!(zero.matrix(), rho.matrix());
        let k = DephasingKernel { gamma: 0.2, theta: 0.7 };
        let out = evolve_dephasing(&rho, &eps, k, 1.3).unwrap();
        for i in 0..8 {
            assert!((out.matrix()[(i, i)] - rho.matrix()[(i, i)]).norm() < 1e-15);
        }
        assert!(out.check_invariants().is_ok());
        assert!(evolve_dephasing(&DensityMatrix::maximally_mixed(6), &eps, k, 1.0).is_err());
    }

    #[test]
    fn single_qubit_closed_form() {
        let g = ClusterGraph::new(1, []).unwrap();
        let s = reference_spectrum();
        let eps = QubitEnergies::uniform(1, 0.8).unwrap();
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.1).collect();
        let series = dephasing_fidelity_series(&g, &eps, &s, PI, &times).unwrap();
        for (t, f) in series.points() {
            let gamma = gamma_ohmic(t, PI, &s).unwrap();
            let expected = 0.5 * (1.0 + (-4.0 * gamma).exp() * (2.0 * 0.8 * t).cos());
            assert!((f - expected).abs() < 1e-12, "t={t}");
        }
        // with no bare splitting and no coupling the single qubit never moves
        let quiet = OhmicSpectrum::new(0.0, 100.0).unwrap();
        let flat = dephasing_fidelity_series(&g, &QubitEnergies::uniform(1, 0.0).unwrap(), &quiet, PI, &times).unwrap();
        assert!(flat.values().iter().all(|&f| (f - 1.0).abs() < 1e-15));
    }

    #[test]
    fn grouped_fidelity_matches_dense_map() {
        let g = ClusterGraph::new(4, [(1, 2), (2, 3), (3, 4), (1, 3)]).unwrap();
        let psi = cluster_state(&g);
        let eps = QubitEnergies::new(vec![0.5, 0.9, 0.5, 2.0]).unwrap();
        let fid = DephasingFidelity::new(&psi, std::slice::from_ref(psi.amplitudes()), &eps).unwrap();
        let s = reference_spectrum();
        for &t in &[0.0, 0.37, 2.0, 7.5] {
            let k = kernel_ohmic(t, 2.0, &s).unwrap();
            let rho = evolve_dephasing(&psi.projector(), &eps, k, t).unwrap();
            let dense = fidelity_pure(&rho, &psi).unwrap();
            assert!((fid.evaluate(k, t) - dense).abs() < 1e-13);
        }
    }

    #[test]
    fn low_temperature_limit() {
        let g = ClusterGraph::linear_chain(4).unwrap();
        let s = reference_spectrum();
        let eps = QubitEnergies::uniform(4, 3.0).unwrap();
        let times: Vec<f64> = (0..400).map(|k| k as f64 * 0.05).collect();
        let zero_t = dephasing_fidelity_series(&g, &eps, &s, f64::INFINITY, &times).unwrap();
        let cold = dephasing_fidelity_series(&g, &eps, &s, 1e4, &times).unwrap();
        let gap = zero_t.values().iter().zip(cold.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-6);
        assert!(zero_t.values().iter().skip(1).all(|&f| f < 1.0 - 1e-6));
        // also trace-distance check on one time slice
        let k0 = kernel_ohmic(5.0, f64::INFINITY, &s).unwrap();
        let k1 = kernel_ohmic(5.0, 1e4, &s).unwrap();
        let psi = cluster_state(&g);
        let a = evolve_dephasing(&psi.projector(), &eps, k0, 5.0).unwrap();
        let b = evolve_dephasing(&psi.projector(), &eps, k1, 5.0).unwrap();
        assert!(trace_distance(&a, &b).unwrap() < 1e-6);
    }
}
