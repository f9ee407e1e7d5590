//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when a blocking criterion fails. Informational checks and the
//! documented known failure are reported but never change the exit code.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use cluster_decay::analysis::{
    default_envelope_window, drop_rate, envelope_peak, find_peaks, size_scaling_fit, steepest_point, threshold_scan,
    uniform_grid, FidelitySeries,
};
use cluster_decay::cluster::{cluster_state, ClusterGraph};
use cluster_decay::dephasing::{
    dephasing_fidelity_series, dephasing_gate_fidelity_series, evolve_dephasing, gamma_ohmic, kernel_discrete,
    theta_ohmic, DiscreteSpectrum, OhmicSpectrum, QubitEnergies,
};
use cluster_decay::gate::{
    builtin_specs, gate_fidelity, gate_fidelity_stabilizer, FidelityTarget, GateSpec, DEFAULT_ZETA,
};
use cluster_decay::linalg::{trace_distance, DensityMatrix, PauliString, Propagator, PureState};
use cluster_decay::numeric::{
    build_cluster_env_hamiltonian, build_qubit_boson_hamiltonian, converged_resonant_series, initial_joint_state,
    reduced_qubit_state, resonant_fidelity_series, thermal_fidelities, thermal_gate_fidelity_grid, BosonMode,
};
use cluster_decay::quadrature::{gamma_integral, theta_integral};
use cluster_decay::spectrum::{cluster_levels, hamiltonian_levels, stabilizer_levels};
use cluster_decay::Result;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Blocking,
    Informational,
    // fails for a documented reason; see README
    KnownFailure,
}

struct Outcome {
    kind: Kind,
    passed: bool,
    detail: String,
}

fn blocking(passed: bool, detail: String) -> Outcome {
    Outcome { kind: Kind::Blocking, passed, detail }
}

fn info(passed: bool, detail: String) -> Outcome {
    Outcome { kind: Kind::Informational, passed, detail }
}

type Criterion = fn() -> Result<Vec<(&'static str, Outcome)>>;

const OHMIC_ETA: f64 = 1e-3;
const OHMIC_CUTOFF: f64 = 100.0;
const GATES: [&str; 4] = ["identity5", "hadamard8", "zrot5", "cz"];

fn gate(name: &str) -> GateSpec {
    GateSpec::builtin(name, DEFAULT_ZETA).expect("builtin gate")
}

fn oracle_equivalence() -> Result<Vec<(&'static str, Outcome)>> {
    let (omega, coupling, cutoff) = (3.0, 0.2, 40);
    let eps = [0.7, 1.1, 1.3];
    let spectrum = DiscreteSpectrum::single(omega, coupling)?;
    let times = uniform_grid(0.0, 10.0, 10.0 / 49.0)?;
    let mut worst: f64 = 0.0;
    for n in 1..=3 {
        let g = ClusterGraph::linear_chain(n)?;
        let energies = QubitEnergies::new(eps[..n].to_vec())?;
        let mode = BosonMode::new(omega, coupling, 0.0, cutoff)?;
        let prop = Propagator::new(&build_qubit_boson_hamiltonian(&energies, &mode)?);
        let rho_q = cluster_state(&g).projector();
        for beta in [0.5, 2.0] {
            let rho0 = initial_joint_state(&g, &mode, beta)?;
            for &t in &times {
                let numeric = reduced_qubit_state(&prop.evolve(&rho0, t)?, n, cutoff)?;
                let exact = evolve_dephasing(&rho_q, &energies, kernel_discrete(&spectrum, t, beta)?, t)?;
                worst = worst.max(trace_distance(&numeric, &exact)?);
            }
        }
    }
    Ok(vec![("oracle equivalence", blocking(worst < 1e-6, format!("max trace distance {worst:.2e}, tol 1e-6")))])
}

fn kernel_closed_forms() -> Result<Vec<(&'static str, Outcome)>> {
    let s = OhmicSpectrum::new(OHMIC_ETA, OHMIC_CUTOFF)?;
    let mut worst: f64 = 0.0;
    for k in 1..=20 {
        let t = 0.5 * k as f64;
        for beta in [0.1, 0.5, PI, 10.0, 100.0] {
            let q = gamma_integral(t, beta, &s)?.value;
            worst = worst.max(((gamma_ohmic(t, beta, &s)? - q) / q).abs());
        }
        let q = theta_integral(t, &s)?.value;
        worst = worst.max(((theta_ohmic(t, &s)? - q) / q).abs());
    }
    Ok(vec![("kernel closed forms", blocking(worst < 1e-6, format!("max relative error {worst:.2e}, tol 1e-6")))])
}

fn spectrum_structure() -> Result<Vec<(&'static str, Outcome)>> {
    let j = 1.0;
    let mut ok = true;
    let mut notes = Vec::new();
    for n in 3..=7 {
        let g = ClusterGraph::linear_chain(n)?;
        let got = cluster_levels(&g, j)?;
        let want = stabilizer_levels(n, j);
        let same = got.len() == want.len()
            && got.iter().zip(&want).all(|(a, b)| a.multiplicity == b.multiplicity && (a.energy - b.energy).abs() < 1e-8);
        // the boson at ω = 2J adds one state to the first excited level
        let mode = BosonMode::new(2.0 * j, 0.0, PI / 2.0, 2)?;
        let levels = hamiltonian_levels(&build_cluster_env_hamiltonian(&g, j, &mode)?, 1e-8);
        let first = levels[1];
        let excited = first.multiplicity == n + 1 && (first.energy - (-(n as f64) * j + 2.0 * j)).abs() < 1e-8;
        ok &= same && excited;
        notes.push(format!("n={n}:{}", if same && excited { "ok" } else { "mismatch" }));
    }
    Ok(vec![("spectrum structure", blocking(ok, notes.join(" ")))])
}

fn random_density(rng: &mut ChaCha8Rng, dim: usize) -> DensityMatrix {
    let a = DMatrix::from_fn(dim, dim, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let m = &a * a.adjoint();
    let tr = m.trace();
    DensityMatrix::new(m / tr).expect("valid density matrix")
}

fn gate_self_consistency() -> Result<Vec<(&'static str, Outcome)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_clean: f64 = 0.0;
    let mut worst_paths: f64 = 0.0;
    for spec in builtin_specs(DEFAULT_ZETA)?.values() {
        let rho = cluster_state(spec.graph()).projector();
        worst_clean = worst_clean.max((gate_fidelity(&rho, spec)? - 1.0).abs());
        for _ in 0..100 {
            let rho = random_density(&mut rng, spec.graph().dim());
            worst_paths = worst_paths.max((gate_fidelity(&rho, spec)? - gate_fidelity_stabilizer(&rho, spec)?).abs());
        }
    }
    let ok = worst_clean < 1e-10 && worst_paths < 1e-10;
    Ok(vec![(
        "gate self-consistency",
        blocking(ok, format!("|F_U-1| {worst_clean:.1e}, path disagreement {worst_paths:.1e}, tol 1e-10")),
    )])
}

fn invariance() -> Result<Vec<(&'static str, Outcome)>> {
    let spec = gate("zrot5");
    let psi = cluster_state(spec.graph());
    let clean = gate_fidelity(&psi.projector(), &spec)?;
    let corrupted = |p: &str| -> Result<f64> {
        let e = PauliString::parse(p)?;
        gate_fidelity(&PureState::new(e.apply(psi.amplitudes()))?.projector(), &spec)
    };
    let x = corrupted("IXIXI")?;
    let z = corrupted("IZIZI")?;
    Ok(vec![
        ("invariance under X2X4", blocking((x - clean).abs() < 1e-12, format!("F_U {x:.12} vs clean {clean:.12}"))),
        (
            "invariance under Z2Z4",
            Outcome {
                kind: Kind::KnownFailure,
                passed: (z - clean).abs() < 1e-12,
                detail: format!("F_U {z:.12} vs clean {clean:.12}; cos^2(zeta) = {:.12}", DEFAULT_ZETA.cos().powi(2)),
            },
        ),
    ])
}

fn noiseless_peaks() -> Result<Vec<(&'static str, Outcome)>> {
    let eps = 3.0;
    let s = OhmicSpectrum::new(0.0, OHMIC_CUTOFF)?;
    // recurrences at multiples of π/ε fall exactly on this grid
    let step = PI / eps / 500.0;
    let times = uniform_grid(0.0, 25.0, step)?;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for n in [3, 5, 7] {
        let g = ClusterGraph::linear_chain(n)?;
        let series = dephasing_fidelity_series(&g, &QubitEnergies::uniform(n, eps)?, &s, PI, &times)?;
        let peaks = find_peaks(&series)?;
        count += peaks.len();
        worst = peaks.iter().fold(worst, |w, p| w.max((p.f - 1.0).abs()));
        worst = worst.max(drop_rate(&series)?.abs());
    }
    let ok = count > 0 && worst < 1e-9;
    Ok(vec![("noiseless peaks", blocking(ok, format!("{count} peaks, max |F-1| and |drop rate| {worst:.1e}")))])
}

const ENVELOPE_SMOOTHING: f64 = 1.0;

fn gate_series(name: &str, eps: f64, beta: f64, times: &[f64]) -> Result<FidelitySeries> {
    let spec = gate(name);
    let s = OhmicSpectrum::new(OHMIC_ETA, OHMIC_CUTOFF)?;
    dephasing_gate_fidelity_series(&spec, &QubitEnergies::uniform(spec.graph().n(), eps)?, &s, beta, times)
}

// Patterns fixed by the gate definitions themselves; the hadamard8 and cz
// layouts are our own choices, so their positions are reported only.
const UNAMBIGUOUS_GATES: [&str; 2] = ["identity5", "zrot5"];

fn envelope_peaks() -> Result<Vec<(&'static str, Outcome)>> {
    let step = 0.002;
    let times = uniform_grid(0.0, 25.0, step)?;
    let mut peaks = Vec::new();
    for name in GATES {
        let series = gate_series(name, 5.0, PI, &times)?;
        let window = default_envelope_window(&series, ENVELOPE_SMOOTHING)?;
        peaks.push((name, envelope_peak(&series, window)?));
    }
    let describe = |names: &[&str]| {
        peaks.iter().filter(|(n, _)| names.contains(n)).map(|(n, p)| format!("{n} t*={:.3}", p.t)).collect::<Vec<_>>().join(", ")
    };
    let core: Vec<_> = peaks.iter().filter(|(n, _)| UNAMBIGUOUS_GATES.contains(n)).map(|(_, p)| *p).collect();
    let spread = |ps: &[cluster_decay::analysis::Peak]| {
        ps.iter().map(|p| p.index).max().unwrap_or(0) - ps.iter().map(|p| p.index).min().unwrap_or(0)
    };
    let in_range = |ps: &[cluster_decay::analysis::Peak]| ps.iter().all(|p| (6.0..=10.0).contains(&p.t));
    let mut out = vec![(
        "envelope peak near t=8, identity5 and zrot5",
        blocking(
            in_range(&core) && spread(&core) <= 2,
            format!("{}; spread {} steps", describe(&UNAMBIGUOUS_GATES), spread(&core)),
        ),
    )];
    let all: Vec<_> = peaks.iter().map(|(_, p)| *p).collect();
    out.push((
        "envelope peak near t=8, all four gates",
        info(in_range(&all) && spread(&all) <= 2, format!("{}; spread {} steps", describe(&GATES), spread(&all))),
    ));

    let mut low_t = Vec::new();
    let mut ok = true;
    for temperature in [0.1, 0.25, 0.4] {
        for name in GATES {
            let series = gate_series(name, 5.0, 1.0 / temperature, &times)?;
            let p = envelope_peak(&series, default_envelope_window(&series, ENVELOPE_SMOOTHING)?)?;
            ok &= p.f > 0.8;
            low_t.push(p.f);
        }
    }
    let min = low_t.iter().copied().fold(f64::INFINITY, f64::min);
    out.push(("envelope peak fidelity above 0.8 for T<0.5", blocking(ok, format!("min F* {min:.4} over T in {{0.1,0.25,0.4}}"))));
    Ok(out)
}

fn drop_rate_shape() -> Result<Vec<(&'static str, Outcome)>> {
    let temperatures = [0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0];
    // t₁ must be resolved finely: a one-step shift of t₁ at Δt = 0.002
    // moves the rate more than the whole temperature dependence does
    let times = uniform_grid(0.0, 1.0, 1e-5)?;
    let mut ok = true;
    let mut notes = Vec::new();
    for name in GATES {
        let rates = temperatures
            .iter()
            .map(|&t| gate_series(name, 5.0, 1.0 / t, &times).and_then(|s| drop_rate(&s)).map(f64::abs))
            .collect::<Result<Vec<_>>>()?;
        let monotone = rates.windows(2).all(|w| w[1] >= w[0] - 1e-12);
        let nonzero = rates[0] > 1e-4;
        ok &= monotone && nonzero;
        notes.push(format!("{name} |rate| {:.4}..{:.4}", rates[0], rates[rates.len() - 1]));
    }
    Ok(vec![("drop-rate shape", blocking(ok, notes.join(", ")))])
}

fn late_maximum(series: &FidelitySeries, lo: f64, hi: f64) -> f64 {
    series.points().filter(|(t, _)| (lo..=hi).contains(t)).map(|(_, f)| f).fold(f64::NEG_INFINITY, f64::max)
}

fn phase_vs_amplitude() -> Result<Vec<(&'static str, Outcome)>> {
    let (eps, g, temperature) = (5.0, 0.1, 1.0);
    let times = uniform_grid(0.0, 25.0, 0.002)?;
    let mut ok = true;
    let mut notes = Vec::new();
    for name in GATES {
        let target = FidelityTarget::Gate(Box::new(gate(name)));
        let late = |theta: f64| -> Result<f64> {
            let mode = BosonMode::new(2.0 * eps, g, theta, 10)?;
            let c = converged_resonant_series(&target, eps, &mode, 1.0 / temperature, &times, 1e-6, 80)?;
            Ok(late_maximum(&c.series, 15.0, 25.0))
        };
        let (phase, amplitude) = (late(0.0)?, late(PI / 2.0)?);
        ok &= phase > amplitude;
        notes.push(format!("{name} {phase:.4}>{amplitude:.4}"));
    }
    Ok(vec![("phase noise beats amplitude noise late", blocking(ok, notes.join(", ")))])
}

const J: f64 = 5.0;
const THRESHOLD_CUTOFF: usize = 30;

fn thermal_curve(name: &str, theta: f64, temperature: f64) -> Result<FidelitySeries> {
    let target = FidelityTarget::Gate(Box::new(gate(name)));
    let g = uniform_grid(0.0, 4.0, 0.1)?;
    let grid = thermal_gate_fidelity_grid(&target, J, theta, &g, &[temperature], THRESHOLD_CUTOFF)?;
    FidelitySeries::new("g", g, grid.iter().map(|r| r[0]).collect())
}

fn thresholds() -> Result<Vec<(&'static str, Outcome)>> {
    let mut out = Vec::new();
    let id = thermal_curve("identity5", PI / 2.0, 1.0)?;
    let g_id = threshold_scan(&id)?;
    out.push((
        "identity5 threshold g_c = 2.9 +- 0.3",
        blocking(g_id.is_some_and(|g| (g - 2.9).abs() <= 0.3 + 1e-9), format!("g_c = {g_id:?}")),
    ));

    let h8 = thermal_curve("hadamard8", PI / 2.0, 1.0)?;
    let verdict = steepest_point(&h8)?;
    out.push((
        "hadamard8 shows a sudden drop",
        blocking(verdict.significant, format!("max slope {:.4} vs median {:.4}", verdict.max_slope, verdict.median_slope)),
    ));
    out.push((
        "hadamard8 threshold g_c = 2.4 +- 0.3",
        info((verdict.g - 2.4).abs() <= 0.3 + 1e-9, format!("steepest point g = {:.1}", verdict.g)),
    ));

    let target = FidelityTarget::Gate(Box::new(gate("identity5")));
    for (g, reference) in [(0.0, 0.9874), (2.4, 0.9203)] {
        let mode = BosonMode::new(2.0 * J, g, PI / 4.0, THRESHOLD_CUTOFF)?;
        let f = thermal_fidelities(&target, J, &mode, &[1.83])?[0];
        let name = if g == 0.0 { "point value at g=0, T=1.83" } else { "point value at g=2.4, T=1.83" };
        out.push((name, info((f - reference).abs() <= 0.02, format!("F = {f:.4} vs {reference} +- 0.02"))));
    }
    Ok(out)
}

fn small_coupling_robustness() -> Result<Vec<(&'static str, Outcome)>> {
    let target = FidelityTarget::Gate(Box::new(gate("identity5")));
    let temperatures = uniform_grid(0.1, 2.0, 0.1)?;
    let grid = thermal_gate_fidelity_grid(&target, J, PI / 2.0, &[0.0, 0.3], &temperatures, THRESHOLD_CUTOFF)?;
    let worst = grid[0].iter().zip(&grid[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(vec![("small-g robustness", blocking(worst < 0.02, format!("max |F(0.3)-F(0)| {worst:.2e}, tol 0.02")))])
}

fn size_scaling() -> Result<Vec<(&'static str, Outcome)>> {
    let (eps, g, temperature) = (5.0, 0.1, 1.0);
    let times = uniform_grid(0.0, 2.0, 0.002)?;
    let mut points = Vec::new();
    for n in 3..=7 {
        let target = FidelityTarget::Cluster(ClusterGraph::linear_chain(n)?);
        let mode = BosonMode::new(2.0 * eps, g, PI / 2.0, 20)?;
        let series = resonant_fidelity_series(&target, eps, &mode, 1.0 / temperature, &times)?;
        let first = find_peaks(&series)?.first().copied().ok_or_else(|| {
            cluster_decay::Error::NoPeak(format!(" for n={n}"))
        })?;
        points.push((n as f64, first.f));
    }
    let fit = size_scaling_fit(&points)?;
    let values = points.iter().map(|(n, f)| format!("{n}:{f:.5}")).collect::<Vec<_>>().join(" ");
    Ok(vec![(
        "linear size scaling",
        blocking(
            fit.linear_residual < fit.exponential_residual,
            format!("{values}; residual linear {:.2e} vs exponential {:.2e}", fit.linear_residual, fit.exponential_residual),
        ),
    )])
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters from the default harness
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [(&str, Criterion); 12] = [
        ("oracle equivalence", oracle_equivalence),
        ("kernel closed forms", kernel_closed_forms),
        ("spectrum structure", spectrum_structure),
        ("gate self-consistency", gate_self_consistency),
        ("invariance", invariance),
        ("noiseless peaks", noiseless_peaks),
        ("envelope peaks", envelope_peaks),
        ("drop-rate shape", drop_rate_shape),
        ("phase vs amplitude", phase_vs_amplitude),
        ("thresholds", thresholds),
        ("small-g robustness", small_coupling_robustness),
        ("size scaling", size_scaling),
    ];
    // an optional positional argument selects criteria by substring
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut blocking_failures = 0;
    for (group, run) in criteria {
        if filter.as_deref().is_some_and(|f| !group.contains(f)) {
            continue;
        }
        let start = Instant::now();
        let outcomes = run().unwrap_or_else(|e| vec![(group, blocking(false, format!("error: {e}")))]);
        let secs = start.elapsed().as_secs_f64();
        for (name, o) in outcomes {
            let tag = match o.kind {
                Kind::Blocking => "",
                Kind::Informational => " [informational]",
                Kind::KnownFailure => " [known failure, see README]",
            };
            println!("{} {name}{tag}: {} ({secs:.1}s)", if o.passed { "PASS" } else { "FAIL" }, o.detail);
            if !o.passed && o.kind == Kind::Blocking {
                blocking_failures += 1;
            }
        }
    }
    if blocking_failures > 0 {
        println!("{blocking_failures} blocking criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all blocking criteria passed");
        ExitCode::SUCCESS
    }
}
