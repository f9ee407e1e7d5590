//! Command-line driver: configuration, experiment orchestration and CSV output.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{steepest_point, uniform_grid, FidelitySeries};
use crate::cluster::{cluster_state, ClusterGraph};
use crate::config::{format_coordinate, parse_number, Config};
use crate::dephasing::{
    evolve_dephasing, gamma_ohmic, kernel_discrete, kernel_ohmic, theta_ohmic, DephasingFidelity, DephasingKernel,
    DiscreteSpectrum, OhmicSpectrum, QubitEnergies,
};
use crate::error::{Error, Result};
use crate::gate::{builtin_specs, FidelityTarget, GateSpec, MeasurementStep, Resource, DEFAULT_ZETA};
use crate::linalg::{trace_distance, Propagator};
use crate::numeric::{
    build_qubit_boson_hamiltonian, converged_resonant_series, initial_joint_state, reduced_qubit_state,
    thermal_fidelities, thermal_gate_fidelity_grid, BosonMode,
};
use crate::quadrature::{gamma_integral, theta_integral};
use crate::spectrum::{cluster_levels, stabilizer_levels};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const THREADS_ENV: &str = "CLUSTER_DECAY_THREADS";

#[derive(Parser, Debug)]
#[command(name = "cluster-decay", version, about = "Fidelity of MBQC cluster states and teleported gates under bosonic noise")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Exact ohmic pure-dephasing fidelity F(t), one file per (target, eps)
    DephasingScan(Common),
    /// Single-mode phase/amplitude noise dynamics, one file per (target, theta)
    NumericScan(Common),
    /// Thermal-state fidelity of the boson-coupled cluster Hamiltonian on a (g, T) grid
    ThermalScan(Common),
    /// Critical coupling g_c of the thermal fidelity drop per target
    Threshold(Common),
    /// Run the built-in oracle checks
    Selftest {
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Flat key=value configuration file
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one configuration key; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Comma-separated targets: cluster, identity5, zrot5, hadamard8, cz, custom
    #[arg(long)]
    pub gate: Option<String>,
    /// Rotation angle of zrot5 (accepts multiples of pi, e.g. pi/8)
    #[arg(long)]
    pub zeta: Option<String>,
    /// Graph literal for the cluster target, e.g. "n=5; edges=1-2,2-3,3-4,4-5"
    #[arg(long)]
    pub graph: Option<String>,
    /// Output directory for scans, output file for threshold ("-" for stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failure classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Computation(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Computation(_) => EXIT_FAILURE,
        }
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn computation(e: Error) -> Failure {
    Failure::Computation(e.to_string())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Err(f) = configure_threads() {
        eprintln!("error: {}", describe(&f));
        return f.code();
    }
    let result = match cli.command {
        Command::DephasingScan(c) => plan(&c, dephasing_plan).and_then(|(cfg, p)| write_outputs(&c, run_dephasing(&cfg, &p)?)),
        Command::NumericScan(c) => plan(&c, numeric_plan).and_then(|(cfg, p)| write_outputs(&c, run_numeric(&cfg, &p)?)),
        Command::ThermalScan(c) => plan(&c, thermal_plan).and_then(|(cfg, p)| write_outputs(&c, run_thermal(&cfg, &p)?)),
        Command::Threshold(c) => plan(&c, threshold_plan).and_then(|(cfg, p)| write_report(&c, run_threshold(&cfg, &p)?)),
        Command::Selftest { inject_fault } => run_selftest_command(inject_fault.as_deref()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", describe(&f));
            f.code()
        }
    }
}

fn describe(f: &Failure) -> &str {
    match f {
        Failure::Usage(m) | Failure::Computation(m) => m,
    }
}

fn configure_threads() -> std::result::Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    #[cfg(feature = "parallel")]
    {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

type Planner<P> = fn(&mut Config) -> Result<P>;

fn plan<P>(common: &Common, planner: Planner<P>) -> std::result::Result<(Config, P), Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            Config::parse(&text).map_err(usage)?
        }
        None => Config::default(),
    };
    for (key, value) in [("gate", &common.gate), ("zeta", &common.zeta), ("graph", &common.graph)] {
        if let Some(v) = value {
            cfg.set(key, v).map_err(usage)?;
        }
    }
    cfg.apply_overrides(&common.set).map_err(usage)?;
    let p = planner(&mut cfg).map_err(usage)?;
    Ok((cfg, p))
}

const CUSTOM_KEYS: [&str; 4] = ["custom.name", "custom.graph", "custom.outputs", "custom.steps"];

// the cluster graph is echoed only when a cluster target reads it
fn default_graph(cfg: &mut Config, n: usize) {
    if cfg.str_list("gate").is_some_and(|g| g.iter().any(|t| t == "cluster")) {
        cfg.default_value("graph", &ClusterGraph::linear_chain(n).expect("small chain").to_string());
    }
}

fn parse_targets(cfg: &Config) -> Result<Vec<FidelityTarget>> {
    let names = cfg.str_list("gate").unwrap_or_default();
    if names.is_empty() {
        return crate::error::invalid("`gate` lists no targets");
    }
    let zeta = cfg.f64("zeta")?.unwrap_or(DEFAULT_ZETA);
    names
        .iter()
        .map(|name| match name.as_str() {
            "cluster" => {
                let g: ClusterGraph = cfg.get("graph").unwrap_or_default().parse()?;
                Ok(FidelityTarget::Cluster(g))
            }
            "custom" => Ok(FidelityTarget::Gate(Box::new(parse_custom(cfg)?))),
            other => Ok(FidelityTarget::Gate(Box::new(GateSpec::builtin(other, zeta)?))),
        })
        .collect()
}

/// Custom pattern from `custom.graph`, `custom.outputs` and `custom.steps`;
/// steps are `site:x` or `site:r:zeta[:condition_site]`, comma-separated.
fn parse_custom(cfg: &Config) -> Result<GateSpec> {
    let need = |k: &str| cfg.get(k).ok_or_else(|| Error::InvalidInput(format!("custom gate needs `{k}`")));
    let graph: ClusterGraph = need("custom.graph")?.parse()?;
    let outputs = need("custom.outputs")?
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| Error::InvalidInput(format!("bad output site `{s}`"))))
        .collect::<Result<Vec<_>>>()?;
    let mut steps = Vec::new();
    for item in need("custom.steps")?.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').map(str::trim).collect();
        let site: usize = parts[0].parse().map_err(|_| Error::InvalidInput(format!("bad step `{item}`")))?;
        let step = match parts.get(1).copied() {
            Some("x") | Some("X") if parts.len() == 2 => MeasurementStep::x(site),
            Some("r") | Some("R") if parts.len() == 3 || parts.len() == 4 => {
                let zeta = parse_number(parts[2])?;
                let condition = match parts.get(3) {
                    Some(c) => Some(c.parse().map_err(|_| Error::InvalidInput(format!("bad condition in `{item}`")))?),
                    None => None,
                };
                MeasurementStep::rotated(site, zeta, condition)
            }
            _ => return crate::error::invalid(format!("bad step `{item}`; use site:x or site:r:zeta[:cond]")),
        };
        steps.push(step);
    }
    let name = cfg.get("custom.name").unwrap_or("custom");
    GateSpec::build(name, graph, outputs, steps, Resource::FromPattern, None)
}

fn temperature_beta(cfg: &Config) -> Result<f64> {
    match (cfg.f64("beta")?, cfg.f64("T")?) {
        (Some(_), Some(_)) => crate::error::invalid("give either `beta` or `T`, not both"),
        (Some(b), None) if b > 0.0 => Ok(b),
        (None, Some(t)) if t > 0.0 => Ok(1.0 / t),
        (None, Some(t)) if t == 0.0 => Ok(f64::INFINITY),
        _ => crate::error::invalid("temperature must be positive"),
    }
}

fn time_grid(cfg: &Config) -> Result<Vec<f64>> {
    let stop = cfg.require_f64("t_stop")?;
    let step = cfg.require_f64("t_step")?;
    let grid = uniform_grid(0.0, stop, step)?;
    if grid.len() < 2 {
        return crate::error::invalid("time grid is empty: t_stop must be at least t_step");
    }
    Ok(grid)
}

fn g_grid(cfg: &Config) -> Result<Vec<f64>> {
    let grid = uniform_grid(cfg.require_f64("g_start")?, cfg.require_f64("g_stop")?, cfg.require_f64("g_step")?)?;
    if grid.len() < 2 {
        return crate::error::invalid("g grid is empty");
    }
    Ok(grid)
}

fn ascending(name: &str, v: &[f64]) -> Result<()> {
    if v.windows(2).any(|w| !(w[1] > w[0])) {
        return crate::error::invalid(format!("`{name}` must be strictly ascending"));
    }
    Ok(())
}

pub struct DephasingPlan {
    targets: Vec<FidelityTarget>,
    eps: Vec<f64>,
    spectrum: OhmicSpectrum,
    beta: f64,
    times: Vec<f64>,
}

fn with_custom(keys: &[&'static str]) -> Vec<&'static str> {
    keys.iter().copied().chain(CUSTOM_KEYS).collect()
}

fn dephasing_plan(cfg: &mut Config) -> Result<DephasingPlan> {
    cfg.check_keys(&with_custom(&["graph", "gate", "zeta", "eps", "eta", "omega_c", "beta", "T", "t_stop", "t_step"]))?;
    cfg.default_value("gate", "cluster");
    default_graph(cfg, 7);
    cfg.default_value("zeta", "pi/8");
    cfg.default_value("eps", "0,0.9,3");
    cfg.default_value("eta", "1e-3");
    cfg.default_value("omega_c", "100");
    if !cfg.contains("T") {
        cfg.default_value("beta", "pi");
    }
    cfg.default_value("t_stop", "25");
    cfg.default_value("t_step", "0.002");
    let beta = temperature_beta(cfg)?;
    if beta.is_infinite() {
        return crate::error::invalid("dephasing scan needs T > 0");
    }
    Ok(DephasingPlan {
        targets: parse_targets(cfg)?,
        eps: cfg.require_f64_list("eps")?,
        spectrum: OhmicSpectrum::new(cfg.require_f64("eta")?, cfg.require_f64("omega_c")?)?,
        beta,
        times: time_grid(cfg)?,
    })
}

/// A named CSV document.
pub struct Document {
    pub name: String,
    pub contents: String,
}

fn csv_document(name: String, cfg: &Config, notes: &[String], header: &str, rows: Vec<String>) -> Document {
    let mut s = String::new();
    let _ = writeln!(s, "# params: {}", cfg.canonical());
    for note in notes {
        let _ = writeln!(s, "# {note}");
    }
    let _ = writeln!(s, "{header}");
    for r in rows {
        let _ = writeln!(s, "{r}");
    }
    Document { name, contents: s }
}

fn value_column(target: &FidelityTarget) -> String {
    match target {
        FidelityTarget::Cluster(_) => "F".to_string(),
        FidelityTarget::Gate(spec) => format!("F_{}", spec.name()),
    }
}

fn series_rows(series: &FidelitySeries) -> Vec<String> {
    series.points().map(|(t, f)| format!("{},{f:.12}", format_coordinate(t))).collect()
}

fn run_dephasing(cfg: &Config, p: &DephasingPlan) -> std::result::Result<Vec<Document>, Failure> {
    let jobs: Vec<(&FidelityTarget, f64)> = p.targets.iter().flat_map(|t| p.eps.iter().map(move |&e| (t, e))).collect();
    let results = crate::par_map(&jobs, |&(target, eps)| -> Result<Document> {
        let n = target.graph().n();
        let energies = QubitEnergies::uniform(n, eps)?;
        let psi = cluster_state(target.graph());
        let fid = DephasingFidelity::new(&psi, &target.witness(), &energies)?;
        let values = p
            .times
            .iter()
            .map(|&t| kernel_ohmic(t, p.beta, &p.spectrum).map(|k| fid.evaluate(k, t)))
            .collect::<Result<Vec<_>>>()?;
        let series = FidelitySeries::new("t", p.times.clone(), values)?;
        let name = format!("dephasing_{}_eps{}.csv", target.name(), format_coordinate(eps));
        let note = format!("target={} eps={}", target.name(), format_coordinate(eps));
        Ok(csv_document(name, cfg, &[note], &format!("t,{}", value_column(target)), series_rows(&series)))
    });
    results.into_iter().collect::<Result<Vec<_>>>().map_err(computation)
}

pub struct NumericPlan {
    targets: Vec<FidelityTarget>,
    eps: f64,
    g: f64,
    beta: f64,
    thetas: Vec<f64>,
    cutoff: usize,
    tol: f64,
    max_cutoff: usize,
    times: Vec<f64>,
}

fn numeric_plan(cfg: &mut Config) -> Result<NumericPlan> {
    cfg.check_keys(&with_custom(&[
        "graph", "gate", "zeta", "eps", "g", "beta", "T", "theta", "cutoff", "cutoff_tol", "max_cutoff", "t_stop", "t_step",
    ]))?;
    cfg.default_value("gate", "cluster");
    default_graph(cfg, 5);
    cfg.default_value("zeta", "pi/8");
    cfg.default_value("eps", "5");
    cfg.default_value("g", "0.1");
    if !cfg.contains("beta") {
        cfg.default_value("T", "1");
    }
    cfg.default_value("theta", "0,pi/4,pi/2");
    cfg.default_value("cutoff", "20");
    cfg.default_value("cutoff_tol", "1e-6");
    cfg.default_value("max_cutoff", "160");
    cfg.default_value("t_stop", "25");
    cfg.default_value("t_step", "0.002");
    let eps = cfg.require_f64("eps")?;
    let g = cfg.require_f64("g")?;
    let thetas = cfg.require_f64_list("theta")?;
    let cutoff = cfg.usize("cutoff")?.unwrap_or(20);
    for &theta in &thetas {
        BosonMode::new(2.0 * eps.abs().max(1e-300), g, theta, cutoff.max(1))?;
    }
    if !(eps > 0.0) {
        return crate::error::invalid("`eps` must be positive for the resonant model");
    }
    if cutoff == 0 {
        return crate::error::invalid("`cutoff` must be at least 1");
    }
    Ok(NumericPlan {
        targets: parse_targets(cfg)?,
        eps,
        g,
        beta: temperature_beta(cfg)?,
        thetas,
        cutoff,
        tol: cfg.require_f64("cutoff_tol")?,
        max_cutoff: cfg.usize("max_cutoff")?.unwrap_or(160),
        times: time_grid(cfg)?,
    })
}

fn run_numeric(cfg: &Config, p: &NumericPlan) -> std::result::Result<Vec<Document>, Failure> {
    let jobs: Vec<(&FidelityTarget, f64)> = p.targets.iter().flat_map(|t| p.thetas.iter().map(move |&th| (t, th))).collect();
    let results = crate::par_map(&jobs, |&(target, theta)| -> Result<Document> {
        let mode = BosonMode::new(2.0 * p.eps, p.g, theta, p.cutoff)?;
        let c = converged_resonant_series(target, p.eps, &mode, p.beta, &p.times, p.tol, p.max_cutoff)?;
        let name = format!("numeric_{}_theta{}.csv", target.name(), format_coordinate(theta));
        let notes = [
            format!("target={} theta={}", target.name(), format_coordinate(theta)),
            format!("cutoff={} max_change_on_doubling={:.3e}", c.cutoff, c.max_change),
        ];
        Ok(csv_document(name, cfg, &notes, &format!("t,{}", value_column(target)), series_rows(&c.series)))
    });
    results.into_iter().collect::<Result<Vec<_>>>().map_err(computation)
}

pub struct ThermalPlan {
    targets: Vec<FidelityTarget>,
    j: f64,
    theta: f64,
    g: Vec<f64>,
    temperatures: Vec<f64>,
    cutoff: usize,
}

fn thermal_common(cfg: &mut Config, t_default: &str, gate_default: &str) -> Result<ThermalPlan> {
    cfg.check_keys(&with_custom(&[
        "graph", "gate", "zeta", "J", "theta", "g_start", "g_stop", "g_step", "T", "cutoff", "cutoff_check",
    ]))?;
    cfg.default_value("gate", gate_default);
    default_graph(cfg, 5);
    cfg.default_value("zeta", "pi/8");
    cfg.default_value("J", "5");
    cfg.default_value("theta", "pi/2");
    cfg.default_value("g_start", "0");
    cfg.default_value("g_stop", "4");
    cfg.default_value("g_step", "0.1");
    cfg.default_value("T", t_default);
    cfg.default_value("cutoff", "30");
    let j = cfg.require_f64("J")?;
    if !(j > 0.0) {
        return crate::error::invalid("`J` must be positive");
    }
    let theta = cfg.require_f64("theta")?;
    let g = g_grid(cfg)?;
    let temperatures = cfg.require_f64_list("T")?;
    ascending("T", &temperatures)?;
    if temperatures.iter().any(|&t| t < 0.0) {
        return crate::error::invalid("temperatures must be non-negative");
    }
    let cutoff = cfg.usize("cutoff")?.unwrap_or(30);
    BosonMode::new(2.0 * j, g[0].max(0.0), theta, cutoff)?;
    Ok(ThermalPlan { targets: parse_targets(cfg)?, j, theta, g, temperatures, cutoff })
}

fn thermal_plan(cfg: &mut Config) -> Result<ThermalPlan> {
    if cfg.contains("cutoff_check") {
        return crate::error::invalid("`cutoff_check` applies to the threshold command only");
    }
    thermal_common(cfg, "0.1,0.5,1,1.5,2", "identity5")
}

fn run_thermal(cfg: &Config, p: &ThermalPlan) -> std::result::Result<Vec<Document>, Failure> {
    let mut docs = Vec::new();
    for target in &p.targets {
        let grid = thermal_gate_fidelity_grid(target, p.j, p.theta, &p.g, &p.temperatures, p.cutoff).map_err(computation)?;
        let mut rows = Vec::new();
        for (g, row) in p.g.iter().zip(&grid) {
            for (t, f) in p.temperatures.iter().zip(row) {
                rows.push(format!("{},{},{f:.12}", format_coordinate(*g), format_coordinate(*t)));
            }
        }
        let note = format!("target={}", target.name());
        docs.push(csv_document(format!("thermal_{}.csv", target.name()), cfg, &[note], "g,T,F", rows));
    }
    Ok(docs)
}

pub struct ThresholdPlan {
    thermal: ThermalPlan,
    cutoff_check: bool,
}

fn threshold_plan(cfg: &mut Config) -> Result<ThresholdPlan> {
    let cutoff_check = cfg.bool("cutoff_check")?.unwrap_or(true);
    let thermal = thermal_common(cfg, "1", "identity5,hadamard8")?;
    if thermal.temperatures.len() != 1 {
        return crate::error::invalid("threshold takes a single temperature `T`");
    }
    Ok(ThresholdPlan { thermal, cutoff_check })
}

/// Cutoff-doubling check on the thermal curve at the largest coupling.
pub const THERMAL_CUTOFF_TOL: f64 = 1e-4;

fn run_threshold(cfg: &Config, p: &ThresholdPlan) -> std::result::Result<Document, Failure> {
    let t = &p.thermal;
    let mut rows = Vec::new();
    for target in &t.targets {
        let grid = thermal_gate_fidelity_grid(target, t.j, t.theta, &t.g, &t.temperatures, t.cutoff).map_err(computation)?;
        let curve: Vec<f64> = grid.iter().map(|r| r[0]).collect();
        let series = FidelitySeries::new("g", t.g.clone(), curve.clone()).map_err(computation)?;
        let verdict = steepest_point(&series).map_err(computation)?;
        let delta = if p.cutoff_check {
            let g_max = *t.g.last().expect("non-empty grid");
            let mode = BosonMode::new(2.0 * t.j, g_max, t.theta, 2 * t.cutoff).map_err(computation)?;
            let doubled = thermal_fidelities(target, t.j, &mode, &t.temperatures).map_err(computation)?[0];
            let d = (doubled - curve[curve.len() - 1]).abs();
            if d > THERMAL_CUTOFF_TOL {
                return Err(Failure::Computation(format!(
                    "{}: doubling the cutoff changes F at g={} by {d:.3e}",
                    target.name(),
                    format_coordinate(g_max)
                )));
            }
            format!("{d:.3e}")
        } else {
            "skipped".to_string()
        };
        let g_c = if verdict.significant { format_coordinate(verdict.g) } else { "none".to_string() };
        rows.push(format!(
            "{},{g_c},{},{:.6},{:.6},{},{delta}",
            target.name(),
            format_coordinate(verdict.g),
            verdict.max_slope,
            verdict.median_slope,
            verdict.significant
        ));
    }
    Ok(csv_document(
        "threshold.csv".into(),
        cfg,
        &[],
        "target,g_c,steepest_g,max_slope,median_slope,significant,cutoff_delta",
        rows,
    ))
}

fn write_outputs(common: &Common, docs: Vec<Document>) -> std::result::Result<(), Failure> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    if dir.as_os_str() == "-" {
        for d in docs {
            print!("{}", d.contents);
        }
        return Ok(());
    }
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Computation(format!("cannot create {}: {e}", dir.display())))?;
    for d in docs {
        let path = dir.join(&d.name);
        write_file(&path, &d.contents)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn write_report(common: &Common, doc: Document) -> std::result::Result<(), Failure> {
    match &common.out {
        Some(path) if path.as_os_str() != "-" => write_file(path, &doc.contents),
        _ => {
            print!("{}", doc.contents);
            Ok(())
        }
    }
}

fn write_file(path: &Path, contents: &str) -> std::result::Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::Computation(format!("cannot write {}: {e}", path.display())))
}

/// Deliberate corruption used to confirm the self-test can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    GammaSign,
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, result: Result<(bool, String)>) -> Check {
    match result {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: format!("error: {e}") },
    }
}

fn corrupt(k: DephasingKernel, fault: Option<Fault>) -> DephasingKernel {
    match fault {
        Some(Fault::GammaSign) => DephasingKernel { gamma: -k.gamma, theta: k.theta },
        None => k,
    }
}

/// Oracle checks: exact dephasing against dense dynamics, closed-form
/// kernels against quadrature, cluster spectrum degeneracies, gate
/// self-consistency and the one-qubit closed form.
pub fn selftest(fault: Option<Fault>) -> Vec<Check> {
    let mut out = Vec::new();
    out.push(check("exact dephasing matches dense single-mode dynamics", (|| {
        let (omega, coupling, cutoff) = (3.0, 0.2, 40);
        let energies = [0.7, 1.1, 1.3];
        let spectrum = DiscreteSpectrum::single(omega, coupling)?;
        let times = uniform_grid(0.0, 10.0, 10.0 / 49.0)?;
        let mut worst: f64 = 0.0;
        for n in 1..=3 {
            let g = ClusterGraph::linear_chain(n)?;
            let eps = QubitEnergies::new(energies[..n].to_vec())?;
            let mode = BosonMode::new(omega, coupling, 0.0, cutoff)?;
            let prop = Propagator::new(&build_qubit_boson_hamiltonian(&eps, &mode)?);
            for beta in [0.5, 2.0] {
                let rho0 = initial_joint_state(&g, &mode, beta)?;
                for &t in &times {
                    let dense = reduced_qubit_state(&prop.evolve(&rho0, t)?, n, cutoff)?;
                    let kernel = corrupt(kernel_discrete(&spectrum, t, beta)?, fault);
                    let exact = evolve_dephasing(&cluster_state(&g).projector(), &eps, kernel, t)?;
                    worst = worst.max(trace_distance(&dense, &exact)?);
                }
            }
        }
        Ok((worst < 1e-6, format!("max trace distance {worst:.2e}")))
    })()));
    out.push(check("ohmic kernels match quadrature", (|| {
        let s = OhmicSpectrum::new(1e-3, 100.0)?;
        let mut worst: f64 = 0.0;
        for k in 1..=20 {
            let t = 0.5 * k as f64;
            for beta in [0.1, 0.5, std::f64::consts::PI, 10.0, 100.0] {
                let mut gamma = gamma_ohmic(t, beta, &s)?;
                if fault == Some(Fault::GammaSign) {
                    gamma = -gamma;
                }
                let q = gamma_integral(t, beta, &s)?.value;
                worst = worst.max(((gamma - q) / q).abs());
            }
            let q = theta_integral(t, &s)?.value;
            worst = worst.max(((theta_ohmic(t, &s)? - q) / q).abs());
        }
        Ok((worst < 1e-6, format!("max relative error {worst:.2e}")))
    })()));
    out.push(check("cluster spectrum has binomial degeneracies", (|| {
        for n in 3..=7 {
            let got = cluster_levels(&ClusterGraph::linear_chain(n)?, 1.0)?;
            let want = stabilizer_levels(n, 1.0);
            let same = got.len() == want.len()
                && got.iter().zip(&want).all(|(a, b)| a.multiplicity == b.multiplicity && (a.energy - b.energy).abs() < 1e-8);
            if !same {
                return Ok((false, format!("n={n}: levels differ")));
            }
        }
        Ok((true, "n=3..7".into()))
    })()));
    out.push(check("builtin gates teleport perfectly", (|| {
        let specs = builtin_specs(DEFAULT_ZETA)?;
        Ok((true, format!("{} gates", specs.len())))
    })()));
    out.push(check("one-qubit dephasing closed form", (|| {
        let g = ClusterGraph::new(1, [])?;
        let s = OhmicSpectrum::new(1e-3, 100.0)?;
        let eps = 0.9;
        let energies = QubitEnergies::uniform(1, eps)?;
        let plus = cluster_state(&g);
        let mut worst: f64 = 0.0;
        for k in 0..=40 {
            let t = 0.25 * k as f64;
            let kernel = corrupt(kernel_ohmic(t, 1.0, &s)?, fault);
            let rho = evolve_dephasing(&plus.projector(), &energies, kernel, t)?;
            let f = crate::linalg::fidelity_pure(&rho, &plus).unwrap_or(f64::NAN);
            let closed = 0.5 * (1.0 + (-4.0 * kernel.gamma).exp() * (2.0 * eps * t).cos());
            worst = worst.max((f - closed).abs()).max(if (0.0..=1.0).contains(&f) { 0.0 } else { 1.0 });
        }
        Ok((worst < 1e-12, format!("max deviation {worst:.2e}")))
    })()));
    out
}

fn run_selftest_command(fault: Option<&str>) -> std::result::Result<(), Failure> {
    let fault = match fault {
        None => None,
        Some("gamma-sign") => Some(Fault::GammaSign),
        Some(other) => return Err(Failure::Usage(format!("unknown fault `{other}`"))),
    };
    let checks = selftest(fault);
    for c in &checks {
        println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Computation(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}
