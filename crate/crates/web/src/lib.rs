//! Browser bindings: exact dephasing curves, their envelope statistics and
//! cluster Hamiltonian spectra. Everything here is cheap enough to run on
//! every slider move.

use cluster_decay::analysis::{default_envelope_window, drop_rate, envelope_peak, uniform_grid, FidelitySeries};
use cluster_decay::cluster::{cluster_state, ClusterGraph};
use cluster_decay::dephasing::{kernel_ohmic, DephasingFidelity, OhmicSpectrum, QubitEnergies};
use cluster_decay::gate::{FidelityTarget, GateSpec, DEFAULT_ZETA};
use cluster_decay::spectrum::cluster_levels;
use wasm_bindgen::prelude::*;

/// Longest series the page may request.
pub const MAX_POINTS: usize = 50_000;

const ENVELOPE_SMOOTHING: f64 = 1.0;

fn target(name: &str, graph: &str) -> Result<FidelityTarget, String> {
    if name == "cluster" {
        let g: ClusterGraph = graph.parse().map_err(|e: cluster_decay::Error| e.to_string())?;
        if g.n() > 10 {
            return Err("the demo is limited to 10 qubits".into());
        }
        return Ok(FidelityTarget::Cluster(g));
    }
    GateSpec::builtin(name, DEFAULT_ZETA).map(|s| FidelityTarget::Gate(Box::new(s))).map_err(|e| e.to_string())
}

/// Parameters of one exact dephasing run.
#[derive(Clone, Debug)]
pub struct CurveRequest<'a> {
    pub target: &'a str,
    pub graph: &'a str,
    pub eps: f64,
    pub eta: f64,
    pub omega_c: f64,
    pub temperature: f64,
    pub t_stop: f64,
    pub t_step: f64,
}

pub fn curve(req: &CurveRequest) -> Result<FidelitySeries, String> {
    let target = target(req.target, req.graph)?;
    if !(req.temperature > 0.0) {
        return Err("temperature must be positive".into());
    }
    let times = uniform_grid(0.0, req.t_stop, req.t_step).map_err(|e| e.to_string())?;
    if times.len() > MAX_POINTS {
        return Err(format!("{} points requested, limit is {MAX_POINTS}", times.len()));
    }
    let spectrum = OhmicSpectrum::new(req.eta, req.omega_c).map_err(|e| e.to_string())?;
    let n = target.graph().n();
    let energies = QubitEnergies::uniform(n, req.eps).map_err(|e| e.to_string())?;
    let fid = DephasingFidelity::new(&cluster_state(target.graph()), &target.witness(), &energies).map_err(|e| e.to_string())?;
    let beta = 1.0 / req.temperature;
    let values = times
        .iter()
        .map(|&t| kernel_ohmic(t, beta, &spectrum).map(|k| fid.evaluate(k, t)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    FidelitySeries::new("t", times, values).map_err(|e| e.to_string())
}

/// `[t*, F*, drop rate]`: highest peak of the first envelope period and the
/// initial drop rate. NaN where the series has no peak.
pub fn summary(series: &FidelitySeries) -> [f64; 3] {
    let peak = default_envelope_window(series, ENVELOPE_SMOOTHING).and_then(|w| envelope_peak(series, w));
    let (t, f) = peak.map(|p| (p.t, p.f)).unwrap_or((f64::NAN, f64::NAN));
    [t, f, drop_rate(series).unwrap_or(f64::NAN)]
}

/// Flattened `(energy, multiplicity)` pairs of `H = −J Σ K_i`.
pub fn levels(graph: &str, j: f64) -> Result<Vec<f64>, String> {
    let g: ClusterGraph = graph.parse().map_err(|e: cluster_decay::Error| e.to_string())?;
    if g.n() > 9 {
        return Err("spectra are limited to 9 qubits in the browser".into());
    }
    let levels = cluster_levels(&g, j).map_err(|e| e.to_string())?;
    Ok(levels.iter().flat_map(|l| [l.energy, l.multiplicity as f64]).collect())
}

#[allow(clippy::too_many_arguments)]
fn request<'a>(target: &'a str, graph: &'a str, eps: f64, eta: f64, omega_c: f64, temperature: f64, t_stop: f64, t_step: f64) -> CurveRequest<'a> {
    CurveRequest { target, graph, eps, eta, omega_c, temperature, t_stop, t_step }
}

/// Fidelity values on the grid `0, t_step, …, t_stop`.
#[wasm_bindgen(js_name = fidelityCurve)]
#[allow(clippy::too_many_arguments)]
pub fn fidelity_curve(
    target: &str,
    graph: &str,
    eps: f64,
    eta: f64,
    omega_c: f64,
    temperature: f64,
    t_stop: f64,
    t_step: f64,
) -> Result<Vec<f64>, JsError> {
    curve(&request(target, graph, eps, eta, omega_c, temperature, t_stop, t_step))
        .map(|s| s.values().to_vec())
        .map_err(|e| JsError::new(&e))
}

/// `[t*, F*, drop rate]` for the same parameters as `fidelityCurve`.
#[wasm_bindgen(js_name = curveSummary)]
#[allow(clippy::too_many_arguments)]
pub fn curve_summary(
    target: &str,
    graph: &str,
    eps: f64,
    eta: f64,
    omega_c: f64,
    temperature: f64,
    t_stop: f64,
    t_step: f64,
) -> Result<Vec<f64>, JsError> {
    curve(&request(target, graph, eps, eta, omega_c, temperature, t_stop, t_step))
        .map(|s| summary(&s).to_vec())
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = clusterLevels)]
pub fn cluster_levels_js(graph: &str, j: f64) -> Result<Vec<f64>, JsError> {
    levels(graph, j).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(target: &str) -> CurveRequest<'_> {
        request(target, "n=5; edges=1-2,2-3,3-4,4-5", 5.0, 1e-3, 100.0, 1.0 / std::f64::consts::PI, 12.0, 0.002)
    }

    #[test]
    fn curves_start_at_one() {
        for name in ["cluster", "identity5", "hadamard8", "zrot5", "cz"] {
            let s = curve(&req(name)).unwrap();
            assert!((s.values()[0] - 1.0).abs() < 1e-12, "{name}");
            let [t, f, rate] = summary(&s);
            assert!(t > 0.0 && t <= 12.0, "{name}: t* = {t}");
            assert!(f > 0.0 && f <= 1.0 && rate < 0.0, "{name}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(curve(&request("cluster", "n=3; edges=1-5", 1.0, 1e-3, 100.0, 1.0, 1.0, 0.1)).is_err());
        assert!(curve(&request("toffoli", "", 1.0, 1e-3, 100.0, 1.0, 1.0, 0.1)).is_err());
        assert!(curve(&request("zrot5", "", 1.0, 1e-3, 100.0, 0.0, 1.0, 0.1)).is_err());
        assert!(curve(&request("zrot5", "", 1.0, 1e-3, 100.0, 1.0, 1e4, 1e-3)).is_err());
    }

    #[test]
    fn chain_levels() {
        let l = levels("n=4; edges=1-2,2-3,3-4", 1.0).unwrap();
        let mult: Vec<f64> = l.chunks(2).map(|p| p[1]).collect();
        assert_eq!(mult, vec![1.0, 4.0, 6.0, 4.0, 1.0]);
        assert!((l[0] + 4.0).abs() < 1e-9);
    }
}
