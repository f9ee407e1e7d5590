//! Curve analytics on sampled fidelity series: peaks, drop rate, envelope
//! peak, sudden-drop threshold and size-scaling fits.

use crate::error::{invalid, Error, Result};

/// Tolerance on `F ∈ [0, 1]` for stored series values.
const RANGE_TOL: f64 = 1e-9;

/// A fidelity curve sampled on an ascending parameter grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FidelitySeries {
    parameter: String,
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl FidelitySeries {
    pub fn new(parameter: impl Into<String>, grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), found: values.len() });
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("series grid must be strictly ascending");
        }
        if let Some(v) = values.iter().find(|v| !(**v >= -RANGE_TOL && **v <= 1.0 + RANGE_TOL)) {
            return invalid(format!("fidelity value {v} outside [0, 1]"));
        }
        Ok(Self { parameter: parameter.into(), grid, values })
    }

    pub fn parameter(&self) -> &str {
        &self.parameter
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid.iter().copied().zip(self.values.iter().copied())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub t: f64,
    pub f: f64,
}

/// Samples closer than this compare equal in peak detection, so rounding
/// noise in a flat stretch (e.g. `F ≈ 0` between recurrences) is not
/// reported as a maximum.
pub const PEAK_TOLERANCE: f64 = 1e-12;

/// Strict local maxima by three-point comparison. A flat top counts once,
/// at its first index, when the samples on both sides of it are lower.
pub fn find_peaks(series: &FidelitySeries) -> Result<Vec<Peak>> {
    let v = series.values();
    if v.len() < 3 {
        return invalid(format!("peak search needs at least 3 samples, got {}", v.len()));
    }
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < v.len() {
        if v[i] > v[i - 1] + PEAK_TOLERANCE {
            let mut j = i;
            while j + 1 < v.len() && (v[j + 1] - v[i]).abs() <= PEAK_TOLERANCE {
                j += 1;
            }
            if j + 1 < v.len() && v[j + 1] < v[i] - PEAK_TOLERANCE {
                peaks.push(Peak { index: i, t: series.grid()[i], f: v[i] });
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    Ok(peaks)
}

/// `(F(t₁) - F(0)) / t₁` with `t₁` the first peak after the start of the series.
pub fn drop_rate(series: &FidelitySeries) -> Result<f64> {
    let first = find_peaks(series)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::NoPeak(" for drop rate".into()))?;
    let (t0, f0) = (series.grid()[0], series.values()[0]);
    Ok((first.f - f0) / (first.t - t0))
}

/// Highest peak with `t` inside `[lo, hi]`; ties go to the earliest peak.
pub fn envelope_peak(series: &FidelitySeries, window: (f64, f64)) -> Result<Peak> {
    let (lo, hi) = window;
    let grid = series.grid();
    if !(lo <= hi) || lo < grid[0] || hi > grid[grid.len() - 1] {
        return invalid(format!("window [{lo}, {hi}] outside the series range"));
    }
    let mut best: Option<Peak> = None;
    for p in find_peaks(series)?.into_iter().filter(|p| p.t >= lo && p.t <= hi) {
        if best.is_none_or(|b| p.f > b.f) {
            best = Some(p);
        }
    }
    best.ok_or_else(|| Error::NoPeak(format!(" in window [{lo}, {hi}]")))
}

/// Running maximum over a centred window of `half_width` samples on each side.
pub fn moving_max(values: &[f64], half_width: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half_width);
            let hi = (i + half_width + 1).min(values.len());
            values[lo..hi].iter().copied().fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Default envelope window `[0.5·t_env, 1.5·t_env]`, where `t_env` is the
/// location of the global maximum of the moving-max envelope once its
/// initial decay from `F(0)` has bottomed out. `smoothing` is
/// the moving-max half width in parameter units.
pub fn default_envelope_window(series: &FidelitySeries, smoothing: f64) -> Result<(f64, f64)> {
    let grid = series.grid();
    if grid.len() < 3 {
        return invalid("envelope window needs at least 3 samples");
    }
    let step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    let half = ((smoothing / step).round() as usize).max(1);
    let env = moving_max(series.values(), half);
    // skip the initial decay from F(0) down to the first trough of the envelope
    let mut start = 0;
    while start + 1 < env.len() && env[start + 1] <= env[start] {
        start += 1;
    }
    let mut best = start;
    for k in start..env.len() {
        if env[k] > env[best] {
            best = k;
        }
    }
    // the moving max is flat over a window; report the sample that sets it
    let window = best.saturating_sub(half)..(best + half + 1).min(env.len());
    let source = window
        .into_iter()
        .find(|&k| series.values()[k] == env[best])
        .unwrap_or(best);
    let t_env = grid[source];
    let lo = (0.5 * t_env).max(grid[0]);
    let hi = (1.5 * t_env).min(grid[grid.len() - 1]);
    Ok((lo, hi))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Threshold {
    /// Grid point of the steepest slope.
    pub g: f64,
    pub max_slope: f64,
    pub median_slope: f64,
    /// True when the steepest slope exceeds the significance factor times the median.
    pub significant: bool,
}

pub const THRESHOLD_SIGNIFICANCE: f64 = 5.0;

/// Steepest point of a curve by central differences, with the statistics
/// needed to judge it. `threshold_scan` applies the significance gate.
pub fn steepest_point(series: &FidelitySeries) -> Result<Threshold> {
    let x = series.grid();
    let y = series.values();
    if x.len() < 10 {
        return invalid(format!("threshold scan needs at least 10 points, got {}", x.len()));
    }
    let slopes: Vec<f64> = (0..x.len())
        .map(|i| {
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i + 1 == x.len() {
                (i - 1, i)
            } else {
                (i - 1, i + 1)
            };
            ((y[b] - y[a]) / (x[b] - x[a])).abs()
        })
        .collect();
    let mut best = 0;
    for i in 1..slopes.len() {
        if slopes[i] > slopes[best] {
            best = i;
        }
    }
    let mut sorted = slopes.clone();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 { sorted[m / 2] } else { 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]) };
    let max = slopes[best];
    Ok(Threshold {
        g: x[best],
        max_slope: max,
        median_slope: median,
        significant: max > THRESHOLD_SIGNIFICANCE * median && max > 0.0,
    })
}

/// Critical coupling of a sudden drop, or `None` when no slope stands out.
pub fn threshold_scan(series: &FidelitySeries) -> Result<Option<f64>> {
    let th = steepest_point(series)?;
    Ok(th.significant.then_some(th.g))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Sum of squared residuals of `F ≈ slope·n + intercept`.
    pub linear_residual: f64,
    pub exp_slope: f64,
    pub exp_intercept: f64,
    /// Sum of squared residuals of `F ≈ exp(exp_slope·n + exp_intercept)`,
    /// measured on `F` itself so the two residuals are comparable.
    pub exponential_residual: f64,
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Linear fit of `F` against `n` and a log-linear fit of `ln F` against `n`.
pub fn size_scaling_fit(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 4 {
        return invalid(format!("scaling fit needs at least 4 sizes, got {}", points.len()));
    }
    if points.iter().any(|&(_, f)| !(f > 0.0)) {
        return invalid("scaling fit needs strictly positive fidelities");
    }
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    if y.iter().all(|&v| v == y[0]) {
        return Ok(ScalingFit {
            slope: 0.0,
            intercept: y[0],
            linear_residual: 0.0,
            exp_slope: 0.0,
            exp_intercept: y[0].ln(),
            exponential_residual: 0.0,
        });
    }
    let (slope, intercept) = least_squares(&x, &y);
    let linear_residual = x.iter().zip(&y).map(|(a, b)| (b - (slope * a + intercept)).powi(2)).sum();
    let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (exp_slope, exp_intercept) = least_squares(&x, &logs);
    let exponential_residual = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - (exp_slope * a + exp_intercept).exp()).powi(2))
        .sum();
    Ok(ScalingFit { slope, intercept, linear_residual, exp_slope, exp_intercept, exponential_residual })
}

/// Evenly spaced grid `start, start+step, …` up to `stop` inclusive (within
/// half a step). Points are computed as `start + k·step` so the grid is
/// reproducible bit for bit.
pub fn uniform_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return invalid(format!("bad grid start={start} stop={stop} step={step}"));
    }
    let count = ((stop - start) / step + 0.5).floor() as usize + 1;
    Ok((0..count).map(|k| start + k as f64 * step).collect())
}
