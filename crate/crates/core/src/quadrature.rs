//! Adaptive Gauss–Kronrod quadrature and the integral forms of the ohmic
//! dephasing kernels. The integrals serve as an independent check on the
//! closed forms in [`crate::dephasing`].

use crate::dephasing::OhmicSpectrum;
use crate::error::{invalid, Result};

// 15-point Kronrod nodes on [-1, 1] (non-negative half) and weights; the
// embedded 7-point Gauss rule uses every other node.
const XK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy, Debug)]
pub struct QuadratureResult {
    pub value: f64,
    pub error: f64,
}

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, (kronrod - gauss).abs() * half)
}

fn refine(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: (f64, f64), tol: f64, depth: u32) -> QuadratureResult {
    let (value, error) = whole;
    if error <= tol || depth == 0 {
        return QuadratureResult { value, error };
    }
    let mid = 0.5 * (a + b);
    let left = refine(f, a, mid, gk15(f, a, mid), 0.5 * tol, depth - 1);
    let right = refine(f, mid, b, gk15(f, mid, b), 0.5 * tol, depth - 1);
    QuadratureResult { value: left.value + right.value, error: left.error + right.error }
}

/// Integrates `f` over `[a, b]` split into panels no wider than `panel`,
/// bisecting each panel until its Gauss–Kronrod error estimate meets the
/// panel's share of `rel_tol · ∫|f|`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panel: f64, rel_tol: f64) -> Result<QuadratureResult> {
    if !(b > a) || !(panel > 0.0) || !(rel_tol > 0.0) {
        return invalid("quadrature needs a < b, panel > 0, rel_tol > 0");
    }
    let count = ((b - a) / panel).ceil().max(1.0) as usize;
    let width = (b - a) / count as f64;
    let coarse: Vec<(f64, f64)> = (0..count)
        .map(|k| {
            let lo = a + k as f64 * width;
            gk15(&f, lo, lo + width)
        })
        .collect();
    let scale: f64 = (0..count)
        .map(|k| {
            let lo = a + k as f64 * width;
            gk15(&|x| f(x).abs(), lo, lo + width).0
        })
        .sum();
    let per_panel = rel_tol * scale.max(f64::MIN_POSITIVE) / count as f64;
    let mut total = QuadratureResult { value: 0.0, error: 0.0 };
    for (k, &whole) in coarse.iter().enumerate() {
        let lo = a + k as f64 * width;
        let r = refine(&f, lo, lo + width, whole, per_panel, 40);
        total.value += r.value;
        total.error += r.error;
    }
    Ok(total)
}

const OMEGA_MAX_FACTOR: f64 = 40.0;
const QUAD_REL_TOL: f64 = 1e-11;

// Half of the shorter of the oscillation period and the cutoff scale.
fn panel_width(t: f64, s: &OhmicSpectrum) -> f64 {
    let period = if t > 0.0 { 2.0 * std::f64::consts::PI / t } else { f64::INFINITY };
    0.5 * period.min(s.omega_c())
}

/// `∫₀^{40ω_c} I(ω)(1 − cos ωt)/ω² coth(βω/2) dω` for the ohmic density.
pub fn gamma_integral(t: f64, beta: f64, s: &OhmicSpectrum) -> Result<QuadratureResult> {
    if t < 0.0 || !(beta > 0.0) {
        return invalid("gamma integral needs t >= 0 and beta > 0");
    }
    if t == 0.0 || s.eta() == 0.0 {
        return Ok(QuadratureResult { value: 0.0, error: 0.0 });
    }
    let (eta, wc) = (s.eta(), s.omega_c());
    let f = move |w: f64| {
        let half = 0.5 * w * t;
        let one_minus_cos = 2.0 * half.sin().powi(2);
        let x = 0.5 * beta * w;
        // coth(x)/ω is finite as ω → 0; fold the 1/ω into the expansion there
        let coth_over_w = if x < 1e-6 { 2.0 / (beta * w * w) + beta / 6.0 } else { 1.0 / (x.tanh() * w) };
        eta * (-w / wc).exp() * one_minus_cos * coth_over_w
    };
    integrate(f, 0.0, OMEGA_MAX_FACTOR * wc, panel_width(t, s), QUAD_REL_TOL)
}

/// `∫₀^{40ω_c} I(ω)(ωt − sin ωt)/ω² dω` for the ohmic density.
pub fn theta_integral(t: f64, s: &OhmicSpectrum) -> Result<QuadratureResult> {
    if t < 0.0 {
        return invalid("theta integral needs t >= 0");
    }
    if t == 0.0 || s.eta() == 0.0 {
        return Ok(QuadratureResult { value: 0.0, error: 0.0 });
    }
    let (eta, wc) = (s.eta(), s.omega_c());
    let f = move |w: f64| {
        let x = w * t;
        let x_minus_sin = if x < 0.1 {
            let x2 = x * x;
            x * x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0)))
        } else {
            x - x.sin()
        };
        eta * (-w / wc).exp() * x_minus_sin / w
    };
    integrate(f, 0.0, OMEGA_MAX_FACTOR * wc, panel_width(t, s), QUAD_REL_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x, 0.0, 2.0, 2.0, 1e-12).unwrap();
        assert!((r.value - (64.0 / 6.0 - 6.0)).abs() < 1e-13);
    }

    #[test]
    fn oscillatory_integral() {
        // ∫₀^∞ e^{-x} cos(20x) dx = 1/401
        let r = integrate(|x| (-x).exp() * (20.0 * x).cos(), 0.0, 50.0, 0.1, 1e-12).unwrap();
        assert!((r.value - 1.0 / 401.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_interval() {
        assert!(integrate(|x| x, 1.0, 0.0, 0.1, 1e-9).is_err());
    }
}
