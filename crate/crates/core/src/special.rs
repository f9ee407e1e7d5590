//! Log-gamma on the right half of the complex plane.

use num_complex::Complex64;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln |Γ(x + iy)|` for `x ≥ 1/2`.
pub fn ln_abs_gamma(x: f64, y: f64) -> f64 {
    debug_assert!(x >= 0.5, "ln_abs_gamma needs x >= 1/2");
    let z = Complex64::new(x - 1.0, y);
    let mut sum = Complex64::new(LANCZOS[0], 0.0);
    for (k, &c) in LANCZOS.iter().enumerate().skip(1) {
        sum += c / (z + k as f64);
    }
    let t = z + (LANCZOS_G + 0.5);
    let half_ln_two_pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    half_ln_two_pi + ((z + 0.5) * t.ln()).re - t.re + sum.norm().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn real_factorials() {
        let mut fact = 1.0f64;
        for n in 1..20 {
            let got = ln_abs_gamma(n as f64, 0.0);
            assert!((got - fact.ln()).abs() < 1e-12 * fact.ln().abs().max(1.0), "n={n}");
            fact *= n as f64;
        }
        assert!((ln_abs_gamma(0.5, 0.0) - 0.5 * PI.ln()).abs() < 1e-14);
    }

    #[test]
    fn reflection_identities_on_vertical_lines() {
        for &y in &[1e-3, 0.1, 1.0, 3.7, 12.0, 60.0] {
            // |Γ(1+iy)|² = πy / sinh(πy)
            let lhs = 2.0 * ln_abs_gamma(1.0, y);
            let rhs = (PI * y).ln() - ln_sinh(PI * y);
            assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0), "y={y}: {lhs} vs {rhs}");
            // |Γ(1/2+iy)|² = π / cosh(πy)
            let lhs = 2.0 * ln_abs_gamma(0.5, y);
            let rhs = PI.ln() - ln_cosh(PI * y);
            assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0), "y={y}");
        }
    }

    fn ln_sinh(x: f64) -> f64 {
        x + (-(-2.0 * x).exp_m1()).ln() - std::f64::consts::LN_2
    }

    fn ln_cosh(x: f64) -> f64 {
        x + (1.0 + (-2.0 * x).exp()).ln() - std::f64::consts::LN_2
    }
}
