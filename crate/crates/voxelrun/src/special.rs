//! Log-gamma and the regularized incomplete beta function.
//!
//! These are the only special functions the toolkit needs: `ln_gamma`
//! normalizes the gamma-density HRF and `reg_inc_beta` turns t statistics
//! into tail probabilities.

use std::f64::consts::PI;

// Lanczos approximation, g = 7, 9 coefficients. Relative error is below
// 1e-13 over the positive axis, well inside the 1e-10 budget.
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

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma requires x > 0, got {x}");
    if x < 0.5 {
        // reflection: Γ(x) Γ(1-x) = π / sin(πx)
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete beta function I_x(a, b) for `a, b > 0`,
/// `0 <= x <= 1`, evaluated by a modified-Lentz continued fraction with
/// 1e-12 convergence.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "reg_inc_beta requires a, b > 0");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    // use the continued fraction on the side where it converges fast
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const EPS: f64 = 1e-12;
    const TINY: f64 = 1e-300;
    const MAX_ITER: usize = 500;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_matches_exact_values() {
        // Γ(n) = (n-1)! and Γ(1/2) = sqrt(π)
        let cases = [
            (1.0, 0.0),
            (2.0, 0.0),
            (6.0, 120f64.ln()),
            (16.0, 27.899271383840894),
            (0.5, 0.5723649429247001),
            (8.5, 9.549267257300997),
            (0.1, 2.252712651734206),
        ];
        for (x, expect) in cases {
            let got = ln_gamma(x);
            let tol = expect.abs().max(1.0) * 1e-10;
            assert!((got - expect).abs() < tol, "ln_gamma({x}) = {got}, want {expect}");
        }
    }

    #[test]
    fn inc_beta_matches_reference_values() {
        // reference values computed independently with a scientific library
        let cases = [
            (0.5, 0.5, 0.3, 0.36901011956554536),
            (2.0, 3.0, 0.5, 0.6875),
            (5.0, 0.5, 0.9, 0.3166429150200122),
            (15.0, 0.5, 0.666, 0.0005321990267586671),
            (0.5, 8.0, 0.01, 0.30700785029418753),
            (4.2, 3.1, 0.37, 0.13048551869048666),
        ];
        for (a, b, x, expect) in cases {
            let got = reg_inc_beta(a, b, x);
            assert!(
                (got - expect).abs() < 1e-12_f64.max(expect * 1e-10),
                "I_{x}({a},{b}) = {got}, want {expect}"
            );
        }
    }

    #[test]
    fn inc_beta_edges_and_symmetry() {
        assert_eq!(reg_inc_beta(2.0, 3.0, 0.0), 0.0);
        assert_eq!(reg_inc_beta(2.0, 3.0, 1.0), 1.0);
        // I_x(a,b) = 1 - I_{1-x}(b,a)
        for &(a, b, x) in &[(2.0, 5.0, 0.25), (0.7, 0.9, 0.6), (10.0, 0.5, 0.95)] {
            let lhs = reg_inc_beta(a, b, x);
            let rhs = 1.0 - reg_inc_beta(b, a, 1.0 - x);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn inc_beta_is_monotone_in_x() {
        let mut last = 0.0;
        for step in 1..100 {
            let x = step as f64 / 100.0;
            let v = reg_inc_beta(3.0, 2.0, x);
            assert!(v >= last);
            last = v;
        }
    }
}
