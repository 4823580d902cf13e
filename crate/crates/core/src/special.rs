//! Special functions needed by the spectral gain.

use std::f64::consts::PI;

/// Γ(5/4).
pub const GAMMA_5_4: f64 = 0.906_402_477_055_477;

/// Below this argument the Kummer series is summed directly.
const SERIES_LIMIT: f64 = 30.0;

/// Γ(x) for x > 0 (Lanczos, g = 7, nine terms).
pub fn gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let t = x + G + 0.5;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
}

/// `e^{-x} M(a; b; x)` for `x >= 0`, `a > 0`, `b > 0`.
///
/// Uses the term-ratio series up to `x = 30` (all terms positive, so no
/// cancellation) and the large-argument expansion
/// `Γ(b)/Γ(a) x^{a-b} Σ (b-a)_s (1-a)_s / (s! x^s)` beyond.
pub fn hyp1f1_scaled(a: f64, b: f64, x: f64) -> f64 {
    debug_assert!(x >= 0.0 && a > 0.0 && b > 0.0);
    if x <= SERIES_LIMIT {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut n = 0.0;
        loop {
            term *= (a + n) * x / ((b + n) * (n + 1.0));
            sum += term;
            n += 1.0;
            if term <= 1e-17 * sum || n > 500.0 {
                break;
            }
        }
        sum * (-x).exp()
    } else {
        let mut term: f64 = 1.0;
        let mut sum: f64 = 1.0;
        let mut s = 0.0;
        loop {
            let next = term * (b - a + s) * (1.0 - a + s) / ((s + 1.0) * x);
            // Asymptotic series: stop at the smallest term.
            if next.abs() >= term.abs() || next.abs() <= 1e-17 * sum.abs() {
                if next.abs() < term.abs() {
                    sum += next;
                }
                break;
            }
            term = next;
            sum += term;
            s += 1.0;
        }
        gamma(b) / gamma(a) * x.powf(a - b) * sum
    }
}

/// `M(-a; 1; -x)` for `x >= 0`, `a > 0`, via Kummer's transformation
/// `M(-a; 1; -x) = e^{-x} M(1 + a; 1; x)`.
pub fn hyp1f1_neg(a: f64, x: f64) -> f64 {
    hyp1f1_scaled(1.0 + a, 1.0, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight Taylor series of M(a; b; z) at any sign of z, with enough
    /// terms for |z| up to ~20 in double precision.
    fn taylor(a: f64, b: f64, z: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for n in 0..400 {
            let n = n as f64;
            term *= (a + n) * z / ((b + n) * (n + 1.0));
            sum += term;
        }
        sum
    }

    #[test]
    fn gamma_constant_matches_statrs() {
        assert!((GAMMA_5_4 - statrs::function::gamma::gamma(1.25)).abs() < 1e-15);
        for x in [0.3, 0.75, 1.0, 1.25, 1.5, 2.0, 3.7, 10.0] {
            let want = statrs::function::gamma::gamma(x);
            assert!((gamma(x) - want).abs() < 1e-13 * want, "x = {x}");
        }
    }

    #[test]
    fn value_at_origin_is_one() {
        assert_eq!(hyp1f1_neg(0.25, 0.0), 1.0);
    }

    #[test]
    fn matches_direct_taylor_series_for_moderate_arguments() {
        for &x in &[0.01, 0.1, 0.5, 1.0, 3.0, 7.5, 12.0] {
            let want = taylor(-0.25, 1.0, -x);
            let got = hyp1f1_neg(0.25, x);
            assert!((got - want).abs() < 1e-10 * want.abs(), "x = {x}: {got} vs {want}");
        }
    }

    #[test]
    fn series_and_asymptotic_branches_agree_at_crossover() {
        // Series branch pushed past its usual limit against the asymptotic branch.
        let a = 1.25;
        for &x in &[30.0, 30.000_001] {
            let series = {
                let mut term = 1.0f64;
                let mut sum = 1.0f64;
                for n in 0..500 {
                    let n = n as f64;
                    term *= (a + n) * x / ((1.0 + n) * (n + 1.0));
                    sum += term;
                }
                sum * (-x).exp()
            };
            let got = hyp1f1_scaled(a, 1.0, x);
            assert!((got - series).abs() < 1e-10 * series);
        }
        let lo = hyp1f1_scaled(a, 1.0, 30.0);
        let hi = hyp1f1_scaled(a, 1.0, 30.000_001);
        assert!((hi - lo).abs() < 1e-8 * lo);
    }

    #[test]
    fn large_argument_power_law() {
        // M(-a; 1; -x) ~ x^a / Γ(1 + a) for x → ∞.
        for &x in &[100.0, 1e3, 1e5] {
            let got = hyp1f1_neg(0.25, x);
            let lead = x.powf(0.25) / GAMMA_5_4;
            assert!((got / lead - 1.0).abs() < 1.0 / x);
        }
    }
}
