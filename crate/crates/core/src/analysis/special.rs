//! Modified Bessel functions of the first kind and the first-order Marcum Q
//! function.
//!
//! Everything is computed in exponentially scaled form (`e^{-x} I_k(x)`) so
//! large arguments do not overflow.

use crate::error::{invalid, Error, Result};

/// Largest `|z|` accepted by [`bessel_i0`]; `I0(700) ≈ 1.5e302`.
pub const I0_MAX_ARG: f64 = 700.0;

const SERIES_LIMIT: f64 = 20.0;

/// `e^{-|x|} I0(x)`.
pub fn bessel_i0e(x: f64) -> f64 {
    let x = x.abs();
    if x <= SERIES_LIMIT {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k: f64 = 1.0;
        while term > 1e-17 * sum {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        // 1/sqrt(2πx) Σ ((2k-1)!!)² / (k! (8x)^k)
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k: f64 = 1.0;
        loop {
            let next = term * (2.0 * k - 1.0).powi(2) / (8.0 * x * k);
            if next < 1e-17 * sum || next > term {
                break;
            }
            term = next;
            sum += term;
            k += 1.0;
        }
        sum / (2.0 * std::f64::consts::PI * x).sqrt()
    }
}

/// `I0(z)` for `|z| <= 700`.
pub fn bessel_i0(z: f64) -> Result<f64> {
    if z.is_nan() {
        return Err(invalid("I0 of NaN"));
    }
    if z.abs() > I0_MAX_ARG {
        return Err(Error::Range(format!("I0({z}) overflows; |z| must be <= {I0_MAX_ARG}")));
    }
    Ok(bessel_i0e(z) * z.abs().exp())
}

/// `e^{-x} I_k(x)` for `k = 0..=kmax`, `x >= 0`, by Miller's backward
/// recurrence normalised with `I0 + 2 Σ_{k≥1} I_k = e^x`.
pub fn bessel_ie_sequence(x: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = 2 * kmax + 40 + (10.0 * x.sqrt()) as usize;
    let mut next = 0.0; // y_{k+1}
    let mut cur = 1e-300; // y_k
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let prev = next + 2.0 * k as f64 / x * cur;
        next = cur;
        cur = prev;
        // `next` now holds y_k
        norm += 2.0 * next;
        if k <= kmax {
            out[k] = next;
        }
        if cur > 1e250 {
            let s = 1e-250;
            cur *= s;
            next *= s;
            norm *= s;
            for v in out.iter_mut() {
                *v *= s;
            }
        }
    }
    out[0] = cur;
    norm += cur;
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// Number of scaled Bessel terms needed at argument `x`.
fn term_count(x: f64) -> usize {
    40 + (12.0 * x.sqrt()).ceil() as usize
}

fn check_args(a: f64, b: f64) -> Result<()> {
    if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
        return Err(invalid(format!("Marcum Q arguments must be finite and >= 0, got ({a}, {b})")));
    }
    Ok(())
}

/// First-order Marcum Q function `Q1(a, b)`.
pub fn marcum_q1(a: f64, b: f64) -> Result<f64> {
    check_args(a, b)?;
    if b == 0.0 {
        return Ok(1.0);
    }
    if a == 0.0 {
        return Ok((-0.5 * b * b).exp());
    }
    let x = a * b;
    let ie = bessel_ie_sequence(x, term_count(x));
    let damp = (-0.5 * (a - b) * (a - b)).exp();
    let q = if a < b {
        damp * ratio_series(&ie, a / b, 0)
    } else if a == b {
        0.5 * (1.0 + ie[0])
    } else {
        1.0 - damp * ratio_series(&ie, b / a, 1)
    };
    Ok(q.clamp(0.0, 1.0))
}

/// `Σ_{k≥from} r^k ie[k]`, stopping once terms are negligible.
fn ratio_series(ie: &[f64], r: f64, from: usize) -> f64 {
    let mut sum = 0.0;
    let mut pow = r.powi(from as i32);
    for &v in &ie[from..] {
        let term = pow * v;
        sum += term;
        if term < 1e-18 * sum && pow * ie[0] < 1e-18 * sum {
            break;
        }
        pow *= r;
    }
    sum
}

/// `Q1(a, b) − ½ I0(ab) e^{−(a²+b²)/2}` for `a <= b`.
///
/// Evaluated as `e^{−(a−b)²/2} (½ Ie0 + Σ_{k≥1} (a/b)^k Ie_k)`, which has no
/// cancellation.
pub fn marcum_difference(a: f64, b: f64) -> Result<f64> {
    check_args(a, b)?;
    if a > b {
        return Err(invalid(format!("expected a <= b, got ({a}, {b})")));
    }
    if b == 0.0 {
        return Ok(0.5);
    }
    let x = a * b;
    let ie = bessel_ie_sequence(x, term_count(x));
    let damp = (-0.5 * (a - b) * (a - b)).exp();
    let series = if a == 0.0 { 0.0 } else { ratio_series(&ie, a / b, 1) };
    Ok(damp * (0.5 * ie[0] + series))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    /// `e^{-z} I0(z) = (1/π) ∫_0^π e^{z (cos t − 1)} dt`, trapezoid rule
    /// (spectrally accurate for this periodic integrand).
    fn i0e_integral(z: f64) -> f64 {
        let n = 2000;
        let h = PI / n as f64;
        let mut s = 0.5 * (1.0 + (-2.0 * z).exp());
        for i in 1..n {
            s += (z * ((i as f64 * h).cos() - 1.0)).exp();
        }
        s * h / PI
    }

    /// `Q1(a,b) = ∫_b^∞ x e^{−(x−a)²/2} Ie0(ax) dx`, composite Simpson.
    fn q1_integral(a: f64, b: f64) -> f64 {
        let upper = a.max(b) + 12.0;
        let n = 20_000;
        let h = (upper - b) / n as f64;
        let f = |x: f64| x * (-0.5 * (x - a) * (x - a)).exp() * i0e_integral(a * x);
        let mut s = f(b) + f(upper);
        for i in 1..n {
            s += f(b + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn i0_values() {
        assert_eq!(bessel_i0(0.0).unwrap(), 1.0);
        assert_relative_eq!(bessel_i0(1.0).unwrap(), 1.266_065_877_752_008_4, max_relative = 1e-14);
        assert_eq!(bessel_i0(-3.5).unwrap(), bessel_i0(3.5).unwrap());
        assert!(matches!(bessel_i0(701.0), Err(Error::Range(_))));
        assert!(bessel_i0(700.0).unwrap().is_finite());
    }

    #[test]
    fn i0e_matches_integral_representation() {
        for z in [0.01, 0.5, 3.0, 10.0, 19.9, 20.1, 35.0, 120.0, 650.0] {
            assert_relative_eq!(bessel_i0e(z), i0e_integral(z), max_relative = 1e-12);
        }
    }

    #[test]
    fn miller_sequence_values() {
        for x in [0.3, 2.0, 25.0, 400.0] {
            let ie = bessel_ie_sequence(x, 60);
            assert_relative_eq!(ie[0], bessel_i0e(x), max_relative = 1e-12);
            // recurrence I_{k-1} − I_{k+1} = (2k/x) I_k
            for k in 1..20 {
                let lhs = ie[k - 1] - ie[k + 1];
                assert_relative_eq!(lhs, 2.0 * k as f64 / x * ie[k], max_relative = 1e-9);
            }
        }
        // I1(1) = 0.565159103992485...
        let ie = bessel_ie_sequence(1.0, 10);
        assert_relative_eq!(ie[1] * 1f64.exp(), 0.565_159_103_992_485, max_relative = 1e-13);
    }

    #[test]
    fn q1_trivial_values() {
        assert_eq!(marcum_q1(0.0, 0.0).unwrap(), 1.0);
        assert_eq!(marcum_q1(3.0, 0.0).unwrap(), 1.0);
        assert_relative_eq!(marcum_q1(0.0, 1.7).unwrap(), (-0.5 * 1.7f64 * 1.7).exp(), max_relative = 1e-15);
        assert!(marcum_q1(-1.0, 1.0).is_err());
        assert!(marcum_q1(1.0, f64::NAN).is_err());
    }

    #[test]
    fn q1_one_two_matches_oracles() {
        // canonical series with independently generated Bessel terms
        let (a, b) = (1.0f64, 2.0f64);
        let mut series = 0.0;
        for k in 0..60 {
            // I_k(2) by its own power series
            let mut term = 1.0 / (1..=k).map(|i| i as f64).product::<f64>();
            let mut ik = term;
            for m in 1..60 {
                term *= 1.0 / (m as f64 * (m + k) as f64);
                ik += term;
            }
            series += (a / b).powi(k) * ik;
        }
        series *= (-0.5 * (a * a + b * b)).exp();
        let q = marcum_q1(a, b).unwrap();
        assert_relative_eq!(q, series, max_relative = 1e-12);
        assert_relative_eq!(q, q1_integral(a, b), max_relative = 1e-9);
        assert_relative_eq!(q, 0.269_012_060_035_91, max_relative = 1e-10);
    }

    #[test]
    fn q1_matches_quadrature_over_range() {
        for &(a, b) in &[(0.5, 0.2), (2.0, 2.0), (5.0, 3.0), (3.0, 6.0), (12.0, 14.0), (20.0, 17.5), (0.1, 4.0)] {
            let q = marcum_q1(a, b).unwrap();
            let oracle = q1_integral(a, b);
            assert!((q - oracle).abs() <= 1e-10 * oracle.max(1e-300) + 1e-14, "Q1({a},{b}) = {q} vs {oracle}");
        }
    }

    #[test]
    fn q1_large_arguments() {
        // symmetric point: Q1(a,a) = (1 + Ie0(a²)) / 2
        let q = marcum_q1(50.0, 50.0).unwrap();
        assert_relative_eq!(q, 0.5 * (1.0 + bessel_i0e(2500.0)), max_relative = 1e-14);
        let near = marcum_q1(49.0, 50.0).unwrap();
        let oracle = q1_integral(49.0, 50.0);
        assert_relative_eq!(near, oracle, max_relative = 1e-10);
        assert!(marcum_q1(50.0, 10.0).unwrap() == 1.0);
        assert!(marcum_q1(10.0, 50.0).unwrap() < 1e-100);
    }

    #[test]
    fn difference_matches_direct_form() {
        for &(a, b) in &[(0.0, 0.0), (0.0, 1.0), (0.3, 0.9), (1.0, 2.0), (4.0, 4.5), (10.0, 15.0)] {
            let direct = marcum_q1(a, b).unwrap() - 0.5 * bessel_i0e(a * b) * (-0.5 * (a - b) * (a - b)).exp();
            let d = marcum_difference(a, b).unwrap();
            assert!((d - direct).abs() < 1e-13, "({a},{b}): {d} vs {direct}");
        }
        assert!(marcum_difference(2.0, 1.0).is_err());
    }
}
