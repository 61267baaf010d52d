//! Special functions: Riemann and Hurwitz zeta on the real line, the
//! polylogarithm on the unit circle, and unit-ball volumes.

use std::f64::consts::PI;

use num_complex::Complex64;
use statrs::function::gamma::gamma;

use crate::error::{invalid, Result};

/// B_2, B_4, ..., B_26.
const BERNOULLI_EVEN: [f64; 13] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
    8553103.0 / 6.0,
];

/// Volume of the unit ball in R^d.
pub fn ball_volume(d: usize) -> Result<f64> {
    if d < 1 {
        return invalid("ball_volume needs d >= 1");
    }
    // V_d = V_{d-2} 2 pi / d
    let mut v = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if d % 2 == 0 { 2 } else { 3 };
    while k <= d {
        v *= 2.0 * PI / k as f64;
        k += 2;
    }
    Ok(v)
}

/// Euler–Maclaurin tail: sum_{n >= 0} (a + n)^{-s} for a large enough.
fn euler_maclaurin_tail(s: f64, a: f64) -> f64 {
    let mut sum = a.powf(1.0 - s) / (s - 1.0) + 0.5 * a.powf(-s);
    // rising factorial s (s+1) ... (s+2j-2) / (2j)!
    let mut coef = s;
    let mut fact = 2.0;
    let mut pow = a.powf(-s - 1.0);
    let inv_a2 = 1.0 / (a * a);
    for (j, b) in BERNOULLI_EVEN.iter().enumerate() {
        let term = b / fact * coef * pow;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
        let jj = (j + 1) as f64;
        coef *= (s + 2.0 * jj - 1.0) * (s + 2.0 * jj);
        fact *= (2.0 * jj + 1.0) * (2.0 * jj + 2.0);
        pow *= inv_a2;
    }
    sum
}

/// Hurwitz zeta sum_{n >= 0} (a + n)^{-s} for s > 1, a > 0.
pub fn hurwitz_zeta(s: f64, a: f64) -> Result<f64> {
    if s <= 1.0 || a <= 0.0 || !s.is_finite() || !a.is_finite() {
        return invalid(format!("hurwitz_zeta needs s > 1 and a > 0 (s={s}, a={a})"));
    }
    let shift = (24.0 + s.abs() - a).ceil().max(0.0) as usize;
    let mut head = 0.0;
    for n in (0..shift).rev() {
        head += (a + n as f64).powf(-s);
    }
    Ok(head + euler_maclaurin_tail(s, a + shift as f64))
}

/// Riemann zeta on the real line, x != 1.
pub fn zeta(x: f64) -> Result<f64> {
    if x == 1.0 || !x.is_finite() {
        return invalid("zeta has a pole at 1");
    }
    if x > 1.0 {
        return hurwitz_zeta(x, 1.0);
    }
    if x >= 0.0 {
        // The Euler–Maclaurin expansion continues analytically below 1.
        let n = 30usize;
        let head: f64 = (1..n).map(|k| (k as f64).powf(-x)).sum();
        return Ok(head + euler_maclaurin_tail(x, n as f64));
    }
    let y = 1.0 - x;
    Ok(2f64.powf(x) * PI.powf(x - 1.0) * (PI * x / 2.0).sin() * gamma(y) * zeta(y)?)
}

/// Bessel function J0 from its integral representation
/// (1/pi) int_0^pi cos(x sin t) dt; the trapezoid rule converges
/// geometrically for this periodic integrand.
pub fn bessel_j0(x: f64) -> f64 {
    let m = 64 + 2 * x.abs().ceil() as usize;
    let h = PI / m as f64;
    // endpoints t = 0 and t = pi contribute 1/2 each
    let mut s = 1.0;
    for j in 1..m {
        s += (x * (j as f64 * h).sin()).cos();
    }
    s / m as f64
}

/// Polylogarithm Li_s(e^{i theta}) for real s > 1, theta not in 2 pi Z.
///
/// Uses the expansion about the branch point,
/// Li_s(e^w) = Gamma(1-s) (-w)^{s-1} + sum_k zeta(s-k) w^k / k!,
/// after reducing theta into (-pi, pi]; integer s uses the logarithmic form.
pub fn polylog_unit(s: f64, theta: f64) -> Result<Complex64> {
    if s <= 1.0 {
        return invalid("polylog_unit needs s > 1");
    }
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    if t == 0.0 {
        return invalid("polylog_unit is singular at theta in 2 pi Z");
    }
    let w = Complex64::new(0.0, t);
    let s_round = s.round();
    let integer = (s - s_round).abs() < 1e-12;
    let mut sum = if integer {
        let m = s_round as i64;
        let mut harmonic = 0.0;
        let mut fact = 1.0;
        for j in 1..m {
            harmonic += 1.0 / j as f64;
            fact *= j as f64;
        }
        w.powi((m - 1) as i32) / fact * (Complex64::new(harmonic, 0.0) - (-w).ln())
    } else {
        gamma(1.0 - s) * (-w).powf(s - 1.0)
    };
    let mut wk = Complex64::new(1.0, 0.0);
    let mut kfact = 1.0;
    let mut small_run = 0;
    for k in 0..200 {
        if k > 0 {
            wk *= w;
            kfact *= k as f64;
        }
        let arg = s - k as f64;
        if integer && (arg - 1.0).abs() < 1e-12 {
            continue;
        }
        let term = wk * (zeta(arg)? / kfact);
        sum += term;
        if term.norm() < 1e-17 * sum.norm().max(1e-300) {
            small_run += 1;
            if small_run >= 3 {
                break;
            }
        } else {
            small_run = 0;
        }
    }
    Ok(sum)
}
