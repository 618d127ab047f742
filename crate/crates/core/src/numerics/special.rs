//! Modified Bessel functions of the first kind and the log-gamma function.
//!
//! `log_bessel_i` is the workhorse: the von Mises–Fisher normalizer needs
//! `I_v(kappa)` for concentrations far beyond where `I_v` itself fits in an
//! `f64`, so everything is evaluated in log space and exponentiated only by
//! `bessel_i`.

use super::NumericsError;

/// Power series below this argument, asymptotic (or log-domain series) above.
pub const SERIES_SWITCH: f64 = 50.0;

/// `bessel_i` refuses arguments above this, `I_0(700)` is already ~1e302.
pub const BESSEL_OVERFLOW_GUARD: f64 = 700.0;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
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

/// Natural log of the gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64, NumericsError> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(NumericsError::Domain(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(ln_gamma_positive(x))
}

fn ln_gamma_positive(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma_positive(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn check_bessel_args(order: f64, x: f64) -> Result<(), NumericsError> {
    if !(order >= 0.0) || !order.is_finite() {
        return Err(NumericsError::Domain(format!("Bessel order must be >= 0, got {order}")));
    }
    if !(x >= 0.0) || x.is_infinite() {
        return Err(NumericsError::Domain(format!("Bessel argument must be >= 0, got {x}")));
    }
    Ok(())
}

/// `I_order(x)`, the modified Bessel function of the first kind.
pub fn bessel_i(order: f64, x: f64) -> Result<f64, NumericsError> {
    check_bessel_args(order, x)?;
    if x > BESSEL_OVERFLOW_GUARD {
        return Err(NumericsError::Overflow(format!(
            "bessel_i argument {x} exceeds {BESSEL_OVERFLOW_GUARD}; use log_bessel_i"
        )));
    }
    Ok(log_bessel_i(order, x)?.exp())
}

/// `ln I_order(x)`; returns `-inf` for `x = 0, order > 0`.
pub fn log_bessel_i(order: f64, x: f64) -> Result<f64, NumericsError> {
    check_bessel_args(order, x)?;
    if x == 0.0 {
        return Ok(if order == 0.0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if x <= SERIES_SWITCH {
        return Ok(log_series_direct(order, x));
    }
    match log_hankel(order, x) {
        Some(v) => Ok(v),
        None => Ok(log_series_logdomain(order, x)),
    }
}

/// `order·ln(x/2) − lnΓ(order+1) + ln Σ_k t_k` with `t_0 = 1`,
/// `t_k = t_{k-1}·(x²/4)/(k(order+k))`. All terms positive, no cancellation.
fn log_series_direct(order: f64, x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut k = 0.0f64;
    loop {
        k += 1.0;
        term *= q / (k * (order + k));
        sum += term;
        if term < 1e-17 * sum && k > 0.5 * x {
            break;
        }
    }
    order * (0.5 * x).ln() - ln_gamma_positive(order + 1.0) + sum.ln()
}

/// Same series as `log_series_direct`, but each term is kept as a logarithm
/// and accumulated with a running log-sum-exp, so any `x` is safe.
fn log_series_logdomain(order: f64, x: f64) -> f64 {
    let log_q = 2.0 * (0.5 * x).ln();
    let mut log_term = 0.0f64;
    let mut max = 0.0f64;
    let mut scaled = 1.0f64;
    let mut k = 0.0f64;
    loop {
        k += 1.0;
        log_term += log_q - k.ln() - (order + k).ln();
        if log_term > max {
            scaled = scaled * (max - log_term).exp() + 1.0;
            max = log_term;
        } else {
            scaled += (log_term - max).exp();
            if log_term < max - 40.0 {
                break;
            }
        }
    }
    order * (0.5 * x).ln() - ln_gamma_positive(order + 1.0) + max + scaled.ln()
}

/// Hankel expansion `I_v(x) ~ e^x/√(2πx) Σ (−1)^k a_k(v)/x^k`.
/// Returns `None` when the series stops shrinking before reaching full
/// precision (large order relative to `x`).
fn log_hankel(order: f64, x: f64) -> Option<f64> {
    let mu = 4.0 * order * order;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut prev_abs = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        term *= -(mu - odd * odd) / (8.0 * k as f64 * x);
        let abs = term.abs();
        if abs < 1e-17 * sum.abs() {
            return (sum > 0.0).then(|| x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + sum.ln());
        }
        if abs > prev_abs {
            return None;
        }
        sum += term;
        prev_abs = abs;
    }
    None
}
