//! Special functions used by the outage expressions.
//!
//! Everything here is a pure function of its arguments. Arguments are validated
//! and out-of-domain input is reported as [`Error::Domain`].
//!
//! * `erf`/`erfc`/`j0` are delegated to `libm` (a port of the FreeBSD/musl
//!   implementations, accurate to about one ulp).
//! * Modified Bessel functions use the power series for small arguments and the
//!   Hankel asymptotic expansion beyond [`BESSEL_SERIES_CUTOFF`]; exponentially
//!   scaled variants are exposed for callers that would otherwise overflow.
//! * The first-order Marcum Q function is summed from the Bessel series
//!   `Q1(a,b) = exp(-(a²+b²)/2) Σ (a/b)^k I_k(ab)`, switching to the
//!   complementary series at `a = b`.

use crate::error::{Error, Result};
use std::f64::consts::{E, PI, SQRT_2};

/// Value plus an estimate of the truncation error committed computing it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FnEvalResult {
    pub value: f64,
    pub abs_err_bound: f64,
}

const BESSEL_SERIES_CUTOFF: f64 = 20.0;

fn require_finite(func: &'static str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(func, format!("non-finite argument {x}")))
    }
}

/// Bessel function of the first kind, order zero.
pub fn bessel_j0(x: f64) -> Result<f64> {
    require_finite("bessel_j0", x)?;
    Ok(libm::j0(x))
}

/// `e^{-|x|} I₀(x)`.
pub fn bessel_i0_scaled(x: f64) -> Result<f64> {
    require_finite("bessel_i0_scaled", x)?;
    Ok(i0_scaled(x.abs()))
}

/// `e^{-|x|} I₁(x)`.
pub fn bessel_i1_scaled(x: f64) -> Result<f64> {
    require_finite("bessel_i1_scaled", x)?;
    let v = i1_scaled(x.abs());
    Ok(if x < 0.0 { -v } else { v })
}

/// Modified Bessel function of the first kind, order zero.
///
/// Overflows to `+inf` past `|x| ≈ 713`; use [`bessel_i0_scaled`] there.
pub fn bessel_i0(x: f64) -> Result<f64> {
    let s = bessel_i0_scaled(x)?;
    Ok(rescale(s, x.abs()))
}

/// Modified Bessel function of the first kind, order one.
pub fn bessel_i1(x: f64) -> Result<f64> {
    let s = bessel_i1_scaled(x)?;
    Ok(rescale(s, x.abs()))
}

fn rescale(scaled: f64, ax: f64) -> f64 {
    if scaled == 0.0 {
        return 0.0;
    }
    if ax > 700.0 {
        // ln-domain product avoids overflow of e^x before the multiply
        scaled.signum() * (ax + scaled.abs().ln()).exp()
    } else {
        scaled * ax.exp()
    }
}

// x >= 0 for the two kernels below.
fn i0_scaled(x: f64) -> f64 {
    if x <= BESSEL_SERIES_CUTOFF {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= q / (k * k);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        hankel_scaled(0.0, x)
    }
}

fn i1_scaled(x: f64) -> f64 {
    if x <= BESSEL_SERIES_CUTOFF {
        let q = 0.25 * x * x;
        let mut term = 0.5 * x;
        let mut sum = term;
        let mut k = 1.0;
        if x == 0.0 {
            return 0.0;
        }
        loop {
            term *= q / (k * (k + 1.0));
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        hankel_scaled(1.0, x)
    }
}

// Large-argument expansion of e^{-x} I_ν(x), truncated at its smallest term.
fn hankel_scaled(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term: f64 = 1.0;
    let mut sum: f64 = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= -(mu - odd * odd) / (kf * 8.0 * x);
        if term.abs() >= prev || term.abs() < 1e-17 * sum.abs() {
            break;
        }
        sum += term;
        prev = term.abs();
    }
    sum / (2.0 * PI * x).sqrt()
}

/// `e^{-x} I_k(x)` for `k = 0..=kmax`, `x >= 0`.
///
/// Ratios `I_k/I_{k-1}` come from the backward continued-fraction recurrence,
/// which is stable because `I_k` is the minimal solution; the sequence is then
/// anchored on `e^{-x} I₀(x)`.
pub(crate) fn bessel_i_scaled_sequence(x: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    out[0] = i0_scaled(x);
    if kmax == 0 || x == 0.0 {
        return out;
    }
    let start = kmax + 32;
    let nf = start as f64;
    // Amos-type estimate of I_n/I_{n-1}; errors are damped by the recurrence.
    let mut r = x / (nf + (nf * nf + x * x).sqrt());
    let mut ratios = vec![0.0; kmax + 1];
    for k in (1..=start).rev() {
        if k < start {
            r = 1.0 / (2.0 * k as f64 / x + r);
        }
        if k <= kmax {
            ratios[k] = r;
        }
    }
    for k in 1..=kmax {
        out[k] = out[k - 1] * ratios[k];
    }
    out
}

/// Error function.
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Gaussian tail probability `Q(z) = P(Z > z)`.
pub fn q_func(z: f64) -> f64 {
    0.5 * libm::erfc(z / SQRT_2)
}

/// Standard normal CDF `Φ(z)`.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Half-order Laguerre polynomial `L_{1/2}(x)` for `x <= 0`.
///
/// `L_{1/2}(x) = e^{x/2} [(1-x) I₀(-x/2) - x I₁(-x/2)]`, evaluated with scaled
/// Bessel functions so the exponential factors cancel analytically.
pub fn laguerre_half(x: f64) -> Result<f64> {
    require_finite("laguerre_half", x)?;
    if x > 0.0 {
        return Err(Error::domain(
            "laguerre_half",
            format!("positive argument {x} unsupported"),
        ));
    }
    Ok(laguerre_half_unchecked(x))
}

#[inline]
pub(crate) fn laguerre_half_unchecked(x: f64) -> f64 {
    let y = -0.5 * x;
    (1.0 - x) * i0_scaled(y) - x * i1_scaled(y)
}

/// First-order Marcum Q function `Q₁(a, b)`.
pub fn marcum_q1(a: f64, b: f64) -> Result<f64> {
    marcum_q1_eval(a, b).map(|r| r.value)
}

/// Complement `1 - Q₁(a, b)`, accurate when `Q₁` is close to one.
pub fn marcum_q1_complement(a: f64, b: f64) -> Result<f64> {
    validate_marcum(a, b)?;
    Ok(marcum_pair(a, b).1.value)
}

/// `Q₁(a, b)` together with a truncation-error estimate.
pub fn marcum_q1_eval(a: f64, b: f64) -> Result<FnEvalResult> {
    validate_marcum(a, b)?;
    Ok(marcum_pair(a, b).0)
}

fn validate_marcum(a: f64, b: f64) -> Result<()> {
    if !(a.is_finite() && b.is_finite()) || a < 0.0 || b < 0.0 {
        return Err(Error::domain(
            "marcum_q1",
            format!("need finite a, b >= 0 (got a={a}, b={b})"),
        ));
    }
    Ok(())
}

/// Returns `(Q₁, 1 - Q₁)`; whichever of the two is summed directly carries the
/// truncation bound, the other inherits it.
pub(crate) fn marcum_pair(a: f64, b: f64) -> (FnEvalResult, FnEvalResult) {
    let exact = |q: f64| {
        (
            FnEvalResult { value: q, abs_err_bound: 0.0 },
            FnEvalResult { value: 1.0 - q, abs_err_bound: 0.0 },
        )
    };
    if b == 0.0 {
        return exact(1.0);
    }
    if a == 0.0 {
        let q = (-0.5 * b * b).exp();
        return (
            FnEvalResult { value: q, abs_err_bound: 0.0 },
            FnEvalResult { value: -(-0.5 * b * b).exp_m1(), abs_err_bound: 0.0 },
        );
    }
    let pref = (-0.5 * (a - b) * (a - b)).exp();
    if pref == 0.0 {
        return if b > a { exact(0.0) } else { exact(1.0) };
    }
    let x = a * b;
    // I_k(x)/I_0(x) ~ exp(-k²/2x) for large x and ~ (x/2)^k/k! for small x.
    let kmax = 40 + (9.0 * x.sqrt()).ceil() as usize;
    let seq = bessel_i_scaled_sequence(x, kmax);
    let (ratio, first) = if b >= a { (a / b, 0) } else { (b / a, 1) };
    let mut pow = if first == 0 { 1.0 } else { ratio };
    let mut sum = 0.0;
    let mut last = 0.0;
    let mut terms = 0usize;
    for &ik in &seq[first..] {
        let term = pow * ik;
        sum += term;
        last = term;
        terms += 1;
        if term < 1e-16 * sum {
            break;
        }
        pow *= ratio;
    }
    let series = pref * sum;
    let err = pref * last * (terms as f64).max(1.0) + 4.0 * f64::EPSILON * (terms as f64);
    let direct = FnEvalResult {
        value: series.clamp(0.0, 1.0),
        abs_err_bound: err,
    };
    let other = FnEvalResult {
        value: (1.0 - series).clamp(0.0, 1.0),
        abs_err_bound: err,
    };
    if first == 0 {
        (direct, other)
    } else {
        (other, direct)
    }
}

/// Principal branch of the Lambert W function (`w e^w = x`, `w >= -1`).
pub fn lambert_w0(x: f64) -> Result<f64> {
    const BRANCH: f64 = -1.0 / E;
    if x.is_nan() || x == f64::NEG_INFINITY {
        return Err(Error::domain("lambert_w0", format!("argument {x}")));
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    // allow the branch point to be off by rounding of -1/e
    if x < BRANCH - 4.0 * f64::EPSILON {
        return Err(Error::domain(
            "lambert_w0",
            format!("argument {x} below -1/e"),
        ));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
    if p < 1e-3 {
        // branch-point series, error O(p^5)
        return Ok(-1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p.powi(3) - 43.0 / 540.0 * p.powi(4));
    }
    let mut w = if x < -0.25 {
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p.powi(3)
    } else if x <= 3.0 {
        x.ln_1p()
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w)
}
