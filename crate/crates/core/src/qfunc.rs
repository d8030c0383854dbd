//! Gaussian tail function and its inverse.
//!
//! `q_inv` starts from Acklam's rational approximation of the normal quantile
//! (relative error about 1.2e-9) and applies one Halley step against `libm::erfc`,
//! which brings the relative error below 1e-10 over (0, 1).

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Gaussian Q-function, `Q(x) = P(N(0,1) > x)`.
pub fn q(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Inverse of the Gaussian Q-function for `p` in (0, 1).
///
/// Returns NaN outside the open unit interval.
pub fn q_inv(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return f64::NAN;
    }
    // Q^{-1}(p) = -Phi^{-1}(p) = Phi^{-1}(1 - p); work on the smaller tail to keep precision.
    if p > 0.5 {
        return -q_inv(1.0 - p);
    }
    if p == 0.5 {
        return 0.0;
    }
    let x = -acklam_normal_quantile(p);
    // Halley refinement on f(x) = Q(x) - p, f' = -phi(x), f'' = x phi(x).
    let e = q(x) - p;
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    let u = -e / pdf;
    x - u / (1.0 + 0.5 * x * u)
}

fn acklam_normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}
