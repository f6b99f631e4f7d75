//! Scalar special functions used by the dual solver and the baselines.
//!
//! The central object is `phi(x) = coth(x) - 1/x`, the map from a bin's
//! normalized tilt `x = lambda * width / 2` to its normalized mean offset
//! `2 (mean - midpoint) / width`. It is odd, strictly increasing, maps the real
//! line onto (-1, 1), and is concave on (0, inf).

use crate::error::{Error, Result};

/// Below this magnitude `phi` and `phi_prime` use their Taylor series.
const SERIES_SWITCH: f64 = 0.5;

/// Taylor coefficients of `phi`: `phi(x) = sum_n PHI_SERIES[n] * x^(2n+1)`,
/// i.e. `2^(2n) B_(2n) / (2n)!` for n = 1, 2, ...
const PHI_SERIES: [f64; 13] = [
    0.333_333_333_333_333_3,
    -0.022_222_222_222_222_223,
    0.002_116_402_116_402_116_5,
    -0.000_211_640_211_640_211_65,
    2.137_779_915_557_693_5e-5,
    -2.164_404_280_806_397_2e-6,
    2.192_594_785_187_377_8e-7,
    -2.221_460_878_997_967_8e-8,
    2.250_784_651_680_899_4e-9,
    -2.280_515_120_459_218_3e-10,
    2.310_643_259_900_262_4e-11,
    -2.341_170_681_982_488_2e-12,
    2.372_101_740_023_365_3e-13,
];

/// `phi(x) = coth(x) - 1/x`, extended oddly with `phi(0) = 0`.
pub fn phi(x: f64) -> f64 {
    let ax = x.abs();
    if ax < SERIES_SWITCH {
        let x2 = x * x;
        let mut acc = 0.0;
        for &c in PHI_SERIES.iter().rev() {
            acc = acc * x2 + c;
        }
        acc * x
    } else {
        1.0 / x.tanh() - 1.0 / x
    }
}

/// Derivative `phi'(x) = 1/x^2 - 1/sinh(x)^2`, with `phi'(0) = 1/3`.
pub fn phi_prime(x: f64) -> f64 {
    let ax = x.abs();
    if ax < SERIES_SWITCH {
        let x2 = x * x;
        let mut acc = 0.0;
        for (n, &c) in PHI_SERIES.iter().enumerate().rev() {
            acc = acc * x2 + c * (2 * n + 1) as f64;
        }
        acc
    } else {
        let s = ax.sinh();
        1.0 / (ax * ax) - 1.0 / (s * s)
    }
}

/// Inverse of [`phi`] on (-1, 1).
///
/// Bisection on a doubling bracket `[0, x_hi]` followed by safeguarded Newton
/// polishing. Returns a domain error for `|u| >= 1`, which corresponds to a bin
/// mean on or outside the bin boundary.
pub fn phi_inv(u: f64) -> Result<f64> {
    if !u.is_finite() || u.abs() >= 1.0 {
        return Err(Error::Domain(format!("phi_inv requires |u| < 1, got {u}")));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    let target = u.abs();

    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while phi(hi) <= target {
        lo = hi;
        hi *= 2.0;
    }

    // phi ~ x/3 near 0 and ~ 1 - 1/x far out
    let mut x = if target < 0.3 {
        3.0 * target
    } else if target > 0.9 {
        1.0 / (1.0 - target)
    } else {
        0.5 * (lo + hi)
    };
    if x <= lo || x >= hi {
        x = 0.5 * (lo + hi);
    }

    for _ in 0..200 {
        let r = phi(x) - target;
        if r == 0.0 {
            break;
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = phi_prime(x);
        let newton = x - r / d;
        let next = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs() || hi - lo <= f64::EPSILON * hi {
            x = next;
            break;
        }
        x = next;
    }
    Ok(x.copysign(u))
}

/// `ln((e^z - 1) / z)`, stable for all finite z, zero at z = 0.
pub fn log_exprel(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        z / 2.0 + z * z / 24.0
    } else if z > 0.0 {
        z + (-(-z).exp_m1()).ln() - z.ln()
    } else {
        (-z.exp_m1()).ln() - (-z).ln()
    }
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `Phi(hi) - Phi(lo)` evaluated on whichever tail avoids cancellation.
pub fn normal_cdf_diff(hi: f64, lo: f64) -> f64 {
    let upper = |x: f64| 0.5 * libm::erfc(x / std::f64::consts::SQRT_2);
    if lo > 0.0 {
        upper(lo) - upper(hi)
    } else {
        normal_cdf(hi) - normal_cdf(lo)
    }
}

/// Standard normal quantile.
///
/// The `erfc_inv` starting point is only good to about 1e-10 in the tails, so
/// two Newton steps on the CDF finish the job.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut z = -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p);
    for _ in 0..2 {
        let r = if z > 0.0 {
            (1.0 - p) - normal_cdf(-z)
        } else {
            normal_cdf(z) - p
        };
        let step = r / normal_pdf(z);
        if !step.is_finite() {
            break;
        }
        z -= step;
    }
    z
}
