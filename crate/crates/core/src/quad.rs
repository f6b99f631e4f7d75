//! Adaptive quadrature on finite and right-unbounded intervals.
//!
//! Double-exponential rules from the `quadrature` crate, refined by interval
//! bisection until the summed error estimate meets the requested tolerance.
//! Callers with piecewise integrands should pass the kinks as breakpoints.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 24;

/// Integrate `f` over `[a, b]` to an absolute tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate(f, b, a, abs_tol).map(|v| -v);
    }
    refine(&f, a, b, abs_tol, 0)
}

fn refine<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
    // the rule is evaluated on [-1, 1]; narrow panels far from 0 otherwise lose digits
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let out = quadrature::double_exponential::integrate(|t| h * f(c + h * t), -1.0, 1.0, tol);
    // the rule cannot certify much below rounding level of the integral itself
    if out.error_estimate <= tol || out.error_estimate <= 1e-13 * out.integral.abs() {
        return Ok(out.integral);
    }
    let mid = c;
    if depth >= MAX_DEPTH || mid <= a || mid >= b {
        return Err(Error::Quadrature {
            lower: a,
            upper: b,
            estimate: out.error_estimate,
        });
    }
    Ok(refine(f, a, mid, 0.5 * tol, depth + 1)? + refine(f, mid, b, 0.5 * tol, depth + 1)?)
}

/// Integrate over `[a, b]` split at the given interior breakpoints.
pub fn integrate_pieces<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    abs_tol: f64,
) -> Result<f64> {
    let mut knots: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&x| x > a && x < b)
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut edges = Vec::with_capacity(knots.len() + 2);
    edges.push(a);
    edges.extend(knots);
    edges.push(b);
    let share = abs_tol / (edges.len() - 1) as f64;
    let mut total = 0.0;
    for w in edges.windows(2) {
        total += if w[1].is_finite() {
            integrate(&f, w[0], w[1], share)?
        } else {
            integrate_to_infinity(&f, w[0], share)?
        };
    }
    Ok(total)
}

/// Integrate `f` over `[a, inf)` through `x = a + s t / (1 - t)`, with `s`
/// chosen from the magnitude of `a` so the map is well scaled.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, abs_tol: f64) -> Result<f64> {
    let s = a.abs().max(1.0);
    // finite piece first, where most of the mass sits for tails starting near `a`
    let head = integrate(&f, a, a + s, 0.5 * abs_tol)?;
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let x = a + s + s * t / (1.0 - t);
        let jac = s / ((1.0 - t) * (1.0 - t));
        let v = f(x) * jac;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    Ok(head + integrate(g, 0.0, 1.0, 0.5 * abs_tol)?)
}
