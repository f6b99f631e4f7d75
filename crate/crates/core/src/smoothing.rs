//! Continuity by threshold re-optimization.
//!
//! With the bin masses and means held fixed, the fitted negative entropy
//! `J*(t)` is strictly convex in the interior thresholds and its partial
//! derivative in `t_k` is the density jump `f(t_k+) - f(t_k-)`. Minimizing it
//! therefore yields a continuous density. The bottom threshold is pinned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mecore::{fit_me_density, MEBin, MEDensity};
use crate::special::phi_prime;
use crate::tabio::{BinMoments, Provenance};

/// Symmetric tridiagonal matrix; `off[i]` couples rows `i` and `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.off[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    /// Solve `A x = rhs` by forward elimination and back substitution.
    ///
    /// Returns `None` if a pivot is not positive, i.e. the matrix is not
    /// positive definite within rounding.
    pub fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let n = self.dim();
        if n == 0 {
            return Some(Vec::new());
        }
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut pivot = self.diag[0];
        if !(pivot > 0.0) {
            return None;
        }
        d[0] = rhs[0] / pivot;
        for i in 1..n {
            c[i - 1] = self.off[i - 1] / pivot;
            pivot = self.diag[i] - self.off[i - 1] * c[i - 1];
            if !(pivot > 0.0) || !pivot.is_finite() {
                return None;
            }
            d[i] = (rhs[i] - self.off[i - 1] * d[i - 1]) / pivot;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Some(d)
    }

    /// Leading principal minors `D_1, ..., D_n` by the three-term recurrence.
    pub fn leading_minors(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n);
        let (mut prev2, mut prev) = (1.0, 1.0);
        for i in 0..n {
            let d = if i == 0 {
                self.diag[0]
            } else {
                self.diag[i] * prev - self.off[i - 1] * self.off[i - 1] * prev2
            };
            out.push(d);
            prev2 = prev;
            prev = d;
        }
        out
    }
}

/// Leading minors of the tridiagonal matrix with diagonal `c_k + c_{k+1}` and
/// off-diagonal `-c_{k+1}`, built from weights `c_1, ..., c_K`, via
/// `D_n = c_{n+1} D_{n-1} + prod_{k <= n} c_k`.
pub fn principal_minors_from_weights(c: &[f64]) -> Vec<f64> {
    let n = c.len().saturating_sub(1);
    let mut out = Vec::with_capacity(n);
    let mut prod = 1.0;
    let mut prev = 1.0;
    for i in 0..n {
        prod *= c[i];
        let d = if i == 0 { c[0] + c[1] } else { c[i + 1] * prev + prod };
        out.push(d);
        prev = d;
    }
    out
}

/// Densities at the two ends of a bin per unit of bin mass: `(f(a+), f(b-)) / q`.
fn edge_unit_densities(bin: &MEBin) -> (f64, f64) {
    let pa = bin.unit_pdf(bin.lower);
    let pb = match bin.upper {
        Some(b) => bin.unit_pdf(b),
        None => 0.0,
    };
    (pa, pb)
}

/// `lambda^2 e^{lambda d} / (e^{lambda d} - 1)^2` in the form
/// `(x / sinh x)^2 / d^2`, `x = lambda d / 2`, which is 1/d^2 at lambda = 0.
fn curvature_weight(bin: &MEBin) -> f64 {
    let Some(b) = bin.upper else {
        return 0.0;
    };
    let d = b - bin.lower;
    let x = 0.5 * bin.lambda * d;
    let r = if x == 0.0 { 1.0 } else { x / x.sinh() };
    r * r / (d * d)
}

/// `dJ*/dt_k = f(t_k+) - f(t_k-)` for the free thresholds `t_1, ..., t_{K-1}`.
pub fn jstar_gradient(density: &MEDensity) -> Vec<f64> {
    let bins = density.bins();
    (0..bins.len() - 1)
        .map(|k| {
            let above = &bins[k];
            let below = &bins[k + 1];
            let (pa, _) = edge_unit_densities(above);
            let (_, pb) = edge_unit_densities(below);
            above.q * pa - below.q * pb
        })
        .collect()
}

/// Curvature weights `c_k = q_k lambda_k^2 e^{lambda_k d_k} / (e^{lambda_k d_k} - 1)^2`,
/// with `c_1 = 0` on the top bin.
pub fn curvature_weights(density: &MEDensity) -> Vec<f64> {
    density
        .bins()
        .iter()
        .map(|b| if b.q > 0.0 { b.q * curvature_weight(b) } else { 0.0 })
        .collect()
}

/// Tridiagonal matrix with diagonal `c_k + c_{k+1}` and off-diagonal `-c_{k+1}`.
///
/// This is the second derivative of `J*` with every `lambda_k` held fixed.
pub fn jstar_hessian(density: &MEDensity) -> Tridiagonal {
    let c = curvature_weights(density);
    let n = c.len() - 1;
    Tridiagonal {
        diag: (0..n).map(|k| c[k] + c[k + 1]).collect(),
        off: (0..n.saturating_sub(1)).map(|k| -c[k + 1]).collect(),
    }
}

/// Hessian of `J*` along the path where each `lambda_k` is re-solved.
///
/// Each bounded bin adds its fixed-multiplier curvature plus the rank-one
/// term `w w' / var`, where `w = (f(a+) (y - a), f(b-) (b - y)) / q` and `var`
/// is the bin's variance under its tilt. The top bin's value
/// `-1 - ln(y - t_1)` contributes `1 / (y - t_1)^2`.
pub fn profile_hessian(density: &MEDensity) -> Tridiagonal {
    let bins = density.bins();
    let n = bins.len() - 1;
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    for (k, bin) in bins.iter().enumerate() {
        let Some(y) = bin.y else { continue };
        if bin.q == 0.0 {
            continue;
        }
        // t_k is this bin's lower edge (index k), t_{k-1} its upper edge (index k - 1)
        match bin.upper {
            None => {
                if k < n {
                    let g = y - bin.lower;
                    diag[k] += bin.q / (g * g);
                }
            }
            Some(b) => {
                let a = bin.lower;
                let d = b - a;
                let (pa, pb) = edge_unit_densities(bin);
                let ct = curvature_weight(bin);
                let var = 0.25 * d * d * phi_prime(0.5 * bin.lambda * d);
                let wa = pa * (y - a);
                let wb = pb * (b - y);
                if k < n {
                    diag[k] += bin.q * (ct + wa * wa / var);
                }
                diag[k - 1] += bin.q * (ct + wb * wb / var);
                if k < n {
                    off[k - 1] += bin.q * (-ct + wa * wb / var);
                }
            }
        }
    }
    Tridiagonal { diag, off }
}

/// Admissible thresholds: `t_k` in `(y_{k+1}, y_k)` for `k < K`, `t_K` pinned.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub t_k_fix: f64,
}

impl ThresholdBox {
    pub fn new(moments: &BinMoments, t_k_fix: f64) -> Result<Self> {
        let y: Vec<f64> = moments
            .y()
            .iter()
            .enumerate()
            .map(|(k, m)| {
                m.ok_or_else(|| {
                    Error::Validation(format!("bin {} is empty; smoothing needs every bin populated", k + 1))
                })
            })
            .collect::<Result<_>>()?;
        let k = y.len();
        for i in 1..k {
            if !(y[i] < y[i - 1]) {
                return Err(Error::Validation(format!(
                    "bin means must strictly decrease for smoothing: y_{} = {} >= y_{} = {}",
                    i + 1,
                    y[i],
                    i,
                    y[i - 1]
                )));
            }
        }
        if !(t_k_fix < y[k - 1]) || !t_k_fix.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "pinned bottom threshold {t_k_fix} must lie below the bottom bin mean {}",
                y[k - 1]
            )));
        }
        Ok(ThresholdBox {
            lower: (0..k - 1).map(|i| y[i + 1]).collect(),
            upper: (0..k - 1).map(|i| y[i]).collect(),
            t_k_fix,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, t: &[f64]) -> bool {
        t.len() == self.dim() && t.iter().enumerate().all(|(i, &x)| x > self.lower[i] && x < self.upper[i])
    }

    /// Largest step length in `(0, 1]` along `dir` keeping every coordinate at
    /// least `1e-9` of its interval width from either edge.
    fn step_cap(&self, t: &[f64], dir: &[f64]) -> f64 {
        let mut cap = 1.0_f64;
        for i in 0..self.dim() {
            let width = self.upper[i] - self.lower[i];
            let dist = (t[i] - self.lower[i]).min(self.upper[i] - t[i]);
            let margin = (1e-9 * width).min(0.5 * dist);
            if dir[i] > 0.0 {
                cap = cap.min((self.upper[i] - margin - t[i]) / dir[i]);
            } else if dir[i] < 0.0 {
                cap = cap.min((self.lower[i] + margin - t[i]) / dir[i]);
            }
        }
        cap.max(0.0)
    }
}

/// Same masses and means on a new threshold grid `t_1 > ... > t_K`.
pub fn rethreshold(moments: &BinMoments, thresholds: Vec<f64>) -> Result<BinMoments> {
    BinMoments::new(
        thresholds,
        moments.q().to_vec(),
        moments.y().to_vec(),
        moments.provenance(),
    )
}

/// Stopping rules for [`smooth_thresholds_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothOptions {
    /// Target gradient inf-norm, in coordinates scaled so the largest
    /// threshold or mean has magnitude 1.
    pub tol: f64,
    /// Gradient inf-norm still reported as converged when progress stalls.
    pub relaxed_tol: f64,
    pub max_iter: usize,
}

impl Default for SmoothOptions {
    fn default() -> Self {
        SmoothOptions {
            tol: 1e-10,
            relaxed_tol: 1e-6,
            max_iter: 500,
        }
    }
}

/// Result of threshold smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedFit {
    #[serde(flatten)]
    pub density: MEDensity,
    /// Optimized thresholds including the pinned bottom one.
    pub t_star: Vec<f64>,
    /// Final gradient inf-norm in scaled coordinates.
    pub grad_inf_norm: f64,
    pub iterations: usize,
    /// `J*` at the start and after each accepted step, in the data's units.
    pub j_star_trajectory: Vec<f64>,
}

impl SmoothedFit {
    /// Largest density jump across an interior threshold.
    pub fn max_jump(&self) -> f64 {
        max_jump(&self.density)
    }
}

/// `max_k |f(t_k+) - f(t_k-)|` over the free thresholds.
pub fn max_jump(density: &MEDensity) -> f64 {
    jstar_gradient(density).iter().fold(0.0, |m, g| m.max(g.abs()))
}

/// Supremum of a fitted density (attained at a bin edge).
pub fn sup_density(density: &MEDensity) -> f64 {
    density.bins().iter().fold(0.0_f64, |m, b| {
        let (pa, pb) = edge_unit_densities(b);
        m.max(b.q * pa).max(b.q * pb)
    })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimize `J*` over the interior thresholds with default stopping rules.
pub fn smooth_thresholds(moments: &BinMoments, t_k_fix: f64) -> Result<SmoothedFit> {
    smooth_thresholds_with(moments, t_k_fix, &SmoothOptions::default())
}

/// Damped Newton on `J*(t)` with a tridiagonal solve per step.
///
/// Steps are capped to stay inside the admissible box and shortened by
/// backtracking until `J*` decreases enough. A non-positive pivot triggers a
/// gradient step instead.
pub fn smooth_thresholds_with(
    moments: &BinMoments,
    t_k_fix: f64,
    opts: &SmoothOptions,
) -> Result<SmoothedFit> {
    ThresholdBox::new(moments, t_k_fix)?;

    let scale = {
        let m = moments
            .thresholds()
            .iter()
            .chain(moments.y().iter().flatten())
            .chain(std::iter::once(&t_k_fix))
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        if m > 0.0 {
            1.0 / m
        } else {
            1.0
        }
    };
    let scaled = moments.scaled(scale)?;
    let bx = ThresholdBox::new(&scaled, t_k_fix * scale)?;
    // J* in scaled units exceeds the original by (total mass) * ln(scale)
    let shift = scaled.total_mass() * scale.ln();

    let k = scaled.len();
    let fit_at = |t: &[f64]| -> Result<MEDensity> {
        let mut grid = t.to_vec();
        grid.push(bx.t_k_fix);
        fit_me_density(&rethreshold(&scaled, grid)?)
    };
    let j_at = |t: &[f64]| -> f64 {
        if !bx.contains(t) {
            return f64::INFINITY;
        }
        fit_at(t).map_or(f64::INFINITY, |d| d.j_star())
    };

    let mut t: Vec<f64> = scaled.thresholds()[..k - 1].to_vec();
    let mut density = fit_at(&t)?;
    let mut grad = jstar_gradient(&density);
    let mut gnorm = inf_norm(&grad);
    let mut trajectory = vec![density.j_star() - shift];
    let mut iterations = 0;

    while gnorm > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let j0 = density.j_star();
        let hess = profile_hessian(&density);
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let dir = match hess.solve(&neg) {
            Some(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => {
                let h = hess.diag.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                let h = if h > 0.0 { h } else { 1.0 };
                neg.iter().map(|g| g / h).collect()
            }
        };
        let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        let mut alpha = bx.step_cap(&t, &dir);
        let mut accepted = None;
        for _ in 0..60 {
            if alpha <= 0.0 {
                break;
            }
            let trial: Vec<f64> = t.iter().zip(&dir).map(|(x, d)| x + alpha * d).collect();
            let j1 = j_at(&trial);
            if j1 <= j0 + 1e-4 * alpha * slope {
                accepted = Some(trial);
                break;
            }
            // near the optimum the decrease drowns in rounding; fall back to
            // asking for a smaller gradient at an essentially equal J*
            if (j1 - j0).abs() <= 1e-14 * (1.0 + j0.abs()) {
                if let Ok(d) = fit_at(&trial) {
                    if inf_norm(&jstar_gradient(&d)) < gnorm {
                        accepted = Some(trial);
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        let Some(next) = accepted else { break };
        t = next;
        density = fit_at(&t)?;
        grad = jstar_gradient(&density);
        gnorm = inf_norm(&grad);
        trajectory.push(density.j_star() - shift);
    }

    if gnorm > opts.relaxed_tol || !gnorm.is_finite() {
        return Err(Error::NonConvergence {
            iterations,
            grad_inf_norm: gnorm,
        });
    }

    let mut t_star: Vec<f64> = t.iter().map(|x| x / scale).collect();
    t_star.push(t_k_fix);
    let density = fit_me_density(&rethreshold(moments, t_star.clone())?)?
        .with_provenance(Provenance::Smoothed);
    Ok(SmoothedFit {
        density,
        t_star,
        grad_inf_norm: gnorm,
        iterations,
        j_star_trajectory: trajectory,
    })
}
