//! Per-bin maximum-entropy dual and the piecewise-exponential density.
//!
//! On a bin `[a, b)` with mass `q` and mean `y`, the entropy-maximizing density
//! is `q * lambda * exp(lambda * x) / (exp(lambda * b) - exp(lambda * a))`,
//! where `lambda` maximizes the concave dual
//! `J(lambda) = y * lambda - ln((exp(lambda * b) - exp(lambda * a)) / lambda)`.
//! For bounded bins the maximizer is `(2/d) * phi_inv(2 (y - c) / d)`; on the
//! unbounded top bin it is `-1 / (y - a)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{log_exprel, phi, phi_inv};
use crate::tabio::{BinMoments, Provenance};

/// Means closer than this (in units of the half-width) to an edge are refused.
const EDGE_MARGIN: f64 = 1e-12;

/// Evaluate `J(lambda)` for one bin; `upper = inf` marks the top bin.
///
/// The bounded form is rearranged as
/// `lambda (y - a) - ln d - ln(expm1(lambda d) / (lambda d))`, which never
/// exponentiates a threshold. On the top bin `lambda` must be negative.
pub fn dual_objective(lower: f64, upper: f64, y: f64, lambda: f64) -> f64 {
    if upper.is_infinite() {
        if lambda >= 0.0 {
            return f64::NEG_INFINITY;
        }
        return lambda * (y - lower) + (-lambda).ln();
    }
    let d = upper - lower;
    lambda * (y - lower) - d.ln() - log_exprel(lambda * d)
}

fn scale_for(values: &[f64]) -> f64 {
    let m = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if m > 0.0 && m.is_finite() {
        1.0 / m
    } else {
        1.0
    }
}

/// Solve the dual of one bin, returning `(lambda, J(lambda))`.
///
/// Work is done on coordinates rescaled by `s = 1 / max(|a|, |b|, |y|)` and
/// mapped back through `lambda = s * lambda_s`, `J = J_s + ln s`.
pub fn solve_lambda(lower: f64, upper: f64, y: f64) -> Result<(f64, f64)> {
    let infeasible = || Error::InfeasibleBin {
        bin: None,
        lower,
        upper,
        mean: y,
    };
    if !(lower.is_finite() && y.is_finite()) || upper.is_nan() {
        return Err(infeasible());
    }
    if !(lower < y && y < upper) {
        return Err(infeasible());
    }

    if upper.is_infinite() {
        let s = scale_for(&[lower, y]);
        let gap = s * y - s * lower;
        if !(gap > 0.0) {
            return Err(infeasible());
        }
        let lambda_s = -1.0 / gap;
        let j_s = -1.0 - gap.ln();
        return Ok((s * lambda_s, j_s + s.ln()));
    }

    let s = scale_for(&[lower, upper, y]);
    let (a, b, m) = (s * lower, s * upper, s * y);
    let d = b - a;
    let u = 2.0 * (m - 0.5 * (a + b)) / d;
    if u.abs() > 1.0 - EDGE_MARGIN {
        return Err(infeasible());
    }
    let lambda_s = 2.0 / d * phi_inv(u)?;
    let j_s = dual_objective(a, b, m, lambda_s);
    Ok((s * lambda_s, j_s + s.ln()))
}

/// One bin of a fitted density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MEBin {
    pub lower: f64,
    /// `None` for the unbounded top bin.
    pub upper: Option<f64>,
    pub q: f64,
    /// `None` on empty bins.
    pub y: Option<f64>,
    pub lambda: f64,
}

impl MEBin {
    pub fn upper_or_inf(&self) -> f64 {
        self.upper.unwrap_or(f64::INFINITY)
    }

    pub fn width(&self) -> f64 {
        self.upper_or_inf() - self.lower
    }

    pub fn is_top(&self) -> bool {
        self.upper.is_none()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x < self.upper_or_inf()
    }

    /// `J(lambda)` at the stored multiplier; `None` on empty bins.
    pub fn dual_value(&self) -> Option<f64> {
        self.y
            .map(|y| dual_objective(self.lower, self.upper_or_inf(), y, self.lambda))
    }

    /// Density per unit of bin mass, i.e. `f(x) / q`, for `x` inside the bin.
    pub fn unit_pdf(&self, x: f64) -> f64 {
        let a = self.lower;
        let l = self.lambda;
        match self.upper {
            None => -l * (l * (x - a)).exp(),
            Some(b) => {
                let d = b - a;
                if l == 0.0 {
                    1.0 / d
                } else if l < 0.0 {
                    -l * (l * (x - a)).exp() / -(l * d).exp_m1()
                } else {
                    l * (l * (x - b)).exp() / -(-l * d).exp_m1()
                }
            }
        }
    }

    /// Density value `f(x)` for `x` inside the bin.
    pub fn pdf(&self, x: f64) -> f64 {
        if self.q == 0.0 {
            0.0
        } else {
            self.q * self.unit_pdf(x)
        }
    }

    /// Share of the bin's mass at or above `x`, clamped to the bin.
    pub fn frac_above(&self, x: f64) -> f64 {
        let a = self.lower;
        if x <= a {
            return 1.0;
        }
        let l = self.lambda;
        match self.upper {
            None => (l * (x - a)).exp(),
            Some(b) => {
                if x >= b {
                    return 0.0;
                }
                let d = b - a;
                if l == 0.0 {
                    (b - x) / d
                } else if l < 0.0 {
                    (l * (x - a)).exp() * (l * (b - x)).exp_m1() / (l * d).exp_m1()
                } else {
                    (l * (x - b)).exp_m1() / (-l * d).exp_m1()
                }
            }
        }
    }

    /// Share of the bin's mass below `x`, clamped to the bin.
    pub fn frac_below(&self, x: f64) -> f64 {
        let a = self.lower;
        if x <= a {
            return 0.0;
        }
        let l = self.lambda;
        match self.upper {
            None => -(l * (x - a)).exp_m1(),
            Some(b) => {
                if x >= b {
                    return 1.0;
                }
                let d = b - a;
                if l == 0.0 {
                    (x - a) / d
                } else if l < 0.0 {
                    (l * (x - a)).exp_m1() / (l * d).exp_m1()
                } else {
                    (l * (x - b)).exp() * (-l * (x - a)).exp_m1() / (-l * d).exp_m1()
                }
            }
        }
    }

    /// Mean of the bin's density restricted to `[x, upper)`, for `x` in the bin.
    pub fn mean_above(&self, x: f64) -> f64 {
        let x = x.max(self.lower);
        match self.upper {
            None => x - 1.0 / self.lambda,
            Some(b) => {
                let h = 0.5 * (b - x);
                0.5 * (x + b) + h * phi(self.lambda * h)
            }
        }
    }

    /// `(1 / q) * integral over [x, upper) of t f(t) dt`.
    pub fn first_moment_above(&self, x: f64) -> f64 {
        let g = self.frac_above(x);
        if g == 0.0 {
            0.0
        } else {
            g * self.mean_above(x)
        }
    }

    /// Point with bin-mass share `v` in `[0, 1]` below it.
    pub fn quantile_below(&self, v: f64) -> f64 {
        let a = self.lower;
        let l = self.lambda;
        match self.upper {
            None => {
                if v >= 1.0 {
                    f64::INFINITY
                } else {
                    a + (-v).ln_1p() / l
                }
            }
            Some(b) => {
                let d = b - a;
                let x = if l == 0.0 {
                    a + v * d
                } else if l < 0.0 {
                    a + (v * (l * d).exp_m1()).ln_1p() / l
                } else {
                    b + ((1.0 - v) * (-l * d).exp_m1()).ln_1p() / l
                };
                x.clamp(a, b)
            }
        }
    }

    /// Point with bin-mass share `w` in `[0, 1]` above it.
    pub fn quantile_above(&self, w: f64) -> f64 {
        let a = self.lower;
        let l = self.lambda;
        match self.upper {
            None => {
                if w <= 0.0 {
                    f64::INFINITY
                } else {
                    a + w.ln() / l
                }
            }
            Some(b) => {
                let d = b - a;
                let x = if l == 0.0 {
                    b - w * d
                } else if l < 0.0 {
                    a + ((1.0 - w) * (l * d).exp_m1()).ln_1p() / l
                } else {
                    b + (w * (-l * d).exp_m1()).ln_1p() / l
                };
                x.clamp(a, b)
            }
        }
    }
}

/// Piecewise-exponential density on `[lower_bound, inf)`, top bin first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MEDensity {
    bins: Vec<MEBin>,
    lower_bound: f64,
    j_star: f64,
    provenance: Provenance,
}

impl MEDensity {
    pub fn bins(&self) -> &[MEBin] {
        &self.bins
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    /// `sum_k q_k (J_k + ln q_k)`, the negative entropy of the fit.
    pub fn j_star(&self) -> f64 {
        self.j_star
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Thresholds `t_1 > ... > t_K`.
    pub fn thresholds(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.lower).collect()
    }

    /// Index of the bin containing `x`, or `None` below the support.
    pub fn bin_index(&self, x: f64) -> Option<usize> {
        if !(x >= self.lower_bound) {
            return None;
        }
        let i = self.bins.partition_point(|b| b.lower > x);
        (i < self.bins.len()).then_some(i)
    }

    /// Density value at `x`; zero below the support.
    pub fn pdf(&self, x: f64) -> f64 {
        if x == f64::INFINITY {
            return 0.0;
        }
        self.bin_index(x).map_or(0.0, |i| self.bins[i].pdf(x))
    }

    /// Left limit `f(x-)`, which differs from `f(x)` at thresholds.
    pub fn pdf_left(&self, x: f64) -> f64 {
        match self.bins.iter().position(|b| b.lower < x) {
            Some(i) => self.bins[i].pdf(x),
            None => 0.0,
        }
    }

    /// Total fitted mass, `sum_k q_k`.
    pub fn total_mass(&self) -> f64 {
        self.bins.iter().map(|b| b.q).sum()
    }
}

/// Fit the maximum-entropy density reproducing every bin's mass and mean.
pub fn fit_me_density(moments: &BinMoments) -> Result<MEDensity> {
    let k = moments.len();
    let mut bins = Vec::with_capacity(k);
    let mut j_star = 0.0;
    for i in 0..k {
        let (lower, upper) = moments.bounds(i);
        let q = moments.q()[i];
        let y = moments.y()[i];
        let lambda = match (q > 0.0, y) {
            (true, Some(m)) => {
                let (lambda, j) = solve_lambda(lower, upper, m).map_err(|e| e.at_bin(i + 1))?;
                j_star += q * (j + q.ln());
                lambda
            }
            _ => 0.0,
        };
        bins.push(MEBin {
            lower,
            upper: (i > 0).then_some(upper),
            q,
            y: if q > 0.0 { y } else { None },
            lambda,
        });
    }
    Ok(MEDensity {
        bins,
        lower_bound: moments.lower_bound(),
        j_star,
        provenance: moments.provenance(),
    })
}
