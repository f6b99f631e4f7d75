//! Closed-form functionals of a fitted piecewise-exponential density.
//!
//! Every functional is assembled bin by bin from the per-bin tail fraction,
//! tail mean and inverse in [`MEBin`](crate::mecore::MEBin); nothing here
//! integrates numerically except the Gini coefficient, which applies
//! Gauss-Legendre rules to the smooth pieces of the top-share curve.

use std::fmt::Write as _;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mecore::MEDensity;

/// Counter-CDF `P(Y >= y)`, in units of probability mass (at most `sum q`).
pub fn ccdf(d: &MEDensity, y: f64) -> f64 {
    d.bins()
        .iter()
        .filter(|b| b.q > 0.0 && y < b.upper_or_inf())
        .map(|b| b.q * b.frac_above(y))
        .sum()
}

/// CDF `P(Y < y)`, accumulated from the bottom to keep small values accurate.
pub fn cdf(d: &MEDensity, y: f64) -> f64 {
    d.bins()
        .iter()
        .rev()
        .filter(|b| b.q > 0.0 && y > b.lower)
        .map(|b| b.q * b.frac_below(y))
        .sum()
}

/// `E[Y; Y >= y]`, the integral of `t f(t)` over `[y, inf)`.
pub fn tail_expectation(d: &MEDensity, y: f64) -> f64 {
    d.bins()
        .iter()
        .filter(|b| b.q > 0.0 && y < b.upper_or_inf())
        .map(|b| b.q * b.first_moment_above(y))
        .sum()
}

/// First moment over the whole support, `sum_k q_k y_k`.
pub fn mean(d: &MEDensity) -> f64 {
    tail_expectation(d, d.lower_bound())
}

pub fn total_mass(d: &MEDensity) -> f64 {
    d.total_mass()
}

/// Smallest `y` with `F(y) >= tau`, for `0 < tau < total mass`.
pub fn quantile(d: &MEDensity, tau: f64) -> Result<f64> {
    let mass = d.total_mass();
    if !(tau > 0.0 && tau < mass) {
        return Err(Error::Domain(format!(
            "quantile level {tau} outside the covered mass (0, {mass})"
        )));
    }
    let mut below = 0.0;
    for b in d.bins().iter().rev() {
        if b.q == 0.0 {
            continue;
        }
        if below + b.q >= tau {
            let v = ((tau - below) / b.q).clamp(0.0, 1.0);
            return Ok(b.quantile_below(v));
        }
        below += b.q;
    }
    Ok(d.bins()[0].quantile_below(1.0))
}

/// Point `y` with `P(Y >= y) = mass`, for `0 < mass <= total mass`.
pub fn tail_quantile(d: &MEDensity, mass: f64) -> Result<f64> {
    let total = d.total_mass();
    if !(mass > 0.0 && mass <= total * (1.0 + 1e-15)) {
        return Err(Error::Domain(format!(
            "tail mass {mass} outside the covered mass (0, {total}]"
        )));
    }
    let mut above = 0.0;
    let bins = d.bins();
    for (k, b) in bins.iter().enumerate() {
        if b.q == 0.0 {
            continue;
        }
        let last = bins[k + 1..].iter().all(|r| r.q == 0.0);
        if above + b.q >= mass || last {
            let w = ((mass - above) / b.q).clamp(0.0, 1.0);
            return Ok(b.quantile_above(w));
        }
        above += b.q;
    }
    Ok(d.lower_bound())
}

/// Reference population and income for top shares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareBasis {
    /// Fractions of the covered population and its income.
    Covered,
    /// Fractions of an external population of `units` with income `total`.
    /// `table_units` is the population the bin masses are relative to.
    External {
        units: f64,
        total: f64,
        table_units: f64,
    },
}

/// Income share of the top `p` fractile.
pub fn top_share(d: &MEDensity, p: f64, basis: ShareBasis) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!("fractile {p} outside (0, 1]")));
    }
    match basis {
        ShareBasis::Covered => {
            if p == 1.0 {
                return Ok(1.0);
            }
            let total = mean(d);
            if !(total > 0.0) {
                return Err(Error::Domain(format!("top shares need a positive mean, got {total}")));
            }
            let x = tail_quantile(d, p * d.total_mass())?;
            Ok((tail_expectation(d, x) / total).clamp(0.0, 1.0))
        }
        ShareBasis::External {
            units,
            total,
            table_units,
        } => {
            if !(units > 0.0 && total > 0.0 && table_units > 0.0) {
                return Err(Error::InvalidParameter(
                    "external totals must be positive".into(),
                ));
            }
            let mass = p * units / table_units;
            let x = tail_quantile(d, mass)?;
            Ok(table_units * tail_expectation(d, x) / total)
        }
    }
}

/// A point `(x, L(x))` on the Lorenz curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzPoint {
    pub x: f64,
    pub l: f64,
}

/// `L(x) = 1 - top_share(1 - x)` on the covered population.
pub fn lorenz_curve(d: &MEDensity, grid: &[f64]) -> Result<Vec<LorenzPoint>> {
    grid.iter()
        .map(|&x| {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Domain(format!("Lorenz fractile {x} outside [0, 1]")));
            }
            let l = if x == 0.0 {
                0.0
            } else if x == 1.0 {
                1.0
            } else {
                1.0 - top_share(d, 1.0 - x, ShareBasis::Covered)?
            };
            Ok(LorenzPoint { x, l })
        })
        .collect()
}

const GINI_NODES: usize = 64;

/// Gini coefficient `2 * integral_0^1 S(p) dp - 1`, `S` the top-share curve.
///
/// The top bin's segment is integrated exactly; bounded bins' segments use a
/// 64-node Gauss-Legendre rule.
pub fn gini(d: &MEDensity) -> Result<f64> {
    let total = mean(d);
    if !(total > 0.0) {
        return Err(Error::Domain(format!("Gini needs a positive mean, got {total}")));
    }
    let mass = d.total_mass();
    let rule = GaussLegendre::new(NonZeroUsize::new(GINI_NODES).unwrap());
    let share = |p: f64| top_share(d, p, ShareBasis::Covered).unwrap_or(f64::NAN);

    let mut integral = 0.0;
    let mut p_hi = 0.0;
    for b in d.bins() {
        if b.q == 0.0 {
            continue;
        }
        let p_lo = p_hi;
        p_hi = (p_lo + b.q / mass).min(1.0);
        if b.is_top() {
            // S(p) = mass * p * (a + theta + theta ln(p1 / p)) / total on [0, p1]
            let theta = -1.0 / b.lambda;
            let p1 = p_hi;
            integral += mass / total * ((b.lower + theta) * p1 * p1 / 2.0 + theta * p1 * p1 / 4.0);
        } else {
            integral += rule.integrate(p_lo, p_hi, share);
        }
    }
    if !integral.is_finite() {
        return Err(Error::Domain("Gini integrand is not finite".into()));
    }
    Ok(2.0 * integral - 1.0)
}

/// `y,pdf,cdf` rows on the given grid.
pub fn pdf_cdf_csv(d: &MEDensity, grid: &[f64]) -> String {
    let mut out = String::from("y,pdf,cdf\n");
    for &y in grid {
        let _ = writeln!(out, "{},{},{}", y, d.pdf(y), cdf(d, y) + 0.0);
    }
    out
}

/// `x,log_density` rows: the density of `ln Y`, `f(e^x) e^x`.
pub fn log_density_csv(d: &MEDensity, grid: &[f64]) -> String {
    let mut out = String::from("x,log_density\n");
    for &x in grid {
        let y = x.exp();
        let _ = writeln!(out, "{},{}", x, d.pdf(y) * y);
    }
    out
}

/// `p,top_share` rows.
pub fn top_share_csv(d: &MEDensity, ps: &[f64], basis: ShareBasis) -> Result<String> {
    let mut out = String::from("p,top_share\n");
    for &p in ps {
        let _ = writeln!(out, "{},{}", p, top_share(d, p, basis)?);
    }
    Ok(out)
}

/// `x,lorenz` rows.
pub fn lorenz_csv(points: &[LorenzPoint]) -> String {
    let mut out = String::from("x,lorenz\n");
    for pt in points {
        let _ = writeln!(out, "{},{}", pt.x, pt.l);
    }
    out
}

/// Evaluation points at the fitted quantiles `tau_i = i / (n + 1)` of the
/// covered mass, plus every threshold.
pub fn quantile_grid(d: &MEDensity, n: usize) -> Vec<f64> {
    let mass = d.total_mass();
    let mut grid: Vec<f64> = (1..=n)
        .filter_map(|i| quantile(d, mass * i as f64 / (n + 1) as f64).ok())
        .collect();
    grid.extend(d.thresholds());
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mecore::fit_me_density;
    use crate::models::{Exponential, Population, Uniform};
    use crate::tabio::{population_moments, BinMoments, Provenance};

    fn exp_fit() -> MEDensity {
        let grid = [6.0, 4.0, 3.0, 2.0, 1.5, 1.0, 0.5, 0.25, 0.0];
        fit_me_density(&population_moments(&Exponential { rate: 1.0 }, &grid).unwrap()).unwrap()
    }

    fn uniform_fit() -> MEDensity {
        fit_me_density(&population_moments(&Uniform { lo: 0.0, hi: 1.0 }, &[1.0, 0.0]).unwrap())
            .unwrap()
    }

    #[test]
    fn ccdf_boundaries_and_oracle() {
        let d = exp_fit();
        assert!((ccdf(&d, 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(ccdf(&d, f64::INFINITY), 0.0);
        assert!((ccdf(&d, 1.3) - (-1.3f64).exp()).abs() < 1e-6);
        assert!((cdf(&d, 1.3) + ccdf(&d, 1.3) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tail_expectation_oracle() {
        let d = exp_fit();
        assert!((tail_expectation(&d, 1.0) - 2.0 * (-1.0f64).exp()).abs() < 1e-6);
        assert!((mean(&d) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantiles() {
        let d = exp_fit();
        assert!((quantile(&d, 0.5).unwrap() - 2f64.ln()).abs() < 1e-6);
        for i in 1..100 {
            let tau = i as f64 / 100.0;
            let y = quantile(&d, tau).unwrap();
            assert!((cdf(&d, y) - tau).abs() < 1e-12, "tau = {tau}");
        }
        assert!((quantile(&uniform_fit(), 0.25).unwrap() - 0.25).abs() < 1e-15);
        assert!(quantile(&d, 1.0).is_err());
        assert!(quantile(&d, 0.0).is_err());
    }

    #[test]
    fn top_shares() {
        let d = exp_fit();
        assert_eq!(top_share(&d, 1.0, ShareBasis::Covered).unwrap(), 1.0);
        let want = 0.1 - 0.1 * 0.1f64.ln();
        assert!((top_share(&d, 0.1, ShareBasis::Covered).unwrap() - want).abs() < 1e-4);
        let mut last = 0.0;
        for i in 1..=50 {
            let s = top_share(&d, i as f64 / 50.0, ShareBasis::Covered).unwrap();
            assert!(s >= last);
            last = s;
        }
    }

    #[test]
    fn external_basis_rescales_population_and_income() {
        let d = exp_fit();
        // an external population twice the table's, with three times its income
        let basis = ShareBasis::External {
            units: 2.0,
            total: 3.0,
            table_units: 1.0,
        };
        let s = top_share(&d, 0.05, basis).unwrap();
        let x = tail_quantile(&d, 0.1).unwrap();
        assert!((s - tail_expectation(&d, x) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn lorenz_endpoints_and_convexity() {
        let d = exp_fit();
        let grid: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
        let pts = lorenz_curve(&d, &grid).unwrap();
        assert_eq!(pts[0].l, 0.0);
        assert_eq!(pts[40].l, 1.0);
        for w in pts.windows(3) {
            let slope1 = (w[1].l - w[0].l) / (w[1].x - w[0].x);
            let slope2 = (w[2].l - w[1].l) / (w[2].x - w[1].x);
            assert!(slope2 >= slope1 - 1e-12);
        }
    }

    #[test]
    fn gini_oracles() {
        assert!((gini(&uniform_fit()).unwrap() - 1.0 / 3.0).abs() < 1e-6);
        assert!((gini(&exp_fit()).unwrap() - 0.5).abs() < 1e-4);
        // nearly degenerate: one narrow bin around its midpoint
        let m = BinMoments::new(
            vec![1.001, 1.0],
            vec![0.0, 1.0],
            vec![None, Some(1.0005)],
            Provenance::Empirical,
        )
        .unwrap();
        let g = gini(&fit_me_density(&m).unwrap()).unwrap();
        assert!((0.0..1e-3).contains(&g), "{g}");
    }

    #[test]
    fn ccdf_matches_quadrature_and_density() {
        let m = BinMoments::new(
            vec![8.0, 4.0, 2.0, 1.0, 0.0],
            vec![0.05, 0.15, 0.3, 0.3, 0.2],
            vec![Some(12.0), Some(5.1), Some(2.9), Some(1.4), Some(0.6)],
            Provenance::Empirical,
        )
        .unwrap();
        let d = fit_me_density(&m).unwrap();
        let knots = d.thresholds();
        for i in 0..37 {
            let y = 0.03 + i as f64 * 0.31;
            let q = crate::quad::integrate_pieces(|x| d.pdf(x), y, f64::INFINITY, &knots, 1e-12)
                .unwrap();
            assert!((ccdf(&d, y) - q).abs() < 1e-9, "y = {y}");
            let t = crate::quad::integrate_pieces(|x| x * d.pdf(x), y, f64::INFINITY, &knots, 1e-11)
                .unwrap();
            assert!((tail_expectation(&d, y) - t).abs() < 1e-9, "y = {y}");
            if knots.iter().all(|k| (k - y).abs() > 1e-3) {
                let h = 1e-5;
                let fd = -(ccdf(&d, y + h) - ccdf(&d, y - h)) / (2.0 * h);
                assert!((fd - d.pdf(y)).abs() < 1e-6 * d.pdf(y), "y = {y}");
            }
        }
        assert!((mean(&d) - m.total_first_moment()).abs() < 1e-12 * mean(&d));
    }

    #[test]
    fn emitters_have_fixed_headers() {
        let d = exp_fit();
        let csv = pdf_cdf_csv(&d, &[0.0, 1.0]);
        assert!(csv.starts_with("y,pdf,cdf\n"));
        assert_eq!(csv.lines().count(), 3);
        assert!(log_density_csv(&d, &[0.0]).starts_with("x,log_density\n"));
        let shares = top_share_csv(&d, &[0.1, 1.0], ShareBasis::Covered).unwrap();
        assert!(shares.ends_with("1,1\n"));
        let grid = quantile_grid(&d, 9);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        let _ = Exponential { rate: 1.0 }.mean();
    }
}
