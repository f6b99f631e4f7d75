//! Comparison estimators and an analytic oracle distribution.
//!
//! * Blower-Kelsall: each bounded bin's histogram block convolved with a
//!   normal kernel, so the density is a sum of normal-CDF differences.
//! * Piketty: local Pareto interpolation from the nearest observed fractile.
//! * Double Pareto: power laws below and above a mode, with closed-form CDF,
//!   Lorenz curve and sampler.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Population;
use crate::special::{normal_cdf, normal_cdf_diff, normal_pdf};
use crate::tabio::{BinMoments, TabulatedSummary};

/// `integral_{-inf}^z Phi(u) du = z Phi(z) + phi(z)`.
fn psi1(z: f64) -> f64 {
    if z == f64::NEG_INFINITY {
        return 0.0;
    }
    z * normal_cdf(z) + normal_pdf(z)
}

/// `integral_{-inf}^z u Phi(u) du = ((z^2 - 1) Phi(z) + z phi(z)) / 2`.
fn psi2(z: f64) -> f64 {
    if z == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * ((z * z - 1.0) * normal_cdf(z) + z * normal_pdf(z))
}

/// Blower-Kelsall density at `y`: bins `k >= 2` only, the top bin is dropped.
pub fn bk_density(moments: &BinMoments, h: f64, y: f64) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {h}")));
    }
    Ok(BKKernelEstimate::new(moments.clone(), h)?.pdf(y))
}

/// Blower-Kelsall estimate on fixed bin moments.
#[derive(Debug, Clone, PartialEq)]
pub struct BKKernelEstimate {
    moments: BinMoments,
    h: f64,
}

impl BKKernelEstimate {
    pub fn new(moments: BinMoments, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {h}")));
        }
        Ok(BKKernelEstimate { moments, h })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    fn terms(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (1..self.moments.len()).filter_map(move |k| {
            let q = self.moments.q()[k];
            let (a, b) = self.moments.bounds(k);
            (q > 0.0).then_some((a, b, q))
        })
    }

    pub fn pdf(&self, y: f64) -> f64 {
        let h = self.h;
        self.terms()
            .map(|(a, b, q)| q / (b - a) * normal_cdf_diff((b - y) / h, (a - y) / h))
            .sum()
    }

    /// Total mass, `sum_{k >= 2} q_k`.
    pub fn mass(&self) -> f64 {
        self.terms().map(|(_, _, q)| q).sum()
    }

    /// First moment; each block keeps its midpoint under a symmetric kernel.
    pub fn first_moment(&self) -> f64 {
        self.terms().map(|(a, b, q)| q * 0.5 * (a + b)).sum()
    }

    /// Mass at or above `x`.
    pub fn ccdf(&self, x: f64) -> f64 {
        let h = self.h;
        self.terms()
            .map(|(a, b, q)| q / (b - a) * h * (psi1((b - x) / h) - psi1((a - x) / h)))
            .sum::<f64>()
            .clamp(0.0, self.mass())
    }

    /// Integral of `t f(t)` over `[x, inf)`.
    pub fn tail_expectation(&self, x: f64) -> f64 {
        let h = self.h;
        self.terms()
            .map(|(a, b, q)| {
                let zb = (b - x) / h;
                let za = (a - x) / h;
                let upper = b * psi1(zb) - h * psi2(zb);
                let lower = a * psi1(za) - h * psi2(za);
                q / (b - a) * h * (upper - lower)
            })
            .sum()
    }

    /// Point with BK mass `mass` above it, by bisection.
    pub fn tail_quantile(&self, mass: f64) -> Result<f64> {
        let total = self.mass();
        if !(mass > 0.0 && mass < total) {
            return Err(Error::Domain(format!(
                "tail mass {mass} outside the kernel estimate's mass (0, {total})"
            )));
        }
        let (lo_edge, hi_edge) = self.terms().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), (a, b, _)| {
            (l.min(a), u.max(b))
        });
        let mut lo = lo_edge - 40.0 * self.h;
        let mut hi = hi_edge + 40.0 * self.h;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.ccdf(mid) > mass {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Income share of the top `p` of the estimate's own mass.
    pub fn top_share(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Domain(format!("fractile {p} outside (0, 1]")));
        }
        if p == 1.0 {
            return Ok(1.0);
        }
        let x = self.tail_quantile(p * self.mass())?;
        Ok(self.tail_expectation(x) / self.first_moment())
    }
}

/// Standard deviation from grouped data.
///
/// Within-bin spread is that of a uniform on bounded bins (`d^2 / 12`) and of
/// an exponential on the top bin (`(y_1 - t_1)^2`); between-bin spread comes
/// from the bin means.
pub fn grouped_sigma(moments: &BinMoments) -> f64 {
    let mass = moments.total_mass();
    let mu = moments.total_first_moment() / mass;
    let mut var = 0.0;
    for k in 0..moments.len() {
        let (q, Some(y)) = (moments.q()[k], moments.y()[k]) else {
            continue;
        };
        let (a, b) = moments.bounds(k);
        let within = if b.is_finite() {
            (b - a) * (b - a) / 12.0
        } else {
            (y - a) * (y - a)
        };
        var += q * (within + (y - mu) * (y - mu));
    }
    (var / mass).sqrt()
}

/// Rule-of-thumb bandwidth `h = c sigma n^{-1/5}`; `sigma` defaults to
/// [`grouped_sigma`].
pub fn bk_bandwidth(moments: &BinMoments, c: f64, n: u64, sigma: Option<f64>) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!("bandwidth constant must be positive, got {c}")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be positive".into()));
    }
    let s = sigma.unwrap_or_else(|| grouped_sigma(moments));
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("degenerate spread estimate {s}")));
    }
    Ok(c * s * (n as f64).powf(-0.2))
}

/// One usable row of a Pareto interpolation table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    /// Population fraction at or above the threshold.
    pub p: f64,
    pub t: f64,
    /// Average value of units at or above the threshold.
    pub s: f64,
    /// Inverted Pareto coefficient `s / t`.
    pub b: f64,
    /// Local Pareto exponent `b / (b - 1)`.
    pub alpha: f64,
}

/// Local Pareto coefficients at each observed fractile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoInterp {
    pub rows: Vec<ParetoRow>,
    /// Table population the fractiles refer to.
    pub population: f64,
    /// Tabulated total, `S_{n_K}`.
    pub total: f64,
    /// Largest observed fractile, `n_K / n`.
    pub coverage: f64,
}

impl ParetoInterp {
    /// Rows with a positive threshold and `b > 1`.
    pub fn from_summary(summary: &TabulatedSummary) -> Result<Self> {
        let n = summary.population() as f64;
        let mut rows = Vec::new();
        for k in 0..summary.len() {
            let count = summary.cum_counts()[k];
            let t = summary.thresholds()[k];
            if count == 0 || !(t > 0.0) {
                continue;
            }
            let s = summary.cum_sums()[k] / count as f64;
            let b = s / t;
            if b > 1.0 && b.is_finite() {
                rows.push(ParetoRow {
                    p: count as f64 / n,
                    t,
                    s,
                    b,
                    alpha: b / (b - 1.0),
                });
            }
        }
        if rows.is_empty() {
            return Err(Error::Validation("no row with a positive threshold and b > 1".into()));
        }
        let k = summary.len();
        Ok(ParetoInterp {
            rows,
            population: n,
            total: summary.cum_sums()[k - 1],
            coverage: summary.cum_counts()[k - 1] as f64 / n,
        })
    }
}

/// Outcome of a Pareto-interpolated share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PikettyShare {
    pub share: f64,
    /// Threshold at the requested fractile, `t_k (p_k / p)^{1 / alpha_k}`.
    pub threshold: f64,
    /// Index into [`ParetoInterp::rows`] of the row used.
    pub row: usize,
    /// Two rows were equally close; the larger fractile was used.
    pub tie: bool,
}

/// Top-`p` share by Pareto interpolation from the closest observed fractile.
///
/// `S(p) / n = s_k p_k^{1/alpha_k} p^{1 - 1/alpha_k}`, divided by the tabulated
/// total or, with `external = Some((units, total))`, by an external total,
/// `p` then being a fraction of the external population.
pub fn piketty_top_share(
    interp: &ParetoInterp,
    p: f64,
    external: Option<(f64, f64)>,
) -> Result<PikettyShare> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!("fractile {p} outside (0, 1]")));
    }
    let (p_table, denom) = match external {
        None => (p, interp.total / interp.population),
        Some((units, total)) => {
            if !(units > 0.0 && total > 0.0) {
                return Err(Error::InvalidParameter("external totals must be positive".into()));
            }
            (p * units / interp.population, total / interp.population)
        }
    };
    if p_table > interp.coverage * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "fractile {p} exceeds the table's coverage {}",
            interp.coverage
        )));
    }
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    let mut tie = false;
    for (i, r) in interp.rows.iter().enumerate() {
        let dist = (r.p - p_table).abs();
        if dist < best_dist {
            best = i;
            best_dist = dist;
            tie = false;
        } else if dist == best_dist {
            tie = true;
            if r.p > interp.rows[best].p {
                best = i;
            }
        }
    }
    let r = interp.rows[best];
    let inv = 1.0 / r.alpha;
    let per_unit = r.s * r.p.powf(inv) * p_table.powf(1.0 - inv);
    Ok(PikettyShare {
        share: per_unit / denom,
        threshold: r.t * (r.p / p_table).powf(inv),
        row: best,
        tie,
    })
}

/// Double Pareto with upper exponent `alpha`, lower exponent `beta` and mode `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleParetoParams {
    alpha: f64,
    beta: f64,
    m: f64,
}

impl DoubleParetoParams {
    pub fn new(alpha: f64, beta: f64, m: f64) -> Result<Self> {
        if !(alpha > 1.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must exceed 1, got {alpha}")));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::InvalidParameter(format!("scale must be positive, got {m}")));
        }
        Ok(DoubleParetoParams { alpha, beta, m })
    }

    /// Scale giving unit mean, `M = (beta + 1)(alpha - 1) / (alpha beta)`.
    pub fn unit_mean(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(alpha, beta, (beta + 1.0) * (alpha - 1.0) / (alpha * beta))
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn scale(&self) -> f64 {
        self.m
    }

    /// Population fraction below the mode, `alpha / (alpha + beta)`.
    pub fn mode_fractile(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn cdf(&self, y: f64) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        if y <= 0.0 {
            0.0
        } else if y <= self.m {
            a / (a + b) * (y / self.m).powf(b)
        } else {
            1.0 - b / (a + b) * (y / self.m).powf(-a)
        }
    }

    pub fn lorenz(&self, x: f64) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else if x <= self.mode_fractile() {
            (a - 1.0) / (a + b) * (x * (a + b) / a).powf((b + 1.0) / b)
        } else {
            1.0 - self.top_share(1.0 - x)
        }
    }

    pub fn top_share(&self, p: f64) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        if p <= 0.0 {
            0.0
        } else if p >= 1.0 {
            1.0
        } else if p <= 1.0 - self.mode_fractile() {
            (b + 1.0) / (a + b) * (p * (a + b) / b).powf((a - 1.0) / a)
        } else {
            1.0 - self.lorenz(1.0 - p)
        }
    }

    /// `M U1^{-1/alpha} U2^{1/beta}` for uniforms strictly inside (0, 1).
    pub fn sample(&self, u1: f64, u2: f64) -> Result<f64> {
        if !(u1 > 0.0 && u1 < 1.0 && u2 > 0.0 && u2 < 1.0) {
            return Err(Error::Domain(format!("uniforms must lie in (0, 1), got {u1}, {u2}")));
        }
        Ok(self.m * u1.powf(-1.0 / self.alpha) * u2.powf(1.0 / self.beta))
    }
}

impl Population for DoubleParetoParams {
    fn pdf(&self, y: f64) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        let c = a * b / (a + b) / self.m;
        if y <= 0.0 {
            0.0
        } else if y <= self.m {
            c * (y / self.m).powf(b - 1.0)
        } else {
            c * (y / self.m).powf(-a - 1.0)
        }
    }

    fn ccdf(&self, y: f64) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        if y <= 0.0 {
            1.0
        } else if y <= self.m {
            1.0 - a / (a + b) * (y / self.m).powf(b)
        } else {
            b / (a + b) * (y / self.m).powf(-a)
        }
    }

    fn tail_mean(&self, y: f64) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        let k = a * b * self.m / (a + b);
        if y <= 0.0 {
            self.mean()
        } else if y <= self.m {
            self.mean() - k / (b + 1.0) * (y / self.m).powf(b + 1.0)
        } else {
            k / (a - 1.0) * (y / self.m).powf(1.0 - a)
        }
    }

    fn support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn mean(&self) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        self.m * a * b / ((a - 1.0) * (b + 1.0))
    }

    fn upper_quantile(&self, p: f64) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        if p <= 0.0 {
            return f64::INFINITY;
        }
        if p >= 1.0 {
            return 0.0;
        }
        if p <= b / (a + b) {
            self.m * (p * (a + b) / b).powf(-1.0 / a)
        } else {
            self.m * ((1.0 - p) * (a + b) / a).powf(1.0 / b)
        }
    }

    fn top_share(&self, p: f64) -> f64 {
        DoubleParetoParams::top_share(self, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Exponential;
    use crate::quad;
    use crate::tabio::{population_moments, Provenance};

    fn unit_bin() -> BinMoments {
        BinMoments::new(
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![None, Some(0.5)],
            Provenance::Empirical,
        )
        .unwrap()
    }

    fn three_bins() -> BinMoments {
        BinMoments::new(
            vec![5.0, 2.0, 1.0, 0.0],
            vec![0.1, 0.3, 0.4, 0.2],
            vec![Some(7.0), Some(3.0), Some(1.4), Some(0.6)],
            Provenance::Empirical,
        )
        .unwrap()
    }

    #[test]
    fn bk_single_bin_value() {
        let v = bk_density(&unit_bin(), 1.0, 0.5).unwrap();
        assert!((v - 0.382_924_922_548_026).abs() < 1e-15);
        assert!(bk_density(&unit_bin(), 0.0, 0.5).is_err());
    }

    #[test]
    fn bk_small_bandwidth_is_histogram() {
        let m = three_bins();
        let v = bk_density(&m, 1e-6, 3.5).unwrap();
        assert!((v - 0.3 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn bk_mass_and_tail_closed_forms() {
        let m = three_bins();
        let bk = BKKernelEstimate::new(m, 0.4).unwrap();
        let mass = quad::integrate_pieces(|y| bk.pdf(y), -20.0, 30.0, &[0.0, 1.0, 2.0, 5.0], 1e-12)
            .unwrap();
        assert!((mass - 0.9).abs() < 1e-8);
        assert!((bk.mass() - 0.9).abs() < 1e-15);
        for &x in &[-1.0, 0.3, 1.0, 2.5, 4.9, 6.0] {
            let c = quad::integrate_pieces(|y| bk.pdf(y), x, 30.0, &[0.0, 1.0, 2.0, 5.0], 1e-13)
                .unwrap();
            assert!((bk.ccdf(x) - c).abs() < 1e-10, "x = {x}");
            let t = quad::integrate_pieces(|y| y * bk.pdf(y), x, 30.0, &[0.0, 1.0, 2.0, 5.0], 1e-13)
                .unwrap();
            assert!((bk.tail_expectation(x) - t).abs() < 1e-10, "x = {x}");
        }
        assert!((bk.tail_expectation(-30.0) - bk.first_moment()).abs() < 1e-10);
        let x = bk.tail_quantile(0.2).unwrap();
        assert!((bk.ccdf(x) - 0.2).abs() < 1e-12);
        assert_eq!(bk.top_share(1.0).unwrap(), 1.0);
    }

    #[test]
    fn bandwidth_rule() {
        let m = unit_bin();
        let h = bk_bandwidth(&m, 1.0, 100_000, Some(1.0)).unwrap();
        assert!((h - 0.1).abs() < 1e-15);
        let h2 = bk_bandwidth(&m, 2.0, 100_000, Some(1.0)).unwrap();
        assert!((h2 - 2.0 * h).abs() < 1e-15);
        assert!(bk_bandwidth(&m, 1.0, 10, Some(0.0)).is_err());
        assert!(bk_bandwidth(&m, -1.0, 10, None).is_err());
    }

    #[test]
    fn grouped_sigma_on_fine_exponential_grid() {
        let grid: Vec<f64> = (0..=80).rev().map(|i| i as f64 * 0.1).collect();
        let m = population_moments(&Exponential { rate: 1.0 }, &grid).unwrap();
        let s = grouped_sigma(&m);
        assert!((s - 1.0).abs() < 0.05, "{s}");
    }

    #[test]
    fn piketty_examples() {
        let interp = ParetoInterp {
            rows: vec![ParetoRow {
                p: 0.01,
                t: 1.0,
                s: 2.0,
                b: 2.0,
                alpha: 2.0,
            }],
            population: 1.0,
            total: 1.0,
            coverage: 1.0,
        };
        let r = piketty_top_share(&interp, 0.005, None).unwrap();
        assert!((r.share - 0.014_142_135_623_730_95).abs() < 1e-15);
        let r = piketty_top_share(&interp, 0.01, None).unwrap();
        assert!((r.share - 0.02).abs() < 1e-16);
        assert!((r.threshold - 1.0).abs() < 1e-16);
    }

    #[test]
    fn piketty_ties_go_to_larger_fractile() {
        let row = |p: f64| ParetoRow {
            p,
            t: 1.0,
            s: 2.0,
            b: 2.0,
            alpha: 2.0,
        };
        let interp = ParetoInterp {
            rows: vec![row(0.25), row(0.75)],
            population: 1.0,
            total: 1.0,
            coverage: 1.0,
        };
        let r = piketty_top_share(&interp, 0.5, None).unwrap();
        assert!(r.tie);
        assert_eq!(r.row, 1);
    }

    #[test]
    fn local_exponent_forms_agree() {
        let s = TabulatedSummary::new(
            vec![100.0, 10.0, 1.0],
            vec![10, 200, 1000],
            vec![3000.0, 7000.0, 11000.0],
            None,
        )
        .unwrap();
        let interp = ParetoInterp::from_summary(&s).unwrap();
        for r in &interp.rows {
            assert!((r.alpha - 1.0 / (1.0 - r.t / r.s)).abs() < 1e-12);
            assert!(r.b > 1.0 && r.alpha > 1.0);
        }
    }

    #[test]
    fn double_pareto_closed_forms() {
        let dp = DoubleParetoParams::new(2.3, 1.1, 1.0).unwrap();
        assert!((dp.cdf(1.0) - 0.676_470_588_235_294_1).abs() < 1e-15);
        assert!((Population::ccdf(&dp, 1.0) - 1.1 / 3.4).abs() < 1e-15);
        let m = population_moments(&dp, &[1.0, 0.0]).unwrap();
        assert!((m.q()[0] - 1.1 / 3.4).abs() < 1e-15);
        assert_eq!(dp.lorenz(0.0), 0.0);
        assert_eq!(dp.lorenz(1.0), 1.0);
        let dp2 = DoubleParetoParams::new(1.5, 0.5, 1.0).unwrap();
        assert!((dp2.lorenz(0.75) - 0.25).abs() < 1e-15);
        assert!(DoubleParetoParams::new(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn double_pareto_branches_join_smoothly() {
        let dp = DoubleParetoParams::new(2.3, 1.1, 0.7).unwrap();
        let y = dp.scale();
        assert!((dp.cdf(y * (1.0 - 1e-12)) - dp.cdf(y * (1.0 + 1e-12))).abs() < 1e-10);
        let x0 = dp.mode_fractile();
        let h = 1e-6;
        let left = (dp.lorenz(x0) - dp.lorenz(x0 - h)) / h;
        let right = (dp.lorenz(x0 + h) - dp.lorenz(x0)) / h;
        assert!((left - right).abs() < 1e-5);
        // the Lorenz slope at x is quantile(x) / mean
        let mid = (dp.lorenz(x0 + h) - dp.lorenz(x0 - h)) / (2.0 * h);
        assert!((mid - y / dp.mean()).abs() < 1e-8);
        for i in 1..200 {
            let x = i as f64 / 200.0;
            assert!((dp.lorenz(x) + dp.top_share(1.0 - x) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn double_pareto_population_functions() {
        let dp = DoubleParetoParams::unit_mean(2.3, 1.1).unwrap();
        assert!((dp.mean() - 1.0).abs() < 1e-15);
        for &y in &[0.2, 0.5, dp.scale(), 2.0, 9.0] {
            let t = quad::integrate_pieces(|x| x * dp.pdf(x), y, f64::INFINITY, &[dp.scale()], 1e-12)
                .unwrap();
            assert!((dp.tail_mean(y) - t).abs() < 1e-10, "y = {y}");
            let p = dp.ccdf(y);
            assert!((dp.upper_quantile(p) - y).abs() < 1e-12 * y);
        }
        for &p in &[0.001, 0.1, 0.5, 0.9] {
            let generic = dp.tail_mean(dp.upper_quantile(p)) / dp.mean();
            assert!((dp.top_share(p) - generic).abs() < 1e-13);
        }
    }

    #[test]
    fn double_pareto_sampler() {
        let dp = DoubleParetoParams::new(2.3, 1.1, 1.0).unwrap();
        let near = 1.0 - 1e-15;
        assert!((dp.sample(near, near).unwrap() - 1.0).abs() < 1e-14);
        assert!(dp.sample(0.0, 0.5).is_err());
        assert!(dp.sample(0.5, 1.0).is_err());
    }
}
