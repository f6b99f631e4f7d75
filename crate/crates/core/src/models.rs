//! Analytic population distributions used as oracles and simulation models.
//!
//! Every model exposes its upper tail in closed form: `ccdf(y) = P(Y > y)` and
//! `tail_mean(y) = E[Y; Y > y]`, so bin probabilities, conditional means and
//! true top shares follow without numerical integration.

use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::special::{normal_cdf, normal_quantile};

/// A univariate distribution with closed-form upper-tail functionals.
pub trait Population: Send + Sync {
    fn pdf(&self, y: f64) -> f64;

    /// `P(Y > y)`.
    fn ccdf(&self, y: f64) -> f64;

    /// `E[Y; Y > y] = int_y^inf x f(x) dx`.
    fn tail_mean(&self, y: f64) -> f64;

    /// Lower and upper end of the support.
    fn support(&self) -> (f64, f64);

    fn mean(&self) -> f64 {
        self.tail_mean(self.support().0)
    }

    fn cdf(&self, y: f64) -> f64 {
        1.0 - self.ccdf(y)
    }

    /// The `y` with `P(Y > y) = p`.
    fn upper_quantile(&self, p: f64) -> f64 {
        invert_ccdf(self, p)
    }

    fn quantile(&self, tau: f64) -> f64 {
        self.upper_quantile(1.0 - tau)
    }

    /// Share of total value held by the top `p` fraction.
    fn top_share(&self, p: f64) -> f64 {
        if p >= 1.0 {
            return 1.0;
        }
        if p <= 0.0 {
            return 0.0;
        }
        self.tail_mean(self.upper_quantile(p)) / self.mean()
    }
}

/// Bracketed Newton inversion of `ccdf(y) = p`.
fn invert_ccdf<P: Population + ?Sized>(dist: &P, p: f64) -> f64 {
    let (lo_s, hi_s) = dist.support();
    if p >= 1.0 {
        return lo_s;
    }
    if p <= 0.0 {
        return hi_s;
    }
    let mut lo = if lo_s.is_finite() { lo_s } else { -1.0 };
    while !lo_s.is_finite() && dist.ccdf(lo) < p {
        lo *= 2.0;
    }
    let mut hi = if lo_s.is_finite() { lo_s.abs().max(1.0) } else { 1.0 };
    while dist.ccdf(hi) > p {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    let mut y = 0.5 * (lo + hi);
    for _ in 0..300 {
        let r = dist.ccdf(y) - p;
        if r == 0.0 {
            break;
        }
        if r > 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let d = dist.pdf(y);
        let newton = y + r / d;
        let next = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - y).abs() <= 2.0 * f64::EPSILON * y.abs().max(f64::MIN_POSITIVE) {
            y = next;
            break;
        }
        y = next;
    }
    y
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uniform {
    pub lo: f64,
    pub hi: f64,
}

impl Population for Uniform {
    fn pdf(&self, y: f64) -> f64 {
        if y >= self.lo && y < self.hi {
            1.0 / (self.hi - self.lo)
        } else {
            0.0
        }
    }
    fn ccdf(&self, y: f64) -> f64 {
        ((self.hi - y) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }
    fn tail_mean(&self, y: f64) -> f64 {
        let y = y.clamp(self.lo, self.hi);
        (self.hi * self.hi - y * y) / (2.0 * (self.hi - self.lo))
    }
    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
    fn upper_quantile(&self, p: f64) -> f64 {
        self.hi - p.clamp(0.0, 1.0) * (self.hi - self.lo)
    }
}

/// Exponential with rate `rate` on `[0, inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponential {
    pub rate: f64,
}

impl Population for Exponential {
    fn pdf(&self, y: f64) -> f64 {
        if y < 0.0 {
            0.0
        } else {
            self.rate * (-self.rate * y).exp()
        }
    }
    fn ccdf(&self, y: f64) -> f64 {
        (-self.rate * y.max(0.0)).exp()
    }
    fn tail_mean(&self, y: f64) -> f64 {
        let y = y.max(0.0);
        (-self.rate * y).exp() * (y + 1.0 / self.rate)
    }
    fn support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
    fn upper_quantile(&self, p: f64) -> f64 {
        -p.ln() / self.rate
    }
    fn top_share(&self, p: f64) -> f64 {
        if p >= 1.0 {
            1.0
        } else {
            p - p * p.ln()
        }
    }
}

/// Lognormal: `ln Y ~ N(mu, sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormal {
    pub mu: f64,
    pub sigma: f64,
}

impl Population for LogNormal {
    fn pdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let z = (y.ln() - self.mu) / self.sigma;
        (-0.5 * z * z).exp() / (y * self.sigma * (2.0 * std::f64::consts::PI).sqrt())
    }
    fn ccdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 1.0;
        }
        normal_cdf(-(y.ln() - self.mu) / self.sigma)
    }
    fn tail_mean(&self, y: f64) -> f64 {
        let m = (self.mu + 0.5 * self.sigma * self.sigma).exp();
        if y <= 0.0 {
            return m;
        }
        m * normal_cdf(-(y.ln() - self.mu - self.sigma * self.sigma) / self.sigma)
    }
    fn support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
    fn upper_quantile(&self, p: f64) -> f64 {
        (self.mu - self.sigma * normal_quantile(p)).exp()
    }
    fn top_share(&self, p: f64) -> f64 {
        if p >= 1.0 {
            return 1.0;
        }
        normal_cdf(normal_quantile(p) + self.sigma)
    }
}

/// Gamma with shape `shape` and rate `rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gamma {
    pub shape: f64,
    pub rate: f64,
}

impl Population for Gamma {
    fn pdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let a = self.shape;
        (a * self.rate.ln() + (a - 1.0) * y.ln() - self.rate * y - ln_gamma(a)).exp()
    }
    fn ccdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            1.0
        } else {
            gamma_ur(self.shape, self.rate * y)
        }
    }
    fn tail_mean(&self, y: f64) -> f64 {
        let m = self.shape / self.rate;
        if y <= 0.0 {
            m
        } else {
            m * gamma_ur(self.shape + 1.0, self.rate * y)
        }
    }
    fn support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
}

/// Weibull in the `F(y) = 1 - exp(-b y^k)` parameterization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weibull {
    pub shape: f64,
    pub b: f64,
}

impl Weibull {
    fn moment_scale(&self) -> f64 {
        let k = self.shape;
        (ln_gamma(1.0 + 1.0 / k) - self.b.ln() / k).exp()
    }
}

impl Population for Weibull {
    fn pdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let k = self.shape;
        self.b * k * y.powf(k - 1.0) * (-self.b * y.powf(k)).exp()
    }
    fn ccdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            1.0
        } else {
            (-self.b * y.powf(self.shape)).exp()
        }
    }
    fn tail_mean(&self, y: f64) -> f64 {
        let m = self.moment_scale();
        if y <= 0.0 {
            m
        } else {
            m * gamma_ur(1.0 + 1.0 / self.shape, self.b * y.powf(self.shape))
        }
    }
    fn support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
    fn upper_quantile(&self, p: f64) -> f64 {
        (-p.ln() / self.b).powf(1.0 / self.shape)
    }
    fn top_share(&self, p: f64) -> f64 {
        if p >= 1.0 {
            return 1.0;
        }
        gamma_ur(1.0 + 1.0 / self.shape, -p.ln())
    }
}

/// Pareto type I with scale `scale` and exponent `alpha > 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pareto {
    pub scale: f64,
    pub alpha: f64,
}

impl Population for Pareto {
    fn pdf(&self, y: f64) -> f64 {
        if y < self.scale {
            0.0
        } else {
            self.alpha / self.scale * (y / self.scale).powf(-self.alpha - 1.0)
        }
    }
    fn ccdf(&self, y: f64) -> f64 {
        if y <= self.scale {
            1.0
        } else {
            (y / self.scale).powf(-self.alpha)
        }
    }
    fn tail_mean(&self, y: f64) -> f64 {
        let y = y.max(self.scale);
        self.alpha / (self.alpha - 1.0) * y * (y / self.scale).powf(-self.alpha)
    }
    fn support(&self) -> (f64, f64) {
        (self.scale, f64::INFINITY)
    }
    fn upper_quantile(&self, p: f64) -> f64 {
        self.scale * p.powf(-1.0 / self.alpha)
    }
    fn top_share(&self, p: f64) -> f64 {
        p.min(1.0).powf(1.0 - 1.0 / self.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;

    fn check_tail_functions<P: Population>(dist: &P, points: &[f64], tol: f64) {
        let (lo, _) = dist.support();
        for &y in points {
            let mass = quad::integrate_pieces(|x| dist.pdf(x), y, f64::INFINITY, &[], 1e-13).unwrap();
            assert!((mass - dist.ccdf(y)).abs() < tol, "ccdf at {y}: {mass} vs {}", dist.ccdf(y));
            let first =
                quad::integrate_pieces(|x| x * dist.pdf(x), y, f64::INFINITY, &[], 1e-13).unwrap();
            assert!(
                (first - dist.tail_mean(y)).abs() < tol,
                "tail mean at {y}: {first} vs {}",
                dist.tail_mean(y)
            );
        }
        let total = dist.ccdf(lo);
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn closed_forms_match_quadrature() {
        check_tail_functions(&Exponential { rate: 1.3 }, &[0.0, 0.4, 2.0], 1e-11);
        check_tail_functions(&LogNormal { mu: -1.125, sigma: 1.5 }, &[0.1, 1.0, 5.0], 1e-9);
        check_tail_functions(&Gamma { shape: 2.5, rate: 2.5 }, &[0.1, 1.0, 3.0], 1e-10);
        check_tail_functions(&Weibull { shape: 1.7, b: 0.8 }, &[0.1, 1.0, 3.0], 1e-10);
        check_tail_functions(&Pareto { scale: 1.0, alpha: 3.0 }, &[1.0, 2.0, 10.0], 1e-10);
    }

    #[test]
    fn quantiles_invert_ccdf() {
        let models: Vec<Box<dyn Population>> = vec![
            Box::new(Exponential { rate: 2.0 }),
            Box::new(LogNormal { mu: 0.3, sigma: 0.8 }),
            Box::new(Gamma { shape: 0.5, rate: 0.5 }),
            Box::new(Weibull { shape: 0.7, b: 1.2 }),
            Box::new(Uniform { lo: -1.0, hi: 3.0 }),
        ];
        for m in &models {
            for &p in &[1e-4, 0.01, 0.3, 0.77, 0.999] {
                let y = m.upper_quantile(p);
                assert!((m.ccdf(y) - p).abs() < 1e-12 * p.max(1e-2), "p = {p}, y = {y}");
            }
        }
    }

    #[test]
    fn top_share_overrides_agree_with_generic_route() {
        let e = Exponential { rate: 1.0 };
        let ln = LogNormal { mu: -1.125, sigma: 1.5 };
        let w = Weibull { shape: 0.7, b: 1.3 };
        for &p in &[0.001, 0.1, 0.5] {
            let generic = |d: &dyn Population| d.tail_mean(d.upper_quantile(p)) / d.mean();
            assert!((e.top_share(p) - generic(&e)).abs() < 1e-12);
            assert!((ln.top_share(p) - generic(&ln)).abs() < 1e-10);
            assert!((w.top_share(p) - generic(&w)).abs() < 1e-10);
        }
        assert!((e.top_share(0.1) - 0.330_258_509_299_404_6).abs() < 1e-12);
    }
}
