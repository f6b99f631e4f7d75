//! Monte-Carlo harness: sample, tabulate, estimate, score.
//!
//! Each replication owns a ChaCha8 stream selected by `(model, n, replication)`
//! from the master seed, so results do not depend on thread scheduling.
//! Replications run on the rayon pool; results are collected in replication
//! order and reduced sequentially.

use std::fmt::Write as _;
use std::time::Instant;

use rand::distr::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{bk_bandwidth, piketty_top_share, BKKernelEstimate, DoubleParetoParams, ParetoInterp};
use crate::dist::{self, ShareBasis};
use crate::error::{Error, Result};
use crate::mecore::{fit_me_density, MEDensity};
use crate::models::{Gamma, LogNormal, Population, Weibull};
use crate::quad;
use crate::tabio::{to_bin_moments, BinMoments, TabulatedSummary};

/// Distribution family with its unit-mean normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    /// `mu = -sigma^2 / 2`.
    Lognormal { sigma: f64 },
    /// Rate equal to the shape.
    Gamma { shape: f64 },
    /// `F(y) = 1 - exp(-b y^k)` with `b = Gamma(1 + 1/k)^k`.
    Weibull { shape: f64 },
    /// `M = (beta + 1)(alpha - 1) / (alpha beta)`.
    DoublePareto { alpha: f64, beta: f64 },
}

impl ModelSpec {
    pub fn label(&self) -> String {
        match *self {
            ModelSpec::Lognormal { sigma } => format!("lognormal(sigma={sigma})"),
            ModelSpec::Gamma { shape } => format!("gamma(a={shape})"),
            ModelSpec::Weibull { shape } => format!("weibull(k={shape})"),
            ModelSpec::DoublePareto { alpha, beta } => {
                format!("double_pareto(alpha={alpha},beta={beta})")
            }
        }
    }
}

#[derive(Debug)]
enum Sampler {
    Lognormal(rand_distr::LogNormal<f64>),
    Gamma(rand_distr::Gamma<f64>),
    Weibull(rand_distr::Weibull<f64>),
    DoublePareto(DoubleParetoParams),
}

/// A normalized model: population functions plus a sampler.
#[derive(Debug)]
pub struct Model {
    spec: ModelSpec,
    population: Box<dyn PopulationDebug>,
    sampler: Sampler,
}

/// [`Population`] that can be printed.
pub trait PopulationDebug: Population + std::fmt::Debug {}
impl<T: Population + std::fmt::Debug> PopulationDebug for T {}

fn bad(msg: String) -> Error {
    Error::InvalidParameter(msg)
}

impl Model {
    /// Build a model and confirm by quadrature that its mean is 1 to 1e-6.
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let (population, sampler): (Box<dyn PopulationDebug>, Sampler) = match spec {
            ModelSpec::Lognormal { sigma } => {
                if !(sigma > 0.0) || !sigma.is_finite() {
                    return Err(bad(format!("lognormal sigma must be positive, got {sigma}")));
                }
                let mu = -0.5 * sigma * sigma;
                (
                    Box::new(LogNormal { mu, sigma }),
                    Sampler::Lognormal(rand_distr::LogNormal::new(mu, sigma).map_err(|e| bad(e.to_string()))?),
                )
            }
            ModelSpec::Gamma { shape } => {
                if !(shape > 0.0) || !shape.is_finite() {
                    return Err(bad(format!("gamma shape must be positive, got {shape}")));
                }
                (
                    Box::new(Gamma { shape, rate: shape }),
                    Sampler::Gamma(rand_distr::Gamma::new(shape, 1.0 / shape).map_err(|e| bad(e.to_string()))?),
                )
            }
            ModelSpec::Weibull { shape } => {
                if !(shape > 0.0) || !shape.is_finite() {
                    return Err(bad(format!("Weibull shape must be positive, got {shape}")));
                }
                let b = statrs::function::gamma::gamma(1.0 + 1.0 / shape).powf(shape);
                let scale = b.powf(-1.0 / shape);
                (
                    Box::new(Weibull { shape, b }),
                    Sampler::Weibull(rand_distr::Weibull::new(scale, shape).map_err(|e| bad(e.to_string()))?),
                )
            }
            ModelSpec::DoublePareto { alpha, beta } => {
                let dp = DoubleParetoParams::unit_mean(alpha, beta)?;
                (Box::new(dp), Sampler::DoublePareto(dp))
            }
        };
        let model = Model {
            spec,
            population,
            sampler,
        };
        let m = model.mean_by_quadrature()?;
        if (m - 1.0).abs() > 1e-6 {
            return Err(bad(format!("{} has mean {m}, expected 1", spec.label())));
        }
        Ok(model)
    }

    pub fn spec(&self) -> ModelSpec {
        self.spec
    }

    pub fn population(&self) -> &dyn Population {
        self.population.as_ref()
    }

    /// `integral y f(y) dy`, split at the median and the mode where present.
    pub fn mean_by_quadrature(&self) -> Result<f64> {
        let pop = self.population();
        let mut knots = vec![pop.upper_quantile(0.5), 1.0];
        if let ModelSpec::DoublePareto { .. } = self.spec {
            if let Sampler::DoublePareto(dp) = &self.sampler {
                knots.push(dp.scale());
            }
        }
        quad::integrate_pieces(|y| y * pop.pdf(y), 0.0, f64::INFINITY, &knots, 1e-10)
    }

    /// One draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.sampler {
            Sampler::Lognormal(d) => d.sample(rng),
            Sampler::Gamma(d) => d.sample(rng),
            Sampler::Weibull(d) => d.sample(rng),
            Sampler::DoublePareto(dp) => {
                let u1: f64 = Open01.sample(rng);
                let u2: f64 = Open01.sample(rng);
                dp.sample(u1, u2).expect("open uniforms")
            }
        }
    }

    /// Population top-`p` share.
    pub fn true_share(&self, p: f64) -> f64 {
        self.population().top_share(p)
    }
}

/// RNG for one replication: the master seed picks the key, the cell and
/// replication pick the stream.
pub fn replication_rng(seed: u64, model: usize, n_index: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((model as u64) << 48) | ((n_index as u64) << 32) | rep as u64);
    rng
}

/// Draw `n` values; meant for oracles and tests, the harness streams instead.
pub fn sample(model: &Model, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = replication_rng(seed, 0, 0, 0);
    (0..n).map(|_| model.draw(&mut rng)).collect()
}

/// Top fractiles `0.1%, 1%, 5%, 10%, ..., 95%, 100%` (22 groups).
pub fn share_grid() -> Vec<f64> {
    let mut g = vec![0.001, 0.01, 0.05];
    g.extend((2..=19).map(|i| i as f64 * 0.05));
    g.push(1.0);
    g
}

/// Top fractiles `0.1%, 0.5%, 1%, 5%, 10%, 15%, ..., 90%, 95%, 99%, 99.5%, 99.9%, 100%` (26 groups).
pub fn density_grid() -> Vec<f64> {
    let mut g = vec![0.001, 0.005, 0.01, 0.05];
    g.extend((2..=18).map(|i| i as f64 * 0.05));
    g.extend([0.95, 0.99, 0.995, 0.999, 1.0]);
    g
}

/// Default top-share fractiles `p0`.
pub fn default_p0() -> Vec<f64> {
    let mut p = vec![0.001, 0.01, 0.05];
    p.extend((1..=9).map(|i| i as f64 / 10.0));
    p
}

/// Population thresholds at top fractiles: `t_k = Q(1 - p_k)`.
pub fn population_thresholds(pop: &dyn Population, grid: &[f64]) -> Vec<f64> {
    grid.iter().map(|&p| pop.upper_quantile(p)).collect()
}

/// Streaming tabulation on fixed thresholds (values below `t_K` are dropped).
#[derive(Debug, Clone)]
pub struct FixedTabulator {
    thresholds: Vec<f64>,
    counts: Vec<u64>,
    sums: Vec<f64>,
    total_count: u64,
    sum: f64,
    sum_sq: f64,
}

impl FixedTabulator {
    pub fn new(thresholds: Vec<f64>) -> Self {
        let k = thresholds.len();
        FixedTabulator {
            thresholds,
            counts: vec![0; k],
            sums: vec![0.0; k],
            total_count: 0,
            sum: 0.0,
            sum_sq: 0.0,
        }
    }

    pub fn push(&mut self, y: f64) {
        self.total_count += 1;
        self.sum += y;
        self.sum_sq += y * y;
        // first bin whose lower threshold is <= y
        let k = self.thresholds.partition_point(|&t| t > y);
        if k < self.thresholds.len() {
            self.counts[k] += 1;
            self.sums[k] += y;
        }
    }

    /// Sample standard deviation of every value pushed.
    pub fn sample_sd(&self) -> f64 {
        let n = self.total_count as f64;
        let m = self.sum / n;
        ((self.sum_sq / n - m * m) * n / (n - 1.0)).max(0.0).sqrt()
    }

    pub fn finish(&self) -> Result<TabulatedSummary> {
        let mut cum_counts = Vec::with_capacity(self.counts.len());
        let mut cum_sums = Vec::with_capacity(self.counts.len());
        let (mut c, mut s) = (0u64, 0.0f64);
        for k in 0..self.counts.len() {
            c += self.counts[k];
            s += self.sums[k];
            cum_counts.push(c);
            cum_sums.push(s);
        }
        TabulatedSummary::new(self.thresholds.clone(), cum_counts, cum_sums, Some(self.total_count))
    }
}

/// Tabulate on fixed thresholds.
pub fn tabulate_fixed(values: &[f64], thresholds: &[f64]) -> Result<TabulatedSummary> {
    let mut tab = FixedTabulator::new(thresholds.to_vec());
    for &y in values {
        tab.push(y);
    }
    tab.finish()
}

/// Tabulate at empirical top fractiles: `t_k` is the `ceil(p_k n)`-th largest
/// value. Reorders `values` in place by repeated selection.
pub fn tabulate_fractiles(values: &mut [f64], grid: &[f64]) -> Result<TabulatedSummary> {
    let n = values.len();
    if n == 0 {
        return Err(Error::Validation("cannot tabulate an empty sample".into()));
    }
    if let Some(p) = grid.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::InvalidParameter(format!("fractile {p} outside (0, 1]")));
    }
    let k = grid.len();
    let tops: Vec<usize> = grid
        .iter()
        .map(|&p| ((p * n as f64).ceil() as usize).clamp(1, n))
        .collect();
    let mut thresholds = vec![0.0; k];
    let mut cum_sums = vec![0.0; k];
    // widest group first; each narrower group is selected inside the previous one
    let mut start = 0;
    for i in (0..k).rev() {
        let lo = n - tops[i];
        let slice = &mut values[start..];
        let rel = lo - start;
        slice.select_nth_unstable_by(rel, f64::total_cmp);
        thresholds[i] = values[lo];
        start = lo;
    }
    // sums of nested top sets, accumulated from the top down
    let mut acc = 0.0;
    let mut upto = n;
    for i in 0..k {
        let lo = n - tops[i];
        acc += values[lo..upto].iter().sum::<f64>();
        upto = lo;
        cum_sums[i] = acc;
    }
    let cum_counts = tops.iter().map(|&t| t as u64).collect();
    TabulatedSummary::new(thresholds, cum_counts, cum_sums, None)
}

/// Estimator under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Me,
    Bk { c: f64 },
    Piketty,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Me => "ME".into(),
            Method::Bk { c } => format!("BK(c={c})"),
            Method::Piketty => "Piketty".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Population quantiles, identical in every replication.
    Population,
    /// Sample quantiles of each replication.
    Empirical,
}

/// Top-share experiment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub models: Vec<ModelSpec>,
    pub methods: Vec<Method>,
    pub sample_sizes: Vec<u64>,
    pub p0: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub thresholds: ThresholdMode,
    pub grid: Vec<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            models: vec![ModelSpec::DoublePareto { alpha: 2.3, beta: 1.1 }],
            methods: vec![
                Method::Me,
                Method::Bk { c: 0.1 },
                Method::Bk { c: 0.5 },
                Method::Bk { c: 1.0 },
                Method::Bk { c: 1.5 },
                Method::Piketty,
            ],
            sample_sizes: vec![10_000, 100_000, 1_000_000],
            p0: default_p0(),
            replications: 200,
            seed: 1,
            thresholds: ThresholdMode::Population,
            grid: share_grid(),
        }
    }
}

impl SimConfig {
    /// Replication count and sample sizes of the original study.
    pub fn full_scale(mut self) -> Self {
        self.replications = 1000;
        self.sample_sizes = vec![10_000, 100_000, 1_000_000, 10_000_000];
        self
    }

    fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.methods.is_empty() || self.sample_sizes.is_empty() {
            return Err(bad("need at least one model, method and sample size".into()));
        }
        if self.replications == 0 {
            return Err(bad("need at least one replication".into()));
        }
        if self.sample_sizes.iter().any(|&n| n < 2) {
            return Err(bad("sample sizes must be at least 2".into()));
        }
        if let Some(p) = self.p0.iter().chain(&self.grid).find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(bad(format!("fractile {p} outside (0, 1]")));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("threshold grid must be strictly increasing".into()));
        }
        for m in &self.methods {
            if let Method::Bk { c } = m {
                if !(*c > 0.0) {
                    return Err(bad(format!("bandwidth constant must be positive, got {c}")));
                }
            }
        }
        Ok(())
    }
}

/// Bias and RMSE of one (model, method, n, p0) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub model: String,
    pub method: String,
    pub n: u64,
    pub p0: f64,
    pub truth: f64,
    /// `mean(s_hat / s0 - 1)`; `None` if every replication failed.
    pub bias: Option<f64>,
    /// `sqrt(mean((s_hat / s0 - 1)^2))`.
    pub rmse: Option<f64>,
    pub successes: usize,
    pub failures: usize,
}

/// Output of [`run_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub cells: Vec<Cell>,
    /// ME fits checked for moment reproduction, and how many failed.
    pub spot_checks: usize,
    pub spot_check_failures: usize,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl SimReport {
    pub fn cell(&self, model: &str, method: &str, n: u64, p0: f64) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.method == method && c.n == n && c.p0 == p0)
    }

    /// Rows `model, method, n, statistic`, one column per `p0`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,method,n,statistic");
        for p in &self.config.p0 {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
        for stat in ["bias", "rmse", "failures"] {
            for model in &self.config.models {
                for method in &self.config.methods {
                    for &n in &self.config.sample_sizes {
                        let _ = write!(out, "\"{}\",{},{},{}", model.label(), method.label(), n, stat);
                        for &p in &self.config.p0 {
                            let c = self.cell(&model.label(), &method.label(), n, p);
                            let v = c.map(|c| match stat {
                                "bias" => c.bias.map_or(String::from("NA"), |v| v.to_string()),
                                "rmse" => c.rmse.map_or(String::from("NA"), |v| v.to_string()),
                                _ => c.failures.to_string(),
                            });
                            let _ = write!(out, ",{}", v.unwrap_or_default());
                        }
                        out.push('\n');
                    }
                }
            }
        }
        out
    }
}

/// Relative bias and RMSE from relative errors, as `(bias, rmse)`.
///
/// RMSE is `hypot(bias, sd)` so it can never fall below `|bias|`.
pub fn bias_rmse(errors: &[f64]) -> Option<(f64, f64)> {
    if errors.is_empty() {
        return None;
    }
    let m = errors.len() as f64;
    let bias = errors.iter().sum::<f64>() / m;
    let var = errors.iter().map(|e| (e - bias) * (e - bias)).sum::<f64>() / m;
    Some((bias, bias.hypot(var.sqrt())))
}

fn moments_reproduced(m: &BinMoments, d: &MEDensity) -> bool {
    d.bins().iter().enumerate().all(|(k, b)| match m.y()[k] {
        Some(y) if b.q > 0.0 => {
            (b.first_moment_above(b.lower) - y).abs() <= 1e-10 * y.abs().max(1e-300)
                && (b.frac_above(b.lower) - 1.0).abs() <= 1e-10
        }
        _ => true,
    })
}

struct RepOutcome {
    shares: Vec<Vec<Option<f64>>>,
    spot_checked: bool,
    spot_ok: bool,
}

fn simulate_rep(
    model: &Model,
    cfg: &SimConfig,
    thresholds: &[f64],
    n: u64,
    mut rng: ChaCha8Rng,
    spot_check: bool,
) -> RepOutcome {
    let summary = match cfg.thresholds {
        ThresholdMode::Population => {
            let mut tab = FixedTabulator::new(thresholds.to_vec());
            for _ in 0..n {
                tab.push(model.draw(&mut rng));
            }
            tab.finish().map(|s| (s, tab.sample_sd()))
        }
        ThresholdMode::Empirical => {
            let mut values: Vec<f64> = (0..n).map(|_| model.draw(&mut rng)).collect();
            let mut tab = FixedTabulator::new(vec![f64::NEG_INFINITY]);
            values.iter().for_each(|&y| tab.push(y));
            tabulate_fractiles(&mut values, &cfg.grid).map(|s| (s, tab.sample_sd()))
        }
    };
    let fail = || RepOutcome {
        shares: vec![vec![None; cfg.p0.len()]; cfg.methods.len()],
        spot_checked: false,
        spot_ok: true,
    };
    let Ok((summary, sd)) = summary else {
        return fail();
    };
    let Ok(moments) = to_bin_moments(&summary, false) else {
        return fail();
    };
    let mut spot_checked = false;
    let mut spot_ok = true;
    let me = fit_me_density(&moments).ok();
    if spot_check {
        if let Some(d) = &me {
            spot_checked = true;
            spot_ok = moments_reproduced(&moments, d);
        }
    }
    let shares = cfg
        .methods
        .iter()
        .map(|method| match method {
            Method::Me => cfg
                .p0
                .iter()
                .map(|&p| me.as_ref().and_then(|d| dist::top_share(d, p, ShareBasis::Covered).ok()))
                .collect(),
            Method::Bk { c } => {
                let bk = bk_bandwidth(&moments, *c, n, Some(sd))
                    .and_then(|h| BKKernelEstimate::new(moments.clone(), h));
                cfg.p0
                    .iter()
                    .map(|&p| bk.as_ref().ok().and_then(|e| e.top_share(p).ok()))
                    .collect()
            }
            Method::Piketty => {
                let interp = ParetoInterp::from_summary(&summary);
                cfg.p0
                    .iter()
                    .map(|&p| {
                        interp
                            .as_ref()
                            .ok()
                            .and_then(|i| piketty_top_share(i, p, None).ok())
                            .map(|r| r.share)
                    })
                    .collect()
            }
        })
        .collect();
    RepOutcome {
        shares,
        spot_checked,
        spot_ok,
    }
}

/// Top-share bias/RMSE over every (model, method, n, p0) cell.
pub fn run_experiment(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut cells = Vec::new();
    let mut spot_checks = 0;
    let mut spot_check_failures = 0;
    for (mi, spec) in cfg.models.iter().enumerate() {
        let model = Model::new(*spec)?;
        let thresholds = population_thresholds(model.population(), &cfg.grid);
        let truth: Vec<f64> = cfg.p0.iter().map(|&p| model.true_share(p)).collect();
        for (ni, &n) in cfg.sample_sizes.iter().enumerate() {
            let outcomes: Vec<RepOutcome> = (0..cfg.replications)
                .into_par_iter()
                .map(|rep| {
                    let rng = replication_rng(cfg.seed, mi, ni, rep);
                    simulate_rep(&model, cfg, &thresholds, n, rng, rep % 100 == 0)
                })
                .collect();
            for o in &outcomes {
                if o.spot_checked {
                    spot_checks += 1;
                    if !o.spot_ok {
                        spot_check_failures += 1;
                    }
                }
            }
            for (j, method) in cfg.methods.iter().enumerate() {
                for (pi, &p) in cfg.p0.iter().enumerate() {
                    let errors: Vec<f64> = outcomes
                        .iter()
                        .filter_map(|o| o.shares[j][pi])
                        .map(|s| s / truth[pi] - 1.0)
                        .filter(|e| e.is_finite())
                        .collect();
                    let stats = bias_rmse(&errors);
                    cells.push(Cell {
                        model: spec.label(),
                        method: method.label(),
                        n,
                        p0: p,
                        truth: truth[pi],
                        bias: stats.map(|s| s.0),
                        rmse: stats.map(|s| s.1),
                        successes: errors.len(),
                        failures: cfg.replications - errors.len(),
                    });
                }
            }
        }
    }
    Ok(SimReport {
        config: cfg.clone(),
        cells,
        spot_checks,
        spot_check_failures,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Density-accuracy experiment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensityConfig {
    pub models: Vec<ModelSpec>,
    pub bk_c: Vec<f64>,
    pub sample_sizes: Vec<u64>,
    pub replications: usize,
    pub seed: u64,
    /// Population quantile levels at which densities are compared. The
    /// default sits midway between the 5% grid levels, away from thresholds
    /// where a piecewise density has jumps.
    pub taus: Vec<f64>,
    pub grid: Vec<f64>,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            models: vec![
                ModelSpec::DoublePareto { alpha: 2.3, beta: 1.1 },
                ModelSpec::Lognormal { sigma: 1.5 },
                ModelSpec::Gamma { shape: 1.0 },
            ],
            bk_c: vec![0.1, 0.5, 1.0, 1.5],
            sample_sizes: vec![10_000, 100_000, 1_000_000],
            replications: 100,
            seed: 1,
            taus: (1..=20).map(|i| (i as f64 - 0.5) / 20.0).collect(),
            grid: share_grid(),
        }
    }
}

/// Relative density RMSE at one evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub model: String,
    pub method: String,
    pub n: u64,
    pub tau: f64,
    pub y: f64,
    /// `sqrt(mean((f_hat(y) / f(y) - 1)^2))`.
    pub rel_rmse: Option<f64>,
    pub failures: usize,
}

/// Mean over replications of `sup |f_hat - f|` on the population interquartile range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupErrorRow {
    pub model: String,
    pub method: String,
    pub n: u64,
    pub mean_sup_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub config: DensityConfig,
    pub rows: Vec<DensityRow>,
    pub sup_errors: Vec<SupErrorRow>,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl DensityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,method,n,tau,y,rel_rmse\n");
        for r in &self.rows {
            let v = r.rel_rmse.map_or(String::from("NA"), |v| v.to_string());
            let _ = writeln!(out, "\"{}\",{},{},{},{},{}", r.model, r.method, r.n, r.tau, r.y, v);
        }
        out
    }

    pub fn curve(&self, model: &str, method: &str, n: u64) -> Vec<&DensityRow> {
        self.rows
            .iter()
            .filter(|r| r.model == model && r.method == method && r.n == n)
            .collect()
    }
}

const IQR_POINTS: usize = 101;

/// Relative density RMSE of ME and BK at population quantiles.
pub fn density_rmse_experiment(cfg: &DensityConfig) -> Result<DensityReport> {
    if cfg.replications == 0 || cfg.models.is_empty() || cfg.sample_sizes.is_empty() {
        return Err(bad("need models, sample sizes and at least one replication".into()));
    }
    if let Some(t) = cfg.taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(bad(format!("evaluation level {t} outside (0, 1)")));
    }
    let start = Instant::now();
    let mut methods = vec![Method::Me];
    methods.extend(cfg.bk_c.iter().map(|&c| Method::Bk { c }));
    let mut rows = Vec::new();
    let mut sup_errors = Vec::new();
    for (mi, spec) in cfg.models.iter().enumerate() {
        let model = Model::new(*spec)?;
        let pop = model.population();
        let thresholds = population_thresholds(pop, &cfg.grid);
        let points: Vec<f64> = cfg.taus.iter().map(|&t| pop.quantile(t)).collect();
        let truth: Vec<f64> = points.iter().map(|&y| pop.pdf(y)).collect();
        let (q1, q3) = (pop.quantile(0.25), pop.quantile(0.75));
        let iqr: Vec<f64> = (0..IQR_POINTS)
            .map(|i| q1 + (q3 - q1) * i as f64 / (IQR_POINTS - 1) as f64)
            .collect();
        let iqr_truth: Vec<f64> = iqr.iter().map(|&y| pop.pdf(y)).collect();

        for (ni, &n) in cfg.sample_sizes.iter().enumerate() {
            // per replication, per method: (relative errors at points, sup error on the IQR)
            let reps: Vec<Vec<Option<(Vec<f64>, f64)>>> = (0..cfg.replications)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = replication_rng(cfg.seed, mi, ni, rep);
                    let mut tab = FixedTabulator::new(thresholds.clone());
                    for _ in 0..n {
                        tab.push(model.draw(&mut rng));
                    }
                    let sd = tab.sample_sd();
                    let moments = tab.finish().and_then(|s| to_bin_moments(&s, false));
                    methods
                        .iter()
                        .map(|method| {
                            let m = moments.as_ref().ok()?;
                            let f: Box<dyn Fn(f64) -> f64> = match method {
                                Method::Me => {
                                    let d = fit_me_density(m).ok()?;
                                    Box::new(move |y| d.pdf(y))
                                }
                                Method::Bk { c } => {
                                    let h = bk_bandwidth(m, *c, n, Some(sd)).ok()?;
                                    let e = BKKernelEstimate::new(m.clone(), h).ok()?;
                                    Box::new(move |y| e.pdf(y))
                                }
                                Method::Piketty => return None,
                            };
                            let rel = points.iter().zip(&truth).map(|(&y, &t)| f(y) / t - 1.0).collect();
                            let sup = iqr
                                .iter()
                                .zip(&iqr_truth)
                                .fold(0.0_f64, |s, (&y, &t)| s.max((f(y) - t).abs()));
                            Some((rel, sup))
                        })
                        .collect()
                })
                .collect();

            for (j, method) in methods.iter().enumerate() {
                let ok: Vec<&(Vec<f64>, f64)> = reps.iter().filter_map(|r| r[j].as_ref()).collect();
                let failures = cfg.replications - ok.len();
                for (i, (&tau, &y)) in cfg.taus.iter().zip(&points).enumerate() {
                    let mse = if ok.is_empty() {
                        None
                    } else {
                        Some(ok.iter().map(|(e, _)| e[i] * e[i]).sum::<f64>() / ok.len() as f64)
                    };
                    rows.push(DensityRow {
                        model: spec.label(),
                        method: method.label(),
                        n,
                        tau,
                        y,
                        rel_rmse: mse.map(f64::sqrt),
                        failures,
                    });
                }
                sup_errors.push(SupErrorRow {
                    model: spec.label(),
                    method: method.label(),
                    n,
                    mean_sup_error: (!ok.is_empty())
                        .then(|| ok.iter().map(|(_, s)| s).sum::<f64>() / ok.len() as f64),
                });
            }
        }
    }
    Ok(DensityReport {
        config: cfg.clone(),
        rows,
        sup_errors,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_have_documented_sizes() {
        assert_eq!(share_grid().len(), 22);
        assert_eq!(density_grid().len(), 26);
        assert_eq!(default_p0().len(), 12);
        assert!(share_grid().windows(2).all(|w| w[0] < w[1]));
        assert!(density_grid().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn models_have_unit_mean() {
        for spec in [
            ModelSpec::Lognormal { sigma: 1.5 },
            ModelSpec::Gamma { shape: 0.5 },
            ModelSpec::Weibull { shape: 0.7 },
            ModelSpec::DoublePareto { alpha: 1.5, beta: 0.5 },
            ModelSpec::DoublePareto { alpha: 2.3, beta: 1.1 },
        ] {
            let m = Model::new(spec).unwrap_or_else(|e| panic!("{}: {e}", spec.label()));
            assert!((m.population().mean() - 1.0).abs() < 1e-12, "{}", spec.label());
        }
        assert!(Model::new(ModelSpec::Lognormal { sigma: -1.0 }).is_err());
        assert!(Model::new(ModelSpec::DoublePareto { alpha: 0.9, beta: 1.0 }).is_err());
    }

    #[test]
    fn degenerate_fractile_grid_holds_order_statistics() {
        let mut values = vec![3.0, 9.0, 1.0, 4.0, 7.0];
        let grid = [0.2, 0.4, 0.6, 0.8, 1.0];
        let s = tabulate_fractiles(&mut values, &grid).unwrap();
        assert_eq!(s.thresholds(), &[9.0, 7.0, 4.0, 3.0, 1.0]);
        assert_eq!(s.cum_counts(), &[1, 2, 3, 4, 5]);
        assert_eq!(s.cum_sums()[4], 24.0);
        assert!(to_bin_moments(&s, false).is_err());
    }

    #[test]
    fn fixed_and_fractile_tabulations_agree_on_sample_thresholds() {
        let model = Model::new(ModelSpec::Gamma { shape: 1.0 }).unwrap();
        let values = sample(&model, 10_000, 3);
        let mut copy = values.clone();
        let a = tabulate_fractiles(&mut copy, &share_grid()).unwrap();
        let b = tabulate_fixed(&values, a.thresholds()).unwrap();
        assert_eq!(a.cum_counts(), b.cum_counts());
        for (x, y) in a.cum_sums().iter().zip(b.cum_sums()) {
            assert!((x - y).abs() < 1e-9 * y);
        }
    }

    #[test]
    fn bias_rmse_definitions() {
        let (b, r) = bias_rmse(&[0.1, -0.1, 0.2]).unwrap();
        assert!((b - 0.2 / 3.0).abs() < 1e-15);
        assert!((r - (0.06f64 / 3.0).sqrt()).abs() < 1e-15);
        let (b, r) = bias_rmse(&[0.3, 0.3]).unwrap();
        assert!(r >= b.abs());
        assert!(bias_rmse(&[]).is_none());
    }

    #[test]
    fn small_experiment_is_deterministic() {
        let cfg = SimConfig {
            sample_sizes: vec![2_000],
            replications: 8,
            p0: vec![0.01, 0.1, 1.0],
            ..SimConfig::default()
        };
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for c in &a.cells {
            if let (Some(bias), Some(rmse)) = (c.bias, c.rmse) {
                assert!(rmse >= bias.abs());
                assert!(bias.is_finite() && rmse.is_finite());
            }
            if c.p0 == 1.0 && c.method != "Piketty" {
                assert_eq!(c.bias, Some(0.0), "{c:?}");
                assert_eq!(c.rmse, Some(0.0));
            }
        }
        assert_eq!(a.spot_checks, 1);
        assert_eq!(a.spot_check_failures, 0);
    }
}
