//! Tabulated summary data: parsing, validation and conversion to bin moments.
//!
//! A table lists `K` groups by descending lower threshold
//! `t_1 > t_2 > ... > t_K`. Group `k` covers `[t_k, t_{k-1})` with `t_0 = inf`,
//! so the top group is unbounded above and `t_K` closes the table from below.
//! Counts and totals are stored cumulatively from the top: `n_k` is the number
//! of units with value at least `t_k` and `S_{n_k}` their total.

use std::collections::HashMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Population;
use crate::quad;

/// Where a set of bin moments came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Empirical,
    Population,
    Smoothed,
}

/// Observed triples `(t_k, n_k, S_{n_k})`, cumulative from the top bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedSummary {
    thresholds: Vec<f64>,
    cum_counts: Vec<u64>,
    cum_sums: Vec<f64>,
    n: u64,
    lower_bound: f64,
}

impl TabulatedSummary {
    /// Build and validate a summary. `population` defaults to `n_K`.
    pub fn new(
        thresholds: Vec<f64>,
        cum_counts: Vec<u64>,
        cum_sums: Vec<f64>,
        population: Option<u64>,
    ) -> Result<Self> {
        let k = thresholds.len();
        if k < 2 {
            return Err(Error::Validation(format!("need at least 2 bins, got {k}")));
        }
        if cum_counts.len() != k || cum_sums.len() != k {
            return Err(Error::Validation(format!(
                "column lengths differ: {k} thresholds, {} counts, {} sums",
                cum_counts.len(),
                cum_sums.len()
            )));
        }
        if let Some(i) = thresholds.iter().position(|t| !t.is_finite()) {
            return Err(Error::Validation(format!("threshold {} is not finite", i + 1)));
        }
        if let Some(i) = cum_sums.iter().position(|s| !s.is_finite()) {
            return Err(Error::Validation(format!("total {} is not finite", i + 1)));
        }
        for i in 1..k {
            if thresholds[i] >= thresholds[i - 1] {
                return Err(Error::Validation(format!(
                    "thresholds must be strictly decreasing: t_{} = {} >= t_{} = {}",
                    i + 1,
                    thresholds[i],
                    i,
                    thresholds[i - 1]
                )));
            }
            if cum_counts[i] < cum_counts[i - 1] {
                return Err(Error::Validation(format!(
                    "cumulative counts decrease at bin {}",
                    i + 1
                )));
            }
        }
        let n_k = cum_counts[k - 1];
        if n_k == 0 {
            return Err(Error::Validation("table holds no units".into()));
        }
        let n = population.unwrap_or(n_k);
        if n < n_k {
            return Err(Error::Validation(format!(
                "total population {n} is below the tabulated count {n_k}"
            )));
        }
        let summary = TabulatedSummary {
            lower_bound: thresholds[k - 1],
            thresholds,
            cum_counts,
            cum_sums,
            n,
        };
        summary.check_group_means(false)?;
        Ok(summary)
    }

    /// Means must lie in `[t_k, t_{k-1})`; `strict` also excludes `t_k`.
    fn check_group_means(&self, strict: bool) -> Result<()> {
        for k in 0..self.len() {
            let count = self.group_count(k);
            let total = self.group_total(k);
            let lower = self.thresholds[k];
            let upper = if k == 0 { f64::INFINITY } else { self.thresholds[k - 1] };
            if count == 0 {
                if total != 0.0 {
                    return Err(Error::Validation(format!(
                        "bin {} is empty but carries total {total}",
                        k + 1
                    )));
                }
                continue;
            }
            let mean = total / count as f64;
            let above = if strict { mean > lower } else { mean >= lower };
            if !(above && mean < upper) {
                return Err(Error::MeanOutsideBin {
                    bin: k + 1,
                    lower,
                    upper,
                    mean,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn cum_counts(&self) -> &[u64] {
        &self.cum_counts
    }

    pub fn cum_sums(&self) -> &[f64] {
        &self.cum_sums
    }

    /// Total population used as the denominator of bin probabilities.
    pub fn population(&self) -> u64 {
        self.n
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    /// Units in bin `k` (0-based from the top).
    pub fn group_count(&self, k: usize) -> u64 {
        self.cum_counts[k] - if k == 0 { 0 } else { self.cum_counts[k - 1] }
    }

    /// Total value in bin `k` (0-based from the top).
    pub fn group_total(&self, k: usize) -> f64 {
        self.cum_sums[k] - if k == 0 { 0.0 } else { self.cum_sums[k - 1] }
    }

    /// Same table with a different total population.
    pub fn with_population(&self, n: u64) -> Result<Self> {
        Self::new(
            self.thresholds.clone(),
            self.cum_counts.clone(),
            self.cum_sums.clone(),
            Some(n),
        )
    }

    /// Canonical CSV: cumulative form, top bin first, shortest round-trip floats.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,cum_count,cum_sum\n");
        for k in 0..self.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.thresholds[k], self.cum_counts[k], self.cum_sums[k]
            ));
        }
        out
    }

    /// Descriptor matching [`TabulatedSummary::to_csv`].
    pub fn canonical_format(&self) -> FormatDescriptor {
        FormatDescriptor {
            population: (self.n != self.cum_counts[self.len() - 1]).then_some(self.n),
            ..FormatDescriptor::default()
        }
    }
}

/// Per-bin probabilities and conditional means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMoments {
    thresholds: Vec<f64>,
    lower_bound: f64,
    q: Vec<f64>,
    /// `None` marks an empty bin whose mean is undefined.
    y: Vec<Option<f64>>,
    provenance: Provenance,
}

impl BinMoments {
    /// Validate bin moments on the threshold grid `t_1 > ... > t_K`.
    ///
    /// Every bin with positive mass must have its mean strictly inside the bin;
    /// empty bins must carry `None`.
    pub fn new(
        thresholds: Vec<f64>,
        q: Vec<f64>,
        y: Vec<Option<f64>>,
        provenance: Provenance,
    ) -> Result<Self> {
        let k = thresholds.len();
        if k < 2 {
            return Err(Error::Validation(format!("need at least 2 bins, got {k}")));
        }
        if q.len() != k || y.len() != k {
            return Err(Error::Validation("thresholds, q and y differ in length".into()));
        }
        for i in 0..k {
            if !thresholds[i].is_finite() {
                return Err(Error::Validation(format!("threshold {} is not finite", i + 1)));
            }
            if i > 0 && thresholds[i] >= thresholds[i - 1] {
                return Err(Error::Validation(format!(
                    "thresholds must be strictly decreasing at bin {}",
                    i + 1
                )));
            }
            if !(q[i] >= 0.0) || !q[i].is_finite() {
                return Err(Error::Validation(format!("bin {} has invalid mass {}", i + 1, q[i])));
            }
        }
        let total: f64 = q.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(Error::Validation(format!("bin masses sum to {total} > 1")));
        }
        let mut y = y;
        for i in 0..k {
            if q[i] == 0.0 {
                y[i] = None;
                continue;
            }
            let lower = thresholds[i];
            let upper = if i == 0 { f64::INFINITY } else { thresholds[i - 1] };
            match y[i] {
                Some(m) if m > lower && m < upper => {}
                Some(m) => {
                    return Err(Error::MeanOutsideBin {
                        bin: i + 1,
                        lower,
                        upper,
                        mean: m,
                    })
                }
                None => {
                    return Err(Error::Validation(format!(
                        "bin {} has positive mass but no mean",
                        i + 1
                    )))
                }
            }
        }
        Ok(BinMoments {
            lower_bound: thresholds[k - 1],
            thresholds,
            q,
            y,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn y(&self) -> &[Option<f64>] {
        &self.y
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// `(lower, upper)` for bin `k` (0-based), `upper = inf` for the top bin.
    pub fn bounds(&self, k: usize) -> (f64, f64) {
        let upper = if k == 0 { f64::INFINITY } else { self.thresholds[k - 1] };
        (self.thresholds[k], upper)
    }

    pub fn total_mass(&self) -> f64 {
        self.q.iter().sum()
    }

    /// `sum_k q_k y_k` over nonempty bins.
    pub fn total_first_moment(&self) -> f64 {
        self.q
            .iter()
            .zip(&self.y)
            .filter_map(|(q, y)| y.map(|m| q * m))
            .sum()
    }

    /// Multiply every threshold and mean by `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidParameter(format!("scale must be positive, got {s}")));
        }
        let thresholds = self.thresholds.iter().map(|t| t * s).collect();
        let y = self.y.iter().map(|m| m.map(|v| v * s)).collect();
        Self::new(thresholds, self.q.clone(), y, self.provenance)
    }
}

/// Sample-analog moments `q_k = (n_k - n_{k-1}) / n`, `y_k = group mean`.
///
/// With `renormalize`, the denominator is the covered count `n_K` instead of
/// the table's total population.
///
/// A group whose mean sits exactly on its lower threshold has no interior
/// density and is reported as [`Error::InfeasibleBin`].
pub fn to_bin_moments(summary: &TabulatedSummary, renormalize: bool) -> Result<BinMoments> {
    let k = summary.len();
    let denom = if renormalize {
        summary.cum_counts[k - 1]
    } else {
        summary.n
    } as f64;
    let mut q = Vec::with_capacity(k);
    let mut y = Vec::with_capacity(k);
    for i in 0..k {
        let count = summary.group_count(i);
        q.push(count as f64 / denom);
        y.push((count > 0).then(|| summary.group_total(i) / count as f64));
    }
    for (k, m) in y.iter().enumerate() {
        if let Some(m) = *m {
            if m <= summary.thresholds[k] {
                let upper = if k == 0 { f64::INFINITY } else { summary.thresholds[k - 1] };
                return Err(Error::InfeasibleBin {
                    bin: Some(k + 1),
                    lower: summary.thresholds[k],
                    upper,
                    mean: m,
                });
            }
        }
    }
    BinMoments::new(summary.thresholds.clone(), q, y, Provenance::Empirical)
}

/// Population bin moments from closed-form tail functionals.
///
/// Mass below `t_K` is left uncovered.
pub fn population_moments(dist: &dyn Population, thresholds: &[f64]) -> Result<BinMoments> {
    let mut q = Vec::with_capacity(thresholds.len());
    let mut y = Vec::with_capacity(thresholds.len());
    let mut upper_mass = 0.0;
    let mut upper_first = 0.0;
    for &t in thresholds {
        let mass = dist.ccdf(t);
        let first = dist.tail_mean(t);
        let qk = (mass - upper_mass).max(0.0);
        q.push(qk);
        y.push((qk > 0.0).then(|| (first - upper_first) / qk));
        upper_mass = mass;
        upper_first = first;
    }
    BinMoments::new(thresholds.to_vec(), q, y, Provenance::Population)
}

/// Population bin moments by adaptive quadrature of the density alone.
pub fn population_moments_quadrature(
    dist: &dyn Population,
    thresholds: &[f64],
    abs_tol: f64,
) -> Result<BinMoments> {
    let (lo, hi) = dist.support();
    let mut q = Vec::with_capacity(thresholds.len());
    let mut y = Vec::with_capacity(thresholds.len());
    for k in 0..thresholds.len() {
        let a = thresholds[k].max(lo);
        let b = if k == 0 { hi } else { thresholds[k - 1].min(hi) };
        if a >= b {
            q.push(0.0);
            y.push(None);
            continue;
        }
        let mass = quad::integrate_pieces(|x| dist.pdf(x), a, b, &[], abs_tol)?;
        let first = quad::integrate_pieces(|x| x * dist.pdf(x), a, b, &[], abs_tol)?;
        q.push(mass);
        y.push((mass > 0.0).then(|| first / mass));
    }
    BinMoments::new(thresholds.to_vec(), q, y, Provenance::Population)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    Cumulative,
    PerGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowOrder {
    /// Top bin first.
    Descending,
    /// Bottom bin first, as tax tables usually print.
    Ascending,
}

/// Number formatting convention for thousands and decimal separators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Locale {
    /// `1,234.5`
    Us,
    /// `1.234,5`
    Eu,
}

/// How to read a table file.
#[derive(Debug, Clone, PartialEq)]
pub struct FormatDescriptor {
    pub form: Form,
    pub order: RowOrder,
    pub total_multiplier: f64,
    pub threshold_multiplier: f64,
    /// Fills the threshold of an open-bottom row.
    pub lower_bound: Option<f64>,
    /// Total population when it exceeds the tabulated count.
    pub population: Option<u64>,
    pub locale: Locale,
    /// Header names of the threshold, count and total columns; the first three
    /// columns when unset.
    pub columns: Option<[String; 3]>,
}

impl Default for FormatDescriptor {
    fn default() -> Self {
        FormatDescriptor {
            form: Form::Cumulative,
            order: RowOrder::Descending,
            total_multiplier: 1.0,
            threshold_multiplier: 1.0,
            lower_bound: None,
            population: None,
            locale: Locale::Us,
            columns: None,
        }
    }
}

impl FormatDescriptor {
    /// Parse a `key=value` sidecar. Blank lines and `#` comments are skipped.
    pub fn from_sidecar(text: &str) -> Result<Self> {
        let mut desc = FormatDescriptor::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::MalformedRow {
                line: i + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            desc.set(key.trim(), value.trim())
                .map_err(|message| Error::MalformedRow {
                    line: i + 1,
                    message,
                })?;
        }
        Ok(desc)
    }

    /// Apply one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let float = |v: &str| v.parse::<f64>().map_err(|e| format!("{key}: {e}"));
        match key {
            "form" => {
                self.form = match value {
                    "cumulative" => Form::Cumulative,
                    "per_group" => Form::PerGroup,
                    _ => return Err(format!("form must be cumulative or per_group, got {value}")),
                }
            }
            "order" => {
                self.order = match value {
                    "descending" => RowOrder::Descending,
                    "ascending" => RowOrder::Ascending,
                    _ => return Err(format!("order must be descending or ascending, got {value}")),
                }
            }
            "total_multiplier" => self.total_multiplier = float(value)?,
            "threshold_multiplier" => self.threshold_multiplier = float(value)?,
            "lower_bound" => self.lower_bound = Some(float(value)?),
            "population" | "n" => {
                self.population = Some(value.parse().map_err(|e| format!("{key}: {e}"))?)
            }
            "locale" => {
                self.locale = match value {
                    "us" => Locale::Us,
                    "eu" => Locale::Eu,
                    _ => return Err(format!("locale must be us or eu, got {value}")),
                }
            }
            "columns" => {
                let names: Vec<String> = value.split(',').map(|s| s.trim().to_string()).collect();
                let arr: [String; 3] = names
                    .try_into()
                    .map_err(|_| "columns needs exactly three names".to_string())?;
                self.columns = Some(arr);
            }
            _ => return Err(format!("unknown format key {key:?}")),
        }
        if !(self.total_multiplier > 0.0) || !(self.threshold_multiplier > 0.0) {
            return Err("multipliers must be positive".into());
        }
        Ok(())
    }

    /// Render back to sidecar text.
    pub fn to_sidecar(&self) -> String {
        let mut out = String::new();
        out.push_str(match self.form {
            Form::Cumulative => "form=cumulative\n",
            Form::PerGroup => "form=per_group\n",
        });
        out.push_str(match self.order {
            RowOrder::Descending => "order=descending\n",
            RowOrder::Ascending => "order=ascending\n",
        });
        out.push_str(&format!("total_multiplier={}\n", self.total_multiplier));
        out.push_str(&format!("threshold_multiplier={}\n", self.threshold_multiplier));
        if let Some(lb) = self.lower_bound {
            out.push_str(&format!("lower_bound={lb}\n"));
        }
        if let Some(n) = self.population {
            out.push_str(&format!("population={n}\n"));
        }
        out.push_str(match self.locale {
            Locale::Us => "locale=us\n",
            Locale::Eu => "locale=eu\n",
        });
        if let Some(cols) = &self.columns {
            out.push_str(&format!("columns={}\n", cols.join(",")));
        }
        out
    }
}

/// Strip currency marks and thousands separators; `None` for an open bound.
fn parse_number(field: &str, locale: Locale) -> std::result::Result<Option<f64>, String> {
    let cleaned: String = field
        .trim()
        .chars()
        .filter(|c| !matches!(c, '$' | '€' | '£' | ' ' | '\u{a0}' | '_'))
        .collect();
    let normalized = match locale {
        Locale::Us => cleaned.replace(',', ""),
        Locale::Eu => cleaned.replace('.', "").replace(',', "."),
    };
    match normalized.to_ascii_lowercase().as_str() {
        "" | "-" | "-inf" | "-infinity" => return Ok(None),
        _ => {}
    }
    let v: f64 = normalized
        .parse()
        .map_err(|_| format!("cannot parse number {field:?}"))?;
    if !v.is_finite() {
        return Err(format!("number {field:?} is not finite"));
    }
    Ok(Some(v))
}

fn parse_count(field: &str, locale: Locale) -> std::result::Result<u64, String> {
    let v = parse_number(field, locale)?.ok_or_else(|| "missing count".to_string())?;
    if v < 0.0 {
        return Err(format!("negative count {field:?}"));
    }
    if v.fract() != 0.0 || v > 2f64.powi(53) {
        return Err(format!("count {field:?} is not a whole number"));
    }
    Ok(v as u64)
}

/// Read a delimited table into a validated cumulative summary.
pub fn parse_summary<R: Read>(source: R, format: &FormatDescriptor) -> Result<TabulatedSummary> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedRow {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let index: [usize; 3] = match &format.columns {
        None => {
            if headers.len() < 3 {
                return Err(Error::MalformedRow {
                    line: 1,
                    message: format!("need 3 columns, header has {}", headers.len()),
                });
            }
            [0, 1, 2]
        }
        Some(names) => {
            let lookup: HashMap<String, usize> = headers
                .iter()
                .enumerate()
                .map(|(i, h)| (h.to_ascii_lowercase(), i))
                .collect();
            let mut idx = [0; 3];
            for (slot, name) in idx.iter_mut().zip(names) {
                *slot = *lookup.get(&name.to_ascii_lowercase()).ok_or_else(|| {
                    Error::MalformedRow {
                        line: 1,
                        message: format!("no column named {name:?}"),
                    }
                })?;
            }
            idx
        }
    };

    let mut rows: Vec<(usize, Option<f64>, u64, f64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::MalformedRow {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| {
            record.get(i).ok_or_else(|| Error::MalformedRow {
                line,
                message: format!("missing column {}", i + 1),
            })
        };
        let bad = |message: String| Error::MalformedRow { line, message };
        let threshold = parse_number(field(index[0])?, format.locale).map_err(bad)?;
        let count = parse_count(field(index[1])?, format.locale).map_err(bad)?;
        let total = parse_number(field(index[2])?, format.locale)
            .map_err(bad)?
            .ok_or_else(|| bad("missing total".into()))?;
        rows.push((
            line,
            threshold.map(|t| t * format.threshold_multiplier),
            count,
            total * format.total_multiplier,
        ));
    }
    if format.order == RowOrder::Ascending {
        rows.reverse();
    }

    let k = rows.len();
    let mut thresholds = Vec::with_capacity(k);
    for (i, &(line, t, _, _)) in rows.iter().enumerate() {
        match (t, i + 1 == k) {
            (Some(t), true) => {
                if let Some(lb) = format.lower_bound {
                    if lb != t {
                        return Err(Error::Validation(format!(
                            "lower_bound {lb} conflicts with the bottom threshold {t}"
                        )));
                    }
                }
                thresholds.push(t);
            }
            (Some(t), false) => thresholds.push(t),
            (None, true) => thresholds.push(format.lower_bound.ok_or_else(|| {
                Error::Validation(
                    "the bottom row has no threshold; supply lower_bound for the open bottom bin"
                        .into(),
                )
            })?),
            (None, false) => {
                return Err(Error::MalformedRow {
                    line,
                    message: "only the bottom row may omit its threshold".into(),
                })
            }
        }
    }

    let (cum_counts, cum_sums) = match format.form {
        Form::Cumulative => (
            rows.iter().map(|r| r.2).collect(),
            rows.iter().map(|r| r.3).collect(),
        ),
        Form::PerGroup => {
            let mut counts = Vec::with_capacity(k);
            let mut sums = Vec::with_capacity(k);
            let (mut n, mut s) = (0u64, 0.0f64);
            for r in &rows {
                n += r.2;
                s += r.3;
                counts.push(n);
                sums.push(s);
            }
            (counts, sums)
        }
    };

    let summary = TabulatedSummary::new(thresholds, cum_counts, cum_sums, format.population)?;
    summary.check_group_means(true)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Exponential, Uniform};

    #[test]
    fn minimal_two_row_table_with_configured_lower_bound() {
        let csv = "threshold,count,total\n1,5,50\n,8,51.5\n";
        let format = FormatDescriptor {
            lower_bound: Some(0.0),
            ..Default::default()
        };
        let s = parse_summary(csv.as_bytes(), &format).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.thresholds(), &[1.0, 0.0]);
        assert_eq!(s.lower_bound(), 0.0);
        assert_eq!(s.population(), 8);
    }

    #[test]
    fn open_bottom_without_lower_bound_is_rejected() {
        let csv = "threshold,count,total\n1,5,50\n,8,51.5\n";
        let err = parse_summary(csv.as_bytes(), &FormatDescriptor::default()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn mean_on_lower_threshold_is_rejected_with_bin_index() {
        // bin 2 = [2, 5) holds 4 units totalling 8: mean exactly 2
        let csv = "t,n,s\n5,1,10\n2,5,18\n0,6,19\n";
        let err = parse_summary(csv.as_bytes(), &FormatDescriptor::default()).unwrap_err();
        assert!(matches!(err, Error::MeanOutsideBin { bin: 2, .. }), "{err}");
    }

    #[test]
    fn mean_on_lower_threshold_builds_but_is_infeasible() {
        let s = TabulatedSummary::new(vec![5.0, 2.0, 0.0], vec![1, 5, 6], vec![10.0, 18.0, 19.0], None).unwrap();
        let err = to_bin_moments(&s, false).unwrap_err();
        assert!(matches!(err, Error::InfeasibleBin { bin: Some(2), .. }), "{err}");
    }

    #[test]
    fn non_monotone_thresholds_and_negative_counts() {
        let csv = "t,n,s\n5,1,10\n6,2,20\n";
        assert!(matches!(
            parse_summary(csv.as_bytes(), &FormatDescriptor::default()),
            Err(Error::Validation(_))
        ));
        let csv = "t,n,s\n5,-1,10\n1,2,13\n";
        assert!(matches!(
            parse_summary(csv.as_bytes(), &FormatDescriptor::default()),
            Err(Error::MalformedRow { line: 2, .. })
        ));
        let csv = "t,n,s\n5,abc,10\n1,2,13\n";
        assert!(matches!(
            parse_summary(csv.as_bytes(), &FormatDescriptor::default()),
            Err(Error::MalformedRow { line: 2, .. })
        ));
    }

    #[test]
    fn per_group_ascending_with_multiplier_and_separators() {
        let csv = "AGI threshold,# returns,Total income\n\"$1\",\"1,000\",\"2,000\"\n\"$5,000\",10,\"100\"\n";
        let format = FormatDescriptor {
            form: Form::PerGroup,
            order: RowOrder::Ascending,
            total_multiplier: 1000.0,
            ..Default::default()
        };
        let s = parse_summary(csv.as_bytes(), &format).unwrap();
        assert_eq!(s.thresholds(), &[5000.0, 1.0]);
        assert_eq!(s.cum_counts(), &[10, 1010]);
        assert_eq!(s.cum_sums(), &[100_000.0, 2_100_000.0]);
    }

    #[test]
    fn eu_locale_and_named_columns() {
        let csv = "note,total,count,threshold\nx,\"1.500,5\",10,\"100\"\ny,\"12,5\",5,\"1\"\n";
        let format = FormatDescriptor::from_sidecar(
            "form=per_group\nlocale=eu\ncolumns=threshold,count,total\n",
        )
        .unwrap();
        assert_eq!(format.locale, Locale::Eu);
        let s = parse_summary(csv.as_bytes(), &format).unwrap();
        assert_eq!(s.thresholds(), &[100.0, 1.0]);
        assert_eq!(s.cum_sums(), &[1500.5, 1513.0]);
    }

    #[test]
    fn sidecar_round_trip_and_errors() {
        let text = "form=per_group\norder=ascending\ntotal_multiplier=1000\nlower_bound=0\n";
        let d = FormatDescriptor::from_sidecar(text).unwrap();
        assert_eq!(d.form, Form::PerGroup);
        assert_eq!(d.lower_bound, Some(0.0));
        assert_eq!(FormatDescriptor::from_sidecar(&d.to_sidecar()).unwrap(), d);
        assert!(FormatDescriptor::from_sidecar("colour=blue\n").is_err());
        assert!(FormatDescriptor::from_sidecar("form\n").is_err());
    }

    #[test]
    fn empty_bin_has_zero_mass_and_no_mean() {
        let s = TabulatedSummary::new(
            vec![10.0, 5.0, 0.0],
            vec![2, 2, 7],
            vec![30.0, 30.0, 40.0],
            None,
        )
        .unwrap();
        let m = to_bin_moments(&s, false).unwrap();
        assert_eq!(m.q()[1], 0.0);
        assert_eq!(m.y()[1], None);
        assert_eq!(m.y()[0], Some(15.0));
        assert_eq!(m.y()[2], Some(2.0));
    }

    #[test]
    fn moments_totals_match_summary() {
        let s = TabulatedSummary::new(
            vec![10.0, 5.0, 0.0],
            vec![2, 6, 9],
            vec![30.0, breaking(), 60.0],
            Some(12),
        )
        .unwrap();
        let m = to_bin_moments(&s, false).unwrap();
        assert!((m.total_mass() - 9.0 / 12.0).abs() < 1e-15);
        assert!((m.total_first_moment() - 60.0 / 12.0).abs() < 1e-14);
        let r = to_bin_moments(&s, true).unwrap();
        assert!((r.total_mass() - 1.0).abs() < 1e-15);
    }

    fn breaking() -> f64 {
        30.0 + 4.0 * 7.0
    }

    #[test]
    fn exponential_population_moments() {
        let m = population_moments(&Exponential { rate: 1.0 }, &[1.0, 0.0]).unwrap();
        let e = (-1.0f64).exp();
        assert!((m.q()[0] - e).abs() < 1e-16);
        assert!((m.y()[0].unwrap() - 2.0).abs() < 1e-15);
        assert!((m.q()[1] - (1.0 - e)).abs() < 1e-15);
        let want = (1.0 - 2.0 * e) / (1.0 - e);
        assert!((m.y()[1].unwrap() - want).abs() < 1e-15);
        assert!((want - 0.418_023_293_130_673_6).abs() < 1e-15);
        assert_eq!(m.provenance(), Provenance::Population);
    }

    #[test]
    fn uniform_single_bin_population_moments() {
        let m = population_moments(&Uniform { lo: 0.0, hi: 1.0 }, &[1.0, 0.0]).unwrap();
        assert_eq!(m.q(), &[0.0, 1.0]);
        assert_eq!(m.y()[0], None);
        assert!((m.y()[1].unwrap() - 0.5).abs() < 1e-16);
    }

    #[test]
    fn quadrature_route_agrees_with_closed_form() {
        let dist = Exponential { rate: 1.0 };
        let grid = [3.0, 2.0, 1.0, 0.5, 0.0];
        let a = population_moments(&dist, &grid).unwrap();
        let b = population_moments_quadrature(&dist, &grid, 1e-13).unwrap();
        for k in 0..grid.len() {
            assert!((a.q()[k] - b.q()[k]).abs() < 1e-12);
            assert!((a.y()[k].unwrap() - b.y()[k].unwrap()).abs() < 1e-11);
        }
    }

    #[test]
    fn scaled_moments_multiply_thresholds_and_means() {
        let m = population_moments(&Exponential { rate: 1.0 }, &[1.0, 0.0]).unwrap();
        let s = m.scaled(10.0).unwrap();
        assert_eq!(s.thresholds(), &[10.0, 0.0]);
        assert!((s.y()[0].unwrap() - 20.0).abs() < 1e-13);
        assert!(m.scaled(-1.0).is_err());
    }
}
