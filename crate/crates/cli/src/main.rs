//! `metab`: fit maximum-entropy densities to tabulated income data.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use metab_core::baselines::{
    bk_bandwidth, grouped_sigma, piketty_top_share, BKKernelEstimate, ParetoInterp,
};
use metab_core::dist::{self, ShareBasis};
use metab_core::simlab::{self, DensityConfig, Method, SimConfig};
use metab_core::smoothing::{self, SmoothedFit};
use metab_core::{fit_me_density, parse_summary, to_bin_moments, FormatDescriptor, MEDensity, TabulatedSummary};

const DEFAULT_P: &[f64] = &[0.001, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0];

#[derive(Debug, Parser, Serialize)]
#[command(name = "metab", version, about = "Maximum-entropy densities from tabulated summary data")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    global: Global,
}

#[derive(Debug, Args, Serialize, Clone)]
struct Global {
    /// Tabulated summary CSV (or a density JSON written by `fit`, for `shares`).
    #[arg(long, global = true)]
    input: Option<PathBuf>,

    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Format descriptor file with `key = value` lines.
    #[arg(long, global = true)]
    format: Option<PathBuf>,

    /// Lower edge of an open bottom bin.
    #[arg(long, global = true, allow_hyphen_values = true)]
    lower_bound: Option<f64>,

    /// Also fit the threshold-smoothed density.
    #[arg(long, global = true)]
    smooth: bool,

    /// Pinned bottom threshold for smoothing (default: the table's lowest threshold).
    #[arg(long, global = true, allow_hyphen_values = true)]
    tk_fix: Option<f64>,

    /// Bin masses relative to the covered count instead of the table population.
    #[arg(long, global = true)]
    renormalize: bool,

    /// Blower-Kelsall bandwidth constants.
    #[arg(long, global = true, value_delimiter = ',')]
    bk_c: Vec<f64>,

    #[arg(long, global = true, value_delimiter = ',')]
    method: Vec<MethodArg>,

    /// Paper-scale replications and sample sizes for `simulate`.
    #[arg(long, global = true)]
    full: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Me,
    Bk,
    Piketty,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase", tag = "name")]
enum Command {
    /// Fit the density and write JSON plus pdf/cdf grids.
    Fit(FitArgs),
    /// Top shares, Lorenz curve and Gini coefficient.
    Shares(SharesArgs),
    /// Monte-Carlo comparison of estimators.
    Simulate(SimulateArgs),
    /// Dump the bin moments of a table.
    Moments,
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    /// Number of interior quantile points in the pdf/cdf grid.
    #[arg(long, default_value_t = 400)]
    grid_points: usize,

    /// Also write `(x, f(e^x) e^x)`, the density of log income.
    #[arg(long)]
    grid_log: bool,
}

#[derive(Debug, Args, Serialize)]
struct SharesArgs {
    /// Top fractiles.
    #[arg(long, value_delimiter = ',')]
    p: Vec<f64>,

    /// External number of units the fractiles refer to.
    #[arg(long, requires = "total_income")]
    total_units: Option<f64>,

    /// External total income, in table units.
    #[arg(long, requires = "total_units")]
    total_income: Option<f64>,

    #[arg(long, default_value_t = 101)]
    lorenz_points: usize,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    /// Experiment config JSON; fields left out take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Run the density-accuracy experiment instead of top shares.
    #[arg(long)]
    density_rmse: bool,

    #[arg(long)]
    replications: Option<usize>,

    #[arg(long, value_delimiter = ',')]
    n: Vec<u64>,
}

enum Failure {
    Core(metab_core::Error),
    Usage(String),
    Io(String),
}

impl From<metab_core::Error> for Failure {
    fn from(e: metab_core::Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        use metab_core::Error as E;
        match self {
            Failure::Io(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Core(e) => match e {
                E::MalformedRow { .. }
                | E::Validation(_)
                | E::MeanOutsideBin { .. }
                | E::Domain(_)
                | E::InvalidParameter(_) => 2,
                E::InfeasibleBin { .. } => 3,
                E::NonConvergence { .. } | E::Quadrature { .. } => 4,
            },
        }
    }

    fn to_json(&self) -> Value {
        use metab_core::Error as E;
        let (kind, message, extra) = match self {
            Failure::Io(m) => ("io", m.clone(), json!({})),
            Failure::Usage(m) => ("usage", m.clone(), json!({})),
            Failure::Core(e) => {
                let extra = match e {
                    E::MalformedRow { line, .. } => json!({ "line": line }),
                    E::MeanOutsideBin { bin, lower, upper, mean } => {
                        json!({ "bin": bin, "lower": lower, "upper": upper, "mean": mean })
                    }
                    E::InfeasibleBin { bin, lower, upper, mean } => {
                        json!({ "bin": bin, "lower": lower, "upper": upper, "mean": mean })
                    }
                    E::NonConvergence { iterations, grad_inf_norm } => {
                        json!({ "iterations": iterations, "grad_inf_norm": grad_inf_norm })
                    }
                    _ => json!({}),
                };
                let kind = match e {
                    E::MalformedRow { .. } => "malformed_row",
                    E::Validation(_) => "validation",
                    E::MeanOutsideBin { .. } => "mean_outside_bin",
                    E::InfeasibleBin { .. } => "infeasible_bin",
                    E::Domain(_) => "domain",
                    E::InvalidParameter(_) => "invalid_parameter",
                    E::Quadrature { .. } => "quadrature",
                    E::NonConvergence { .. } => "non_convergence",
                };
                (kind, e.to_string(), extra)
            }
        };
        json!({ "error": { "kind": kind, "message": message, "exit_code": self.exit_code(), "details": extra } })
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Usage(msg.into()))
}

/// Files produced by a command, written only once all of them are ready.
struct Outputs(Vec<(String, String)>);

impl Outputs {
    fn add(&mut self, name: &str, body: String) {
        self.0.push((name.to_string(), body));
    }

    fn write(self, dir: &Path) -> Outcome<Vec<PathBuf>> {
        let io = |e: std::io::Error, p: &Path| Failure::Io(format!("{}: {e}", p.display()));
        fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
        let mut written = Vec::new();
        for (name, body) in self.0 {
            let target = dir.join(&name);
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io(e, dir))?;
            tmp.write_all(body.as_bytes()).map_err(|e| io(e, &target))?;
            tmp.persist(&target).map_err(|e| io(e.error, &target))?;
            written.push(target);
        }
        Ok(written)
    }
}

struct Meta(Value);

impl Meta {
    fn new(cli: &Cli, format: Option<&FormatDescriptor>, seed: Option<u64>) -> Self {
        Meta(json!({
            "tool": "metab",
            "version": env!("CARGO_PKG_VERSION"),
            "config": cli,
            "format": format.map(|f| f.to_sidecar()),
            "seed": seed,
        }))
    }

    fn wrap(&self, key: &str, value: impl Serialize) -> Outcome<String> {
        let value = serde_json::to_value(value).map_err(|e| Failure::Io(e.to_string()))?;
        let mut obj = serde_json::Map::new();
        obj.insert("meta".into(), self.0.clone());
        obj.insert(key.into(), value);
        Ok(serde_json::to_string_pretty(&Value::Object(obj)).expect("json value") + "\n")
    }

    /// CSV body prefixed with `#` metadata lines.
    fn csv(&self, body: &str) -> String {
        let mut out = format!("# metab {}\n", env!("CARGO_PKG_VERSION"));
        out.push_str(&format!("# meta: {}\n", self.0));
        out.push_str(body);
        out
    }
}

fn read_text(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn resolve_format(g: &Global) -> Outcome<FormatDescriptor> {
    let mut format = match &g.format {
        Some(p) => FormatDescriptor::from_sidecar(&read_text(p)?)?,
        None => FormatDescriptor::default(),
    };
    if let Some(lb) = g.lower_bound {
        format.lower_bound = Some(lb);
    }
    Ok(format)
}

fn require_input(g: &Global) -> Outcome<&Path> {
    match &g.input {
        Some(p) => Ok(p),
        None => usage("--input is required"),
    }
}

fn load_table(g: &Global, format: &FormatDescriptor) -> Outcome<TabulatedSummary> {
    let path = require_input(g)?;
    let file = fs::File::open(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    Ok(parse_summary(std::io::BufReader::new(file), format)?)
}

fn smooth(g: &Global, summary: &TabulatedSummary) -> Outcome<SmoothedFit> {
    let moments = to_bin_moments(summary, g.renormalize)?;
    let t_fix = g.tk_fix.unwrap_or(summary.lower_bound());
    Ok(smoothing::smooth_thresholds(&moments, t_fix)?)
}

fn log_grid(grid: &[f64]) -> Vec<f64> {
    grid.iter().filter(|&&y| y > 0.0).map(|y| y.ln()).collect()
}

fn density_outputs(out: &mut Outputs, meta: &Meta, prefix: &str, d: &MEDensity, a: &FitArgs) {
    let grid = dist::quantile_grid(d, a.grid_points);
    out.add(&format!("{prefix}pdf_cdf.csv"), meta.csv(&dist::pdf_cdf_csv(d, &grid)));
    if a.grid_log {
        out.add(
            &format!("{prefix}log_density.csv"),
            meta.csv(&dist::log_density_csv(d, &log_grid(&grid))),
        );
    }
}

fn cmd_fit(cli: &Cli, a: &FitArgs) -> Outcome<Outputs> {
    let g = &cli.global;
    let format = resolve_format(g)?;
    let summary = load_table(g, &format)?;
    let meta = Meta::new(cli, Some(&format), g.seed);
    let density = fit_me_density(&to_bin_moments(&summary, g.renormalize)?)?;

    let mut out = Outputs(Vec::new());
    out.add("density.json", meta.wrap("density", &density)?);
    density_outputs(&mut out, &meta, "", &density, a);
    if g.smooth {
        let fit = smooth(g, &summary)?;
        let report = json!({
            "fit": &fit,
            "max_jump": fit.max_jump(),
            "sup_density": smoothing::sup_density(&fit.density),
        });
        out.add("smoothed.json", meta.wrap("smoothed", report)?);
        density_outputs(&mut out, &meta, "smoothed_", &fit.density, a);
    }
    Ok(out)
}

/// A density JSON from `fit`, or its bare `MEDensity`.
fn load_density(path: &Path) -> Outcome<MEDensity> {
    let text = read_text(path)?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| metab_core::Error::Validation(format!("{}: {e}", path.display())))?;
    let inner = v.get("density").cloned().unwrap_or(v);
    serde_json::from_value(inner)
        .map_err(|e| metab_core::Error::Validation(format!("{}: not a density: {e}", path.display())).into())
}

fn csv_rows(header: &str, rows: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut s = format!("{header}\n");
    for (a, b) in rows {
        s.push_str(&format!("{a},{b}\n"));
    }
    s
}

fn cmd_shares(cli: &Cli, a: &SharesArgs) -> Outcome<Outputs> {
    let g = &cli.global;
    let ps: Vec<f64> = if a.p.is_empty() { DEFAULT_P.to_vec() } else { a.p.clone() };
    if let Some(p) = ps.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return usage(format!("fractile {p} outside (0, 1]"));
    }
    let methods = if g.method.is_empty() { vec![MethodArg::Me] } else { g.method.clone() };
    let external = a.total_units.zip(a.total_income);
    if let Some((u, t)) = external {
        if !(u > 0.0 && t > 0.0) {
            return usage("--total-units and --total-income must be positive");
        }
    }

    let input = require_input(g)?;
    let from_json = input.extension().is_some_and(|e| e == "json");
    let format = if from_json { None } else { Some(resolve_format(g)?) };
    let summary = match &format {
        Some(f) => Some(load_table(g, f)?),
        None => None,
    };
    let meta = Meta::new(cli, format.as_ref(), g.seed);
    let table_units = summary.as_ref().map(|s| {
        if g.renormalize {
            s.cum_counts()[s.len() - 1] as f64
        } else {
            s.population() as f64
        }
    });

    let mut out = Outputs(Vec::new());
    let mut report = serde_json::Map::new();
    for method in methods {
        match method {
            MethodArg::Me => {
                let mut d = match &summary {
                    Some(s) => fit_me_density(&to_bin_moments(s, g.renormalize)?)?,
                    None => load_density(input)?,
                };
                if g.smooth {
                    let Some(s) = &summary else {
                        return usage("--smooth needs a table input");
                    };
                    d = smooth(g, s)?.density;
                }
                let basis = match external {
                    Some((units, total)) => ShareBasis::External {
                        units,
                        total,
                        table_units: match table_units {
                            Some(t) => t,
                            None => return usage("external totals need a table input"),
                        },
                    },
                    None => ShareBasis::Covered,
                };
                let shares = ps
                    .iter()
                    .map(|&p| dist::top_share(&d, p, basis).map(|s| (p, s)))
                    .collect::<metab_core::Result<Vec<_>>>()?;
                let xs: Vec<f64> = (0..a.lorenz_points.max(2))
                    .map(|i| i as f64 / (a.lorenz_points.max(2) - 1) as f64)
                    .collect();
                let lorenz = dist::lorenz_curve(&d, &xs)?;
                let gini = dist::gini(&d)?;
                out.add("shares_me.csv", meta.csv(&csv_rows("p,top_share", shares.iter().copied())));
                out.add("lorenz_me.csv", meta.csv(&dist::lorenz_csv(&lorenz)));
                report.insert(
                    "me".into(),
                    json!({
                        "basis": basis,
                        "shares": shares.iter().map(|(p, s)| json!({"p": p, "top_share": s})).collect::<Vec<_>>(),
                        "gini": gini,
                    }),
                );
            }
            MethodArg::Bk => {
                let Some(s) = &summary else {
                    return usage("--method bk needs a table input");
                };
                if external.is_some() {
                    return usage("external totals are supported for me and piketty only");
                }
                let moments = to_bin_moments(s, g.renormalize)?;
                let cs = if g.bk_c.is_empty() { vec![1.0] } else { g.bk_c.clone() };
                let sigma = grouped_sigma(&moments);
                let mut rows = Vec::new();
                let mut csv = String::from("c,p,top_share\n");
                for c in cs {
                    let h = bk_bandwidth(&moments, c, s.population(), Some(sigma))?;
                    let est = BKKernelEstimate::new(moments.clone(), h)?;
                    for &p in &ps {
                        let share = est.top_share(p)?;
                        csv.push_str(&format!("{c},{p},{share}\n"));
                        rows.push(json!({"c": c, "bandwidth": h, "p": p, "top_share": share}));
                    }
                }
                out.add("shares_bk.csv", meta.csv(&csv));
                report.insert("bk".into(), json!({ "sigma": sigma, "shares": rows }));
            }
            MethodArg::Piketty => {
                let Some(s) = &summary else {
                    return usage("--method piketty needs a table input");
                };
                let interp = ParetoInterp::from_summary(s)?;
                let res = ps
                    .iter()
                    .map(|&p| piketty_top_share(&interp, p, external))
                    .collect::<metab_core::Result<Vec<_>>>()?;
                out.add(
                    "shares_piketty.csv",
                    meta.csv(&csv_rows("p,top_share", ps.iter().copied().zip(res.iter().map(|r| r.share)))),
                );
                report.insert("piketty".into(), json!({ "rows": &interp.rows, "shares": res }));
            }
        }
    }
    out.add("shares.json", meta.wrap("shares", Value::Object(report))?);
    Ok(out)
}

fn cmd_moments(cli: &Cli) -> Outcome<Outputs> {
    let g = &cli.global;
    let format = resolve_format(g)?;
    let summary = load_table(g, &format)?;
    let meta = Meta::new(cli, Some(&format), g.seed);
    let m = to_bin_moments(&summary, g.renormalize)?;
    let mut csv = String::from("bin,lower,upper,q,y\n");
    for k in 0..m.len() {
        let (lo, hi) = m.bounds(k);
        let y = m.y()[k].map_or(String::from("NA"), |v| v.to_string());
        csv.push_str(&format!("{},{lo},{hi},{},{y}\n", k + 1, m.q()[k]));
    }
    let mut out = Outputs(Vec::new());
    out.add("moments.json", meta.wrap("moments", &m)?);
    out.add("moments.csv", meta.csv(&csv));
    Ok(out)
}

fn parse_config<T: serde::de::DeserializeOwned + Default>(path: Option<&PathBuf>) -> Outcome<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| {
            metab_core::Error::InvalidParameter(format!("{}: {e}", p.display())).into()
        }),
    }
}

fn sim_methods(g: &Global, base: &[Method]) -> Vec<Method> {
    let bk: Vec<Method> = if g.bk_c.is_empty() {
        base.iter().copied().filter(|m| matches!(m, Method::Bk { .. })).collect()
    } else {
        g.bk_c.iter().map(|&c| Method::Bk { c }).collect()
    };
    let wanted = |m: MethodArg| g.method.is_empty() || g.method.contains(&m);
    let mut methods = Vec::new();
    if wanted(MethodArg::Me) && base.contains(&Method::Me) {
        methods.push(Method::Me);
    }
    if wanted(MethodArg::Bk) {
        methods.extend(bk);
    }
    if wanted(MethodArg::Piketty) && base.contains(&Method::Piketty) {
        methods.push(Method::Piketty);
    }
    methods
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Outcome<Outputs> {
    let g = &cli.global;
    let mut out = Outputs(Vec::new());
    if a.density_rmse {
        let mut cfg: DensityConfig = parse_config(a.config.as_ref())?;
        if g.full {
            cfg.replications = 1000;
            cfg.sample_sizes = vec![10_000, 100_000, 1_000_000, 10_000_000];
        }
        if let Some(s) = g.seed {
            cfg.seed = s;
        }
        if let Some(r) = a.replications {
            cfg.replications = r;
        }
        if !a.n.is_empty() {
            cfg.sample_sizes = a.n.clone();
        }
        if !g.bk_c.is_empty() {
            cfg.bk_c = g.bk_c.clone();
        }
        let meta = Meta(json!({
            "tool": "metab",
            "version": env!("CARGO_PKG_VERSION"),
            "config": cli,
            "experiment": &cfg,
            "seed": cfg.seed,
        }));
        let report = simlab::density_rmse_experiment(&cfg)?;
        eprintln!("density experiment finished in {:.1} s", report.wall_time_secs);
        out.add("density_rmse.csv", meta.csv(&report.to_csv()));
        out.add("density_rmse.json", meta.wrap("report", &report)?);
    } else {
        let mut cfg: SimConfig = parse_config(a.config.as_ref())?;
        if g.full {
            cfg = cfg.full_scale();
        }
        if let Some(s) = g.seed {
            cfg.seed = s;
        }
        if let Some(r) = a.replications {
            cfg.replications = r;
        }
        if !a.n.is_empty() {
            cfg.sample_sizes = a.n.clone();
        }
        cfg.methods = sim_methods(g, &cfg.methods);
        if cfg.methods.is_empty() {
            return usage("no estimator left after applying --method");
        }
        let meta = Meta(json!({
            "tool": "metab",
            "version": env!("CARGO_PKG_VERSION"),
            "config": cli,
            "experiment": &cfg,
            "seed": cfg.seed,
        }));
        let report = simlab::run_experiment(&cfg)?;
        eprintln!("simulation finished in {:.1} s", report.wall_time_secs);
        out.add("sim_report.csv", meta.csv(&report.to_csv()));
        out.add("sim_report.json", meta.wrap("report", &report)?);
    }
    Ok(out)
}

fn validate(cli: &Cli) -> Outcome<()> {
    let g = &cli.global;
    let simulate = matches!(cli.command, Command::Simulate(_));
    if g.tk_fix.is_some() && !g.smooth {
        return usage("--tk-fix only applies with --smooth");
    }
    if g.full && !simulate {
        return usage("--full only applies to simulate");
    }
    if simulate && (g.smooth || g.input.is_some() || g.format.is_some() || g.lower_bound.is_some()) {
        return usage("simulate takes its inputs from --config, not a table");
    }
    if matches!(cli.command, Command::Fit(_) | Command::Moments) && !g.method.is_empty() {
        return usage("--method applies to shares and simulate");
    }
    if !g.bk_c.is_empty() {
        if let Some(c) = g.bk_c.iter().find(|c| !(**c > 0.0)) {
            return usage(format!("bandwidth constant {c} must be positive"));
        }
    }
    if let Command::Fit(a) = &cli.command {
        if a.grid_points == 0 {
            return usage("--grid-points must be positive");
        }
    }
    Ok(())
}

fn init_threads() -> Outcome<()> {
    if let Ok(v) = std::env::var("METAB_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::Usage(format!("METAB_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Outcome<Vec<PathBuf>> {
    validate(cli)?;
    init_threads()?;
    let out = match &cli.command {
        Command::Fit(a) => cmd_fit(cli, a)?,
        Command::Shares(a) => cmd_shares(cli, a)?,
        Command::Simulate(a) => cmd_simulate(cli, a)?,
        Command::Moments => cmd_moments(cli)?,
    };
    out.write(&cli.global.output_dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
