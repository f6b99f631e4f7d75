use std::path::PathBuf;

use metab_core::baselines::{piketty_top_share, ParetoInterp};
use metab_core::dist::{self, ShareBasis};
use metab_core::smoothing;
use metab_core::{fit_me_density, parse_summary, to_bin_moments, Error, FormatDescriptor, MEDensity};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn irs() -> metab_core::TabulatedSummary {
    let fmt = FormatDescriptor::from_sidecar(&std::fs::read_to_string(data("irs2019.format")).unwrap()).unwrap();
    parse_summary(std::fs::File::open(data("irs2019.csv")).unwrap(), &fmt).unwrap()
}

#[test]
fn irs_table_parses_top_first() {
    let s = irs();
    assert_eq!(s.len(), 18);
    assert_eq!(s.thresholds()[0], 10_000_000.0);
    assert_eq!(s.thresholds()[17], 1.0);
    assert_eq!(s.group_count(0), 20_876);
    assert_eq!(s.group_total(0), 590_230_011_000.0);
    assert_eq!(s.cum_counts()[17], 155_669_305);
    assert_eq!(s.population(), 155_669_305);
}

#[test]
fn irs_fit_smooth_and_shares() {
    let s = irs();
    let m = to_bin_moments(&s, false).unwrap();
    let d = fit_me_density(&m).unwrap();
    assert!(d.bins()[0].lambda < 0.0);

    let fit = smoothing::smooth_thresholds(&m, s.lower_bound()).unwrap();
    assert!(fit.max_jump() <= 1e-8 * smoothing::sup_density(&fit.density));
    assert!(fit.j_star_trajectory.last().unwrap() <= &fit.j_star_trajectory[0]);
    assert_eq!(fit.t_star[17], 1.0);

    let interp = ParetoInterp::from_summary(&s).unwrap();
    for p in [0.01, 0.05, 0.1] {
        let me = dist::top_share(&d, p, ShareBasis::Covered).unwrap();
        let pk = piketty_top_share(&interp, p, None).unwrap().share;
        assert!((me - pk).abs() / pk < 0.05, "p = {p}: ME {me}, Piketty {pk}");
    }
    assert_eq!(dist::top_share(&d, 1.0, ShareBasis::Covered).unwrap(), 1.0);
}

#[test]
fn external_totals_scale_shares() {
    let s = irs();
    let d = fit_me_density(&to_bin_moments(&s, false).unwrap()).unwrap();
    let covered = dist::top_share(&d, 0.01, ShareBasis::Covered).unwrap();
    // same population and total as the table reproduces the covered share
    let same = ShareBasis::External {
        units: s.population() as f64,
        total: s.cum_sums()[17],
        table_units: s.population() as f64,
    };
    assert!((dist::top_share(&d, 0.01, same).unwrap() - covered).abs() < 1e-12);
    // more units at the same total reach further down the table
    let wider = ShareBasis::External {
        units: 1.1 * s.population() as f64,
        total: s.cum_sums()[17],
        table_units: s.population() as f64,
    };
    assert!(dist::top_share(&d, 0.01, wider).unwrap() > covered);
}

#[test]
fn density_json_round_trip_preserves_functionals() {
    let d = fit_me_density(&to_bin_moments(&irs(), false).unwrap()).unwrap();
    let back: MEDensity = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
    assert_eq!(back, d);
    assert_eq!(dist::gini(&back).unwrap(), dist::gini(&d).unwrap());
}

#[test]
fn open_bottom_needs_a_lower_bound() {
    let csv = "t,n,s\n10,2,30\n,10,50\n";
    let err = parse_summary(csv.as_bytes(), &FormatDescriptor::default()).unwrap_err();
    assert!(matches!(err, Error::Validation(_)), "{err}");
    let fmt = FormatDescriptor {
        lower_bound: Some(0.0),
        ..FormatDescriptor::default()
    };
    let s = parse_summary(csv.as_bytes(), &fmt).unwrap();
    assert_eq!(s.lower_bound(), 0.0);
    assert!(fit_me_density(&to_bin_moments(&s, false).unwrap()).is_ok());
}

#[test]
fn log_density_grid_matches_transform() {
    let d = fit_me_density(&to_bin_moments(&irs(), false).unwrap()).unwrap();
    let xs = [5.0, 10.0, 12.0, 15.0];
    let csv = dist::log_density_csv(&d, &xs);
    for (line, &x) in csv.lines().skip(1).zip(&xs) {
        let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        let y = f64::exp(x);
        assert_eq!(v, d.pdf(y) * y);
    }
}
