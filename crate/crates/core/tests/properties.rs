use proptest::prelude::*;

use metab_core::dist::{self, ShareBasis};
use metab_core::special::{phi, phi_inv};
use metab_core::{fit_me_density, parse_summary, to_bin_moments, BinMoments, FormatDescriptor, Provenance, TabulatedSummary};

/// Thresholds, masses and in-bin positions for a feasible table.
fn table() -> impl Strategy<Value = BinMoments> {
    (3usize..25).prop_flat_map(|k| {
        (
            0.0..5.0f64,
            prop::collection::vec(0.05..2.0f64, k - 1),
            prop::collection::vec(0.02..0.98f64, k - 1),
            0.1..4.0f64,
            prop::collection::vec(0.01..1.0f64, k),
        )
            .prop_map(move |(bottom, gaps, pos, top_excess, w)| {
                let mut t = vec![bottom; k];
                for i in (0..k - 1).rev() {
                    t[i] = t[i + 1] + gaps[i];
                }
                let mut y = vec![Some(t[0] + top_excess)];
                for i in 1..k {
                    y.push(Some(t[i] + pos[i - 1] * (t[i - 1] - t[i])));
                }
                let s: f64 = w.iter().sum();
                let q = w.iter().map(|x| x / s).collect();
                BinMoments::new(t, q, y, Provenance::Empirical).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn fitted_bins_reproduce_mass_and_mean(m in table()) {
        let d = fit_me_density(&m).unwrap();
        for (k, b) in d.bins().iter().enumerate() {
            let y = m.y()[k].unwrap();
            prop_assert!((b.frac_above(b.lower) - 1.0).abs() < 1e-12);
            prop_assert!((b.mean_above(b.lower) - y).abs() <= 1e-10 * y.abs().max(1.0));
            prop_assert!((b.q - m.q()[k]).abs() <= 1e-15);
        }
        prop_assert!((d.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shares_are_monotone_and_bounded(m in table(), p in 0.001..0.999f64) {
        let d = fit_me_density(&m).unwrap();
        let s = dist::top_share(&d, p, ShareBasis::Covered).unwrap();
        let s2 = dist::top_share(&d, (p * 1.01).min(1.0), ShareBasis::Covered).unwrap();
        prop_assert!(s >= p - 1e-12 && s <= 1.0);
        prop_assert!(s2 >= s - 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf(m in table(), u in 0.001..0.999f64) {
        let d = fit_me_density(&m).unwrap();
        let y = dist::quantile(&d, u * d.total_mass()).unwrap();
        prop_assert!((dist::cdf(&d, y) - u * d.total_mass()).abs() < 1e-12);
    }

    #[test]
    fn phi_inv_is_an_inverse(x in -200.0..200.0f64) {
        let u = phi(x);
        let back = phi_inv(u).unwrap();
        prop_assert!((phi(back) - u).abs() < 1e-14);
    }

    #[test]
    fn csv_round_trip(m in table(), n in 1_000u64..1_000_000) {
        // integer counts and their group totals at the table's means
        let k = m.len();
        let mut counts = Vec::with_capacity(k);
        let mut sums = Vec::with_capacity(k);
        let (mut c, mut s) = (0u64, 0.0);
        for i in 0..k {
            let nk = ((m.q()[i] * n as f64).round() as u64).max(1);
            c += nk;
            s += nk as f64 * m.y()[i].unwrap();
            counts.push(c);
            sums.push(s);
        }
        let summary = TabulatedSummary::new(m.thresholds().to_vec(), counts, sums, None).unwrap();
        let back = parse_summary(summary.to_csv().as_bytes(), &FormatDescriptor::default()).unwrap();
        prop_assert_eq!(&back, &summary);
        prop_assert_eq!(to_bin_moments(&back, false).unwrap(), to_bin_moments(&summary, false).unwrap());
    }
}
