//! Maximum-entropy density estimation from tabulated summary data.
//!
//! The pipeline is: parse a table ([`tabio`]), fit a piecewise-exponential
//! density bin by bin ([`mecore`]), optionally move the interior thresholds
//! until the density is continuous ([`smoothing`]), then read off
//! distribution functionals in closed form ([`dist`]). [`baselines`] holds
//! competing estimators and [`simlab`] the Monte-Carlo harness.

pub mod baselines;
pub mod dist;
pub mod error;
pub mod mecore;
pub mod models;
pub mod quad;
pub mod simlab;
pub mod special;
pub mod smoothing;
pub mod tabio;

pub use error::{Error, Result};
pub use mecore::{fit_me_density, solve_lambda, MEBin, MEDensity};
pub use tabio::{parse_summary, to_bin_moments, BinMoments, FormatDescriptor, Provenance, TabulatedSummary};
