use thiserror::Error;

/// Errors raised across the estimation pipeline.
///
/// Bin indices are 1-based and count from the top bin, matching the order in
/// which tables list their groups (`k = 1` is the unbounded top bin).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {message}")]
    MalformedRow { line: usize, message: String },

    #[error("invalid table: {0}")]
    Validation(String),

    #[error("bin {bin}: group mean {mean} is not strictly inside ({lower}, {upper})")]
    MeanOutsideBin {
        bin: usize,
        lower: f64,
        upper: f64,
        mean: f64,
    },

    #[error("infeasible bin{}: mean {mean} is not strictly inside ({lower}, {upper})", fmt_bin(.bin))]
    InfeasibleBin {
        bin: Option<usize>,
        lower: f64,
        upper: f64,
        mean: f64,
    },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge on [{lower}, {upper}] (error estimate {estimate:e})")]
    Quadrature {
        lower: f64,
        upper: f64,
        estimate: f64,
    },

    #[error("no convergence after {iterations} iterations (gradient inf-norm {grad_inf_norm:e})")]
    NonConvergence {
        iterations: usize,
        grad_inf_norm: f64,
    },
}

fn fmt_bin(bin: &Option<usize>) -> String {
    match bin {
        Some(k) => format!(" {k}"),
        None => String::new(),
    }
}

impl Error {
    /// Attach a bin index to an infeasibility raised by a single-bin solve.
    pub(crate) fn at_bin(self, k: usize) -> Self {
        match self {
            Error::InfeasibleBin {
                lower, upper, mean, ..
            } => Error::InfeasibleBin {
                bin: Some(k),
                lower,
                upper,
                mean,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
