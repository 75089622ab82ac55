use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A data file row or parameter entry that could not be accepted.
    #[error("{path}:{line}: {message}")]
    Input {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("invalid parameter `{key}`: {message}")]
    Param { key: String, message: String },

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("OD pair {origin}->{destination} is not connected in the {network} network")]
    Disconnected {
        network: &'static str,
        origin: usize,
        destination: usize,
    },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("year {year}: {source}")]
    Year {
        year: i32,
        #[source]
        source: Box<Error>,
    },

    #[error("gain k{index} has the wrong sign ({value:.3e}); edge sign structure does not hold here")]
    SignViolation { index: usize, value: f64 },

    #[error("backcast infeasible: {0}")]
    Infeasible(String),
}

impl Error {
    pub(crate) fn input(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Input {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn param(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Param {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Attach the simulated year to an error that lacks one.
    pub fn in_year(self, year: i32) -> Self {
        match self {
            e @ Error::Year { .. } => e,
            e => Error::Year {
                year,
                source: Box::new(e),
            },
        }
    }
}
