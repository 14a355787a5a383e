use thiserror::Error;

/// Errors produced anywhere in the forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("parameter constraint violated: {0}")]
    Constraint(String),
    #[error("zero variance series")]
    ZeroVariance,
    #[error("insufficient observations for nonlinear shrinkage (N={n}, T={t})")]
    InsufficientObservations { n: usize, t: usize },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("ill-conditioned covariance (condition estimate {0:.3e}); repair the matrix upstream")]
    IllConditioned(f64),
    #[error("optimizer did not converge after {iterations} iterations (best objective {best_value})")]
    NonConvergence {
        iterations: usize,
        best_value: f64,
        best_params: Vec<f64>,
    },
    #[error("asset {asset}")]
    Asset {
        asset: String,
        #[source]
        source: Box<Error>,
    },
    #[error("training diverged (non-finite loss at epoch {epoch}); try a smaller learning rate than {learning_rate}")]
    Diverged { epoch: usize, learning_rate: f64 },
    #[error("backtest month {month}, model {model}")]
    Backtest {
        month: usize,
        model: String,
        #[source]
        source: Box<Error>,
    },
    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn for_asset(self, asset: &str) -> Self {
        Error::Asset {
            asset: asset.to_string(),
            source: Box::new(self),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
