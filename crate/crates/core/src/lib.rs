//! Covariance forecasting with GARCH, shrinkage-targeted DCC and hybrid
//! GARCH-LSTM volatility models, evaluated through minimum-variance
//! portfolio backtests.

pub mod error;
pub mod linalg;
pub mod optim;
pub mod rng;

pub mod backtest;
pub mod dcc;
pub mod garch;
pub mod hybrid;
pub mod market_data;
pub mod neural;
pub mod portfolio;
pub mod shrinkage;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};

pub use backtest::{
    compute_metrics, read_report, run_backtest, write_report, BacktestConfig, BacktestReport, Metrics, RosterModel,
};
pub use dcc::{fit_dcc, DccFit, DccOptions, DccParams, PairScheme};
pub use garch::{fit_garch, GarchFit, GarchParams};
pub use hybrid::{assemble_covariance, CovarianceForecast, HybridForecaster, ModelVariant, ScalerState};
pub use market_data::{PricePanel, ProxyPanel, ReturnPanel, SimulationSpec};
pub use neural::{Network, NetworkConfig, TrainingConfig};
pub use portfolio::PortfolioWeights;
pub use shrinkage::ShrinkageMethod;
