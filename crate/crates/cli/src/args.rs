use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use covarcast_core::RosterModel;

#[derive(Debug, Parser)]
#[command(
    name = "covarcast",
    version,
    about = "Covariance forecasting with GARCH, DCC and hybrid LSTM models, evaluated by minimum-variance backtests"
)]
pub struct Cli {
    /// Worker threads; 1 gives fully reproducible scheduling
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a DCC-GARCH panel and write prices plus the true parameters
    Simulate(SimulateArgs),
    /// Fit a GARCH(1,1) model to every asset
    FitGarch(FitArgs),
    /// Fit the DCC correlation model on GARCH-standardized residuals
    FitDcc(FitArgs),
    /// Train hybrid volatility networks on the initial training window
    Train(TrainArgs),
    /// Run the rolling minimum-variance backtest and write a report directory
    Backtest(BacktestArgs),
    /// Print the metric table of a report directory
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of assets
    #[arg(long, default_value_t = 5)]
    pub assets: usize,
    /// Number of daily returns (the price file has one more row)
    #[arg(long, default_value_t = 1000)]
    pub days: usize,
    /// Seed for parameters and innovations
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// DCC news coefficient
    #[arg(long, default_value_t = 0.03)]
    pub dcc_alpha: f64,
    /// DCC persistence coefficient
    #[arg(long, default_value_t = 0.95)]
    pub dcc_beta: f64,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Price CSV: a date column followed by one column per asset
    #[arg(long)]
    pub input: PathBuf,
    /// Fit on the first N returns only
    #[arg(long, value_name = "N")]
    pub train_days: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Price CSV: a date column followed by one column per asset
    #[arg(long)]
    pub input: PathBuf,
    /// Run configuration (TOML, or JSON with a .json extension)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed for network initialization and training
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model to include; repeat to build the roster
    #[arg(long = "variant", value_name = "MODEL", value_parser = parse_model)]
    pub variants: Vec<RosterModel>,
    /// Look-back length of the network input sequences
    #[arg(long)]
    pub tau: Option<usize>,
    /// Length of the rolling estimation window in days
    #[arg(long, value_name = "N")]
    pub train_days: Option<usize>,
    /// Output directory; results go to a subdirectory named by the config hash
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Long-only minimum-variance weights
    #[arg(long)]
    pub no_short: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report directory written by `backtest`
    pub run_dir: PathBuf,
    /// Also write the table and cumulative-return plot data here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_model(s: &str) -> Result<RosterModel, String> {
    RosterModel::from_label(s).ok_or_else(|| {
        let known: Vec<&str> = RosterModel::DEFAULT_ROSTER.iter().map(|m| m.label()).collect();
        format!("unknown model '{s}'; expected one of {}", known.join(", "))
    })
}
