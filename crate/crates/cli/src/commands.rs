use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use covarcast_core::backtest::{cumulative_csv, format_ir, format_percent};
use covarcast_core::dcc::{fit_dcc, DccOptions};
use covarcast_core::garch::{degarch, fits_to_json};
use covarcast_core::market_data::{load_prices_csv, simulate_dcc_garch, to_log_returns, volatility_proxy, write_prices_csv};
use covarcast_core::neural::TrainingConfig;
use covarcast_core::shrinkage::{matrix_to_csv, nonlinear_shrink};
use covarcast_core::{
    read_report, run_backtest, write_report, BacktestConfig, BacktestReport, DccParams, HybridForecaster,
    ReturnPanel, RosterModel, SimulationSpec,
};

use crate::args::{BacktestArgs, Cli, Command, FitArgs, ModelArgs, ReportArgs, SimulateArgs, TrainArgs};

/// Bad flags or configuration, reported with exit code 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    UsageError(e.to_string()).into()
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::FitGarch(a) => fit_garch_cmd(a),
        Command::FitDcc(a) => fit_dcc_cmd(a),
        Command::Train(a) => train(a),
        Command::Backtest(a) => backtest(a),
        Command::Report(a) => report(a),
    }
}

fn echo(command: &str, resolved: &impl Serialize) -> Result<()> {
    println!("covarcast {command} with:\n{}", serde_json::to_string_pretty(resolved)?);
    Ok(())
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_returns(input: &Path) -> Result<ReturnPanel> {
    let loaded = load_prices_csv(input)?;
    if !loaded.dropped.is_empty() {
        log::warn!("dropped assets with missing prices: {}", loaded.dropped.join(", "));
    }
    Ok(to_log_returns(&loaded.panel)?)
}

fn head(panel: ReturnPanel, train_days: Option<usize>) -> Result<ReturnPanel> {
    match train_days {
        Some(w) if w > panel.n_days() => Err(usage(format!(
            "--train-days {w} exceeds the {} available returns",
            panel.n_days()
        ))),
        Some(w) => Ok(panel.head(w)),
        None => Ok(panel),
    }
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let spec = SimulationSpec::heterogeneous(
        a.assets,
        a.days,
        DccParams {
            alpha: a.dcc_alpha,
            beta: a.dcc_beta,
        },
        a.seed,
    );
    spec.validate().map_err(usage)?;
    echo("simulate", &spec)?;
    let sim = simulate_dcc_garch(&spec)?;
    create_dir(&a.out)?;
    let prices = a.out.join("prices.csv");
    write_prices_csv(&sim.returns.to_prices(100.0), &prices)?;
    println!("wrote {}", prices.display());
    write(a.out.join("truth.json"), &serde_json::to_string_pretty(&spec)?)
}

#[derive(Serialize)]
struct FitEcho<'a> {
    input: &'a Path,
    train_days: Option<usize>,
    out: &'a Path,
}

fn fit_garch_cmd(a: &FitArgs) -> Result<()> {
    echo("fit-garch", &FitEcho { input: &a.input, train_days: a.train_days, out: &a.out })?;
    let panel = head(load_returns(&a.input)?, a.train_days)?;
    let d = degarch(&panel)?;
    create_dir(&a.out)?;
    write(a.out.join("garch_fits.json"), &fits_to_json(&panel.assets, &d.fits)?)
}

#[derive(Serialize)]
struct DccDocument<'a> {
    assets: &'a [String],
    alpha: f64,
    beta: f64,
    composite_loglik: f64,
    converged: bool,
    pair_scheme: &'a [(usize, usize)],
}

fn fit_dcc_cmd(a: &FitArgs) -> Result<()> {
    echo("fit-dcc", &FitEcho { input: &a.input, train_days: a.train_days, out: &a.out })?;
    let panel = head(load_returns(&a.input)?, a.train_days)?;
    let d = degarch(&panel)?;
    let rbar = nonlinear_shrink(&d.std_residuals)?.matrix;
    let fit = fit_dcc(&d.std_residuals, &rbar, &DccOptions::default())?;
    if !fit.converged {
        log::warn!("DCC optimizer stopped before converging");
    }
    let doc = DccDocument {
        assets: &panel.assets,
        alpha: fit.params.alpha,
        beta: fit.params.beta,
        composite_loglik: fit.composite_loglik,
        converged: fit.converged,
        pair_scheme: &fit.pair_scheme,
    };
    create_dir(&a.out)?;
    write(a.out.join("dcc_fit.json"), &serde_json::to_string_pretty(&doc)?)?;
    write(a.out.join("rbar.csv"), &matrix_to_csv(&fit.rbar))
}

/// Config file, then flags on top.
fn resolve_config(m: &ModelArgs) -> Result<BacktestConfig> {
    let mut c = match &m.config {
        Some(path) => BacktestConfig::load(path).map_err(usage)?,
        None => BacktestConfig::default(),
    };
    if let Some(seed) = m.seed {
        c.seed = seed;
    }
    if let Some(tau) = m.tau {
        c.tau = tau;
    }
    if let Some(w) = m.train_days {
        c.train_days = w;
    }
    if !m.variants.is_empty() {
        c.models = m.variants.clone();
    }
    Ok(c)
}

fn run_dir(out: &Path, kind: &str, config: &BacktestConfig) -> PathBuf {
    out.join(format!("{kind}-{}", &config.config_hash()[..12]))
}

fn train(a: &TrainArgs) -> Result<()> {
    let c = resolve_config(&a.model)?;
    c.validate().map_err(usage)?;
    let variants: Vec<_> = c
        .models
        .iter()
        .filter_map(|m| match m {
            RosterModel::Hybrid(v) => Some(*v),
            _ => None,
        })
        .collect();
    if variants.is_empty() {
        return Err(usage("no network variant selected; pass --variant with a hybrid model"));
    }
    echo("train", &c)?;
    let panel = load_returns(&a.model.input)?;
    let window = head(panel, Some(c.train_days))?;
    let fits = degarch(&window)?.fits;
    let proxies = volatility_proxy(&window);
    let dir = run_dir(&a.model.out, "train", &c);
    create_dir(&dir)?;
    write(dir.join("config.toml"), &c.to_toml()?)?;
    for v in variants {
        let (seed, training_seed) = RosterModel::Hybrid(v).network_seeds(c.seed, 0);
        let training = TrainingConfig {
            seed: training_seed,
            ..c.training.clone()
        };
        let (forecaster, report) =
            HybridForecaster::train(&proxies, &fits, v, c.tau, c.network.to_config(seed), &training)
                .with_context(|| format!("training {}", v.label()))?;
        println!(
            "{}: best epoch {}, final train loss {:.6}",
            v.label(),
            report.best_epoch,
            report.train_loss.last().copied().unwrap_or(f64::NAN)
        );
        write(
            dir.join(format!("{}.json", v.label())),
            &serde_json::to_string_pretty(&forecaster.to_document())?,
        )?;
        write(
            dir.join(format!("{}.training.json", v.label())),
            &serde_json::to_string_pretty(&report)?,
        )?;
    }
    Ok(())
}

fn backtest(a: &BacktestArgs) -> Result<()> {
    let mut c = resolve_config(&a.model)?;
    if a.no_short {
        c.allow_short = false;
    }
    c.validate().map_err(usage)?;
    echo("backtest", &c)?;
    let panel = load_returns(&a.model.input)?;
    if panel.n_days() < c.train_days + c.month_len {
        return Err(usage(format!(
            "{} returns is fewer than train_days + month_len = {}",
            panel.n_days(),
            c.train_days + c.month_len
        )));
    }
    let report = run_backtest(&panel, &c)?;
    let dir = run_dir(&a.model.out, "backtest", &c);
    write_report(&report, &dir)?;
    print!("{}", metric_table(&report));
    println!("report written to {}", dir.display());
    Ok(())
}

/// Annualized metrics, SD and AV in percent.
fn metric_table(report: &BacktestReport) -> String {
    let width = report.models.iter().map(|m| m.model.label().len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<width$}  {:>8}  {:>8}  {:>6}\n", "model", "SD", "AV", "IR");
    for m in &report.models {
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>8}  {:>6}",
            m.model.label(),
            format_percent(m.metrics.sd),
            format_percent(m.metrics.av),
            format_ir(m.metrics.ir)
        );
    }
    out
}

#[derive(Serialize)]
struct ReportEcho<'a> {
    run_dir: &'a Path,
    out: Option<&'a Path>,
}

fn report(a: &ReportArgs) -> Result<()> {
    echo("report", &ReportEcho { run_dir: &a.run_dir, out: a.out.as_deref() })?;
    let report = read_report(&a.run_dir).with_context(|| format!("reading report {}", a.run_dir.display()))?;
    println!(
        "{} months, {} out-of-sample days, {} assets",
        report.months.len(),
        report.dates.len(),
        report.provenance.assets.len()
    );
    let table = metric_table(&report);
    print!("{table}");
    if let Some(out) = &a.out {
        create_dir(out)?;
        write(out.join("metrics.txt"), &table)?;
        write(out.join("cumulative.csv"), &cumulative_csv(&report))?;
    }
    Ok(())
}
