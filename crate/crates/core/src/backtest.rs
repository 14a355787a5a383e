//! Rolling minimum-variance backtest over a roster of covariance models.
//!
//! The first `train_days` returns form the initial estimation window. After
//! that the sample is cut into months of `month_len` trading days. On the last
//! day before each month the covariance matrix of the next day is forecast,
//! minimum-variance weights are computed from it and held for the whole month.
//! GARCH models and networks are refitted every `nn_refit_every` months on the
//! most recent `train_days` returns, the DCC layer every `dcc_refit_every`
//! months on all data to date. Between refits the variance recursion runs
//! forward with the last fitted parameters.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dcc::{self, DccOptions, DccParams, PairScheme};
use crate::error::{Error, Result};
use crate::garch::{self, GarchFit, GarchParams};
use crate::hybrid::{self, HybridForecaster, ModelVariant};
use crate::linalg::Matrix;
use crate::market_data::{volatility_proxy, ReturnPanel};
use crate::neural::{Activation, NetworkConfig, TrainingConfig};
use crate::portfolio::{self, PortfolioWeights};
use crate::rng;
use crate::shrinkage::{self, ShrinkageMethod};

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

/// A model in the backtest roster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RosterModel {
    EqualWeight,
    Dcc,
    Hybrid(ModelVariant),
}

impl RosterModel {
    pub const DEFAULT_ROSTER: [Self; 6] = [
        Self::EqualWeight,
        Self::Dcc,
        Self::Hybrid(ModelVariant::LSTM_DCC_OH),
        Self::Hybrid(ModelVariant::G_LSTM_DCC_OH),
        Self::Hybrid(ModelVariant::LSTM_DCC),
        Self::Hybrid(ModelVariant::G_LSTM_DCC),
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Self::EqualWeight => "1/N",
            Self::Dcc => "DCC",
            Self::Hybrid(v) => v.label(),
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label.trim() {
            "1/N" => Some(Self::EqualWeight),
            l if l.eq_ignore_ascii_case("dcc") => Some(Self::Dcc),
            l => ModelVariant::from_label(l).map(Self::Hybrid),
        }
    }

    /// Seed stream tied to the model itself, not its roster position.
    fn stream(&self) -> u64 {
        match self {
            Self::EqualWeight => 1,
            Self::Dcc => 2,
            Self::Hybrid(v) => 16 + 2 * v.use_garch_features as u64 + v.use_one_hot as u64,
        }
    }

    /// Network initialization and training seeds for the refit at `month`.
    pub fn network_seeds(&self, seed: u64, month: usize) -> (u64, u64) {
        let s = rng::derive_seed(rng::derive_seed(seed, self.stream()), month as u64);
        (s, rng::derive_seed(s, 1))
    }

    /// File-name friendly label.
    pub fn slug(&self) -> String {
        self.label().replace('/', "-")
    }
}

impl Serialize for RosterModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for RosterModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::from_label(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown model '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DccWindow {
    #[default]
    Expanding,
    Rolling,
}

/// Network architecture; input widths are filled in per model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkShape {
    pub lstm_hidden: usize,
    pub dense_widths: Vec<usize>,
    pub lstm_dropout: f64,
    pub dense_dropout: f64,
}

impl Default for NetworkShape {
    fn default() -> Self {
        let r = NetworkConfig::reference(1, 0, 0);
        Self {
            lstm_hidden: r.lstm_hidden,
            dense_widths: r.dense_widths,
            lstm_dropout: r.lstm_dropout,
            dense_dropout: r.dense_dropout,
        }
    }
}

impl NetworkShape {
    pub fn to_config(&self, seed: u64) -> NetworkConfig {
        NetworkConfig {
            input_width: 1,
            lstm_hidden: self.lstm_hidden,
            dense_widths: self.dense_widths.clone(),
            one_hot_width: 0,
            lstm_dropout: self.lstm_dropout,
            dense_dropout: self.dense_dropout,
            hidden_activation: Activation::Sigmoid,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub train_days: usize,
    pub month_len: usize,
    pub nn_refit_every: usize,
    pub dcc_refit_every: usize,
    pub models: Vec<RosterModel>,
    pub allow_short: bool,
    pub seed: u64,
    pub tau: usize,
    pub dcc_window: DccWindow,
    pub pair_scheme: PairScheme,
    pub network: NetworkShape,
    pub training: TrainingConfig,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            train_days: 1250,
            month_len: 21,
            nn_refit_every: 12,
            dcc_refit_every: 1,
            models: RosterModel::DEFAULT_ROSTER.to_vec(),
            allow_short: true,
            seed: 0,
            tau: 21,
            dcc_window: DccWindow::Expanding,
            pair_scheme: PairScheme::Contiguous,
            network: NetworkShape::default(),
            training: TrainingConfig::default(),
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_days <= self.tau {
            return Err(Error::InvalidInput(format!(
                "train_days ({}) must exceed tau ({})",
                self.train_days, self.tau
            )));
        }
        if self.tau == 0 || self.month_len == 0 || self.nn_refit_every == 0 || self.dcc_refit_every == 0 {
            return Err(Error::InvalidInput(
                "tau, month_len and refit intervals must be at least 1".into(),
            ));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidInput("model roster is empty".into()));
        }
        for (k, m) in self.models.iter().enumerate() {
            if self.models[..k].contains(m) {
                return Err(Error::InvalidInput(format!("model {} listed twice", m.label())));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Annualized standard deviation, √252·sd with divisor T−1.
    pub sd: f64,
    /// Annualized mean, 252·mean.
    pub av: f64,
    /// AV/SD, absent when SD is zero.
    pub ir: Option<f64>,
}

pub fn compute_metrics(daily_returns: &[f64]) -> Result<Metrics> {
    let n = daily_returns.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("metrics need at least 2 returns, got {n}")));
    }
    let mean = daily_returns.iter().sum::<f64>() / n as f64;
    let constant = daily_returns.iter().all(|r| *r == daily_returns[0]);
    let var = if constant {
        0.0
    } else {
        daily_returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    };
    let sd = TRADING_DAYS_PER_YEAR.sqrt() * var.sqrt();
    let av = TRADING_DAYS_PER_YEAR * mean;
    Ok(Metrics {
        sd,
        av,
        ir: (sd > 0.0).then(|| av / sd),
    })
}

/// One rebalance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthRecord {
    pub month: usize,
    /// Panel row of the first day held.
    pub first_day: usize,
    /// Forecast inputs were restricted to rows before this index.
    pub forecast_data_end: usize,
    pub date: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelResult {
    pub model: RosterModel,
    pub daily_returns: Vec<f64>,
    pub weights: Vec<PortfolioWeights>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub data_hash: String,
    pub seed: u64,
    pub assets: Vec<String>,
    pub n_days: usize,
    pub train_days: usize,
    pub months: usize,
    pub out_of_sample_days: usize,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub config: BacktestConfig,
    /// Out-of-sample dates.
    pub dates: Vec<String>,
    pub months: Vec<MonthRecord>,
    /// In roster order.
    pub models: Vec<ModelResult>,
    pub provenance: Provenance,
}

impl BacktestReport {
    pub fn model(&self, model: RosterModel) -> Option<&ModelResult> {
        self.models.iter().find(|m| m.model == model)
    }
}

/// Number of whole months after the training window; a trailing partial
/// month is not traded.
pub fn month_count(n_days: usize, train_days: usize, month_len: usize) -> usize {
    n_days.saturating_sub(train_days) / month_len.max(1)
}

fn tag(month: usize, model: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Backtest {
        month,
        model: model.to_string(),
        source: Box::new(e),
    }
}

/// Forecast inputs shared by every covariance model for one month.
struct SharedForecast {
    params: Vec<GarchParams>,
    /// σ² path per asset over rows [0, s).
    sigma2: Vec<Vec<f64>>,
    garch_vols: Vec<f64>,
    correlation: Matrix,
}

pub fn run_backtest(panel: &ReturnPanel, config: &BacktestConfig) -> Result<BacktestReport> {
    config.validate()?;
    let (t, n) = panel.returns.shape();
    let w = config.train_days;
    let l = config.month_len;
    if t < w + l {
        return Err(Error::InvalidInput(format!(
            "panel has {t} days; need at least train_days + month_len = {}",
            w + l
        )));
    }
    let months = month_count(t, w, l);
    let need_garch = config.models.iter().any(|m| *m != RosterModel::EqualWeight);
    let hybrids: Vec<ModelVariant> = config
        .models
        .iter()
        .filter_map(|m| match m {
            RosterModel::Hybrid(v) => Some(*v),
            _ => None,
        })
        .collect();
    let columns: Vec<Vec<f64>> = (0..n).map(|i| panel.column(i)).collect();
    let sigma2_init: Vec<f64> = columns.iter().map(|y| garch::sample_variance(&y[..w])).collect();

    let mut garch_params: Vec<GarchParams> = Vec::new();
    let mut dcc_state: Option<(DccParams, Matrix)> = None;
    let mut forecasters: BTreeMap<ModelVariant, HybridForecaster> = BTreeMap::new();
    let mut month_records = Vec::with_capacity(months);
    let mut returns: Vec<Vec<f64>> = vec![Vec::with_capacity(months * l); config.models.len()];
    let mut weights: Vec<Vec<PortfolioWeights>> = vec![Vec::with_capacity(months); config.models.len()];

    for m in 0..months {
        let s = w + m * l;
        log::info!("month {}/{months}: forecasting {}", m + 1, panel.dates[s]);
        let refit_annual = m.is_multiple_of(config.nn_refit_every);

        let shared = if need_garch {
            if refit_annual {
                garch_params = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        garch::fit_garch(&columns[i][s - w..s])
                            .map(|f| f.params)
                            .map_err(|e| e.for_asset(&panel.assets[i]))
                    })
                    .collect::<Result<Vec<_>>>()
                    .map_err(tag(m, "GARCH"))?;
            }
            let sigma2: Vec<Vec<f64>> = (0..n)
                .map(|i| garch::garch_filter(&columns[i][..s], &garch_params[i], sigma2_init[i]))
                .collect();
            let garch_vols = (0..n)
                .map(|i| garch_params[i].next_variance(columns[i][s - 1], sigma2[i][s - 1]).sqrt())
                .collect();
            let start = match config.dcc_window {
                DccWindow::Expanding => 0,
                DccWindow::Rolling => s - w,
            };
            let std_res = Matrix::from_fn(s - start, n, |r, i| {
                columns[i][start + r] / sigma2[i][start + r].sqrt()
            });
            if dcc_state.is_none() || m.is_multiple_of(config.dcc_refit_every) {
                let rbar = shrinkage::estimate_target(&std_res, ShrinkageMethod::Nonlinear, 0.0).map_err(tag(m, "DCC"))?;
                let options = DccOptions {
                    scheme: config.pair_scheme,
                    ..DccOptions::default()
                };
                let fit = dcc::fit_dcc(&std_res, &rbar, &options).map_err(tag(m, "DCC"))?;
                log::debug!("month {m}: DCC α = {:.4}, β = {:.4}", fit.params.alpha, fit.params.beta);
                dcc_state = Some((fit.params, rbar));
            }
            let (params, rbar) = dcc_state.as_ref().expect("DCC state set above");
            let filtered = dcc::dcc_filter(&std_res, params, rbar, false).map_err(tag(m, "DCC"))?;
            let s_last: Vec<f64> = std_res.row(s - start - 1).iter().copied().collect();
            let correlation = dcc::one_step_correlation(&filtered.q_last, rbar, &s_last, params);
            Some(SharedForecast {
                params: garch_params.clone(),
                sigma2,
                garch_vols,
                correlation,
            })
        } else {
            None
        };

        if refit_annual && !hybrids.is_empty() {
            let sh = shared.as_ref().expect("hybrids need GARCH state");
            let window = volatility_proxy(&panel.slice(s - w, s));
            let fits: Vec<GarchFit> = (0..n)
                .map(|i| GarchFit::from_params(&columns[i][s - w..s], sh.params[i], sh.sigma2[i][s - w]))
                .collect();
            let trained = hybrids
                .par_iter()
                .map(|v| {
                    let model = RosterModel::Hybrid(*v);
                    let (seed, training_seed) = model.network_seeds(config.seed, m);
                    let training = TrainingConfig {
                        seed: training_seed,
                        ..config.training.clone()
                    };
                    let (f, report) = HybridForecaster::train(
                        &window,
                        &fits,
                        *v,
                        config.tau,
                        config.network.to_config(seed),
                        &training,
                    )
                    .map_err(tag(m, v.label()))?;
                    log::info!(
                        "month {m}: trained {} (best epoch {}, validation loss {:?})",
                        v.label(),
                        report.best_epoch,
                        report.validation_loss.last()
                    );
                    Ok((*v, f))
                })
                .collect::<Result<Vec<_>>>()?;
            forecasters.extend(trained);
        }

        let date = &panel.dates[s];
        let computed = config
            .models
            .par_iter()
            .map(|model| {
                let label = model.label();
                let wts = match model {
                    RosterModel::EqualWeight => portfolio::equal_weights(n),
                    _ => {
                        let sh = shared.as_ref().expect("GARCH state for covariance models");
                        let vols = match model {
                            RosterModel::Hybrid(v) => {
                                let tau = config.tau;
                                let recent = volatility_proxy(&panel.slice(s - tau, s));
                                let fits: Vec<GarchFit> = (0..n)
                                    .map(|i| {
                                        GarchFit::from_params(&columns[i][s - tau..s], sh.params[i], sh.sigma2[i][s - tau])
                                    })
                                    .collect();
                                let features = hybrid::build_hybrid_features(&recent, &fits, *v)
                                    .map_err(tag(m, label))?;
                                forecasters[v].predict(&features).map_err(tag(m, label))?
                            }
                            _ => sh.garch_vols.clone(),
                        };
                        let h = hybrid::assemble_covariance(&vols, &sh.correlation, date).map_err(tag(m, label))?;
                        if config.allow_short {
                            portfolio::min_variance_weights(&h)
                        } else {
                            portfolio::min_variance_weights_long_only(&h)
                        }
                    }
                }
                .map_err(tag(m, label))?
                .with_label(label)
                .with_date(date.clone());
                let rets = (s..s + l)
                    .map(|d| {
                        let row: Vec<f64> = panel.returns.row(d).iter().copied().collect();
                        portfolio::portfolio_return(&wts.weights, &row)
                    })
                    .collect::<Result<Vec<_>>>()
                    .map_err(tag(m, label))?;
                Ok((wts, rets))
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, (wts, rets)) in computed.into_iter().enumerate() {
            weights[k].push(wts);
            returns[k].extend(rets);
        }
        month_records.push(MonthRecord {
            month: m,
            first_day: s,
            forecast_data_end: s,
            date: date.clone(),
        });
    }

    let models = config
        .models
        .iter()
        .zip(returns.into_iter().zip(weights))
        .map(|(model, (daily_returns, weights))| {
            Ok(ModelResult {
                model: *model,
                metrics: compute_metrics(&daily_returns)?,
                daily_returns,
                weights,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let oos_days = months * l;
    Ok(BacktestReport {
        config: config.clone(),
        dates: panel.dates[w..w + oos_days].to_vec(),
        months: month_records,
        models,
        provenance: Provenance {
            config_hash: config.config_hash(),
            data_hash: panel.data_hash(),
            seed: config.seed,
            assets: panel.assets.clone(),
            n_days: t,
            train_days: w,
            months,
            out_of_sample_days: oos_days,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

/// Percent with two decimals, as in "13.74".
pub fn format_percent(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

pub fn format_ir(ir: Option<f64>) -> String {
    ir.map_or_else(|| "NA".to_string(), |v| format!("{v:.2}"))
}

pub fn metrics_csv(report: &BacktestReport) -> String {
    let mut out = String::from("model,SD,AV,IR\n");
    for m in &report.models {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            m.model.label(),
            format_percent(m.metrics.sd),
            format_percent(m.metrics.av),
            format_ir(m.metrics.ir)
        );
    }
    out
}

/// Running sums of daily log returns, one column per model.
pub fn cumulative_csv(report: &BacktestReport) -> String {
    let mut out = String::from("date");
    for m in &report.models {
        out.push(',');
        out.push_str(m.model.label());
    }
    out.push('\n');
    let mut acc = vec![0.0; report.models.len()];
    for (d, date) in report.dates.iter().enumerate() {
        out.push_str(date);
        for (k, m) in report.models.iter().enumerate() {
            acc[k] += m.daily_returns[d];
            let _ = write!(out, ",{}", acc[k]);
        }
        out.push('\n');
    }
    out
}

fn write_file(path: PathBuf, text: &str) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Writes config.json, metrics.csv, cumulative.csv, weights.csv, months.csv,
/// provenance.json and returns/<model>.csv under `dir`.
pub fn write_report(report: &BacktestReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let returns_dir = dir.join("returns");
    std::fs::create_dir_all(&returns_dir).map_err(|e| Error::io(&returns_dir, e))?;
    write_file(dir.join("config.json"), &serde_json::to_string_pretty(&report.config)?)?;
    write_file(dir.join("provenance.json"), &serde_json::to_string_pretty(&report.provenance)?)?;
    write_file(dir.join("metrics.csv"), &metrics_csv(report))?;
    write_file(dir.join("cumulative.csv"), &cumulative_csv(report))?;
    let all_weights: Vec<PortfolioWeights> = report.models.iter().flat_map(|m| m.weights.clone()).collect();
    write_file(
        dir.join("weights.csv"),
        &portfolio::weights_to_csv(&all_weights, &report.provenance.assets),
    )?;
    let mut months = String::from("month,first_day,forecast_data_end,date\n");
    for r in &report.months {
        let _ = writeln!(months, "{},{},{},{}", r.month, r.first_day, r.forecast_data_end, r.date);
    }
    write_file(dir.join("months.csv"), &months)?;
    for m in &report.models {
        let mut text = String::from("date,return\n");
        for (date, r) in report.dates.iter().zip(&m.daily_returns) {
            let _ = writeln!(text, "{date},{r}");
        }
        write_file(returns_dir.join(format!("{}.csv", m.model.slug())), &text)?;
    }
    Ok(())
}

fn read_file(path: PathBuf) -> Result<String> {
    std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
}

fn csv_rows(text: &str) -> impl Iterator<Item = Vec<&str>> {
    text.lines().skip(1).filter(|l| !l.trim().is_empty()).map(|l| l.split(',').collect())
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse(format!("bad {what} '{s}'")))
}

/// Reads a report directory written by [`write_report`]; metrics are
/// recomputed from the stored return series.
pub fn read_report(dir: impl AsRef<Path>) -> Result<BacktestReport> {
    let dir = dir.as_ref();
    let config = BacktestConfig::from_json_str(&read_file(dir.join("config.json"))?)?;
    let provenance: Provenance = serde_json::from_str(&read_file(dir.join("provenance.json"))?)?;
    let months = csv_rows(&read_file(dir.join("months.csv"))?)
        .map(|r| {
            if r.len() != 4 {
                return Err(Error::Parse("months.csv row needs 4 fields".into()));
            }
            Ok(MonthRecord {
                month: parse_num(r[0], "month")?,
                first_day: parse_num(r[1], "row index")?,
                forecast_data_end: parse_num(r[2], "row index")?,
                date: r[3].to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let weights_text = read_file(dir.join("weights.csv"))?;
    let mut weights: BTreeMap<String, Vec<PortfolioWeights>> = BTreeMap::new();
    for r in csv_rows(&weights_text) {
        if r.len() != 4 {
            return Err(Error::Parse("weights.csv row needs 4 fields".into()));
        }
        let list = weights.entry(r[3].to_string()).or_default();
        if list.last().is_none_or(|w| w.as_of_date != r[0] || w.weights.len() == provenance.assets.len()) {
            list.push(PortfolioWeights {
                weights: Vec::with_capacity(provenance.assets.len()),
                as_of_date: r[0].to_string(),
                label: r[3].to_string(),
            });
        }
        list.last_mut().expect("pushed above").weights.push(parse_num(r[2], "weight")?);
    }
    let mut dates = Vec::new();
    let mut models = Vec::with_capacity(config.models.len());
    for (k, model) in config.models.iter().enumerate() {
        let text = read_file(dir.join("returns").join(format!("{}.csv", model.slug())))?;
        let mut daily_returns = Vec::new();
        for r in csv_rows(&text) {
            if r.len() != 2 {
                return Err(Error::Parse("returns row needs 2 fields".into()));
            }
            if k == 0 {
                dates.push(r[0].to_string());
            }
            daily_returns.push(parse_num(r[1], "return")?);
        }
        models.push(ModelResult {
            model: *model,
            metrics: compute_metrics(&daily_returns)?,
            daily_returns,
            weights: weights.remove(model.label()).unwrap_or_default(),
        });
    }
    Ok(BacktestReport {
        config,
        dates,
        months,
        models,
        provenance,
    })
}
