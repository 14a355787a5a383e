//! Price ingestion, log returns, volatility proxies and a DCC-GARCH simulator
//! with known ground truth.
//!
//! Returns are raw daily log returns (not percent). The conditional mean is
//! taken as zero throughout; nothing is demeaned.

use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::dcc::DccParams;
use crate::error::{Error, Result};
use crate::garch::GarchParams;
use crate::linalg::{self, Matrix};
use crate::rng;

/// T×N adjusted close prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub dates: Vec<String>,
    pub assets: Vec<String>,
    pub prices: Matrix,
}

/// T×N daily log returns. Row `t` is the return realised on `dates[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    pub dates: Vec<String>,
    pub assets: Vec<String>,
    pub returns: Matrix,
}

/// T×N nonnegative daily volatility proxies aligned with a [`ReturnPanel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyPanel {
    pub dates: Vec<String>,
    pub assets: Vec<String>,
    pub proxies: Matrix,
}

/// Result of loading a price file: the surviving panel and the assets that
/// were dropped for having incomplete histories.
#[derive(Debug, Clone)]
pub struct LoadedPrices {
    pub panel: PricePanel,
    pub dropped: Vec<String>,
}

impl PricePanel {
    pub fn n_days(&self) -> usize {
        self.prices.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.prices.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (t, n) = self.prices.shape();
        if self.dates.len() != t || self.assets.len() != n {
            return Err(Error::Dimension(format!(
                "price panel is {t}x{n} but has {} dates and {} assets",
                self.dates.len(),
                self.assets.len()
            )));
        }
        if let Some(v) = self.prices.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidInput(format!("non-positive price {v}")));
        }
        check_dates_increasing(&self.dates)
    }
}

impl ReturnPanel {
    pub fn new(dates: Vec<String>, assets: Vec<String>, returns: Matrix) -> Result<Self> {
        let (t, n) = returns.shape();
        if dates.len() != t || assets.len() != n {
            return Err(Error::Dimension(format!(
                "return panel is {t}x{n} but has {} dates and {} assets",
                dates.len(),
                assets.len()
            )));
        }
        if returns.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite return".into()));
        }
        Ok(Self {
            dates,
            assets,
            returns,
        })
    }

    pub fn n_days(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.returns.column(i).iter().copied().collect()
    }

    /// First `len` rows.
    pub fn head(&self, len: usize) -> ReturnPanel {
        ReturnPanel {
            dates: self.dates[..len].to_vec(),
            assets: self.assets.clone(),
            returns: self.returns.rows(0, len).into_owned(),
        }
    }

    /// Rows `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> ReturnPanel {
        ReturnPanel {
            dates: self.dates[start..end].to_vec(),
            assets: self.assets.clone(),
            returns: self.returns.rows(start, end - start).into_owned(),
        }
    }

    /// Rebuilds a price panel by cumulative exponentiation from `start`.
    /// The first price row carries a synthetic date label.
    pub fn to_prices(&self, start: f64) -> PricePanel {
        let (t, n) = self.returns.shape();
        let mut prices = Matrix::zeros(t + 1, n);
        for i in 0..n {
            let mut log_p = start.ln();
            prices[(0, i)] = start;
            for s in 0..t {
                log_p += self.returns[(s, i)];
                prices[(s + 1, i)] = log_p.exp();
            }
        }
        let mut dates = Vec::with_capacity(t + 1);
        dates.push(previous_label(self.dates.first().map(String::as_str)));
        dates.extend(self.dates.iter().cloned());
        PricePanel {
            dates,
            assets: self.assets.clone(),
            prices,
        }
    }

    /// SHA-256 over the raw return bits, asset ids and dates.
    pub fn data_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for a in &self.assets {
            h.update(a.as_bytes());
            h.update([0u8]);
        }
        for d in &self.dates {
            h.update(d.as_bytes());
            h.update([0u8]);
        }
        for v in self.returns.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn previous_label(first: Option<&str>) -> String {
    match first.and_then(parse_iso).and_then(|d| d.pred_opt()) {
        Some(day) => day.format(ISO).to_string(),
        None => "t0".to_string(),
    }
}

fn check_dates_increasing(dates: &[String]) -> Result<()> {
    let iso: Option<Vec<NaiveDate>> = dates.iter().map(|d| parse_iso(d)).collect();
    let ordered = match iso {
        Some(days) => days.windows(2).all(|w| w[0] < w[1]),
        None => {
            let ints: Option<Vec<i64>> = dates.iter().map(|d| d.trim().parse().ok()).collect();
            match ints {
                Some(v) => v.windows(2).all(|w| w[0] < w[1]),
                None => {
                    let mut seen = std::collections::HashSet::new();
                    dates.iter().all(|d| seen.insert(d))
                }
            }
        }
    };
    if ordered {
        Ok(())
    } else {
        Err(Error::InvalidInput("dates are not strictly increasing".into()))
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim().to_ascii_lowercase().as_str(),
        "" | "na" | "nan" | "null" | "n/a"
    )
}

/// Parses the price CSV (`date,asset1,...,assetN`). Assets with any missing
/// cell are dropped and listed in [`LoadedPrices::dropped`]; a non-positive or
/// non-numeric price is an error.
pub fn load_prices_csv(path: impl AsRef<Path>) -> Result<LoadedPrices> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_prices_csv(&text)
}

pub fn parse_prices_csv(text: &str) -> Result<LoadedPrices> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Parse(format!("price header: {e}")))?
        .clone();
    let assets: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if assets.is_empty() {
        return Err(Error::Parse("header has no asset columns".into()));
    }
    let n = assets.len();
    let mut dates = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("price row {}: {e}", k + 2)))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        dates.push(record[0].to_string());
        let mut row = Vec::with_capacity(n);
        for (j, cell) in record.iter().skip(1).enumerate() {
            if is_missing(cell) {
                row.push(None);
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::Parse(format!("row {}, asset {}: '{}'", k + 2, assets[j], cell)))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "row {}, asset {}: price {} is not strictly positive",
                    k + 2,
                    assets[j],
                    v
                )));
            }
            row.push(Some(v));
        }
        cells.push(row);
    }
    if cells.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 price rows, found {}",
            cells.len()
        )));
    }
    check_dates_increasing(&dates)?;
    let keep: Vec<usize> = (0..n)
        .filter(|&j| cells.iter().all(|row| row[j].is_some()))
        .collect();
    let dropped: Vec<String> = (0..n)
        .filter(|j| !keep.contains(j))
        .map(|j| assets[j].clone())
        .collect();
    if !dropped.is_empty() {
        log::warn!("dropping assets with incomplete histories: {}", dropped.join(", "));
    }
    if keep.is_empty() {
        return Err(Error::InvalidInput("no asset has a complete history".into()));
    }
    let prices = Matrix::from_fn(cells.len(), keep.len(), |t, k| {
        cells[t][keep[k]].expect("filtered")
    });
    Ok(LoadedPrices {
        panel: PricePanel {
            dates,
            assets: keep.iter().map(|&j| assets[j].clone()).collect(),
            prices,
        },
        dropped,
    })
}

pub fn format_prices_csv(panel: &PricePanel) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = std::iter::once("date").chain(panel.assets.iter().map(String::as_str));
    w.write_record(header).expect("in-memory write");
    for (t, d) in panel.dates.iter().enumerate() {
        // shortest round-trip representation
        let row = std::iter::once(d.clone()).chain((0..panel.n_assets()).map(|i| panel.prices[(t, i)].to_string()));
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

pub fn write_prices_csv(panel: &PricePanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_prices_csv(panel)).map_err(|e| Error::io(path, e))
}

/// y_t = log(P_t / P_{t-1}); the output has one row fewer than the input.
pub fn to_log_returns(prices: &PricePanel) -> Result<ReturnPanel> {
    let (t, n) = prices.prices.shape();
    if t < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 price rows for returns, found {t}"
        )));
    }
    let returns = Matrix::from_fn(t - 1, n, |s, i| {
        prices.prices[(s + 1, i)].ln() - prices.prices[(s, i)].ln()
    });
    ReturnPanel::new(prices.dates[1..].to_vec(), prices.assets.clone(), returns)
}

/// d_{i,t} = |y_{i,t}|.
pub fn volatility_proxy(returns: &ReturnPanel) -> ProxyPanel {
    ProxyPanel {
        dates: returns.dates.clone(),
        assets: returns.assets.clone(),
        proxies: returns.returns.map(f64::abs),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub n_assets: usize,
    pub n_days: usize,
    pub garch: Vec<GarchParams>,
    pub dcc: DccParams,
    /// Row-major N×N target correlation.
    pub rbar: Vec<f64>,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn rbar_matrix(&self) -> Matrix {
        Matrix::from_row_slice(self.n_assets, self.n_assets, &self.rbar)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_assets;
        if n == 0 || self.n_days == 0 {
            return Err(Error::InvalidInput("simulation needs N ≥ 1 and T ≥ 1".into()));
        }
        if self.garch.len() != n || self.rbar.len() != n * n {
            return Err(Error::Dimension(format!(
                "spec for {n} assets has {} GARCH triples and {} correlation cells",
                self.garch.len(),
                self.rbar.len()
            )));
        }
        for p in &self.garch {
            p.validate()?;
        }
        self.dcc.validate()?;
        let rbar = self.rbar_matrix();
        if linalg::max_asymmetry(&rbar) > 1e-12 {
            return Err(Error::InvalidInput("target correlation is not symmetric".into()));
        }
        if (0..n).any(|i| (rbar[(i, i)] - 1.0).abs() > 1e-12) {
            return Err(Error::InvalidInput("target correlation needs a unit diagonal".into()));
        }
        linalg::cholesky_lower(&rbar)?;
        Ok(())
    }

    /// A heterogeneous desk-scale spec: per-asset variance levels spread over a
    /// decade, persistence near 0.97, and a one-factor target correlation.
    pub fn heterogeneous(n_assets: usize, n_days: usize, dcc: DccParams, seed: u64) -> Self {
        use rand::Rng;
        let mut r = rng::seeded(rng::derive_seed(seed, 0x5eed));
        let garch = (0..n_assets)
            .map(|_| {
                let daily_vol: f64 = 0.008 * 10f64.powf(r.random_range(0.0..1.0));
                let alpha: f64 = r.random_range(0.04..0.10);
                let beta: f64 = r.random_range(0.86..0.94);
                let beta = beta.min(0.985 - alpha);
                GarchParams {
                    omega: daily_vol * daily_vol * (1.0 - alpha - beta),
                    alpha,
                    beta,
                }
            })
            .collect();
        let loadings: Vec<f64> = (0..n_assets).map(|_| r.random_range(0.2..0.8)).collect();
        let mut rbar = vec![0.0; n_assets * n_assets];
        for i in 0..n_assets {
            for j in 0..n_assets {
                rbar[i * n_assets + j] = if i == j { 1.0 } else { loadings[i] * loadings[j] };
            }
        }
        Self {
            n_assets,
            n_days,
            garch,
            dcc,
            rbar,
            seed,
        }
    }
}

/// Simulated panel together with the latent paths that generated it.
#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub returns: ReturnPanel,
    /// T×N conditional variances σ²_{i,t}.
    pub sigma2: Matrix,
    /// T×N standardized shocks s_t = D_t^{-1} y_t.
    pub std_residuals: Matrix,
    /// R_t per day.
    pub correlations: Vec<Matrix>,
    /// H_t = D_t R_t D_t per day.
    pub covariances: Vec<Matrix>,
}

/// Forward-simulates the DCC-GARCH process. The variance recursion starts at
/// each asset's unconditional variance and Q_0 = R̄.
pub fn simulate_dcc_garch(spec: &SimulationSpec) -> Result<SimulationOutput> {
    spec.validate()?;
    let n = spec.n_assets;
    let t_len = spec.n_days;
    let rbar = spec.rbar_matrix();
    let (a, b) = (spec.dcc.alpha, spec.dcc.beta);
    let mut rng = rng::seeded(spec.seed);

    let mut sigma2 = Matrix::zeros(t_len, n);
    let mut returns = Matrix::zeros(t_len, n);
    let mut std_res = Matrix::zeros(t_len, n);
    let mut correlations = Vec::with_capacity(t_len);
    let mut covariances = Vec::with_capacity(t_len);

    let mut var: Vec<f64> = spec
        .garch
        .iter()
        .map(|p| p.unconditional_variance())
        .collect::<Result<_>>()?;
    let mut q = rbar.clone();
    let mut s_prev = vec![0.0; n];
    let mut z = vec![0.0; n];
    for t in 0..t_len {
        if t > 0 {
            for i in 0..n {
                let p = &spec.garch[i];
                var[i] = p.omega + p.alpha * returns[(t - 1, i)].powi(2) + p.beta * var[i];
            }
            for i in 0..n {
                for j in 0..n {
                    q[(i, j)] = (1.0 - a - b) * rbar[(i, j)] + a * s_prev[i] * s_prev[j] + b * q[(i, j)];
                }
            }
        }
        let r = linalg::normalize_correlation(&q);
        let l = linalg::cholesky_lower(&r)?;
        for zi in z.iter_mut() {
            *zi = rng::standard_normal(&mut rng);
        }
        for i in 0..n {
            let s: f64 = (0..=i).map(|k| l[(i, k)] * z[k]).sum();
            s_prev[i] = s;
            std_res[(t, i)] = s;
            sigma2[(t, i)] = var[i];
            returns[(t, i)] = var[i].sqrt() * s;
        }
        let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
        let h = Matrix::from_fn(n, n, |i, j| sd[i] * sd[j] * r[(i, j)]);
        correlations.push(r);
        covariances.push(h);
    }
    let assets = (0..n).map(|i| format!("A{:03}", i + 1)).collect();
    let dates = business_days(t_len);
    Ok(SimulationOutput {
        returns: ReturnPanel::new(dates, assets, returns)?,
        sigma2,
        std_residuals: std_res,
        correlations,
        covariances,
    })
}

/// Weekday calendar starting Tuesday 2000-01-04.
pub fn business_days(count: usize) -> Vec<String> {
    let mut day = NaiveDate::from_ymd_opt(2000, 1, 4).expect("valid literal");
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if day.weekday().num_days_from_monday() < 5 {
            out.push(day.format(ISO).to_string());
        }
        day = day.succ_opt().expect("calendar within range");
    }
    out
}

const ISO: &str = "%Y-%m-%d";

fn parse_iso(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), ISO).ok()
}
