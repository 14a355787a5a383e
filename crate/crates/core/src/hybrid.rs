//! Pooled GARCH-LSTM volatility forecaster and covariance assembly.
//!
//! Each asset contributes windows of hybrid feature vectors
//! X_{i,t} = (d_{i,t}, α_i ε²_{i,t}, β_i σ²_{i,t}) (or the proxy alone) and the
//! next day's proxy as target. One network with shared parameters is trained
//! on all assets at once, optionally told which asset it is looking at through
//! a one-hot vector concatenated after the LSTM layer.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::garch::GarchFit;
use crate::linalg::{self, Matrix};
use crate::market_data::ProxyPanel;
use crate::neural::{self, Dataset, Network, NetworkConfig, Sample, TrainReport, TrainingConfig};

/// Smallest volatility a forecast may report.
pub const VOL_FLOOR: f64 = 1e-5;
const SCALE_LOW: f64 = 0.05;
const SCALE_HIGH: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelVariant {
    pub use_garch_features: bool,
    pub use_one_hot: bool,
}

impl ModelVariant {
    pub const LSTM_DCC: Self = Self { use_garch_features: false, use_one_hot: false };
    pub const G_LSTM_DCC: Self = Self { use_garch_features: true, use_one_hot: false };
    pub const LSTM_DCC_OH: Self = Self { use_garch_features: false, use_one_hot: true };
    pub const G_LSTM_DCC_OH: Self = Self { use_garch_features: true, use_one_hot: true };
    pub const ALL: [Self; 4] = [Self::LSTM_DCC_OH, Self::G_LSTM_DCC_OH, Self::LSTM_DCC, Self::G_LSTM_DCC];

    pub fn label(&self) -> &'static str {
        match (self.use_garch_features, self.use_one_hot) {
            (false, false) => "LSTM-DCC",
            (true, false) => "G-LSTM-DCC",
            (false, true) => "LSTM-DCC-OH",
            (true, true) => "G-LSTM-DCC-OH",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.label().eq_ignore_ascii_case(label.trim()))
    }

    /// 3 with GARCH features, 1 without.
    pub fn feature_width(&self) -> usize {
        if self.use_garch_features {
            3
        } else {
            1
        }
    }
}

impl Serialize for ModelVariant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for ModelVariant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::from_label(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown model variant '{s}'")))
    }
}

/// Components of one hybrid feature vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridFeature {
    pub proxy: f64,
    pub arch_term: f64,
    pub garch_term: f64,
}

/// Per-asset feature rows, T×width row-major for each asset.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridFeatures {
    pub width: usize,
    pub n_days: usize,
    pub per_asset: Vec<Vec<f64>>,
}

impl HybridFeatures {
    pub fn n_assets(&self) -> usize {
        self.per_asset.len()
    }

    pub fn row(&self, asset: usize, day: usize) -> &[f64] {
        &self.per_asset[asset][day * self.width..(day + 1) * self.width]
    }
}

/// Builds (d, α ε², β σ²) per asset and day, or (d) alone without GARCH
/// features. ε is the day's return and σ² its filtered conditional variance.
pub fn build_hybrid_features(proxies: &ProxyPanel, fits: &[GarchFit], variant: ModelVariant) -> Result<HybridFeatures> {
    let (t, n) = proxies.proxies.shape();
    if fits.len() != n {
        return Err(Error::Dimension(format!("{} GARCH fits for {n} assets", fits.len())));
    }
    if let Some(f) = fits.iter().find(|f| f.sigma2_path.len() != t || f.residuals.len() != t) {
        return Err(Error::Dimension(format!(
            "GARCH path of length {} does not match {t} proxy rows",
            f.sigma2_path.len()
        )));
    }
    let width = variant.feature_width();
    let per_asset = (0..n)
        .map(|i| {
            let fit = &fits[i];
            let mut rows = Vec::with_capacity(t * width);
            for day in 0..t {
                rows.push(proxies.proxies[(day, i)]);
                if variant.use_garch_features {
                    let eps = fit.residuals[day];
                    rows.push(fit.params.alpha * eps * eps);
                    rows.push(fit.params.beta * fit.sigma2_path[day]);
                }
            }
            rows
        })
        .collect();
    Ok(HybridFeatures {
        width,
        n_days: t,
        per_asset,
    })
}

/// Min-max scaling onto [0.05, 0.95], one range per input channel and one for
/// the target, fitted over all assets pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub feature_min: Vec<f64>,
    pub feature_max: Vec<f64>,
    pub target_min: f64,
    pub target_max: f64,
}

#[inline]
fn forward_map(x: f64, lo: f64, hi: f64) -> f64 {
    SCALE_LOW + (SCALE_HIGH - SCALE_LOW) * (x - lo) / (hi - lo)
}

#[inline]
fn inverse_map(y: f64, lo: f64, hi: f64) -> f64 {
    lo + (y - SCALE_LOW) * (hi - lo) / (SCALE_HIGH - SCALE_LOW)
}

impl ScalerState {
    pub fn scale_feature(&self, channel: usize, x: f64) -> f64 {
        forward_map(x, self.feature_min[channel], self.feature_max[channel])
    }

    pub fn unscale_feature(&self, channel: usize, y: f64) -> f64 {
        inverse_map(y, self.feature_min[channel], self.feature_max[channel])
    }

    pub fn scale_target(&self, x: f64) -> f64 {
        forward_map(x, self.target_min, self.target_max)
    }

    pub fn unscale_target(&self, y: f64) -> f64 {
        inverse_map(y, self.target_min, self.target_max)
    }

    /// Scales a τ×width block of raw feature rows.
    pub fn scale_rows(&self, rows: &[f64]) -> Vec<f64> {
        let w = self.feature_min.len();
        rows.iter()
            .enumerate()
            .map(|(k, x)| self.scale_feature(k % w, *x))
            .collect()
    }
}

/// Fits channel ranges over days `[0, n_days)` of every asset. Targets are the
/// proxies over the same days.
pub fn fit_scaler(features: &HybridFeatures, proxies: &ProxyPanel, n_days: usize) -> Result<ScalerState> {
    let w = features.width;
    let mut fmin = vec![f64::INFINITY; w];
    let mut fmax = vec![f64::NEG_INFINITY; w];
    for rows in &features.per_asset {
        for (k, x) in rows[..n_days * w].iter().enumerate() {
            fmin[k % w] = fmin[k % w].min(*x);
            fmax[k % w] = fmax[k % w].max(*x);
        }
    }
    let mut tmin = f64::INFINITY;
    let mut tmax = f64::NEG_INFINITY;
    for i in 0..proxies.proxies.ncols() {
        for day in 0..n_days {
            let v = proxies.proxies[(day, i)];
            tmin = tmin.min(v);
            tmax = tmax.max(v);
        }
    }
    if let Some(c) = (0..w).find(|&c| !(fmax[c] > fmin[c])) {
        return Err(Error::InvalidInput(format!("feature channel {c} is constant; cannot scale")));
    }
    if !(tmax > tmin) {
        return Err(Error::InvalidInput("target channel is constant; cannot scale".into()));
    }
    Ok(ScalerState {
        feature_min: fmin,
        feature_max: fmax,
        target_min: tmin,
        target_max: tmax,
    })
}

/// One materialized training example.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub asset_index: usize,
    /// Day index of the target; the sequence covers days [target_day − τ, target_day).
    pub target_day: usize,
    pub sequence: Vec<f64>,
    pub one_hot: Option<Vec<f64>>,
    pub target: f64,
}

#[derive(Debug)]
struct ScaledData {
    width: usize,
    features: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    one_hots: Option<Vec<f64>>,
    n_assets: usize,
}

/// Pooled training set over all assets. Examples reference windows of the
/// shared scaled data rather than copying them.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    data: Arc<ScaledData>,
    pub tau: usize,
    pub variant: ModelVariant,
    /// (asset, target day)
    pub index: Vec<(usize, usize)>,
}

impl TrainingSet {
    pub fn width(&self) -> usize {
        self.data.width
    }

    pub fn example(&self, k: usize) -> TrainingExample {
        let s = self.sample(k);
        let (asset_index, target_day) = self.index[k];
        TrainingExample {
            asset_index,
            target_day,
            sequence: s.sequence.to_vec(),
            one_hot: s.one_hot.map(<[f64]>::to_vec),
            target: s.target,
        }
    }

    /// Holds out the last `fraction` of target days of every asset.
    pub fn split_tail(&self, fraction: f64) -> (TrainingSet, TrainingSet) {
        let last_day = self.index.iter().map(|e| e.1).max().unwrap_or(0);
        let first_day = self.index.iter().map(|e| e.1).min().unwrap_or(0);
        let span = last_day + 1 - first_day;
        let held = ((span as f64) * fraction).round() as usize;
        let cut = last_day + 1 - held;
        let (train, val): (Vec<_>, Vec<_>) = self.index.iter().partition(|e| e.1 < cut);
        (
            TrainingSet { index: train, ..self.clone() },
            TrainingSet { index: val, ..self.clone() },
        )
    }

    /// Writes the scaled columns to a binary cache file named by
    /// (data hash, τ, variant) under `dir`; returns the file path.
    pub fn write_cache(&self, dir: impl AsRef<Path>, data_hash: &str) -> Result<std::path::PathBuf> {
        let path = dir.as_ref().join(cache_file_name(data_hash, self.tau, self.variant));
        let mut buf = Vec::new();
        buf.extend_from_slice(b"CVCTS001");
        for v in [self.data.width, self.data.n_assets, self.tau, self.index.len()] {
            buf.extend_from_slice(&(v as u64).to_le_bytes());
        }
        buf.push(self.variant.use_garch_features as u8);
        buf.push(self.variant.use_one_hot as u8);
        let days = self.data.targets.first().map_or(0, Vec::len);
        buf.extend_from_slice(&(days as u64).to_le_bytes());
        for col in self.data.features.iter().chain(&self.data.targets) {
            for v in col {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        for &(a, d) in &self.index {
            buf.extend_from_slice(&(a as u64).to_le_bytes());
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read_cache(path: impl AsRef<Path>) -> Result<TrainingSet> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(8)? != b"CVCTS001" {
            return Err(Error::Parse("not a training-set cache".into()));
        }
        let width = cur.u64()? as usize;
        let n_assets = cur.u64()? as usize;
        let tau = cur.u64()? as usize;
        let count = cur.u64()? as usize;
        let flags = cur.take(2)?;
        let variant = ModelVariant {
            use_garch_features: flags[0] == 1,
            use_one_hot: flags[1] == 1,
        };
        let days = cur.u64()? as usize;
        let features = (0..n_assets)
            .map(|_| (0..days * width).map(|_| cur.f64()).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let targets = (0..n_assets)
            .map(|_| (0..days).map(|_| cur.f64()).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let index = (0..count)
            .map(|_| Ok((cur.u64()? as usize, cur.u64()? as usize)))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainingSet {
            data: Arc::new(ScaledData {
                width,
                features,
                targets,
                one_hots: variant.use_one_hot.then(|| identity_rows(n_assets)),
                n_assets,
            }),
            tau,
            variant,
            index,
        })
    }
}

pub fn cache_file_name(data_hash: &str, tau: usize, variant: ModelVariant) -> String {
    let short = &data_hash[..data_hash.len().min(16)];
    format!("trainset_{short}_tau{tau}_{}.bin", variant.label())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Parse("truncated training-set cache".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn identity_rows(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    v
}

impl Dataset for TrainingSet {
    fn len(&self) -> usize {
        self.index.len()
    }

    fn sample(&self, k: usize) -> Sample<'_> {
        let (asset, day) = self.index[k];
        let w = self.data.width;
        let n = self.data.n_assets;
        Sample {
            sequence: &self.data.features[asset][(day - self.tau) * w..day * w],
            one_hot: self.data.one_hots.as_ref().map(|v| &v[asset * n..(asset + 1) * n]),
            target: self.data.targets[asset][day],
        }
    }
}

/// N·(T − τ) examples: for every asset and every target day t ≥ τ, the
/// scaled feature rows t−τ … t−1 and the scaled proxy of day t.
pub fn build_training_set(
    features: &HybridFeatures,
    proxies: &ProxyPanel,
    scaler: &ScalerState,
    tau: usize,
    variant: ModelVariant,
) -> Result<TrainingSet> {
    let (t, n) = proxies.proxies.shape();
    if tau == 0 || t <= tau {
        return Err(Error::InvalidInput(format!(
            "need more than τ = {tau} days to build examples, have {t}"
        )));
    }
    if features.n_days != t || features.n_assets() != n || features.width != variant.feature_width() {
        return Err(Error::Dimension("features do not match proxies or variant".into()));
    }
    let scaled_features = features
        .per_asset
        .iter()
        .map(|rows| scaler.scale_rows(rows))
        .collect();
    let targets = (0..n)
        .map(|i| (0..t).map(|day| scaler.scale_target(proxies.proxies[(day, i)])).collect())
        .collect();
    let index = (0..n)
        .flat_map(|i| (tau..t).map(move |day| (i, day)))
        .collect();
    Ok(TrainingSet {
        data: Arc::new(ScaledData {
            width: features.width,
            features: scaled_features,
            targets,
            one_hots: variant.use_one_hot.then(|| identity_rows(n)),
            n_assets: n,
        }),
        tau,
        variant,
        index,
    })
}

/// Trained network with everything needed to turn raw features into
/// volatility forecasts.
#[derive(Debug, Clone)]
pub struct HybridForecaster {
    pub network: Network,
    pub scaler: ScalerState,
    pub variant: ModelVariant,
    pub tau: usize,
}

/// Scaler and network state written next to each other.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecasterDocument {
    pub variant: ModelVariant,
    pub tau: usize,
    pub scaler: ScalerState,
    pub network: neural::NetworkDocument,
}

impl HybridForecaster {
    /// Fits the scaler on the whole window, builds the pooled set, holds out
    /// the most recent `validation_fraction` of days and trains.
    pub fn train(
        proxies: &ProxyPanel,
        fits: &[GarchFit],
        variant: ModelVariant,
        tau: usize,
        mut net_config: NetworkConfig,
        train_config: &TrainingConfig,
    ) -> Result<(Self, TrainReport)> {
        let features = build_hybrid_features(proxies, fits, variant)?;
        let scaler = fit_scaler(&features, proxies, features.n_days)?;
        let set = build_training_set(&features, proxies, &scaler, tau, variant)?;
        net_config.input_width = variant.feature_width();
        net_config.one_hot_width = if variant.use_one_hot { proxies.proxies.ncols() } else { 0 };
        if !train_config.dropout {
            net_config.lstm_dropout = 0.0;
            net_config.dense_dropout = 0.0;
        }
        let mut network = Network::new(net_config)?;
        let report = if train_config.validation_fraction > 0.0 {
            let (train_part, val_part) = set.split_tail(train_config.validation_fraction);
            neural::train(&mut network, &train_part, Some(&val_part), train_config)?
        } else {
            neural::train(&mut network, &set, None, train_config)?
        };
        Ok((
            Self {
                network,
                scaler,
                variant,
                tau,
            },
            report,
        ))
    }

    /// Volatility forecasts for the day after `features` ends.
    pub fn predict(&self, features: &HybridFeatures) -> Result<Vec<f64>> {
        predict_volatility_vector(&self.network, features, &self.scaler, self.variant, self.tau)
    }

    pub fn to_document(&self) -> ForecasterDocument {
        ForecasterDocument {
            variant: self.variant,
            tau: self.tau,
            scaler: self.scaler.clone(),
            network: self.network.to_document(),
        }
    }

    pub fn from_document(doc: &ForecasterDocument) -> Result<Self> {
        Ok(Self {
            network: Network::from_document(&doc.network)?,
            scaler: doc.scaler.clone(),
            variant: doc.variant,
            tau: doc.tau,
        })
    }
}

/// Per-asset one-step volatility forecast from the last τ feature rows, with
/// shared network parameters; predictions are clamped to (0,1) before
/// unscaling and floored at [`VOL_FLOOR`].
pub fn predict_volatility_vector(
    net: &Network,
    features: &HybridFeatures,
    scaler: &ScalerState,
    variant: ModelVariant,
    tau: usize,
) -> Result<Vec<f64>> {
    let t = features.n_days;
    if t < tau {
        return Err(Error::InvalidInput(format!(
            "need {tau} trailing feature rows, have {t}"
        )));
    }
    let n = features.n_assets();
    let w = features.width;
    let eye = identity_rows(n);
    (0..n)
        .map(|i| {
            let window = scaler.scale_rows(&features.per_asset[i][(t - tau) * w..t * w]);
            let one_hot = variant.use_one_hot.then(|| &eye[i * n..(i + 1) * n]);
            let y = net.predict(&window, one_hot)?;
            let y = y.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
            Ok(scaler.unscale_target(y).max(VOL_FLOOR))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceForecast {
    pub matrix: Matrix,
    pub as_of_date: String,
    /// Set when eigenvalue clipping was needed.
    pub repaired: bool,
}

/// Ĥ = D̂ R̂ D̂, with eigenvalues clipped at 1e−10·max when the result is not
/// positive definite.
pub fn assemble_covariance(vols: &[f64], corr: &Matrix, as_of_date: &str) -> Result<CovarianceForecast> {
    let n = vols.len();
    if corr.shape() != (n, n) {
        return Err(Error::Dimension(format!("{n} volatilities for a {:?} correlation", corr.shape())));
    }
    if let Some(v) = vols.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidInput(format!("volatility {v} is not positive")));
    }
    let h = Matrix::from_fn(n, n, |i, j| vols[i] * vols[j] * corr[(i, j)]);
    let (matrix, repaired) = if linalg::cholesky_lower(&h).is_ok() {
        (h, false)
    } else {
        linalg::repair_positive_definite(&h, 1e-10)
    };
    Ok(CovarianceForecast {
        matrix,
        as_of_date: as_of_date.to_string(),
        repaired,
    })
}
