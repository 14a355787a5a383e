use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{dense_forward, lstm_backward, lstm_forward, Activation, DenseLayer, LstmLayer, LstmTrace};
use crate::error::{Error, Result};
use crate::rng;

pub const NETWORK_FORMAT_VERSION: u32 = 1;

/// Architecture and regularization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_width: usize,
    pub lstm_hidden: usize,
    /// Widths of the hidden dense layers; a 1-unit sigmoid output layer is appended.
    pub dense_widths: Vec<usize>,
    /// Width of the one-hot vector concatenated after the LSTM; 0 disables it.
    pub one_hot_width: usize,
    pub lstm_dropout: f64,
    pub dense_dropout: f64,
    pub hidden_activation: Activation,
    pub seed: u64,
}

impl NetworkConfig {
    /// LSTM(100, dropout 0.4) → [one-hot] → 350/300/250/200 sigmoid
    /// (dropout 0.5 each) → 1 sigmoid.
    pub fn reference(input_width: usize, one_hot_width: usize, seed: u64) -> Self {
        Self {
            input_width,
            lstm_hidden: 100,
            dense_widths: vec![350, 300, 250, 200],
            one_hot_width,
            lstm_dropout: 0.4,
            dense_dropout: 0.5,
            hidden_activation: Activation::Sigmoid,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.lstm_hidden == 0 || self.dense_widths.contains(&0) {
            return Err(Error::InvalidInput("network layer widths must be positive".into()));
        }
        for r in [self.lstm_dropout, self.dense_dropout] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::InvalidInput(format!("dropout rate {r} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub lstm: LstmLayer,
    /// Hidden layers followed by the scalar sigmoid output layer.
    pub dense: Vec<DenseLayer>,
}

/// Gradient of the loss for every parameter, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub lstm: LstmLayer,
    pub dense: Vec<DenseLayer>,
}

/// Activations recorded by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub sequence: Vec<f64>,
    pub lstm: LstmTrace,
    /// Scaled dropout masks (mask/(1−rate)); index 0 is the LSTM output,
    /// index l+1 the output of hidden dense layer l.
    pub masks: Vec<Option<Vec<f64>>>,
    /// Inputs to each dense layer.
    pub dense_inputs: Vec<Vec<f64>>,
    /// Post-activation outputs of each dense layer, before dropout.
    pub dense_outputs: Vec<Vec<f64>>,
    pub prediction: f64,
    /// Parameter-version stamp of the network that produced the cache.
    pub stamp: u64,
}

fn glorot(r: &mut rng::SeededRng, data: &mut [f64], fan_in: usize, fan_out: usize) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in data {
        *v = r.random_range(-limit..limit);
    }
}

impl Network {
    /// Glorot-uniform kernels, zero biases except a forget-gate bias of 1.
    pub fn new(config: NetworkConfig) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut r = rng::seeded(net.config.seed);
        let (w, h) = (net.config.input_width, net.config.lstm_hidden);
        for g in 0..4 {
            glorot(&mut r, &mut net.lstm.input_kernels[g].data, w, h);
            glorot(&mut r, &mut net.lstm.recurrent_kernels[g].data, h, h);
        }
        net.lstm.biases[2].iter_mut().for_each(|b| *b = 1.0);
        for layer in &mut net.dense {
            let (i, o) = (layer.input_width(), layer.output_width());
            glorot(&mut r, &mut layer.weights.data, i, o);
        }
        Ok(net)
    }

    /// All parameters zero.
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let lstm = LstmLayer::zeros(config.input_width, config.lstm_hidden);
        let mut dense = Vec::with_capacity(config.dense_widths.len() + 1);
        let mut prev = config.lstm_hidden + config.one_hot_width;
        for &w in &config.dense_widths {
            dense.push(DenseLayer::zeros(prev, w, config.hidden_activation));
            prev = w;
        }
        dense.push(DenseLayer::zeros(prev, 1, Activation::Sigmoid));
        Ok(Self { config, lstm, dense })
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            lstm: LstmLayer::zeros(self.lstm.input_width, self.lstm.hidden),
            dense: self
                .dense
                .iter()
                .map(|l| DenseLayer::zeros(l.input_width(), l.output_width(), l.activation))
                .collect(),
        }
    }

    pub fn uses_one_hot(&self) -> bool {
        self.config.one_hot_width > 0
    }

    fn check_inputs(&self, sequence: &[f64], one_hot: Option<&[f64]>) -> Result<()> {
        let w = self.config.input_width;
        if sequence.is_empty() || !sequence.len().is_multiple_of(w) {
            return Err(Error::Dimension(format!(
                "sequence length {} is not a positive multiple of input width {w}",
                sequence.len()
            )));
        }
        match (one_hot, self.config.one_hot_width) {
            (Some(_), 0) => Err(Error::InvalidInput(
                "one-hot vector supplied to a network built without a one-hot slot".into(),
            )),
            (None, k) if k > 0 => Err(Error::InvalidInput(format!(
                "network expects a one-hot vector of width {k}"
            ))),
            (Some(v), k) if v.len() != k => Err(Error::Dimension(format!(
                "one-hot width {} != {k}",
                v.len()
            ))),
            _ => Ok(()),
        }
    }

    /// Inference pass (no dropout).
    pub fn predict(&self, sequence: &[f64], one_hot: Option<&[f64]>) -> Result<f64> {
        self.check_inputs(sequence, one_hot)?;
        let h = self.config.lstm_hidden;
        let zeros = vec![0.0; h];
        let trace = lstm_forward(&self.lstm, sequence, &zeros, &zeros)?;
        let mut x = trace.last_hidden().to_vec();
        if let Some(oh) = one_hot {
            x.extend_from_slice(oh);
        }
        for layer in &self.dense {
            x = dense_forward(layer, &x)?;
        }
        Ok(x[0])
    }

    /// Training-mode pass that records everything [`Network::backward`]
    /// needs. Dropout masks are drawn from `dropout_rng` when given; without
    /// it the pass is deterministic and equals [`Network::predict`].
    pub fn forward_train(
        &self,
        sequence: &[f64],
        one_hot: Option<&[f64]>,
        mut dropout_rng: Option<&mut rng::SeededRng>,
    ) -> Result<ForwardCache> {
        self.check_inputs(sequence, one_hot)?;
        let h = self.config.lstm_hidden;
        let zeros = vec![0.0; h];
        let trace = lstm_forward(&self.lstm, sequence, &zeros, &zeros)?;
        let n_hidden = self.dense.len() - 1;
        let mut masks = Vec::with_capacity(n_hidden + 1);
        let draw = |width: usize, rate: f64, rng: &mut Option<&mut rng::SeededRng>| {
            match rng.as_deref_mut() {
                Some(r) if rate > 0.0 => {
                    let keep = 1.0 / (1.0 - rate);
                    Some(
                        (0..width)
                            .map(|_| if r.random::<f64>() < rate { 0.0 } else { keep })
                            .collect::<Vec<f64>>(),
                    )
                }
                _ => None,
            }
        };
        let mut x = trace.last_hidden().to_vec();
        let m0 = draw(h, self.config.lstm_dropout, &mut dropout_rng);
        if let Some(m) = &m0 {
            x.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
        }
        masks.push(m0);
        if let Some(oh) = one_hot {
            x.extend_from_slice(oh);
        }
        let mut dense_inputs = Vec::with_capacity(self.dense.len());
        let mut dense_outputs = Vec::with_capacity(self.dense.len());
        for (l, layer) in self.dense.iter().enumerate() {
            let out = dense_forward(layer, &x)?;
            dense_inputs.push(std::mem::take(&mut x));
            x = out.clone();
            if l < n_hidden {
                let m = draw(out.len(), self.config.dense_dropout, &mut dropout_rng);
                if let Some(m) = &m {
                    x.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
                }
                masks.push(m);
            }
            dense_outputs.push(out);
        }
        Ok(ForwardCache {
            sequence: sequence.to_vec(),
            lstm: trace,
            masks,
            dense_inputs,
            prediction: x[0],
            dense_outputs,
            stamp: self.stamp(),
        })
    }

    /// Cheap fingerprint of the parameters, used to detect stale caches.
    pub fn stamp(&self) -> u64 {
        let mut acc: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: f64| {
            acc ^= v.to_bits();
            acc = acc.wrapping_mul(0x0100_0000_01b3);
        };
        for layer in &self.dense {
            layer.weights.data.iter().step_by(7).for_each(|v| mix(*v));
            layer.biases.iter().for_each(|v| mix(*v));
        }
        for g in 0..4 {
            self.lstm.input_kernels[g].data.iter().step_by(3).for_each(|v| mix(*v));
            self.lstm.biases[g].iter().for_each(|v| mix(*v));
        }
        acc
    }

    /// Gradients of ½(ŷ − target)² added into `grad`.
    pub fn backward(&self, cache: &ForwardCache, target: f64, grad: &mut Gradients) -> Result<()> {
        if cache.stamp != self.stamp() {
            return Err(Error::InvalidInput(
                "forward cache is stale: parameters changed since the forward pass".into(),
            ));
        }
        let mut delta = vec![cache.prediction - target];
        let n_hidden = self.dense.len() - 1;
        for l in (0..self.dense.len()).rev() {
            let layer = &self.dense[l];
            let out = &cache.dense_outputs[l];
            if l < n_hidden {
                if let Some(m) = &cache.masks[l + 1] {
                    delta.iter_mut().zip(m).for_each(|(d, k)| *d *= k);
                }
            }
            let dz: Vec<f64> = delta
                .iter()
                .zip(out)
                .map(|(d, y)| d * layer.activation.derivative_from_output(*y))
                .collect();
            let g = &mut grad.dense[l];
            g.weights.add_outer(&dz, &cache.dense_inputs[l]);
            g.biases.iter_mut().zip(&dz).for_each(|(b, d)| *b += d);
            let mut d_in = vec![0.0; layer.input_width()];
            layer.weights.tr_mul_add(&dz, &mut d_in);
            delta = d_in;
        }
        let h = self.config.lstm_hidden;
        let mut d_hidden = delta[..h].to_vec();
        if let Some(m) = &cache.masks[0] {
            d_hidden.iter_mut().zip(m).for_each(|(d, k)| *d *= k);
        }
        lstm_backward(&self.lstm, &cache.sequence, &cache.lstm, &d_hidden, &mut grad.lstm);
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        visit(&self.lstm, &self.dense, |s| n += s.len());
        n
    }

    /// Parameters in canonical order: LSTM input kernels, recurrent kernels,
    /// biases (each in gate order), then each dense layer's weights and biases.
    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        visit(&self.lstm, &self.dense, |s| out.extend_from_slice(s));
        out
    }

    pub fn set_flat_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                values.len()
            )));
        }
        let mut offset = 0;
        visit_mut(&mut self.lstm, &mut self.dense, |s| {
            s.copy_from_slice(&values[offset..offset + s.len()]);
            offset += s.len();
        });
        Ok(())
    }

    pub(crate) fn visit_params_mut(&mut self, f: impl FnMut(&mut [f64])) {
        visit_mut(&mut self.lstm, &mut self.dense, f);
    }

    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            format_version: NETWORK_FORMAT_VERSION,
            config: self.config.clone(),
            shapes: self.shape_manifest(),
            parameters: self.flat_parameters(),
        }
    }

    pub fn from_document(doc: &NetworkDocument) -> Result<Self> {
        if doc.format_version != NETWORK_FORMAT_VERSION {
            return Err(Error::Serde(format!(
                "unsupported network format version {}",
                doc.format_version
            )));
        }
        let mut net = Self::zeros(doc.config.clone())?;
        if net.shape_manifest() != doc.shapes {
            return Err(Error::Serde("shape manifest does not match configuration".into()));
        }
        net.set_flat_parameters(&doc.parameters)?;
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(text)?)
    }

    fn shape_manifest(&self) -> Vec<(String, Vec<usize>)> {
        let mut shapes = Vec::new();
        let names = super::layers::GATES;
        for (g, name) in names.iter().enumerate() {
            let k = &self.lstm.input_kernels[g];
            shapes.push((format!("lstm.input.{name}"), vec![k.rows, k.cols]));
        }
        for (g, name) in names.iter().enumerate() {
            let k = &self.lstm.recurrent_kernels[g];
            shapes.push((format!("lstm.recurrent.{name}"), vec![k.rows, k.cols]));
        }
        for name in names {
            shapes.push((format!("lstm.bias.{name}"), vec![self.lstm.hidden]));
        }
        for (l, layer) in self.dense.iter().enumerate() {
            shapes.push((format!("dense{l}.weights"), vec![layer.weights.rows, layer.weights.cols]));
            shapes.push((format!("dense{l}.bias"), vec![layer.biases.len()]));
        }
        shapes
    }
}

/// Serialized network: configuration, shape manifest and flat parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub format_version: u32,
    pub config: NetworkConfig,
    pub shapes: Vec<(String, Vec<usize>)>,
    pub parameters: Vec<f64>,
}

fn visit(lstm: &LstmLayer, dense: &[DenseLayer], mut f: impl FnMut(&[f64])) {
    lstm.input_kernels.iter().for_each(|k| f(&k.data));
    lstm.recurrent_kernels.iter().for_each(|k| f(&k.data));
    lstm.biases.iter().for_each(|b| f(b));
    for layer in dense {
        f(&layer.weights.data);
        f(&layer.biases);
    }
}

fn visit_mut(lstm: &mut LstmLayer, dense: &mut [DenseLayer], mut f: impl FnMut(&mut [f64])) {
    lstm.input_kernels.iter_mut().for_each(|k| f(&mut k.data));
    lstm.recurrent_kernels.iter_mut().for_each(|k| f(&mut k.data));
    lstm.biases.iter_mut().for_each(|b| f(b));
    for layer in dense {
        f(&mut layer.weights.data);
        f(&mut layer.biases);
    }
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        visit(&self.lstm, &self.dense, |s| out.extend_from_slice(s));
        out
    }

    pub(crate) fn visit(&self, f: impl FnMut(&[f64])) {
        visit(&self.lstm, &self.dense, f);
    }

    /// self += other
    pub fn accumulate(&mut self, other: &Gradients) {
        let mut flat = other.flat().into_iter();
        visit_mut(&mut self.lstm, &mut self.dense, |s| {
            for v in s.iter_mut() {
                *v += flat.next().expect("matching shapes");
            }
        });
    }
}
