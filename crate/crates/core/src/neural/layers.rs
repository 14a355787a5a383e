use serde::{Deserialize, Serialize};

use super::sigmoid;
use crate::error::{Error, Result};

/// Gate order used for the four LSTM weight groups: candidate cell c̃,
/// update gate, forget gate, output gate.
pub const GATES: [&str; 4] = ["cell", "update", "forget", "output"];
const CELL: usize = 0;
const UPDATE: usize = 1;
const FORGET: usize = 2;
const OUTPUT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Weights {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// out += W·x
    #[inline]
    pub fn mul_add(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o += self.row(i).iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// out += W'·dz
    #[inline]
    pub fn tr_mul_add(&self, dz: &[f64], out: &mut [f64]) {
        for (i, d) in dz.iter().enumerate() {
            if *d != 0.0 {
                for (o, w) in out.iter_mut().zip(self.row(i)) {
                    *o += d * w;
                }
            }
        }
    }

    /// W += dz·x'
    #[inline]
    pub fn add_outer(&mut self, dz: &[f64], x: &[f64]) {
        let cols = self.cols;
        for (i, d) in dz.iter().enumerate() {
            if *d != 0.0 {
                for (w, v) in self.data[i * cols..(i + 1) * cols].iter_mut().zip(x) {
                    *w += d * v;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// out × in
    pub weights: Weights,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weights: Weights::zeros(output, input),
            biases: vec![0.0; output],
            activation,
        }
    }

    pub fn input_width(&self) -> usize {
        self.weights.cols
    }

    pub fn output_width(&self) -> usize {
        self.weights.rows
    }
}

/// activation(W·x + b)
pub fn dense_forward(layer: &DenseLayer, input: &[f64]) -> Result<Vec<f64>> {
    if input.len() != layer.input_width() {
        return Err(Error::Dimension(format!(
            "dense layer expects {} inputs, got {}",
            layer.input_width(),
            input.len()
        )));
    }
    let mut z = layer.biases.clone();
    layer.weights.mul_add(input, &mut z);
    for v in z.iter_mut() {
        *v = layer.activation.apply(*v);
    }
    Ok(z)
}

/// LSTM layer with separate input and recurrent kernels per gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub input_width: usize,
    pub hidden: usize,
    /// hidden × input, in [`GATES`] order.
    pub input_kernels: [Weights; 4],
    /// hidden × hidden, in [`GATES`] order.
    pub recurrent_kernels: [Weights; 4],
    pub biases: [Vec<f64>; 4],
}

impl LstmLayer {
    pub fn zeros(input_width: usize, hidden: usize) -> Self {
        Self {
            input_width,
            hidden,
            input_kernels: std::array::from_fn(|_| Weights::zeros(hidden, input_width)),
            recurrent_kernels: std::array::from_fn(|_| Weights::zeros(hidden, hidden)),
            biases: std::array::from_fn(|_| vec![0.0; hidden]),
        }
    }
}

/// Every intermediate of an LSTM pass. Index k holds the values after input
/// step k; `a_path[k]`/`c_path[k]` are the hidden and cell states.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrace {
    pub a_init: Vec<f64>,
    pub c_init: Vec<f64>,
    pub a_path: Vec<Vec<f64>>,
    pub c_path: Vec<Vec<f64>>,
    pub candidate: Vec<Vec<f64>>,
    pub update_gate: Vec<Vec<f64>>,
    pub forget_gate: Vec<Vec<f64>>,
    pub output_gate: Vec<Vec<f64>>,
}

impl LstmTrace {
    pub fn last_hidden(&self) -> &[f64] {
        self.a_path.last().unwrap_or(&self.a_init)
    }
}

/// Runs the layer over a τ×input_width sequence (row-major, flattened).
///
/// Per step: c̃ = tanh(·), three sigmoid gates, c = G_u∘c̃ + G_f∘c_prev,
/// a = G_o∘tanh(c).
pub fn lstm_forward(layer: &LstmLayer, sequence: &[f64], a_init: &[f64], c_init: &[f64]) -> Result<LstmTrace> {
    let (w, h) = (layer.input_width, layer.hidden);
    if w == 0 || !sequence.len().is_multiple_of(w) {
        return Err(Error::Dimension(format!(
            "sequence of length {} is not a multiple of input width {w}",
            sequence.len()
        )));
    }
    if a_init.len() != h || c_init.len() != h {
        return Err(Error::Dimension(format!("LSTM initial states must have width {h}")));
    }
    let steps = sequence.len() / w;
    let mut trace = LstmTrace {
        a_init: a_init.to_vec(),
        c_init: c_init.to_vec(),
        a_path: Vec::with_capacity(steps),
        c_path: Vec::with_capacity(steps),
        candidate: Vec::with_capacity(steps),
        update_gate: Vec::with_capacity(steps),
        forget_gate: Vec::with_capacity(steps),
        output_gate: Vec::with_capacity(steps),
    };
    let mut a_prev = a_init.to_vec();
    let mut c_prev = c_init.to_vec();
    for x in sequence.chunks_exact(w) {
        let mut pre: [Vec<f64>; 4] = std::array::from_fn(|g| layer.biases[g].clone());
        for (g, z) in pre.iter_mut().enumerate() {
            layer.input_kernels[g].mul_add(x, z);
            layer.recurrent_kernels[g].mul_add(&a_prev, z);
        }
        let [zc, zu, zf, zo] = pre;
        let cand: Vec<f64> = zc.iter().map(|v| v.tanh()).collect();
        let gu: Vec<f64> = zu.iter().map(|v| sigmoid(*v)).collect();
        let gf: Vec<f64> = zf.iter().map(|v| sigmoid(*v)).collect();
        let go: Vec<f64> = zo.iter().map(|v| sigmoid(*v)).collect();
        let c: Vec<f64> = (0..h).map(|j| gu[j] * cand[j] + gf[j] * c_prev[j]).collect();
        let a: Vec<f64> = (0..h).map(|j| go[j] * c[j].tanh()).collect();
        trace.candidate.push(cand);
        trace.update_gate.push(gu);
        trace.forget_gate.push(gf);
        trace.output_gate.push(go);
        trace.c_path.push(c.clone());
        trace.a_path.push(a.clone());
        a_prev = a;
        c_prev = c;
    }
    Ok(trace)
}

/// Backpropagation through time from a gradient on the final hidden state.
/// Accumulates parameter gradients into `grad`.
pub(crate) fn lstm_backward(layer: &LstmLayer, sequence: &[f64], trace: &LstmTrace, d_last: &[f64], grad: &mut LstmLayer) {
    let (w, h) = (layer.input_width, layer.hidden);
    let steps = trace.a_path.len();
    let mut da = d_last.to_vec();
    let mut dc = vec![0.0; h];
    let mut dz: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; h]);
    for k in (0..steps).rev() {
        let x = &sequence[k * w..(k + 1) * w];
        let a_prev = if k == 0 { &trace.a_init } else { &trace.a_path[k - 1] };
        let c_prev = if k == 0 { &trace.c_init } else { &trace.c_path[k - 1] };
        let cand = &trace.candidate[k];
        let gu = &trace.update_gate[k];
        let gf = &trace.forget_gate[k];
        let go = &trace.output_gate[k];
        let c = &trace.c_path[k];
        for j in 0..h {
            let tc = c[j].tanh();
            let d_go = da[j] * tc;
            dc[j] += da[j] * go[j] * (1.0 - tc * tc);
            dz[CELL][j] = dc[j] * gu[j] * (1.0 - cand[j] * cand[j]);
            dz[UPDATE][j] = dc[j] * cand[j] * gu[j] * (1.0 - gu[j]);
            dz[FORGET][j] = dc[j] * c_prev[j] * gf[j] * (1.0 - gf[j]);
            dz[OUTPUT][j] = d_go * go[j] * (1.0 - go[j]);
            dc[j] *= gf[j];
        }
        da.iter_mut().for_each(|v| *v = 0.0);
        for g in 0..4 {
            grad.input_kernels[g].add_outer(&dz[g], x);
            grad.recurrent_kernels[g].add_outer(&dz[g], a_prev);
            for (b, d) in grad.biases[g].iter_mut().zip(&dz[g]) {
                *b += d;
            }
            layer.recurrent_kernels[g].tr_mul_add(&dz[g], &mut da);
        }
    }
}
