//! A small double-precision deep-learning engine: dense and LSTM layers,
//! backpropagation through time, Adam, inverted dropout and a
//! finite-difference gradient checker.

mod gradcheck;
mod layers;
mod network;
mod train;

pub use gradcheck::{gradcheck, relative_error};
pub use layers::{dense_forward, lstm_forward, Activation, DenseLayer, LstmLayer, LstmTrace, Weights, GATES};
pub use network::{ForwardCache, Gradients, Network, NetworkConfig, NetworkDocument, NETWORK_FORMAT_VERSION};
pub use train::{evaluate, train, AdamState, Dataset, Loss, Sample, TrainReport, TrainingConfig, VecDataset};

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
