use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use crate::error::{Error, Result};
use crate::rng;

/// One supervised example: a τ×width sequence (row-major), an optional
/// one-hot vector and a scalar target.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub sequence: &'a [f64],
    pub one_hot: Option<&'a [f64]>,
    pub target: f64,
}

pub trait Dataset: Sync {
    fn len(&self) -> usize;
    fn sample(&self, index: usize) -> Sample<'_>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Owned dataset, mostly for tests and small problems.
#[derive(Debug, Clone, Default)]
pub struct VecDataset {
    pub sequences: Vec<Vec<f64>>,
    pub one_hots: Option<Vec<Vec<f64>>>,
    pub targets: Vec<f64>,
}

impl Dataset for VecDataset {
    fn len(&self) -> usize {
        self.targets.len()
    }

    fn sample(&self, index: usize) -> Sample<'_> {
        Sample {
            sequence: &self.sequences[index],
            one_hot: self.one_hots.as_ref().map(|v| v[index].as_slice()),
            target: self.targets[index],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    #[default]
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub loss: Loss,
    pub seed: u64,
    pub dropout: bool,
    /// Early-stopping patience in epochs on the validation loss; 0 disables it.
    pub patience: usize,
    /// Fraction of the most recent examples held out for validation.
    pub validation_fraction: f64,
    /// Examples per gradient work unit; fixed so results do not depend on
    /// the number of threads.
    pub chunk_size: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            loss: Loss::Mse,
            seed: 0,
            dropout: true,
            patience: 10,
            validation_fraction: 0.1,
            chunk_size: 32,
        }
    }
}

impl TrainingConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.chunk_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidInput(
                "epochs, batch size and learning rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Adam moment accumulators, flat in the network's canonical parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(n_params: usize, config: &TrainingConfig) -> Self {
        Self {
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step: 0,
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
        }
    }

    /// Applies one update with gradient `grad` scaled by `scale`.
    pub fn update(&mut self, net: &mut Network, grad: &Gradients, scale: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut flat_grad = Vec::with_capacity(self.first_moment.len());
        grad.visit(|s| flat_grad.extend(s.iter().map(|g| g * scale)));
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        let m = &mut self.first_moment;
        let v = &mut self.second_moment;
        let mut k = 0;
        net.visit_params_mut(|params| {
            for p in params.iter_mut() {
                let g = flat_grad[k];
                m[k] = b1 * m[k] + (1.0 - b1) * g;
                v[k] = b2 * v[k] + (1.0 - b2) * g * g;
                *p -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
                k += 1;
            }
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean squared error per epoch, measured in training mode.
    pub train_loss: Vec<f64>,
    /// Mean squared error per epoch on the validation set (inference mode).
    pub validation_loss: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Mean squared error in inference mode.
pub fn evaluate(net: &Network, data: &dyn Dataset) -> Result<f64> {
    let errors: Vec<f64> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let s = data.sample(i);
            net.predict(s.sequence, s.one_hot).map(|p| (p - s.target).powi(2))
        })
        .collect::<Result<_>>()?;
    Ok(errors.iter().sum::<f64>() / data.len().max(1) as f64)
}

/// Mini-batch Adam on the squared error. The example order is reshuffled every
/// epoch from the seed; dropout masks are seeded per example, and gradients
/// are reduced over fixed-size chunks in order, so the result is the same for
/// any thread count. With a validation set the best-scoring parameters are
/// restored at the end.
pub fn train(
    net: &mut Network,
    data: &dyn Dataset,
    validation: Option<&dyn Dataset>,
    config: &TrainingConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    let mut adam = AdamState::new(net.parameter_count(), config);
    let mut report = TrainReport {
        train_loss: Vec::with_capacity(config.epochs),
        validation_loss: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        let mut shuffler = rng::seeded(rng::derive_seed(config.seed, epoch as u64));
        rng::shuffle(&mut order, &mut shuffler);
        let mut sq_error = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let frozen: &Network = net;
            let parts: Vec<(Gradients, f64)> = batch
                .par_chunks(config.chunk_size)
                .enumerate()
                .map(|(c, chunk)| {
                    let mut g = frozen.zero_gradients();
                    let mut err = 0.0;
                    for (k, &idx) in chunk.iter().enumerate() {
                        let s = data.sample(idx);
                        let position = (b * config.batch_size + c * config.chunk_size + k) as u64;
                        let mut mask_rng = config.dropout.then(|| {
                            rng::seeded(rng::derive_seed(
                                config.seed ^ 0xd50f,
                                ((epoch as u64) << 32) | position,
                            ))
                        });
                        let cache = frozen.forward_train(s.sequence, s.one_hot, mask_rng.as_mut())?;
                        err += (cache.prediction - s.target).powi(2);
                        frozen.backward(&cache, s.target, &mut g)?;
                    }
                    Ok((g, err))
                })
                .collect::<Result<_>>()?;
            let mut parts = parts.into_iter();
            let (mut total, mut err) = parts.next().expect("non-empty batch");
            for (g, e) in parts {
                total.accumulate(&g);
                err += e;
            }
            sq_error += err;
            if !err.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    learning_rate: config.learning_rate,
                });
            }
            adam.update(net, &total, 1.0 / batch.len() as f64);
        }
        let loss = sq_error / data.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                learning_rate: config.learning_rate,
            });
        }
        report.train_loss.push(loss);
        log::debug!("epoch {epoch}: train mse {loss:.6e}");
        if let Some(val) = validation.filter(|v| !v.is_empty()) {
            let v = evaluate(net, val)?;
            report.validation_loss.push(v);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, net.flat_parameters()));
                report.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
                if config.patience > 0 && since_best >= config.patience {
                    report.stopped_early = true;
                    break;
                }
            }
        } else {
            report.best_epoch = epoch;
        }
    }
    if let Some((_, params)) = best {
        net.set_flat_parameters(&params)?;
    }
    Ok(report)
}
