//! Deterministic mini-batch training with early stopping.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mse, Gradients, Mlp};
use crate::error::{Error, Result};

/// Parameter update rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain gradient descent: `p -= lr * g`.
    Sgd,
    /// Adaptive moment estimation with the two standard decay constants.
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam_default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Optimizer::Adam { beta1, beta2, epsilon } = self {
            for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
                if !(0.0 < *b && *b < 1.0) {
                    return Err(Error::InvalidConfig(format!("{name} must lie in (0,1), got {b}")));
                }
            }
            if *epsilon <= 0.0 {
                return Err(Error::InvalidConfig(format!("epsilon must be > 0, got {epsilon}")));
            }
        }
        Ok(())
    }
}

/// Training hyperparameters. `Default` gives the values used throughout the
/// pipeline: Adam(0.9, 0.999, 1e-8), lr 1e-3, batch 32, patience 200.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Consecutive epochs without validation improvement tolerated before
    /// stopping. 0 stops at the first stale epoch.
    pub early_stop_patience: usize,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 1000,
            batch_size: 32,
            seed: 1,
            early_stop_patience: 200,
            optimizer: Optimizer::adam_default(),
        }
    }
}

impl TrainConfig {
    fn validate(&self, train_len: usize) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.batch_size > train_len {
            return Err(Error::InvalidConfig(format!(
                "batch_size {} exceeds training-set size {train_len}",
                self.batch_size
            )));
        }
        self.optimizer.validate()
    }
}

/// Per-epoch loss curves of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss of each epoch (measured on the pre-update batches).
    pub train_loss: Vec<f64>,
    /// Validation loss after each epoch.
    pub val_loss: Vec<f64>,
    /// Epoch index whose parameters were kept.
    pub best_epoch: usize,
    /// Validation MSE of the returned parameters.
    pub final_val_mse: f64,
}

/// A set of (input, target) rows.
#[derive(Debug, Clone)]
pub struct Samples {
    inputs: Array2<f64>,
    targets: Array2<f64>,
}

impl Samples {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>) -> Result<Samples> {
        if inputs.nrows() != targets.nrows() {
            return Err(Error::shape(
                format!("{} target rows", inputs.nrows()),
                format!("{}", targets.nrows()),
            ));
        }
        if inputs.nrows() == 0 {
            return Err(Error::Empty("sample set".into()));
        }
        Ok(Samples { inputs, targets })
    }

    /// Autoencoder-style samples: targets are the inputs themselves.
    pub fn autoencoding(inputs: Array2<f64>) -> Result<Samples> {
        let targets = inputs.clone();
        Samples::new(inputs, targets)
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &Array2<f64> {
        &self.targets
    }
}

struct AdamState {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    t: u64,
}

impl AdamState {
    fn new(mlp: &Mlp) -> AdamState {
        AdamState {
            m_w: mlp.weights().iter().map(|w| Array2::zeros(w.dim())).collect(),
            v_w: mlp.weights().iter().map(|w| Array2::zeros(w.dim())).collect(),
            m_b: mlp.biases().iter().map(|b| Array1::zeros(b.len())).collect(),
            v_b: mlp.biases().iter().map(|b| Array1::zeros(b.len())).collect(),
            t: 0,
        }
    }

    fn step(&mut self, grads: &Gradients, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Gradients {
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let mut d_weights = Vec::with_capacity(grads.d_weights.len());
        let mut d_biases = Vec::with_capacity(grads.d_biases.len());
        for l in 0..grads.d_weights.len() {
            self.m_w[l].zip_mut_with(&grads.d_weights[l], |m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
            self.v_w[l].zip_mut_with(&grads.d_weights[l], |v, &g| *v = beta2 * *v + (1.0 - beta2) * g * g);
            let mut dw = self.m_w[l].clone();
            dw.zip_mut_with(&self.v_w[l], |m, &v| {
                *m = lr * (*m / bc1) / ((v / bc2).sqrt() + eps);
            });
            d_weights.push(dw);

            self.m_b[l].zip_mut_with(&grads.d_biases[l], |m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
            self.v_b[l].zip_mut_with(&grads.d_biases[l], |v, &g| *v = beta2 * *v + (1.0 - beta2) * g * g);
            let mut db = self.m_b[l].clone();
            db.zip_mut_with(&self.v_b[l], |m, &v| {
                *m = lr * (*m / bc1) / ((v / bc2).sqrt() + eps);
            });
            d_biases.push(db);
        }
        Gradients { d_weights, d_biases }
    }
}

/// Trains `mlp` on `train`, tracking `val`, and returns the parameters with
/// the lowest validation MSE seen (not necessarily the final epoch).
///
/// Mini-batch order is reshuffled every epoch from a ChaCha stream seeded by
/// `config.seed`, so a run is a pure function of (mlp, data, config).
/// Training aborts with a diagnostic if the loss stops being finite.
pub fn train(
    mlp: Mlp,
    train_set: &Samples,
    val_set: &Samples,
    config: &TrainConfig,
) -> Result<(Mlp, TrainReport)> {
    config.validate(train_set.len())?;
    let in_dim = mlp.input_dim();
    let out_dim = mlp.output_dim();
    for (name, set) in [("train", train_set), ("validation", val_set)] {
        if set.inputs().ncols() != in_dim || set.targets().ncols() != out_dim {
            return Err(Error::shape(
                format!("{name} set of width {in_dim}/{out_dim}"),
                format!("{}/{}", set.inputs().ncols(), set.targets().ncols()),
            ));
        }
    }

    let mut net = mlp;
    let mut best = net.clone();
    let initial_val = validation_mse(&net, val_set)?;
    let mut best_val = initial_val;
    let mut best_epoch = 0usize;
    let mut stale = 0usize;

    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
        final_val_mse: initial_val,
    };
    if config.max_epochs == 0 {
        return Ok((net, report));
    }

    // stream 1: batch shuffling (stream 0 is weight init)
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut adam = AdamState::new(&net);

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_sq_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = train_set.inputs().select(Axis(0), chunk);
            let t = train_set.targets().select(Axis(0), chunk);
            let (y, cache) = net.forward_batch(x.view())?;
            let batch_loss = mse(y.view(), t.view())?;
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch} (diverged; lower the learning rate)"
                )));
            }
            epoch_sq_sum += batch_loss * chunk.len() as f64;
            let grads = net.backprop_from_cache(&cache, &y, t.view())?;
            let step = match config.optimizer {
                Optimizer::Sgd => Gradients {
                    d_weights: grads
                        .d_weights
                        .iter()
                        .map(|g| g * config.learning_rate)
                        .collect(),
                    d_biases: grads
                        .d_biases
                        .iter()
                        .map(|g| g * config.learning_rate)
                        .collect(),
                },
                Optimizer::Adam { beta1, beta2, epsilon } => {
                    adam.step(&grads, config.learning_rate, beta1, beta2, epsilon)
                }
            };
            net.apply_update(&step);
        }
        report.train_loss.push(epoch_sq_sum / n as f64);

        let val = validation_mse(&net, val_set)?;
        if !val.is_finite() {
            return Err(Error::NonFinite(format!(
                "validation loss at epoch {epoch} (diverged)"
            )));
        }
        report.val_loss.push(val);
        if val < best_val {
            best_val = val;
            best = net.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale > config.early_stop_patience {
                break;
            }
        }
    }

    report.best_epoch = best_epoch;
    report.final_val_mse = best_val;
    Ok((best, report))
}

fn validation_mse(net: &Mlp, val: &Samples) -> Result<f64> {
    let (y, _) = net.forward_batch(val.inputs().view())?;
    mse(y.view(), val.targets().view())
}
