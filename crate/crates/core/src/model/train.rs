//! Mini-batch Adam training with early stopping on validation macro F1.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_lines};
use crate::model::metrics::{evaluate, MetricsReport};
use crate::model::network::{Network, Perturbation};
use crate::model::{training_weights, Example, ModelConfig};
use crate::scalar::Scalar;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moments for every parameter, laid out like the network tensors.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: T,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(net: &Network<T>, lr: f64) -> Self {
        let zeros: Vec<Vec<T>> = net.tensors().iter().map(|t| vec![T::zero(); t.len()]).collect();
        Self {
            lr: T::lit(lr),
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut Network<T>, grad: &Network<T>) {
        self.t += 1;
        let (b1, b2, eps) = (T::lit(BETA1), T::lit(BETA2), T::lit(EPSILON));
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        for (k, (p, g)) in net.tensors_mut().into_iter().zip(grad.tensors()).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m[i] = b1 * m[i] + (T::one() - b1) * gi;
                v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p.data[i] -= self.lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// Patience-based stopping. A score counts as an improvement only if it is
/// strictly above the best so far.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            wait: 0,
        }
    }

    /// Records the score of `epoch`; returns (improved, stop).
    pub fn update(&mut self, epoch: usize, score: f64) -> (bool, bool) {
        if score > self.best {
            self.best = score;
            self.best_epoch = epoch;
            self.wait = 0;
            (true, false)
        } else {
            self.wait += 1;
            (false, self.wait >= self.patience)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
    pub stopped_early: bool,
}

impl TrainingLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        write_lines(path, |w| {
            writeln!(w, "epoch,train_loss,val_macro_f1")?;
            for e in &self.epochs {
                writeln!(w, "{},{},{}", e.epoch, fmt_f64(e.train_loss), fmt_f64(e.val_macro_f1))?;
            }
            Ok(())
        })
    }
}

/// Predicted class of every example; evaluation mode, so deterministic.
pub fn predict_all<T: Scalar>(net: &Network<T>, examples: &[Example<T>]) -> Result<Vec<usize>> {
    examples.par_iter().map(|e| net.predict(e)).collect()
}

pub fn evaluate_network<T: Scalar>(net: &Network<T>, examples: &[Example<T>]) -> Result<MetricsReport> {
    let pred = predict_all(net, examples)?;
    let truth: Vec<usize> = examples.iter().map(|e| e.label).collect();
    evaluate(&truth, &pred)
}

/// Trains a network on `train`, selecting the epoch with the best validation
/// macro F1. Runs sequentially; all randomness comes from `config.seed`.
pub fn train<T: Scalar>(
    config: &ModelConfig,
    train: &[Example<T>],
    validation: &[Example<T>],
) -> Result<(Network<T>, TrainingLog)> {
    config.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::EmptySplit);
    }
    let arch = config.architecture(train[0].width());
    let weights = training_weights(config.class_weights_mode, train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net: Network<T> = Network::init(arch, &mut rng);
    let mut adam = Adam::new(&net, config.learning_rate);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = net.clone();
    let mut log = TrainingLog::default();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example<T>> = chunk.iter().map(|&i| &train[i]).collect();
            let perturb: Vec<Perturbation<T>> = (0..batch.len())
                .map(|_| Perturbation::draw(arch.fusion, config.dropout_rate, config.noise_sigma, &mut rng))
                .collect();
            let (loss, grad) = match net.loss_and_gradient(&batch, Some(&perturb), &weights) {
                Ok(r) => r,
                Err(Error::NonFiniteActivation(_)) | Err(Error::NonFiniteGradient(_)) => {
                    return Err(Error::DivergenceDetected(epoch))
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(Error::DivergenceDetected(epoch));
            }
            total += loss.to_f64_lossy() * batch.len() as f64;
            adam.step(&mut net, &grad);
        }
        let val = evaluate_network(&net, validation)?.macro_f1;
        log.epochs.push(EpochLog {
            epoch,
            train_loss: total / train.len() as f64,
            val_macro_f1: val,
        });
        let (improved, stop) = stopper.update(epoch, val);
        if improved {
            best.clone_from(&net);
        }
        log::debug!("epoch {epoch}: loss {:.4}, validation macro F1 {val:.4}", total / train.len() as f64);
        if stop {
            log.stopped_early = true;
            break;
        }
    }
    log.best_epoch = stopper.best_epoch;
    log.best_val_macro_f1 = stopper.best;
    Ok((best, log))
}
