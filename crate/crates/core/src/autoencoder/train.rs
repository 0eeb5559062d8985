use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Autoencoder, TrainingRecord};
use crate::batch::ImageBatch;
use crate::data::{add_noise, NoiseSpec};
use crate::error::{ensure, Error, Result};
use crate::nn::loss::{Part, Penalty};
use crate::nn::{Optimizer, OptimizerKind, Real};
use crate::seed;

fn default_epochs() -> usize {
    100
}
fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam { lr: 1e-3 }
}
fn default_batch_size() -> usize {
    128
}
fn default_patience() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainHyper {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_patience")]
    pub early_stop_patience: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub loss: Penalty,
    /// Print one line per epoch to stderr.
    #[serde(default)]
    pub verbose: bool,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            optimizer: default_optimizer(),
            batch_size: default_batch_size(),
            early_stop_patience: default_patience(),
            seed: 0,
            loss: Penalty::L1,
            verbose: false,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.epochs >= 1, "epochs must be positive");
        ensure!(self.batch_size >= 1, "batch_size must be positive");
        ensure!(self.early_stop_patience >= 1, "early_stop_patience must be positive");
        ensure!(self.optimizer.lr() > 0.0, "learning rate must be positive");
        Ok(())
    }
}

/// Replay samples mixed into every minibatch, weighted by `lambda`.
#[derive(Debug, Clone, Copy)]
pub struct Replay<'a> {
    pub images: &'a ImageBatch,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub train: &'a ImageBatch,
    pub val: &'a ImageBatch,
    pub replay: Option<Replay<'a>>,
    /// Denoising: inputs get fresh `factor * N(0, 1)` noise each epoch while
    /// targets stay clean.
    pub noise_factor: Option<f64>,
    /// Whether replay inputs are noised too when denoising.
    pub noise_replay: bool,
}

impl<'a> TrainData<'a> {
    pub fn plain(train: &'a ImageBatch, val: &'a ImageBatch) -> Self {
        Self { train, val, replay: None, noise_factor: None, noise_replay: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean weighted objective over the epoch's minibatches.
    pub train_loss: f64,
    /// Mean current-task loss over the epoch's minibatches.
    pub train_mae: f64,
    pub val_mae: f64,
    /// Held-out replay reconstruction error, when replaying.
    pub replay_val_mae: Option<f64>,
    /// Early-stopping monitor: `val_mae + lambda * replay_val_mae`.
    pub monitor: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModelReport {
    pub model: Autoencoder,
    pub history: Vec<EpochStats>,
    /// Min and max per-sample reconstruction MAE over the training set.
    pub recon_bounds: (f64, f64),
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
}

impl TrainedModelReport {
    pub fn record(&self) -> TrainingRecord {
        TrainingRecord { history: self.history.clone(), recon_bounds: self.recon_bounds, best_epoch: self.best_epoch }
    }
}

fn noisy(batch: &ImageBatch, factor: f64, seed: u64) -> Result<ImageBatch> {
    if factor > 0.0 {
        add_noise(batch, &NoiseSpec { factor, seed })
    } else {
        Ok(batch.clone())
    }
}

/// Cyclic pass over a shuffled index set, reshuffled on each wrap.
struct Cycle {
    order: Vec<usize>,
    pos: usize,
    rng: rand_chacha::ChaCha8Rng,
}

impl Cycle {
    fn new(n: usize, rng: rand_chacha::ChaCha8Rng) -> Self {
        Self { order: (0..n).collect(), pos: n, rng }
    }

    fn take(&mut self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Minibatch training with early stopping on the validation monitor; the
/// returned model carries the best-monitor weights. Each minibatch holds
/// `batch_size` current samples and, when replaying, as many replay samples.
/// 10% of the replay set is held out for the monitor.
pub fn train_ae(model: Autoencoder, data: &TrainData, hyper: &TrainHyper) -> Result<TrainedModelReport> {
    train_generic(model, data, hyper)
}

fn train_generic<T: Real>(mut model: Autoencoder<T>, data: &TrainData, hyper: &TrainHyper) -> Result<TrainedModelReport> {
    hyper.validate()?;
    ensure!(!data.train.is_empty(), "empty training set");
    ensure!(!data.val.is_empty(), "empty validation set");
    data.train.validate_canonical()?;
    data.val.validate_canonical()?;
    let factor = data.noise_factor.unwrap_or(0.0);
    ensure!(factor >= 0.0, "noise factor must be >= 0");

    let lambda = data.replay.map(|r| r.lambda).unwrap_or(0.0);
    ensure!(lambda >= 0.0 && lambda.is_finite(), "replay weight must be >= 0, got {lambda}");
    let (replay_train, replay_hold) = match data.replay {
        Some(r) if lambda > 0.0 => {
            ensure!(!r.images.is_empty(), "replay weight {lambda} with an empty replay set");
            r.images.validate_canonical()?;
            let n = r.images.len();
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut seed::derived_rng(hyper.seed, "replay-holdout", 0));
            let hold = n / 10;
            let (h, t) = idx.split_at(hold);
            (Some(r.images.select(t)), (hold > 0).then(|| r.images.select(h)))
        }
        _ => (None, None),
    };
    let replay_factor = if data.noise_replay { factor } else { 0.0 };
    let val_input = noisy(data.val, factor, seed::derive(hyper.seed, "val-noise", 0))?;
    let hold_input = match &replay_hold {
        Some(h) => Some(noisy(h, replay_factor, seed::derive(hyper.seed, "holdout-noise", 0))?),
        None => None,
    };

    let mut opt = Optimizer::<T>::new(hyper.optimizer, model.param_count());
    let mut params = model.params_flat();
    let mut order_rng = seed::derived_rng(hyper.seed, "train-order", 0);
    let mut replay_cycle = replay_train.as_ref().map(|r| Cycle::new(r.len(), seed::derived_rng(hyper.seed, "replay-order", 0)));
    let weight = T::from_f64_lossy(lambda);

    let mut history = Vec::new();
    let mut best = (f64::INFINITY, model.clone(), 0usize);
    let mut since_best = 0;
    let n = data.train.len();
    for epoch in 0..hyper.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut order_rng);
        let (mut loss_sum, mut cur_sum, mut batches) = (0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(hyper.batch_size).enumerate() {
            let tag = ((epoch as u64) << 32) | b as u64;
            let cur_t = data.train.select(chunk);
            let cur_in = noisy(&cur_t, factor, seed::derive(hyper.seed, "train-noise", tag))?;
            let mut parts = vec![Part { samples: 0..chunk.len(), weight: T::one() }];
            let (input, target) = match (&replay_train, &mut replay_cycle) {
                (Some(rt), Some(cycle)) => {
                    let rep_t = rt.select(&cycle.take(chunk.len()));
                    let rep_in = noisy(&rep_t, replay_factor, seed::derive(hyper.seed, "replay-noise", tag))?;
                    parts.push(Part { samples: chunk.len()..2 * chunk.len(), weight });
                    (ImageBatch::concat(&[&cur_in, &rep_in])?, ImageBatch::concat(&[&cur_t, &rep_t])?)
                }
                _ => (cur_in, cur_t),
            };
            let x = input.to_tensor::<T>(0, input.len());
            let y = target.to_tensor::<T>(0, target.len());
            let (total, means, grads) = model.loss_and_grad(x, &y, &parts, hyper.loss);
            if !total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite training loss at epoch {} minibatch {b} (loss {:?}); try a lower learning rate",
                    epoch + 1,
                    total
                )));
            }
            opt.step(&mut params, &grads);
            model.set_params_flat(&params);
            loss_sum += total.as_f64();
            cur_sum += means[0].as_f64();
            batches += 1;
        }
        let val_mae = model.mae(&val_input, data.val)?;
        let replay_val_mae = match (&hold_input, &replay_hold) {
            (Some(hi), Some(h)) => Some(model.mae(hi, h)?),
            _ => None,
        };
        let monitor = val_mae + lambda * replay_val_mae.unwrap_or(0.0);
        if !monitor.is_finite() {
            return Err(Error::Numeric(format!("non-finite validation error at epoch {}", epoch + 1)));
        }
        let stats = EpochStats {
            epoch: epoch + 1,
            train_loss: loss_sum / batches as f64,
            train_mae: cur_sum / batches as f64,
            val_mae,
            replay_val_mae,
            monitor,
        };
        if hyper.verbose {
            eprintln!(
                "epoch {:>3}  train {:.5}  val {:.5}{}",
                stats.epoch,
                stats.train_loss,
                stats.val_mae,
                replay_val_mae.map(|r| format!("  replay {r:.5}")).unwrap_or_default()
            );
        }
        history.push(stats);
        if monitor < best.0 {
            best = (monitor, model.clone(), epoch + 1);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= hyper.early_stop_patience {
                break;
            }
        }
    }
    let (_, best_model, best_epoch) = best;
    let model: Autoencoder = best_model.cast();
    let per_sample = model.per_sample_mae(data.train, data.train)?;
    let lo = per_sample.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = per_sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(TrainedModelReport { model, history, recon_bounds: (lo, hi), best_epoch })
}
