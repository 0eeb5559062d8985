//! Multihead CNN classifiers trained with flashcard distillation: task
//! incremental learning (one head per task) and single-task new-instance
//! learning across appearance-shifted sessions.

mod st_nil;
mod task_il;

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autoencoder::Autoencoder;
use crate::batch::{ImageBatch, CHANNELS, SIDE};
use crate::error::{ensure, Error, Result};
use crate::nn::loss::{feature_l2, softmax_rows, soft_cross_entropy};
use crate::nn::{Layer, Network, NetworkSpec, Optimizer, OptimizerKind, Tensor};
use crate::seed;

pub use st_nil::{train_st_nil, StNilConfig, StNilReport};
pub use task_il::{split_by_classes, train_task_il, ClassTask, TaskIlConfig, TaskIlReport};

const INFER_CHUNK: usize = 256;

fn default_channels() -> Vec<usize> {
    vec![16, 32, 64, 128, 254]
}
fn default_strides() -> Vec<usize> {
    vec![1, 2, 2, 2, 2]
}
fn default_hidden() -> usize {
    2000
}
fn default_latent() -> usize {
    128
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    #[serde(default = "default_channels")]
    pub conv_channels: Vec<usize>,
    #[serde(default = "default_strides")]
    pub strides: Vec<usize>,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_latent")]
    pub latent_dim: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { conv_channels: default_channels(), strides: default_strides(), hidden: default_hidden(), latent_dim: default_latent() }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.conv_channels.is_empty(), "classifier needs at least one conv layer");
        ensure!(
            self.conv_channels.len() == self.strides.len(),
            "{} conv channels but {} strides",
            self.conv_channels.len(),
            self.strides.len()
        );
        ensure!(self.strides.iter().all(|&s| s == 1 || s == 2), "strides must be 1 or 2");
        ensure!(self.conv_channels.iter().all(|&c| c > 0) && self.hidden > 0 && self.latent_dim > 0, "layer widths must be positive");
        let downs = self.strides.iter().filter(|&&s| s == 2).count();
        ensure!(downs <= 5, "{downs} stride-2 layers underflow a {SIDE}x{SIDE} input");
        Ok(())
    }

    fn final_map(&self) -> (usize, usize) {
        let side = self.strides.iter().fold(SIDE, |s, &st| if st == 2 { s.div_ceil(2) } else { s });
        (*self.conv_channels.last().unwrap(), side)
    }

    /// Flattened size of the last conv map (1016 for the default stack).
    pub fn flat_dim(&self) -> usize {
        let (c, side) = self.final_map();
        c * side * side
    }

    /// Conv stack (batch norm + ReLU each), flatten, dense -> hidden -> latent (ReLU).
    pub fn encoder_spec(&self) -> NetworkSpec {
        let mut layers = Vec::new();
        let mut cin = CHANNELS;
        for (&c, &s) in self.conv_channels.iter().zip(&self.strides) {
            layers.extend([Layer::Conv { cin, cout: c, stride: s }, Layer::BatchNorm { channels: c }, Layer::Relu]);
            cin = c;
        }
        layers.extend([
            Layer::Flatten,
            Layer::Dense { fin: self.flat_dim(), fout: self.hidden },
            Layer::Relu,
            Layer::Dense { fin: self.hidden, fout: self.latent_dim },
            Layer::Relu,
        ]);
        NetworkSpec { input: (CHANNELS, SIDE, SIDE), layers }
    }

    /// Mirror of the encoder ending in a sigmoid RGB conv; upsampling
    /// replaces each stride-2 conv.
    pub fn decoder_spec(&self) -> NetworkSpec {
        let (c_last, side) = self.final_map();
        let mut layers = vec![
            Layer::Dense { fin: self.latent_dim, fout: self.hidden },
            Layer::Relu,
            Layer::Dense { fin: self.hidden, fout: self.flat_dim() },
            Layer::Relu,
            Layer::Unflatten { c: c_last, h: side, w: side },
        ];
        let mut cin = c_last;
        let n = self.conv_channels.len();
        for i in (0..n).rev() {
            if self.strides[i] == 2 {
                layers.push(Layer::Upsample);
            }
            let cout = if i > 0 { self.conv_channels[i - 1] } else { self.conv_channels[0] };
            if i > 0 {
                layers.extend([Layer::Conv { cin, cout, stride: 1 }, Layer::BatchNorm { channels: cout }, Layer::Relu]);
                cin = cout;
            }
        }
        layers.extend([Layer::Conv { cin, cout: CHANNELS, stride: 1 }, Layer::Sigmoid]);
        NetworkSpec { input: (self.latent_dim, 1, 1), layers }
    }

    pub fn head_spec(&self, classes: usize) -> NetworkSpec {
        NetworkSpec { input: (self.latent_dim, 1, 1), layers: vec![Layer::Dense { fin: self.latent_dim, fout: classes }] }
    }
}

/// Shared encoder with one linear head per task.
#[derive(Debug, Clone)]
pub struct Classifier {
    config: ClassifierConfig,
    encoder: Network<f32>,
    heads: Vec<Network<f32>>,
}

impl Classifier {
    /// `head_classes[k]` is the number of classes of head `k`.
    pub fn new(config: &ClassifierConfig, head_classes: &[usize], init_seed: u64) -> Result<Self> {
        config.validate()?;
        ensure!(!head_classes.is_empty() && head_classes.iter().all(|&k| k >= 2), "every head needs at least 2 classes");
        let mut rng = seed::derived_rng(init_seed, "classifier-init", 0);
        let encoder = Network::new(config.encoder_spec(), &mut rng);
        let heads = head_classes.iter().map(|&k| Network::new(config.head_spec(k), &mut rng)).collect();
        Ok(Self { config: config.clone(), encoder, heads })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn encoder(&self) -> &Network<f32> {
        &self.encoder
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn head_classes(&self, h: usize) -> usize {
        self.heads[h].spec().output_dims().map(|d| d.0).unwrap_or(0)
    }

    /// Builds an autoencoder whose encoder is an exact copy of this
    /// classifier's encoder and whose decoder is freshly initialized.
    pub fn autoencoder(&self, init_seed: u64) -> Result<Autoencoder> {
        let mut rng = seed::derived_rng(init_seed, "decoder-init", 0);
        Autoencoder::from_networks(self.encoder.clone(), Network::new(self.config.decoder_spec(), &mut rng))
    }

    /// Overwrites the encoder of `ae` with this classifier's encoder.
    pub fn copy_encoder_into(&self, ae: &mut Autoencoder) {
        ae.encoder_mut().copy_from(&self.encoder);
    }

    /// Latents (row-major `N x latent_dim`) and per-head softmax scores
    /// (row-major `N x classes`) for heads `heads`.
    pub fn predict(&self, images: &ImageBatch, heads: Range<usize>) -> Result<(Vec<f32>, Vec<Vec<f32>>)> {
        images.validate_canonical()?;
        ensure!(heads.end <= self.heads.len(), "head {} requested from a {}-head classifier", heads.end, self.heads.len());
        let d = self.config.latent_dim;
        let mut latents = Vec::with_capacity(images.len() * d);
        let mut scores: Vec<Vec<f32>> = heads.clone().map(|_| Vec::new()).collect();
        for start in (0..images.len()).step_by(INFER_CHUNK) {
            let end = (start + INFER_CHUNK).min(images.len());
            let z = self.encoder.infer(&images.to_tensor::<f32>(start, end));
            let m = end - start;
            for i in 0..m {
                latents.extend((0..d).map(|j| z.data[j * m + i]));
            }
            for (out, h) in scores.iter_mut().zip(heads.clone()) {
                out.extend(softmax_rows(&self.heads[h].infer(&z)));
            }
        }
        Ok((latents, scores))
    }

    /// Accuracy (percent) of head `head` on `labels`.
    pub fn accuracy_with_id(&self, images: &ImageBatch, labels: &[u32], head: usize) -> Result<f64> {
        ensure!(labels.len() == images.len(), "{} labels for {} images", labels.len(), images.len());
        let (_, scores) = self.predict(images, head..head + 1)?;
        let k = self.head_classes(head);
        let correct = labels.iter().enumerate().filter(|&(i, &y)| argmax(&scores[0][i * k..(i + 1) * k]) == y as usize).count();
        Ok(percent(correct, labels.len()))
    }

    /// Accuracy (percent) without the task identifier: the prediction is the
    /// argmax over the concatenated softmax outputs of heads `0..n_heads`, and
    /// counts as correct only if it lands on class `labels[i]` of head `head`.
    pub fn accuracy_without_id(&self, images: &ImageBatch, labels: &[u32], head: usize, n_heads: usize) -> Result<f64> {
        ensure!(labels.len() == images.len(), "{} labels for {} images", labels.len(), images.len());
        ensure!(head < n_heads, "head {head} is not among the first {n_heads}");
        let (_, scores) = self.predict(images, 0..n_heads)?;
        let mut correct = 0;
        for (i, &y) in labels.iter().enumerate() {
            let mut best = (f32::NEG_INFINITY, usize::MAX, usize::MAX);
            for (h, s) in scores.iter().enumerate() {
                let k = self.head_classes(h);
                for (c, &p) in s[i * k..(i + 1) * k].iter().enumerate() {
                    if p > best.0 {
                        best = (p, h, c);
                    }
                }
            }
            if best.1 == head && best.2 == y as usize {
                correct += 1;
            }
        }
        Ok(percent(correct, labels.len()))
    }
}

fn argmax(v: &[f32]) -> usize {
    v.iter().enumerate().fold((0, f32::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best }).0
}

fn percent(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * correct as f64 / total as f64
    }
}

/// What the previous classifier said about a set of flashcards.
#[derive(Debug, Clone)]
pub struct DistillTargets {
    pub flashcard_images: ImageBatch,
    /// One row-major `N x classes` probability table per distilled head.
    pub soft_scores: Vec<Vec<f32>>,
    /// Row-major `N x latent_dim`; empty when latent regularization is off.
    pub latent_targets: Vec<f32>,
    pub lambda: f64,
}

impl DistillTargets {
    /// Labels `images` with `classifier`'s heads `0..n_heads` (and its
    /// latents when `with_latent`).
    pub fn from_classifier(classifier: &Classifier, images: ImageBatch, n_heads: usize, with_latent: bool, lambda: f64) -> Result<Self> {
        ensure!(lambda >= 0.0 && lambda.is_finite(), "lambda must be >= 0");
        let (latents, soft_scores) = classifier.predict(&images, 0..n_heads)?;
        let t = Self { flashcard_images: images, soft_scores, latent_targets: if with_latent { latents } else { Vec::new() }, lambda };
        t.validate()?;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.flashcard_images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flashcard_images.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        for (h, s) in self.soft_scores.iter().enumerate() {
            ensure!(n > 0 && s.len() % n == 0, "soft scores of head {h} do not align with {n} flashcards");
            let k = s.len() / n;
            for (i, row) in s.chunks(k).enumerate() {
                let sum: f32 = row.iter().sum();
                if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-5 {
                    return Err(Error::Numeric(format!("soft scores of head {h}, flashcard {i} do not form a distribution (sum {sum})")));
                }
            }
        }
        ensure!(
            self.latent_targets.is_empty() || (n > 0 && self.latent_targets.len() % n == 0),
            "latent targets do not align with {n} flashcards"
        );
        Ok(())
    }
}

/// One optimizer per network of a classifier.
pub(crate) struct ClassifierOptim {
    encoder: Optimizer<f32>,
    heads: Vec<Optimizer<f32>>,
}

impl ClassifierOptim {
    pub(crate) fn new(kind: OptimizerKind, model: &Classifier) -> Self {
        Self {
            encoder: Optimizer::new(kind, model.encoder.param_count()),
            heads: model.heads.iter().map(|h| Optimizer::new(kind, h.param_count())).collect(),
        }
    }
}

/// One minibatch: `current` samples with labels for head `head`, followed by
/// the distillation samples `replay` (indices into `targets`).
pub(crate) struct Minibatch<'a> {
    pub current: &'a ImageBatch,
    pub labels: &'a [u32],
    pub head: usize,
    pub replay: Option<(&'a DistillTargets, &'a [usize])>,
}

/// One optimizer step; returns the total loss.
pub(crate) fn train_step(model: &mut Classifier, optim: &mut ClassifierOptim, batch: &Minibatch) -> Result<f64> {
    let n_cur = batch.current.len();
    let replay_images = batch.replay.map(|(t, idx)| t.flashcard_images.select(idx));
    let images = match &replay_images {
        Some(r) => ImageBatch::concat(&[batch.current, r])?,
        None => batch.current.clone(),
    };
    let n = images.len();
    let trace = model.encoder.forward_train(images.to_tensor(0, n));
    let z = trace.output().clone();
    let mut gz = Tensor::zeros(z.shape);
    let mut head_grads: Vec<Vec<f32>> = model.heads.iter().map(|h| vec![0.0; h.param_count()]).collect();
    let mut total = 0.0f64;
    let mut touched = vec![false; model.heads.len()];
    let k = model.heads[batch.head].spec().output_dims().unwrap().0;

    let mut run_head = |h: usize, targets: &[f32], rows: Range<usize>, weight: f32, total: &mut f64, gz: &mut Tensor<f32>| {
        let head = &mut model.heads[h];
        let ht = head.forward_train(z.clone());
        let mut gl = Tensor::zeros(ht.output().shape);
        *total += soft_cross_entropy(ht.output(), targets, rows, weight, &mut gl) as f64;
        let g = head.backward(&ht, gl, &mut head_grads[h], true).expect("input gradient requested");
        gz.data.iter_mut().zip(&g.data).for_each(|(a, b)| *a += b);
        touched[h] = true;
    };

    let mut onehot = vec![0.0f32; n_cur * k];
    for (i, &y) in batch.labels.iter().enumerate() {
        ensure!((y as usize) < k, "label {y} out of range for a {k}-class head");
        onehot[i * k + y as usize] = 1.0;
    }
    run_head(batch.head, &onehot, 0..n_cur, 1.0, &mut total, &mut gz);

    if let Some((targets, idx)) = batch.replay {
        let lambda = targets.lambda as f32;
        let rows = n_cur..n;
        for (h, table) in targets.soft_scores.iter().enumerate() {
            let kh = table.len() / targets.len();
            let soft: Vec<f32> = idx.iter().flat_map(|&i| table[i * kh..(i + 1) * kh].iter().copied()).collect();
            run_head(h, &soft, rows.clone(), lambda, &mut total, &mut gz);
        }
        if !targets.latent_targets.is_empty() {
            let d = targets.latent_targets.len() / targets.len();
            let lt: Vec<f32> = idx.iter().flat_map(|&i| targets.latent_targets[i * d..(i + 1) * d].iter().copied()).collect();
            total += feature_l2(&z, &lt, rows, lambda, &mut gz) as f64;
        }
    }
    if !total.is_finite() {
        return Err(Error::Numeric(format!("non-finite classifier loss {total}")));
    }
    let mut ge = vec![0.0f32; model.encoder.param_count()];
    model.encoder.backward(&trace, gz, &mut ge, false);
    optim.encoder.step(model.encoder.params_mut(), &ge);
    for (h, g) in head_grads.iter().enumerate().filter(|(h, _)| touched[*h]) {
        optim.heads[h].step(model.heads[h].params_mut(), g);
    }
    Ok(total)
}

/// Draws `count` indices uniformly from `0..n` (with replacement when
/// `count > n`, otherwise without).
pub(crate) fn sample_indices<R: Rng + ?Sized>(n: usize, count: usize, rng: &mut R) -> Vec<usize> {
    if count <= n {
        rand::seq::index::sample(rng, n, count).into_vec()
    } else {
        (0..count).map(|_| rng.random_range(0..n)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_stack_flattens_to_1016() {
        let cfg = ClassifierConfig::default();
        assert_eq!(cfg.flat_dim(), 254 * 2 * 2);
        assert_eq!(cfg.encoder_spec().output_dims(), Some((128, 1, 1)));
        assert_eq!(cfg.decoder_spec().output_dims(), Some((3, 32, 32)));
    }

    #[test]
    fn encoder_copy_is_bit_exact() {
        let cfg = ClassifierConfig { conv_channels: vec![4, 8], strides: vec![1, 2], hidden: 16, latent_dim: 8 };
        let clf = Classifier::new(&cfg, &[2, 2], 1).unwrap();
        let mut ae = clf.autoencoder(2).unwrap();
        assert_eq!(ae.encoder().params(), clf.encoder().params());
        let other = Classifier::new(&cfg, &[2, 2], 9).unwrap();
        other.copy_encoder_into(&mut ae);
        assert_eq!(ae.encoder().params(), other.encoder().params());
        assert_eq!(ae.encoder().state(), other.encoder().state());
    }
}
