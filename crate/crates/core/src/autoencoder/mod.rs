//! The Blk_B_fil_F convolutional autoencoder family.
//!
//! Encoder: a 3x3 conv lifting RGB to F channels, B stride-2 convs, one more
//! conv; all tanh. The latent is the flattened `F x (32/2^B)^2` map.
//! Decoder: one conv, then B rounds of nearest 2x upsampling + conv (tanh),
//! and a final conv to RGB with a sigmoid.
//!
//! The `_bn` variant adds batch norm between every hidden conv and its tanh.
//! Without it, MAE training on mostly-black images (MNIST) tends to drive
//! the decoder's tanh units into saturation within the first epoch.

mod checkpoint;
mod train;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::batch::{ImageBatch, LatentBatch, CHANNELS, SIDE};
use crate::error::{ensure, Error, Result};
use crate::io::sha256_bytes;
use crate::nn::loss::{reconstruction_loss, Part, Penalty};
use crate::nn::{Layer, Network, NetworkSpec, Real, Tensor};
use crate::seed;

pub use checkpoint::{load_checkpoint, save_checkpoint, TrainingRecord};
pub use train::{train_ae, EpochStats, Replay, TrainData, TrainHyper, TrainedModelReport};

/// Samples per inference chunk.
const INFER_CHUNK: usize = 256;

/// Deserializes from either a name (`"Blk_4_fil_16_bn"`) or a table of fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AeConfigRepr")]
pub struct AeConfig {
    pub num_blocks: usize,
    pub num_filters: usize,
    /// Optional; when given it must equal the size implied by blocks/filters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_dim: Option<usize>,
    #[serde(default)]
    pub batch_norm: bool,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AeConfigRepr {
    Name(String),
    Fields(AeConfigFields),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AeConfigFields {
    num_blocks: usize,
    num_filters: usize,
    #[serde(default)]
    latent_dim: Option<usize>,
    #[serde(default)]
    batch_norm: bool,
}

impl TryFrom<AeConfigRepr> for AeConfig {
    type Error = Error;

    fn try_from(repr: AeConfigRepr) -> Result<Self> {
        match repr {
            AeConfigRepr::Name(name) => Self::parse(&name),
            AeConfigRepr::Fields(f) => {
                Ok(Self { num_blocks: f.num_blocks, num_filters: f.num_filters, latent_dim: f.latent_dim, batch_norm: f.batch_norm })
            }
        }
    }
}

impl AeConfig {
    pub fn new(num_blocks: usize, num_filters: usize) -> Self {
        Self { num_blocks, num_filters, latent_dim: None, batch_norm: false }
    }

    pub fn with_batch_norm(self) -> Self {
        Self { batch_norm: true, ..self }
    }

    /// Parses `Blk_<B>_fil_<F>`, optionally suffixed `_bn`.
    pub fn parse(name: &str) -> Result<Self> {
        let parts: Vec<&str> = name.split('_').collect();
        let bad = || Error::Config(format!("bad architecture name `{name}` (expected Blk_<B>_fil_<F>[_bn])"));
        let (b, f, bn) = match parts.as_slice() {
            ["Blk", b, "fil", f] => (b, f, false),
            ["Blk", b, "fil", f, "bn"] => (b, f, true),
            _ => return Err(bad()),
        };
        match (b.parse(), f.parse()) {
            (Ok(b), Ok(f)) => Ok(Self { batch_norm: bn, ..Self::new(b, f) }),
            _ => Err(bad()),
        }
    }

    pub fn name(&self) -> String {
        let suffix = if self.batch_norm { "_bn" } else { "" };
        format!("Blk_{}_fil_{}{suffix}", self.num_blocks, self.num_filters)
    }

    fn with_norm(&self, layers: Vec<Layer>) -> Vec<Layer> {
        if !self.batch_norm {
            return layers;
        }
        let mut out = Vec::with_capacity(layers.len() * 2);
        let mut iter = layers.into_iter().peekable();
        while let Some(layer) = iter.next() {
            let hidden = matches!(layer, Layer::Conv { cout, .. } if cout == self.num_filters)
                && matches!(iter.peek(), Some(Layer::Tanh));
            out.push(layer);
            if hidden {
                out.push(Layer::BatchNorm { channels: self.num_filters });
            }
        }
        out
    }

    pub fn latent_side(&self) -> usize {
        SIDE >> self.num_blocks
    }

    pub fn derived_latent_dim(&self) -> usize {
        self.num_filters * self.latent_side() * self.latent_side()
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.num_blocks >= 1, "num_blocks must be at least 1");
        ensure!(self.num_filters >= 1, "num_filters must be at least 1");
        if self.num_blocks > 5 {
            return Err(Error::InvalidArgument(format!(
                "{} downsampling blocks underflow a {SIDE}x{SIDE} input (at most 5)",
                self.num_blocks
            )));
        }
        if let Some(d) = self.latent_dim {
            ensure!(
                d == self.derived_latent_dim(),
                "latent_dim {d} does not match {} (= {} filters x {}x{})",
                self.derived_latent_dim(),
                self.num_filters,
                self.latent_side(),
                self.latent_side()
            );
        }
        Ok(())
    }

    pub fn encoder_spec(&self) -> NetworkSpec {
        let f = self.num_filters;
        let mut layers = vec![Layer::Conv { cin: CHANNELS, cout: f, stride: 1 }, Layer::Tanh];
        for _ in 0..self.num_blocks {
            layers.extend([Layer::Conv { cin: f, cout: f, stride: 2 }, Layer::Tanh]);
        }
        layers.extend([Layer::Conv { cin: f, cout: f, stride: 1 }, Layer::Tanh]);
        NetworkSpec { input: (CHANNELS, SIDE, SIDE), layers: self.with_norm(layers) }
    }

    pub fn decoder_spec(&self) -> NetworkSpec {
        let f = self.num_filters;
        let mut layers = vec![Layer::Conv { cin: f, cout: f, stride: 1 }, Layer::Tanh];
        for _ in 0..self.num_blocks {
            layers.extend([Layer::Upsample, Layer::Conv { cin: f, cout: f, stride: 1 }, Layer::Tanh]);
        }
        layers.extend([Layer::Conv { cin: f, cout: CHANNELS, stride: 1 }, Layer::Sigmoid]);
        NetworkSpec { input: (f, self.latent_side(), self.latent_side()), layers: self.with_norm(layers) }
    }

    pub fn param_count(&self) -> usize {
        self.encoder_spec().param_count() + self.decoder_spec().param_count()
    }
}

/// Encoder/decoder pair. `config` is `None` for autoencoders assembled from
/// other networks (for example a classifier's encoder).
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder<T = f32> {
    config: Option<AeConfig>,
    encoder: Network<T>,
    decoder: Network<T>,
}

pub fn build_ae(config: &AeConfig, init_seed: u64) -> Result<Autoencoder> {
    Autoencoder::build(config, init_seed)
}

impl<T: Real> Autoencoder<T> {
    pub fn build(config: &AeConfig, init_seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::derived_rng(init_seed, "ae-init", 0);
        let encoder = Network::new(config.encoder_spec(), &mut rng);
        let decoder = Network::new(config.decoder_spec(), &mut rng);
        Ok(Self { config: Some(*config), encoder, decoder })
    }

    /// Pairs arbitrary networks; the encoder must take canonical images and
    /// the decoder must map its output back to that shape.
    pub fn from_networks(encoder: Network<T>, decoder: Network<T>) -> Result<Self> {
        ensure!(
            encoder.spec().input == (CHANNELS, SIDE, SIDE),
            "encoder input must be {CHANNELS}x{SIDE}x{SIDE}"
        );
        ensure!(
            encoder.spec().output_dims() == Some(decoder.spec().input),
            "encoder output {:?} does not feed decoder input {:?}",
            encoder.spec().output_dims(),
            decoder.spec().input
        );
        ensure!(
            decoder.spec().output_dims() == Some((CHANNELS, SIDE, SIDE)),
            "decoder must reconstruct {CHANNELS}x{SIDE}x{SIDE} images"
        );
        Ok(Self { config: None, encoder, decoder })
    }

    pub fn config(&self) -> Option<&AeConfig> {
        self.config.as_ref()
    }

    pub fn name(&self) -> String {
        self.config.map(|c| c.name()).unwrap_or_else(|| "custom".into())
    }

    pub fn encoder(&self) -> &Network<T> {
        &self.encoder
    }

    pub fn decoder(&self) -> &Network<T> {
        &self.decoder
    }

    pub fn encoder_mut(&mut self) -> &mut Network<T> {
        &mut self.encoder
    }

    pub fn decoder_mut(&mut self) -> &mut Network<T> {
        &mut self.decoder
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    pub fn latent_dim(&self) -> usize {
        let (c, h, w) = self.decoder.spec().input;
        c * h * w
    }

    /// Encoder then decoder parameters, concatenated.
    pub fn params_flat(&self) -> Vec<T> {
        [self.encoder.params(), self.decoder.params()].concat()
    }

    pub fn set_params_flat(&mut self, flat: &[T]) {
        let ne = self.encoder.param_count();
        assert_eq!(flat.len(), self.param_count(), "flat parameter length");
        self.encoder.params_mut().copy_from_slice(&flat[..ne]);
        self.decoder.params_mut().copy_from_slice(&flat[ne..]);
    }

    pub fn cast<U: Real>(&self) -> Autoencoder<U> {
        Autoencoder { config: self.config, encoder: self.encoder.cast(), decoder: self.decoder.cast() }
    }

    fn check_batch(&self, batch: &ImageBatch) -> Result<()> {
        if !batch.is_canonical() {
            let (n, h, w, c) = batch.shape();
            return Err(Error::ShapeMismatch { expected: format!("Nx{SIDE}x{SIDE}x{CHANNELS}"), got: format!("{n}x{h}x{w}x{c}") });
        }
        Ok(())
    }

    fn chunks(n: usize) -> impl Iterator<Item = Range<usize>> {
        (0..n).step_by(INFER_CHUNK).map(move |s| s..(s + INFER_CHUNK).min(n))
    }

    /// Reconstruction `f(x)`; chunked, so results do not depend on batch size.
    pub fn forward(&self, batch: &ImageBatch) -> Result<ImageBatch> {
        self.check_batch(batch)?;
        let mut parts = Vec::new();
        for r in Self::chunks(batch.len()) {
            let x = batch.to_tensor::<T>(r.start, r.end);
            parts.push(ImageBatch::from_tensor(&self.decoder.infer(&self.encoder.infer(&x))));
        }
        if parts.is_empty() {
            return Ok(ImageBatch::empty());
        }
        ImageBatch::concat(&parts.iter().collect::<Vec<_>>())
    }

    /// Bottleneck activations, flattened channel-major per sample.
    pub fn encode(&self, batch: &ImageBatch) -> Result<LatentBatch> {
        self.check_batch(batch)?;
        let dim = self.latent_dim();
        let mut data = Vec::with_capacity(batch.len() * dim);
        for r in Self::chunks(batch.len()) {
            let z = self.encoder.infer(&batch.to_tensor::<T>(r.start, r.end));
            data.extend(z.to_rows().iter().map(|v| v.to_f32().unwrap()));
        }
        Ok(LatentBatch { n: batch.len(), dim, data })
    }

    /// Latents and reconstructions from a single pass.
    pub fn encode_and_forward(&self, batch: &ImageBatch) -> Result<(LatentBatch, ImageBatch)> {
        self.check_batch(batch)?;
        let dim = self.latent_dim();
        let mut latent = Vec::with_capacity(batch.len() * dim);
        let mut parts = Vec::new();
        for r in Self::chunks(batch.len()) {
            let z = self.encoder.infer(&batch.to_tensor::<T>(r.start, r.end));
            latent.extend(z.to_rows().iter().map(|v| v.to_f32().unwrap()));
            parts.push(ImageBatch::from_tensor(&self.decoder.infer(&z)));
        }
        let out = if parts.is_empty() { ImageBatch::empty() } else { ImageBatch::concat(&parts.iter().collect::<Vec<_>>())? };
        Ok((LatentBatch { n: batch.len(), dim, data: latent }, out))
    }

    /// Per-sample mean absolute error of `f(inputs)` against `targets`.
    pub fn per_sample_mae(&self, inputs: &ImageBatch, targets: &ImageBatch) -> Result<Vec<f64>> {
        inputs.same_shape(targets)?;
        let mut out = Vec::with_capacity(inputs.len());
        for r in Self::chunks(inputs.len()) {
            let rec = self.forward(&inputs.slice(r.start, r.end))?;
            out.extend(rec.per_sample_mae(&targets.slice(r.start, r.end))?);
        }
        Ok(out)
    }

    /// Mean absolute error of `f(inputs)` against `targets` over all pixels.
    pub fn mae(&self, inputs: &ImageBatch, targets: &ImageBatch) -> Result<f64> {
        let v = self.per_sample_mae(inputs, targets)?;
        ensure!(!v.is_empty(), "mean absolute error of an empty batch");
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Weighted reconstruction loss of one minibatch and its gradient with
    /// respect to the encoder and decoder parameters (in that order).
    pub fn loss_and_grad(
        &mut self,
        input: Tensor<T>,
        target: &Tensor<T>,
        parts: &[Part<T>],
        penalty: Penalty,
    ) -> (T, Vec<T>, Vec<T>) {
        let enc_trace = self.encoder.forward_train(input);
        let dec_trace = self.decoder.forward_train(enc_trace.output().clone());
        let (total, means, grad) = reconstruction_loss(dec_trace.output(), target, parts, penalty);
        let mut grads = vec![T::zero(); self.param_count()];
        let (ge, gd) = grads.split_at_mut(self.encoder.param_count());
        let gz = self.decoder.backward(&dec_trace, grad, gd, true).expect("input gradient requested");
        self.encoder.backward(&enc_trace, gz, ge, false);
        (total, means, grads)
    }
}

/// Anything that maps canonical images to reconstructions.
pub trait Reconstruct {
    fn reconstruct(&self, batch: &ImageBatch) -> Result<ImageBatch>;
}

impl<T: Real> Reconstruct for Autoencoder<T> {
    fn reconstruct(&self, batch: &ImageBatch) -> Result<ImageBatch> {
        self.forward(batch)
    }
}

impl Autoencoder<f32> {
    /// Content hash of the architecture and parameters.
    pub fn id(&self) -> String {
        let mut bytes = serde_json::to_vec(&(self.encoder.spec(), self.decoder.spec())).expect("serializable");
        for v in self.encoder.params().iter().chain(self.encoder.state()).chain(self.decoder.params()).chain(self.decoder.state()) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        sha256_bytes(&bytes)
    }
}

/// `mean|D - f(D)| + lambda * mean|F - f(F)|` evaluated as one minibatch
/// objective, with its gradient. With `lambda = 0` or no flashcards it is
/// the plain reconstruction loss.
pub fn joint_loss_and_grad<T: Real>(
    model: &mut Autoencoder<T>,
    current: &ImageBatch,
    replay: Option<(&ImageBatch, f64)>,
    penalty: Penalty,
) -> Result<(T, Vec<T>)> {
    ensure!(!current.is_empty(), "empty current batch");
    let replay = replay.filter(|(_, l)| *l > 0.0);
    let mut parts = vec![Part { samples: 0..current.len(), weight: T::one() }];
    let joined;
    let batch = match replay {
        Some((r, lambda)) => {
            ensure!(!r.is_empty(), "replay weight {lambda} with an empty replay batch");
            parts.push(Part { samples: current.len()..current.len() + r.len(), weight: T::from_f64_lossy(lambda) });
            joined = ImageBatch::concat(&[current, r])?;
            &joined
        }
        None => current,
    };
    model.check_batch(batch)?;
    let x = batch.to_tensor::<T>(0, batch.len());
    let (total, _, grads) = model.loss_and_grad(x.clone(), &x, &parts, penalty);
    Ok((total, grads))
}
