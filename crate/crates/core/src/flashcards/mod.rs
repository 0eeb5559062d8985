//! Flashcard construction: random patterns passed recursively through a
//! trained autoencoder, plus the r-sweep used to pick the iteration count.

mod sweep;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoencoder::{Autoencoder, Reconstruct};
use crate::batch::ImageBatch;
use crate::error::{ensure, Error, Result};
use crate::io;
use crate::patterns::{generate_patterns, PatternKind, PatternSpec};

pub use sweep::{sweep_r, RSweepReport, FLSD_MAX_SAMPLES};

fn default_iterations() -> usize {
    10
}
fn default_kind() -> PatternKind {
    PatternKind::Maze
}
fn default_cell_sizes() -> Vec<usize> {
    vec![2, 4, 8]
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlashcardConfig {
    pub n_flashcards: usize,
    /// Recursive passes `r`.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_kind")]
    pub pattern: PatternKind,
    #[serde(default = "default_cell_sizes")]
    pub cell_sizes: Vec<usize>,
    #[serde(default = "default_true")]
    pub colorize: bool,
    #[serde(default)]
    pub seed: u64,
}

impl FlashcardConfig {
    pub fn new(n_flashcards: usize, iterations: usize, seed: u64) -> Self {
        Self {
            n_flashcards,
            iterations,
            pattern: default_kind(),
            cell_sizes: default_cell_sizes(),
            colorize: true,
            seed,
        }
    }

    pub fn pattern_spec(&self) -> PatternSpec {
        PatternSpec {
            kind: self.pattern,
            count: self.n_flashcards,
            cell_sizes: self.cell_sizes.clone(),
            colorize: self.colorize,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_flashcards >= 1, "n_flashcards must be at least 1");
        self.pattern_spec().validate()
    }
}

/// `f` applied `r` times, each output fed back as the next input.
pub fn recursive_pass<M: Reconstruct + ?Sized>(model: &M, batch: &ImageBatch, r: usize) -> Result<ImageBatch> {
    let mut x = batch.clone();
    for _ in 0..r {
        x = model.reconstruct(&x)?;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlashcardMeta {
    pub source_model_id: String,
    pub r_used: usize,
    pub pattern_seed: u64,
    pub pattern: PatternKind,
    pub count: usize,
    /// Per-sample mean `|F_r - F_{r-1}|`; all zero when `r = 0`.
    pub delta_mae: Vec<f64>,
    pub images_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlashcardSet {
    pub images: ImageBatch,
    pub source_model_id: String,
    pub r_used: usize,
    pub pattern_seed: u64,
    pub pattern: PatternKind,
    pub delta_mae: Vec<f64>,
}

impl FlashcardSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `(gamma1, gamma2)`: min and max of the per-sample last-step change.
    pub fn gamma(&self) -> (f64, f64) {
        let lo = self.delta_mae.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.delta_mae.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Whether the last recursive step changed every flashcard by less than
    /// `epsilon1`, the model's lowest reconstruction error on real data.
    pub fn satisfies_p1(&self, epsilon1: f64) -> bool {
        self.r_used > 0 && self.gamma().1 < epsilon1
    }

    fn sidecar(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    /// Writes the images as a tensor file at `path` and metadata to `<path>.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        io::save_images(path, &self.images)?;
        let meta = FlashcardMeta {
            source_model_id: self.source_model_id.clone(),
            r_used: self.r_used,
            pattern_seed: self.pattern_seed,
            pattern: self.pattern,
            count: self.len(),
            delta_mae: self.delta_mae.clone(),
            images_sha256: io::sha256_file(path)?,
        };
        let side = Self::sidecar(path);
        std::fs::write(&side, serde_json::to_string_pretty(&meta).expect("serializable")).map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let side = Self::sidecar(path);
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let meta: FlashcardMeta = serde_json::from_str(&text).map_err(|e| Error::corrupt(&side, e.to_string()))?;
        if io::sha256_file(path)? != meta.images_sha256 {
            return Err(Error::corrupt(path, "image tensor does not match the hash in its metadata"));
        }
        let images = io::load_images(path, None)?;
        if images.len() != meta.count || meta.delta_mae.len() != meta.count {
            return Err(Error::corrupt(&side, "sample count disagrees with the image tensor"));
        }
        images.validate_canonical()?;
        Ok(Self {
            images,
            source_model_id: meta.source_model_id,
            r_used: meta.r_used,
            pattern_seed: meta.pattern_seed,
            pattern: meta.pattern,
            delta_mae: meta.delta_mae,
        })
    }
}

/// Generates `n_flashcards` patterns and passes them `iterations` times
/// through the model. Inference only: the model is never modified.
pub fn construct_flashcards(model: &Autoencoder, config: &FlashcardConfig) -> Result<FlashcardSet> {
    config.validate()?;
    let patterns = generate_patterns(&config.pattern_spec())?;
    let (images, delta_mae) = if config.iterations == 0 {
        let n = patterns.len();
        (patterns, vec![0.0; n])
    } else {
        let prev = recursive_pass(model, &patterns, config.iterations - 1)?;
        let last = model.forward(&prev)?;
        let delta = last.per_sample_mae(&prev)?;
        (last, delta)
    };
    Ok(FlashcardSet {
        images,
        source_model_id: model.id(),
        r_used: config.iterations,
        pattern_seed: config.seed,
        pattern: config.pattern,
        delta_mae,
    })
}
