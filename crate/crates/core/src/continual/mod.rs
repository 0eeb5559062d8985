//! Task sequences of reconstruction (or denoising) tasks with a choice of
//! forgetting countermeasure, and single-task retraining from flashcards.

mod ledger;

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{build_ae, save_checkpoint, train_ae, AeConfig, Autoencoder, Reconstruct, Replay, TrainData, TrainHyper, TrainedModelReport, TrainingRecord};
use crate::batch::ImageBatch;
use crate::data::{add_noise, train_val_split, DataRoot, LabeledImageSet, NoiseSpec, Split};
use crate::error::{ensure, Error, Result};
use crate::flashcards::{construct_flashcards, FlashcardConfig, FlashcardSet};
use crate::io;
use crate::metrics::{avg_mae, bwt, fwt, mae, MetricKind, MetricsMatrix};
use crate::seed;

pub use ledger::{LedgerEntry, StorageLedger};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Sequential fine-tuning, no countermeasure.
    Sft,
    /// Replay of flashcards built from the previous model.
    Flashcards,
    /// Training on the union of all tasks seen so far.
    Joint,
    /// Replay of a uniform random subset of each past task.
    Coreset,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sft" => Ok(Strategy::Sft),
            "flashcards" => Ok(Strategy::Flashcards),
            "joint" => Ok(Strategy::Joint),
            "coreset" => Ok(Strategy::Coreset),
            _ => Err(Error::Config(format!("unknown strategy `{s}` (expected sft, flashcards, joint or coreset)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub dataset: String,
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub test_limit: Option<usize>,
}

fn default_lambda() -> f64 {
    1.0
}
fn default_val_fraction() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}
fn default_flashcards() -> FlashcardConfig {
    FlashcardConfig::new(0, 10, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub tasks: Vec<TaskSpec>,
    pub strategy: Strategy,
    pub arch: AeConfig,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// `n_flashcards = 0` means 10% of the next task's training samples.
    #[serde(default = "default_flashcards")]
    pub flashcards: FlashcardConfig,
    #[serde(default)]
    pub coreset_size: usize,
    #[serde(default)]
    pub hyper: TrainHyper,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    /// Continual denoising when set.
    #[serde(default)]
    pub noise_factor: Option<f64>,
    #[serde(default = "default_true")]
    pub noise_replay: bool,
}

impl SequenceConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.tasks.is_empty(), "a sequence needs at least one task");
        ensure!(self.lambda >= 0.0 && self.lambda.is_finite(), "lambda must be >= 0");
        ensure!(self.val_fraction > 0.0 && self.val_fraction < 1.0, "val_fraction must be in (0, 1)");
        if let Some(f) = self.noise_factor {
            ensure!(f >= 0.0, "noise_factor must be >= 0");
        }
        if self.strategy == Strategy::Coreset {
            ensure!(self.coreset_size >= 1, "coreset strategy needs coreset_size >= 1");
        }
        self.arch.validate()?;
        self.hyper.validate()?;
        // a zero count stands for "10% of the next task"
        FlashcardConfig { n_flashcards: self.flashcards.n_flashcards.max(1), ..self.flashcards.clone() }.validate()
    }

    /// Hyperparameters used for task `t` (0-based): the shared settings with
    /// a per-task seed.
    pub fn task_hyper(&self, t: usize) -> TrainHyper {
        TrainHyper { seed: seed::derive(self.seed, "task", t as u64), ..self.hyper.clone() }
    }

    pub fn init_seed(&self) -> u64 {
        seed::derive(self.seed, "init", 0)
    }
}

/// Train/validation/test images of one task.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub name: String,
    pub train: ImageBatch,
    pub val: ImageBatch,
    pub test: ImageBatch,
}

impl TaskData {
    /// Splits `val_fraction` of `train` off for validation.
    pub fn from_sets(train: &LabeledImageSet, test: &LabeledImageSet, val_fraction: f64, seed: u64) -> Result<Self> {
        let (tr, va) = train_val_split(train, val_fraction, seed)?;
        Ok(Self { name: train.name.clone(), train: tr.images, val: va.images, test: test.images.clone() })
    }
}

/// Loads every task of the sequence from `root`.
pub fn load_tasks(config: &SequenceConfig, root: &DataRoot) -> Result<Vec<TaskData>> {
    config
        .tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let train = root.load(&t.dataset, Split::Train, t.train_limit)?;
            let test = root.load(&t.dataset, Split::Test, t.test_limit)?;
            TaskData::from_sets(&train, &test, config.val_fraction, seed::derive(config.seed, "val-split", i as u64))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceSummary {
    pub strategy: Strategy,
    pub avg_mae: f64,
    pub bwt: Option<f64>,
    pub fwt: Option<f64>,
    pub wall_time_s: f64,
    pub peak_aux_images: usize,
}

#[derive(Debug, Clone)]
pub struct SequenceResult {
    pub metrics: MetricsMatrix,
    /// Model after each task.
    pub checkpoints: Vec<Autoencoder>,
    pub records: Vec<TrainingRecord>,
    pub ledger: StorageLedger,
    pub summary: SequenceSummary,
}

/// `mean|D - f(D)| + lambda * mean|F - f(F)|`.
pub fn replay_loss<M: Reconstruct + ?Sized>(model: &M, current: &ImageBatch, flashcards: &ImageBatch, lambda: f64) -> Result<f64> {
    ensure!(lambda >= 0.0, "lambda must be >= 0");
    let base = mae(current, &model.reconstruct(current)?)?;
    if lambda == 0.0 {
        return Ok(base);
    }
    ensure!(!flashcards.is_empty(), "lambda {lambda} with no flashcards");
    Ok(base + lambda * mae(flashcards, &model.reconstruct(flashcards)?)?)
}

fn test_input(config: &SequenceConfig, j: usize, test: &ImageBatch) -> Result<ImageBatch> {
    match config.noise_factor {
        Some(f) if f > 0.0 => add_noise(test, &NoiseSpec { factor: f, seed: seed::derive(config.seed, "test-noise", j as u64) }),
        _ => Ok(test.clone()),
    }
}

/// Runs the sequence on preloaded tasks. Row `t` of the metrics matrix is
/// filled right after task `t` from the model at that point.
pub fn train_sequence_on(config: &SequenceConfig, tasks: &[TaskData]) -> Result<SequenceResult> {
    config.validate()?;
    ensure!(tasks.len() == config.tasks.len(), "{} task datasets for {} configured tasks", tasks.len(), config.tasks.len());
    let start = Instant::now();
    let n_tasks = tasks.len();
    let test_inputs: Vec<ImageBatch> = tasks.iter().enumerate().map(|(j, t)| test_input(config, j, &t.test)).collect::<Result<_>>()?;
    let eval = |model: &Autoencoder, j: usize| model.mae(&test_inputs[j], &tasks[j].test);

    let mut model = build_ae(&config.arch, config.init_seed())?;
    let mut metrics = MetricsMatrix::new(tasks.iter().map(|t| t.name.clone()).collect(), MetricKind::Mae);
    metrics.set_random_init_ref((0..n_tasks).map(|j| eval(&model, j)).collect::<Result<_>>()?)?;

    let mut ledger = StorageLedger::default();
    let mut coresets: Vec<ImageBatch> = Vec::new();
    let (mut checkpoints, mut records) = (Vec::new(), Vec::new());
    for (t, task) in tasks.iter().enumerate() {
        let hyper = config.task_hyper(t);
        let mut replay_images: Option<ImageBatch> = None;
        let (train, val);
        match config.strategy {
            Strategy::Sft => {
                ledger.record(t, 0);
                (train, val) = (task.train.clone(), task.val.clone());
            }
            Strategy::Flashcards => {
                if t > 0 && config.lambda > 0.0 {
                    let mut fc = config.flashcards.clone();
                    if fc.n_flashcards == 0 {
                        fc.n_flashcards = (task.train.len() / 10).max(1);
                    }
                    fc.seed = seed::derive(config.flashcards.seed ^ config.seed, "flashcards", t as u64);
                    // rebuilt from the latest model only; older sets are dropped
                    let set = construct_flashcards(&model, &fc)?;
                    ledger.record(t, set.len());
                    replay_images = Some(set.images);
                } else {
                    ledger.record(t, 0);
                }
                (train, val) = (task.train.clone(), task.val.clone());
            }
            Strategy::Coreset => {
                if t > 0 {
                    replay_images = Some(ImageBatch::concat(&coresets.iter().collect::<Vec<_>>())?);
                }
                ledger.record(t, coresets.iter().map(ImageBatch::len).sum());
                (train, val) = (task.train.clone(), task.val.clone());
            }
            Strategy::Joint => {
                let past: usize = tasks[..t].iter().map(|p| p.train.len() + p.val.len()).sum();
                ledger.record(t, past);
                train = ImageBatch::concat(&tasks[..=t].iter().map(|p| &p.train).collect::<Vec<_>>())?;
                val = ImageBatch::concat(&tasks[..=t].iter().map(|p| &p.val).collect::<Vec<_>>())?;
            }
        }
        let data = TrainData {
            train: &train,
            val: &val,
            replay: replay_images.as_ref().map(|images| Replay { images, lambda: config.lambda }),
            noise_factor: config.noise_factor,
            noise_replay: config.noise_replay,
        };
        let report = train_ae(model, &data, &hyper)?;
        drop(replay_images);
        model = report.model.clone();
        for j in 0..n_tasks {
            metrics.set(t, j, eval(&model, j)?)?;
        }
        if config.strategy == Strategy::Coreset {
            let k = config.coreset_size.min(task.train.len());
            let mut idx: Vec<usize> = (0..task.train.len()).collect();
            idx.shuffle(&mut seed::derived_rng(config.seed, "coreset", t as u64));
            coresets.push(task.train.select(&idx[..k]));
        }
        records.push(report.record());
        checkpoints.push(model.clone());
    }
    let summary = SequenceSummary {
        strategy: config.strategy,
        avg_mae: avg_mae(&metrics)?,
        bwt: if n_tasks >= 2 { Some(bwt(&metrics)?) } else { None },
        fwt: if n_tasks >= 2 { Some(fwt(&metrics)?) } else { None },
        wall_time_s: start.elapsed().as_secs_f64(),
        peak_aux_images: ledger.peak(),
    };
    Ok(SequenceResult { metrics, checkpoints, records, ledger, summary })
}

/// Loads the configured tasks from `root` and runs the sequence.
pub fn train_sequence(config: &SequenceConfig, root: &DataRoot) -> Result<SequenceResult> {
    let tasks = load_tasks(config, root)?;
    train_sequence_on(config, &tasks)
}

impl SequenceResult {
    /// Writes `metrics.csv`, `summary.json`, `ledger.json`, one checkpoint and
    /// one input/reconstruction grid per task into `dir`. Returns the paths.
    pub fn write_artifacts(&self, dir: &Path, tasks: &[TaskData]) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths = Vec::new();
        let p = dir.join("metrics.csv");
        self.metrics.write_csv(&p)?;
        paths.push(p);
        for (name, value) in [
            ("summary.json", serde_json::to_string_pretty(&self.summary)),
            ("ledger.json", serde_json::to_string_pretty(&self.ledger)),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, value.expect("serializable")).map_err(|e| Error::io(&p, e))?;
            paths.push(p);
        }
        for (t, (model, record)) in self.checkpoints.iter().zip(&self.records).enumerate() {
            let p = dir.join(format!("task{}.ckpt", t + 1));
            save_checkpoint(&p, model, Some(record))?;
            paths.push(p);
        }
        let last = self.checkpoints.last().expect("at least one task");
        for (t, task) in tasks.iter().enumerate() {
            let shown = task.test.slice(0, task.test.len().min(8));
            let p = dir.join(format!("recon_task{}.png", t + 1));
            io::write_image_grid(&p, &[&shown, &last.forward(&shown)?], 8)?;
            paths.push(p);
        }
        Ok(paths)
    }
}

#[derive(Debug, Clone)]
pub struct RetrainReport {
    pub report: TrainedModelReport,
    /// Test MAE on the original data, when an evaluation set was given.
    pub original_test_mae: Option<f64>,
}

/// Trains a fresh model of architecture `config` on flashcards alone
/// (90/10 train/validation split of the set).
pub fn train_from_flashcards(
    flashcards: &FlashcardSet,
    config: &AeConfig,
    hyper: &TrainHyper,
    original_test: Option<&ImageBatch>,
) -> Result<RetrainReport> {
    ensure!(flashcards.len() >= 2, "need at least 2 flashcards to train");
    let set = LabeledImageSet {
        images: flashcards.images.clone(),
        labels: None,
        num_classes: None,
        name: "flashcards".into(),
        split: Split::Train,
    };
    let (tr, va) = train_val_split(&set, 0.1, seed::derive(hyper.seed, "flashcard-split", 0))?;
    let model = build_ae(config, seed::derive(hyper.seed, "init", 0))?;
    let report = train_ae(model, &TrainData::plain(&tr.images, &va.images), hyper)?;
    let original_test_mae = original_test.map(|t| report.model.mae(t, t)).transpose()?;
    Ok(RetrainReport { report, original_test_mae })
}
