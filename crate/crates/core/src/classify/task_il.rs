use serde::{Deserialize, Serialize};

use super::{sample_indices, train_step, Classifier, ClassifierConfig, ClassifierOptim, DistillTargets, Minibatch};
use crate::autoencoder::{train_ae, Autoencoder, Replay, TrainData, TrainHyper};
use crate::data::{train_val_split, LabeledImageSet};
use crate::error::{ensure, Error, Result};
use crate::flashcards::{construct_flashcards, FlashcardConfig};
use crate::metrics::{MetricKind, MetricsMatrix};
use crate::nn::loss::Penalty;
use crate::nn::OptimizerKind;
use crate::seed;

/// One task of a Task-IL sequence; labels are local to the task (`0..k`).
#[derive(Debug, Clone)]
pub struct ClassTask {
    pub name: String,
    pub train: LabeledImageSet,
    pub test: LabeledImageSet,
}

impl ClassTask {
    fn classes(&self) -> Result<usize> {
        self.train.num_classes.ok_or_else(|| Error::InvalidArgument(format!("task `{}` has no class count", self.name)))
    }

    fn labels<'a>(set: &'a LabeledImageSet, task: &str) -> Result<&'a [u32]> {
        set.labels.as_deref().ok_or_else(|| Error::InvalidArgument(format!("task `{task}` has no labels")))
    }
}

/// One task per class group, e.g. `[[0,1,2,3,4],[5,6,7,8,9]]`.
pub fn split_by_classes(train: &LabeledImageSet, test: &LabeledImageSet, groups: &[Vec<u32>]) -> Result<Vec<ClassTask>> {
    groups
        .iter()
        .map(|g| {
            let name = format!("{}[{}]", train.name, g.iter().map(u32::to_string).collect::<Vec<_>>().join(","));
            Ok(ClassTask { name, train: train.filter_classes(g)?, test: test.filter_classes(g)? })
        })
        .collect()
}

fn default_iterations() -> usize {
    5000
}
fn default_batch() -> usize {
    256
}
fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam { lr: 1e-4 }
}
fn default_lambda() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskIlConfig {
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Autoencoder iterations per task; defaults to `iterations`.
    #[serde(default)]
    pub ae_iterations: Option<usize>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Also match the previous latents on flashcards.
    #[serde(default = "default_true")]
    pub latent_regularization: bool,
    pub flashcards: FlashcardConfig,
    #[serde(default)]
    pub seed: u64,
}

impl TaskIlConfig {
    pub fn validate(&self) -> Result<()> {
        self.classifier.validate()?;
        ensure!(self.iterations >= 1 && self.batch_size >= 1, "iterations and batch_size must be positive");
        ensure!(self.lambda >= 0.0 && self.lambda.is_finite(), "lambda must be >= 0");
        if self.lambda > 0.0 {
            self.flashcards.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TaskIlReport {
    /// Accuracy (percent) using the task's own head.
    pub with_id: MetricsMatrix,
    /// Accuracy (percent) choosing among all heads trained so far.
    pub without_id: MetricsMatrix,
}

impl TaskIlReport {
    fn last_row_mean(m: &MetricsMatrix) -> f64 {
        let t = m.tasks.len() - 1;
        (0..=t).filter_map(|j| m.get(t, j)).sum::<f64>() / (t + 1) as f64
    }

    /// Mean with-id accuracy over all tasks after the last task.
    pub fn final_with_id(&self) -> f64 {
        Self::last_row_mean(&self.with_id)
    }

    pub fn final_without_id(&self) -> f64 {
        Self::last_row_mean(&self.without_id)
    }
}

/// Trains `classifier` on `task` with head `head` for `iterations` steps,
/// replaying distillation targets alongside every minibatch when given.
fn train_task(
    classifier: &mut Classifier,
    optim: &mut ClassifierOptim,
    task: &ClassTask,
    head: usize,
    distill: Option<&DistillTargets>,
    config: &TaskIlConfig,
    stream: u64,
) -> Result<()> {
    let labels = ClassTask::labels(&task.train, &task.name)?;
    let n = task.train.len();
    ensure!(n > 0, "task `{}` has no training samples", task.name);
    let bs = config.batch_size.min(n);
    let mut rng = seed::derived_rng(config.seed, "task-il-batches", stream);
    for _ in 0..config.iterations {
        let idx = sample_indices(n, bs, &mut rng);
        let images = task.train.images.select(&idx);
        let y: Vec<u32> = idx.iter().map(|&i| labels[i]).collect();
        let replay_idx = distill.map(|d| sample_indices(d.len(), bs, &mut rng));
        let batch = Minibatch {
            current: &images,
            labels: &y,
            head,
            replay: distill.zip(replay_idx.as_deref()),
        };
        train_step(classifier, optim, &batch)?;
    }
    Ok(())
}

/// Autoencoder update after a task: the classifier's encoder is copied in,
/// then encoder and decoder train on the task's images (MSE), with the
/// previous flashcards replayed.
fn update_autoencoder(
    ae: Option<Autoencoder>,
    classifier: &Classifier,
    task: &ClassTask,
    previous: Option<&crate::batch::ImageBatch>,
    config: &TaskIlConfig,
    t: usize,
) -> Result<Autoencoder> {
    let ae = match ae {
        Some(mut ae) => {
            classifier.copy_encoder_into(&mut ae);
            ae
        }
        None => classifier.autoencoder(seed::derive(config.seed, "task-il-decoder", 0))?,
    };
    let (tr, va) = train_val_split(&task.train, 0.1, seed::derive(config.seed, "task-il-ae-split", t as u64))?;
    let iters = config.ae_iterations.unwrap_or(config.iterations);
    let bs = config.batch_size.min(tr.len());
    let epochs = (iters * bs).div_ceil(tr.len()).max(1);
    let hyper = TrainHyper {
        epochs,
        optimizer: config.optimizer,
        batch_size: bs,
        early_stop_patience: epochs,
        seed: seed::derive(config.seed, "task-il-ae", t as u64),
        loss: Penalty::L2,
        verbose: false,
    };
    let replay = previous.map(|images| Replay { images, lambda: config.lambda });
    let data = TrainData { train: &tr.images, val: &va.images, replay, noise_factor: None, noise_replay: false };
    Ok(train_ae(ae, &data, &hyper)?.model)
}

/// Task-incremental learning with one head per task. With `lambda > 0`, an
/// autoencoder sharing the classifier's encoder builds flashcards after each
/// task; the next task then distills the previous heads' soft scores (and
/// latents) on those flashcards.
pub fn train_task_il(tasks: &[ClassTask], config: &TaskIlConfig) -> Result<TaskIlReport> {
    config.validate()?;
    ensure!(!tasks.is_empty(), "no tasks given");
    for task in tasks {
        ClassTask::labels(&task.train, &task.name)?;
        ClassTask::labels(&task.test, &task.name)?;
    }
    let classes: Vec<usize> = tasks.iter().map(ClassTask::classes).collect::<Result<_>>()?;
    let n_tasks = tasks.len();
    let mut clf = Classifier::new(&config.classifier, &classes, seed::derive(config.seed, "task-il-init", 0))?;
    let mut optim = ClassifierOptim::new(config.optimizer, &clf);
    let names: Vec<String> = tasks.iter().map(|t| t.name.clone()).collect();
    let mut with_id = MetricsMatrix::new(names.clone(), MetricKind::Accuracy);
    let mut without_id = MetricsMatrix::new(names, MetricKind::Accuracy);
    let reference: Vec<f64> = tasks
        .iter()
        .enumerate()
        .map(|(j, task)| clf.accuracy_with_id(&task.test.images, ClassTask::labels(&task.test, &task.name)?, j))
        .collect::<Result<_>>()?;
    with_id.set_random_init_ref(reference.clone())?;
    without_id.set_random_init_ref(reference)?;

    let mut ae: Option<Autoencoder> = None;
    let mut flashcards: Option<crate::batch::ImageBatch> = None;
    for (t, task) in tasks.iter().enumerate() {
        let distill = match &flashcards {
            Some(images) if t > 0 => Some(DistillTargets::from_classifier(&clf, images.clone(), t, config.latent_regularization, config.lambda)?),
            _ => None,
        };
        train_task(&mut clf, &mut optim, task, t, distill.as_ref(), config, t as u64)?;
        drop(distill);
        for (j, eval) in tasks.iter().enumerate() {
            let labels = ClassTask::labels(&eval.test, &eval.name)?;
            with_id.set(t, j, clf.accuracy_with_id(&eval.test.images, labels, j)?)?;
            without_id.set(t, j, clf.accuracy_without_id(&eval.test.images, labels, j, t.max(j) + 1)?)?;
        }
        if config.lambda > 0.0 && t + 1 < n_tasks {
            let model = update_autoencoder(ae.take(), &clf, task, flashcards.as_ref(), config, t)?;
            let mut fc = config.flashcards.clone();
            fc.seed = seed::derive(config.flashcards.seed ^ config.seed, "task-il-flashcards", t as u64);
            flashcards = Some(construct_flashcards(&model, &fc)?.images);
            ae = Some(model);
        }
    }
    Ok(TaskIlReport { with_id, without_id })
}
