//! One function per subcommand. Each returns the manifest it wrote.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};

use flashcards_core::autoencoder::{build_ae, load_checkpoint, save_checkpoint, train_ae, AeConfig, TrainData, TrainHyper};
use flashcards_core::classify::{split_by_classes, train_st_nil, train_task_il, StNilConfig, TaskIlConfig};
use flashcards_core::continual::{load_tasks, train_sequence_on, SequenceConfig, Strategy};
use flashcards_core::data::{add_noise, train_val_split, DataRoot, NoiseSpec, Split};
use flashcards_core::flashcards::{construct_flashcards, sweep_r, FlashcardConfig};
use flashcards_core::patterns::{generate_patterns, PatternSpec};
use flashcards_core::{io, seed, Error, ImageBatch, Result};

use crate::config::{load, Overrides};
use crate::manifest::RunManifest;

#[derive(Debug, Args)]
pub struct Common {
    /// TOML config file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory; created if missing.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dataset root (default: $FLASHCARDS_DATA or ./data).
    #[arg(long)]
    pub data_root: Option<PathBuf>,
}

impl Common {
    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().ok_or_else(|| Error::Config("--out is required".into()))?;
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        Ok(dir)
    }

    fn data_root(&self) -> DataRoot {
        match &self.data_root {
            Some(p) => DataRoot::new(p),
            None => DataRoot::from_env(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one autoencoder on a dataset.
    TrainAe(TrainAeArgs),
    /// Generate initial patterns (mazes, noise or shapes).
    Patterns(PatternsArgs),
    /// Build a flashcard set from a trained checkpoint.
    MakeFlashcards(MakeFlashcardsArgs),
    /// FLSD and reconstruction change as a function of recursive passes.
    SweepR(SweepArgs),
    /// Continual reconstruction/denoising over a task sequence.
    RunSequence(SequenceArgs),
    /// Task-incremental classification with flashcard distillation.
    TaskIl(TaskIlArgs),
    /// Single-task new-instance learning across jittered sessions.
    StNil(StNilArgs),
    /// Test MAE of a checkpoint on a dataset, printed as one JSON line.
    Eval(EvalArgs),
}

pub fn run(cmd: &Command) -> Result<RunManifest> {
    match cmd {
        Command::TrainAe(a) => train_ae_cmd(a),
        Command::Patterns(a) => patterns_cmd(a),
        Command::MakeFlashcards(a) => make_flashcards_cmd(a),
        Command::SweepR(a) => sweep_cmd(a),
        Command::RunSequence(a) => sequence_cmd(a),
        Command::TaskIl(a) => task_il_cmd(a),
        Command::StNil(a) => st_nil_cmd(a),
        Command::Eval(a) => eval_cmd(a),
    }
}

/// Writes a PNG; failures only warn, the run continues without the plot.
fn plot(manifest: &mut RunManifest, dir: &Path, path: PathBuf, draw: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    match draw(&path) {
        Ok(()) => manifest.add_output(dir, &path),
        Err(e) => {
            eprintln!("warning: skipping plot {}: {e}", path.display());
            Ok(())
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value).expect("serializable")).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn finish(mut manifest: RunManifest, dir: &Path, start: Instant) -> Result<RunManifest> {
    manifest.timings.insert("total".into(), start.elapsed().as_secs_f64());
    manifest.write(dir)?;
    Ok(manifest)
}

fn default_val_fraction() -> f64 {
    0.1
}
fn default_test_split() -> Split {
    Split::Test
}

// ---- train-ae ----

#[derive(Debug, Args)]
pub struct TrainAeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub dataset: Option<String>,
    /// Architecture name, e.g. Blk_4_fil_16 or Blk_4_fil_16_bn.
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub train_limit: Option<usize>,
    #[arg(long)]
    pub test_limit: Option<usize>,
    #[arg(long)]
    pub noise_factor: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainAeConfig {
    pub dataset: String,
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub test_limit: Option<usize>,
    pub arch: AeConfig,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub noise_factor: Option<f64>,
    #[serde(default)]
    pub hyper: TrainHyper,
    #[serde(default)]
    pub seed: u64,
}

fn train_ae_cmd(a: &TrainAeArgs) -> Result<RunManifest> {
    let start = Instant::now();
    let mut o = Overrides::default();
    o.set("dataset", a.dataset.clone())
        .set("arch", a.arch.clone())
        .set_usize("hyper.epochs", a.epochs)
        .set_usize("hyper.batch_size", a.batch_size)
        .set_usize("train_limit", a.train_limit)
        .set_usize("test_limit", a.test_limit)
        .set("noise_factor", a.noise_factor)
        .set_u64("seed", a.common.seed);
    let cfg: TrainAeConfig = load(a.common.config.as_deref(), &o)?;
    let dir = a.common.out_dir()?;
    let root = a.common.data_root();
    let train = root.load(&cfg.dataset, Split::Train, cfg.train_limit)?;
    let test = root.load(&cfg.dataset, Split::Test, cfg.test_limit)?;
    let (tr, va) = train_val_split(&train, cfg.val_fraction, seed::derive(cfg.seed, "val-split", 0))?;
    let hyper = TrainHyper { seed: seed::derive(cfg.seed, "train", 0), ..cfg.hyper.clone() };
    let model = build_ae(&cfg.arch, seed::derive(cfg.seed, "init", 0))?;
    let data = TrainData { train: &tr.images, val: &va.images, replay: None, noise_factor: cfg.noise_factor, noise_replay: true };
    let t_train = Instant::now();
    let report = train_ae(model, &data, &hyper)?;
    let train_secs = t_train.elapsed().as_secs_f64();

    let test_input = match cfg.noise_factor {
        Some(f) if f > 0.0 => add_noise(&test.images, &NoiseSpec { factor: f, seed: seed::derive(cfg.seed, "test-noise", 0) })?,
        _ => test.images.clone(),
    };
    let test_mae = report.model.mae(&test_input, &test.images)?;

    let mut m = RunManifest::new("train-ae", &cfg, Some(cfg.seed));
    m.timings.insert("train".into(), train_secs);
    let ckpt = dir.join("model.ckpt");
    save_checkpoint(&ckpt, &report.model, Some(&report.record()))?;
    m.add_output(&dir, &ckpt)?;
    let hist = dir.join("history.csv");
    write_history(&hist, &report.history)?;
    m.add_output(&dir, &hist)?;
    let shown = test_input.slice(0, test_input.len().min(8));
    let recon = report.model.forward(&shown)?;
    plot(&mut m, &dir, dir.join("recon.png"), |p| io::write_image_grid(p, &[&shown, &recon], 8))?;
    m.summary = serde_json::json!({
        "model": report.model.name(),
        "params": report.model.param_count(),
        "test_mae": test_mae,
        "best_epoch": report.best_epoch,
        "recon_bounds": report.recon_bounds,
        "model_id": report.model.id(),
    });
    finish(m, &dir, start)
}

fn write_history(path: &Path, history: &[flashcards_core::autoencoder::EpochStats]) -> Result<()> {
    let mut s = String::from("epoch,train_loss,train_mae,val_mae,replay_val_mae,monitor\n");
    for e in history {
        let replay = e.replay_val_mae.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{},{},{},{}\n", e.epoch, e.train_loss, e.train_mae, e.val_mae, replay, e.monitor));
    }
    std::fs::write(path, s).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

// ---- patterns ----

#[derive(Debug, Args)]
pub struct PatternsArgs {
    #[command(flatten)]
    pub common: Common,
    /// maze, gaussian or geometric.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
}

fn patterns_cmd(a: &PatternsArgs) -> Result<RunManifest> {
    let start = Instant::now();
    let mut o = Overrides::default();
    o.set("kind", a.kind.clone()).set_usize("count", a.count).set_u64("seed", a.common.seed);
    let spec: PatternSpec = load(a.common.config.as_deref(), &o)?;
    let dir = a.common.out_dir()?;
    let images = generate_patterns(&spec)?;
    let mut m = RunManifest::new("patterns", &spec, Some(spec.seed));
    let p = dir.join("patterns.fct");
    io::save_images(&p, &images)?;
    m.add_output(&dir, &p)?;
    let shown = images.slice(0, images.len().min(32));
    plot(&mut m, &dir, dir.join("patterns.png"), |p| io::write_image_grid(p, &[&shown], 8))?;
    m.summary = serde_json::json!({ "count": images.len() });
    finish(m, &dir, start)
}

// ---- make-flashcards ----

#[derive(Debug, Args)]
pub struct MakeFlashcardsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub n_flashcards: Option<usize>,
    /// Recursive passes r.
    #[arg(long)]
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MakeFlashcardsConfig {
    pub checkpoint: PathBuf,
    pub flashcards: FlashcardConfig,
}

fn make_flashcards_cmd(a: &MakeFlashcardsArgs) -> Result<RunManifest> {
    let start = Instant::now();
    let mut o = Overrides::default();
    o.set("checkpoint", a.checkpoint.as_ref().map(|p| p.display().to_string()))
        .set_usize("flashcards.n_flashcards", a.n_flashcards)
        .set_usize("flashcards.iterations", a.iterations)
        .set_u64("flashcards.seed", a.common.seed);
    let cfg: MakeFlashcardsConfig = load(a.common.config.as_deref(), &o)?;
    let dir = a.common.out_dir()?;
    let (model, _) = load_checkpoint(&cfg.checkpoint)?;
    let set = construct_flashcards(&model, &cfg.flashcards)?;
    let mut m = RunManifest::new("make-flashcards", &cfg, Some(cfg.flashcards.seed));
    let p = dir.join("flashcards.fct");
    set.save(&p)?;
    m.add_output(&dir, &p)?;
    m.add_output(&dir, &dir.join("flashcards.fct.json"))?;
    let shown = set.images.slice(0, set.len().min(32));
    plot(&mut m, &dir, dir.join("flashcards.png"), |p| io::write_image_grid(p, &[&shown], 8))?;
    let (g1, g2) = set.gamma();
    m.summary = serde_json::json!({ "count": set.len(), "source_model_id": set.source_model_id, "gamma1": g1, "gamma2": g2 });
    finish(m, &dir, start)
}

// ---- sweep-r ----

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Reference dataset whose latents the flashcards are compared with.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub r_max: Option<usize>,
    #[arg(long)]
    pub n_flashcards: Option<usize>,
}

fn default_r_max() -> usize {
    50
}
fn default_sweep_limit() -> Option<usize> {
    Some(2000)
}
fn default_sweep_flashcards() -> FlashcardConfig {
    FlashcardConfig::new(2000, 10, 0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub checkpoint: PathBuf,
    pub dataset: String,
    #[serde(default = "default_test_split")]
    pub split: Split,
    #[serde(default = "default_sweep_limit")]
    pub limit: Option<usize>,
    #[serde(default = "default_r_max")]
    pub r_max: usize,
    #[serde(default = "default_sweep_flashcards")]
    pub flashcards: FlashcardConfig,
}

fn sweep_cmd(a: &SweepArgs) -> Result<RunManifest> {
    let start = Instant::now();
    let mut o = Overrides::default();
    o.set("checkpoint", a.checkpoint.as_ref().map(|p| p.display().to_string()))
        .set("dataset", a.dataset.clone())
        .set_usize("limit", a.limit)
        .set_usize("r_max", a.r_max)
        .set_usize("flashcards.n_flashcards", a.n_flashcards)
        .set_u64("flashcards.seed", a.common.seed);
    let cfg: SweepConfig = load(a.common.config.as_deref(), &o)?;
    let dir = a.common.out_dir()?;
    let (model, _) = load_checkpoint(&cfg.checkpoint)?;
    let reference = a.common.data_root().load(&cfg.dataset, cfg.split, cfg.limit)?;
    let report = sweep_r(&model, &cfg.flashcards, &reference.images, cfg.r_max)?;
    let mut m = RunManifest::new("sweep-r", &cfg, Some(cfg.flashcards.seed));
    let csv = dir.join("sweep.csv");
    report.write_csv(&csv)?;
    m.add_output(&dir, &csv)?;
    let json = dir.join("sweep.json");
    write_json(&json, &report)?;
    m.add_output(&dir, &json)?;
    // FLSD and delta-MAE on separate scales, each normalized to its maximum
    let norm = |v: &[f64]| {
        let max = v.iter().copied().filter(|x| x.is_finite()).fold(0.0, f64::max).max(1e-12);
        report.r_values.iter().zip(v).map(|(&r, &y)| (r as f64, y / max)).collect::<Vec<_>>()
    };
    let series = vec![norm(&report.flsd_curve), norm(&report.delta_mae_curve)];
    plot(&mut m, &dir, dir.join("sweep.png"), |p| io::write_line_plot(p, &series))?;
    m.summary = serde_json::json!({
        "recommended_r": report.recommended_r,
        "p1_at_recommended": report.p1_at_recommended,
        "p2_ratio": report.p2_ratio,
        "epsilon1": report.epsilon1,
    });
    finish(m, &dir, start)
}

// ---- run-sequence ----

#[derive(Debug, Args)]
pub struct SequenceArgs {
    #[command(flatten)]
    pub common: Common,
    /// One or more of sft, flashcards, joint, coreset (comma separated);
    /// each runs into its own subdirectory.
    #[arg(long, value_delimiter = ',')]
    pub strategy: Vec<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub noise_factor: Option<f64>,
}

fn strategy_name(s: Strategy) -> String {
    serde_json::to_value(s).ok().and_then(|v| v.as_str().map(str::to_string)).expect("unit variant")
}

fn sequence_cmd(a: &SequenceArgs) -> Result<RunManifest> {
    let start = Instant::now();
    let mut o = Overrides::default();
    o.set("lambda", a.lambda).set_usize("hyper.epochs", a.epochs).set("noise_factor", a.noise_factor).set_u64("seed", a.common.seed);
    let strategies: Vec<Option<Strategy>> = if a.strategy.is_empty() {
        vec![None]
    } else {
        a.strategy.iter().map(|s| s.trim().parse().map(Some)).collect::<Result<_>>()?
    };
    let mut configs = Vec::new();
    for s in &strategies {
        let mut merged = o.clone();
        merged.set("strategy", s.map(strategy_name));
        let cfg: SequenceConfig = load(a.common.config.as_deref(), &merged)?;
        cfg.validate()?;
        configs.push(cfg);
    }
    let dir = a.common.out_dir()?;
    let tasks = load_tasks(&configs[0], &a.common.data_root())?;
    let mut m = RunManifest::new("run-sequence", &configs, Some(configs[0].seed));
    let mut summaries = serde_json::Map::new();
    for cfg in &configs {
        let name = strategy_name(cfg.strategy);
        let sub = dir.join(&name);
        let t0 = Instant::now();
        let result = train_sequence_on(cfg, &tasks)?;
        m.timings.insert(name.clone(), t0.elapsed().as_secs_f64());
        for p in result.write_artifacts(&sub, &tasks)? {
            m.add_output(&dir, &p)?;
        }
        summaries.insert(name, serde_json::to_value(&result.summary).unwrap());
    }
    m.summary = serde_json::Value::Object(summaries);
    finish(m, &dir, start)
}

// ---- task-il ----

#[derive(Debug, Args)]
pub struct TaskIlArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
}

fn default_groups() -> Vec<Vec<u32>> {
    vec![vec![0, 1, 2, 3, 4], vec![5, 6, 7, 8, 9]]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskIlFile {
    pub dataset: String,
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub test_limit: Option<usize>,
    /// Classes of each task, relabelled 0..k within the task.
    #[serde(default = "default_groups")]
    pub groups: Vec<Vec<u32>>,
    pub task_il: TaskIlConfig,
}

fn task_il_cmd(a: &TaskIlArgs) -> Result<RunManifest> {
    let start = Instant::now();
    let mut o = Overrides::default();
    o.set("task_il.lambda", a.lambda).set_usize("task_il.iterations", a.iterations).set_u64("task_il.seed", a.common.seed);
    let cfg: TaskIlFile = load(a.common.config.as_deref(), &o)?;
    cfg.task_il.validate()?;
    let dir = a.common.out_dir()?;
    let root = a.common.data_root();
    let train = root.load(&cfg.dataset, Split::Train, cfg.train_limit)?;
    let test = root.load(&cfg.dataset, Split::Test, cfg.test_limit)?;
    let tasks = split_by_classes(&train, &test, &cfg.groups)?;
    let report = train_task_il(&tasks, &cfg.task_il)?;
    let mut m = RunManifest::new("task-il", &cfg, Some(cfg.task_il.seed));
    for (name, matrix) in [("with_id.csv", &report.with_id), ("without_id.csv", &report.without_id)] {
        let p = dir.join(name);
        matrix.write_csv(&p)?;
        m.add_output(&dir, &p)?;
    }
    // mean accuracy over the tasks seen so far, after each task
    let curve = |mat: &flashcards_core::metrics::MetricsMatrix| {
        (0..mat.tasks.len())
            .map(|t| ((t + 1) as f64, (0..=t).filter_map(|j| mat.get(t, j)).sum::<f64>() / (t + 1) as f64))
            .collect::<Vec<_>>()
    };
    let series = vec![curve(&report.with_id), curve(&report.without_id)];
    plot(&mut m, &dir, dir.join("accuracy.png"), |p| io::write_line_plot(p, &series))?;
    m.summary = serde_json::json!({ "final_with_id": report.final_with_id(), "final_without_id": report.final_without_id() });
    finish(m, &dir, start)
}

// ---- st-nil ----

#[derive(Debug, Args)]
pub struct StNilArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StNilFile {
    pub dataset: String,
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub test_limit: Option<usize>,
    pub st_nil: StNilConfig,
}

fn st_nil_cmd(a: &StNilArgs) -> Result<RunManifest> {
    let start = Instant::now();
    let mut o = Overrides::default();
    o.set("st_nil.lambda", a.lambda).set_usize("st_nil.epochs", a.epochs).set_u64("st_nil.seed", a.common.seed);
    let cfg: StNilFile = load(a.common.config.as_deref(), &o)?;
    cfg.st_nil.validate()?;
    let dir = a.common.out_dir()?;
    let root = a.common.data_root();
    let train = root.load(&cfg.dataset, Split::Train, cfg.train_limit)?;
    let test = root.load(&cfg.dataset, Split::Test, cfg.test_limit)?;
    let report = train_st_nil(&train, &test, &cfg.st_nil)?;
    let mut m = RunManifest::new("st-nil", &cfg, Some(cfg.st_nil.seed));
    let p = dir.join("accuracy.csv");
    let mut s = String::from("session,accuracy,session_samples,flashcards\n");
    for (i, acc) in report.accuracies.iter().enumerate() {
        s.push_str(&format!("{},{acc},{},{}\n", i + 1, report.session_sizes[i], report.flashcards_per_session[i]));
    }
    std::fs::write(&p, s).map_err(|e| Error::Io { path: p.clone(), source: e })?;
    m.add_output(&dir, &p)?;
    let series = vec![report.accuracies.iter().enumerate().map(|(i, &v)| ((i + 1) as f64, v)).collect()];
    plot(&mut m, &dir, dir.join("accuracy.png"), |p| io::write_line_plot(p, &series))?;
    m.summary = serde_json::json!({ "accuracies": report.accuracies });
    finish(m, &dir, start)
}

// ---- eval ----

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub noise_factor: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub checkpoint: PathBuf,
    pub dataset: String,
    #[serde(default = "default_test_split")]
    pub split: Split,
    #[serde(default)]
    pub limit: Option<usize>,
    #[serde(default)]
    pub noise_factor: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Serialize)]
struct EvalLine<'a> {
    checkpoint: &'a Path,
    model: String,
    dataset: &'a str,
    split: Split,
    samples: usize,
    test_mae: f64,
}

fn eval_cmd(a: &EvalArgs) -> Result<RunManifest> {
    let start = Instant::now();
    let mut o = Overrides::default();
    o.set("checkpoint", a.checkpoint.as_ref().map(|p| p.display().to_string()))
        .set("dataset", a.dataset.clone())
        .set("split", a.split.clone())
        .set_usize("limit", a.limit)
        .set("noise_factor", a.noise_factor)
        .set_u64("seed", a.common.seed);
    let cfg: EvalConfig = load(a.common.config.as_deref(), &o)?;
    let (model, _) = load_checkpoint(&cfg.checkpoint)?;
    let set = a.common.data_root().load(&cfg.dataset, cfg.split, cfg.limit)?;
    let input: ImageBatch = match cfg.noise_factor {
        Some(f) if f > 0.0 => add_noise(&set.images, &NoiseSpec { factor: f, seed: seed::derive(cfg.seed, "test-noise", 0) })?,
        _ => set.images.clone(),
    };
    let line = EvalLine {
        checkpoint: &cfg.checkpoint,
        model: model.name(),
        dataset: &cfg.dataset,
        split: cfg.split,
        samples: set.len(),
        test_mae: model.mae(&input, &set.images)?,
    };
    println!("{}", serde_json::to_string(&line).expect("serializable"));
    let mut m = RunManifest::new("eval", &cfg, Some(cfg.seed));
    m.summary = serde_json::to_value(&line).expect("serializable");
    match &a.common.out {
        Some(_) => {
            let dir = a.common.out_dir()?;
            let p = dir.join("eval.json");
            write_json(&p, &line)?;
            m.add_output(&dir, &p)?;
            finish(m, &dir, start)
        }
        None => Ok(m),
    }
}
