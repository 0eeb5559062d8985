//! End-to-end acceptance checks, one line per criterion.
//!
//! `ACCEPTANCE_ONLY=1,2,3` runs a subset. Dataset-backed criteria read from
//! `$FLASHCARDS_DATA`, falling back to the workspace `data/` directory.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use common::{avg_mae_oracle, bwt_oracle, fwt_oracle, is_spanning_tree, maze_edges};
use flashcards_core::autoencoder::{build_ae, joint_loss_and_grad, train_ae, AeConfig, Autoencoder, TrainData, TrainHyper};
use flashcards_core::classify::{split_by_classes, train_st_nil, train_task_il, ClassifierConfig, StNilConfig, TaskIlConfig};
use flashcards_core::continual::{load_tasks, train_from_flashcards, train_sequence_on, SequenceConfig, Strategy, TaskData, TaskSpec};
use flashcards_core::data::{train_val_split, DataRoot, SessionJitter, Split, DATA_ROOT_ENV};
use flashcards_core::flashcards::{construct_flashcards, recursive_pass, sweep_r, FlashcardConfig};
use flashcards_core::metrics::{avg_mae, bwt, flsd, fwt, median, MetricKind, MetricsMatrix};
use flashcards_core::nn::loss::Penalty;
use flashcards_core::nn::OptimizerKind;
use flashcards_core::patterns::{generate_patterns, maze_tree, PatternKind, PatternSpec};
use flashcards_core::{seed, ImageBatch, LatentBatch};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn data_root() -> DataRoot {
    match std::env::var_os(DATA_ROOT_ENV) {
        Some(p) => DataRoot::new(p),
        None => DataRoot::new(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")),
    }
}

fn bn16() -> AeConfig {
    AeConfig::parse("Blk_4_fil_16_bn").unwrap()
}

fn c1_metric_oracles() -> Outcome {
    let cases = [
        (vec![vec![0.02, 0.30, 0.41], vec![0.05, 0.03, 0.38], vec![0.09, 0.06, 0.04]], vec![0.45, 0.44, 0.47]),
        (vec![vec![0.10, 0.25, 0.33], vec![0.12, 0.11, 0.29], vec![0.12, 0.11, 0.10]], vec![0.50, 0.50, 0.50]),
        (vec![vec![0.2, 0.9, 0.7], vec![0.6, 0.1, 0.8], vec![0.7, 0.5, 0.05]], vec![0.3, 0.2, 0.9]),
    ];
    for (i, (rows, r)) in cases.iter().enumerate() {
        let mm = MetricsMatrix::from_rows(rows.clone(), Some(r.clone()), MetricKind::Mae).map_err(|e| e.to_string())?;
        let got = (avg_mae(&mm).unwrap(), bwt(&mm).unwrap(), fwt(&mm).unwrap());
        let want = (avg_mae_oracle(rows), bwt_oracle(rows), fwt_oracle(rows, r));
        if got != want {
            return Err(format!("matrix {i}: library {got:?} vs loops {want:?}"));
        }
    }
    let forgetting = vec![vec![0.05, 0.4, 0.4], vec![0.20, 0.05, 0.4], vec![0.30, 0.25, 0.05]];
    let b = bwt(&MetricsMatrix::from_rows(forgetting, None, MetricKind::Mae).unwrap()).unwrap();
    check(b < 0.0, format!("3 matrices exact; BWT under forgetting {b:.3}"))
}

fn gaussian(n: usize, mean: &[f64], seed: u64) -> LatentBatch {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * mean.len());
    for _ in 0..n {
        for m in mean {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push((m + z) as f32);
        }
    }
    LatentBatch { n, dim: mean.len(), data }
}

fn c2_flsd() -> Outcome {
    let x = gaussian(2000, &[0.0; 8], 1);
    let self_d = flsd(&x, &x).map_err(|e| e.to_string())?;
    let a = gaussian(100_000, &[0.0, 0.0], 2);
    let b = gaussian(100_000, &[3.0, 0.0], 3);
    let d = flsd(&a, &b).map_err(|e| e.to_string())?;
    check(self_d.abs() <= 1e-6 && (d - 9.0).abs() <= 0.1, format!("flsd(X,X) = {self_d:.2e}, shifted Gaussians {d:.4}"))
}

fn c3_parity() -> Outcome {
    let table = [
        ("Blk_4_fil_16", 24_083),
        ("Blk_4_fil_32", 94_243),
        ("Blk_4_fil_64", 372_803),
        ("Blk_4_fil_128", 1_482_883),
        ("Blk_3_fil_64", 298_947),
        ("Blk_2_fil_32", 57_251),
    ];
    let mut bad = Vec::new();
    for (name, want) in table {
        let got = build_ae(&AeConfig::parse(name).unwrap(), 0).unwrap().param_count();
        if got != want {
            bad.push(format!("{name}: {got} != {want}"));
        }
    }
    check(bad.is_empty(), if bad.is_empty() { "6/6 configurations exact".into() } else { bad.join("; ") })
}

fn c4_gradient() -> Outcome {
    let mut model: Autoencoder<f64> = build_ae(&AeConfig::new(4, 2), 3).unwrap().cast();
    let (current, _) = flashcards_core::data::synthetic_blobs(2, 1);
    let (replay, _) = flashcards_core::data::synthetic_blobs(2, 2);
    let loss = |m: &mut Autoencoder<f64>| joint_loss_and_grad(m, &current, Some((&replay, 0.7)), Penalty::L1).unwrap();
    let (_, grad) = loss(&mut model);
    let params = model.params_flat();
    let mut rng = seed::rng(0);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(0..params.len());
        let mut p = params.clone();
        p[k] += h;
        model.set_params_flat(&p);
        let up = loss(&mut model).0;
        p[k] -= 2.0 * h;
        model.set_params_flat(&p);
        let down = loss(&mut model).0;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-12));
    }
    check(worst < 1e-4, format!("worst relative error {worst:.2e} over 100 coordinates"))
}

struct Capture {
    model: Autoencoder,
    test: ImageBatch,
}

/// Blk_4_fil_16 (batch-norm variant) on 5,000 MNIST training samples.
fn train_capture_model(root: &DataRoot) -> Result<Capture, String> {
    let s = 1;
    let train = root.load("mnist", Split::Train, Some(5000)).map_err(|e| e.to_string())?;
    let test = root.load("mnist", Split::Test, Some(2000)).map_err(|e| e.to_string())?;
    let (tr, va) = train_val_split(&train, 0.1, s).map_err(|e| e.to_string())?;
    let hyper = TrainHyper { epochs: 20, batch_size: 32, seed: s, ..Default::default() };
    let report = train_ae(build_ae(&bn16(), s).unwrap(), &TrainData::plain(&tr.images, &va.images), &hyper).map_err(|e| e.to_string())?;
    Ok(Capture { model: report.model, test: test.images })
}

fn c5_capture(cap: &Capture) -> Outcome {
    let original = cap.model.mae(&cap.test, &cap.test).unwrap();
    let untrained = build_ae(&bn16(), 1).unwrap().mae(&cap.test, &cap.test).unwrap();
    let set = construct_flashcards(&cap.model, &FlashcardConfig::new(5000, 10, 8)).map_err(|e| e.to_string())?;
    let hyper = TrainHyper { epochs: 20, batch_size: 32, seed: 2, ..Default::default() };
    let retrained = train_from_flashcards(&set, &bn16(), &hyper, Some(&cap.test)).map_err(|e| e.to_string())?;
    let fc = retrained.original_test_mae.unwrap();
    check(
        fc <= 3.0 * original && fc <= 0.5 * untrained,
        format!(
            "test MAE original {original:.4}, flashcard-trained {fc:.4} ({:.2}x), untrained {untrained:.4} ({:.2}x)",
            fc / original,
            fc / untrained
        ),
    )
}

fn c6_sweep(cap: &Capture) -> Outcome {
    let report = sweep_r(&cap.model, &FlashcardConfig::new(2000, 10, 8), &cap.test, 50).map_err(|e| e.to_string())?;
    let r = report.recommended_r;
    let (f1, fr) = (report.flsd_curve[1], report.flsd_curve[r]);
    let (d1, d10) = (report.delta_mae_curve[1], report.delta_mae_curve[10]);
    check(
        (5..=30).contains(&r) && fr < 0.7 * f1 && d10 < d1,
        format!("minimum at r = {r}, flsd {fr:.2} vs flsd(1) {f1:.2}; delta-MAE r=10 {d10:.4} vs r=1 {d1:.4}"),
    )
}

fn sequence_config(strategy: Strategy, seed: u64, noise: Option<f64>) -> SequenceConfig {
    let task = |name: &str| TaskSpec { dataset: name.into(), train_limit: Some(3000), test_limit: Some(1000) };
    SequenceConfig {
        tasks: vec![task("synthetic-blobs"), task("mnist"), task("fashion-mnist")],
        strategy,
        arch: bn16(),
        lambda: 1.0,
        flashcards: FlashcardConfig::new(1000, 10, 0),
        coreset_size: 1000,
        hyper: TrainHyper { epochs: 15, batch_size: 32, ..Default::default() },
        seed,
        val_fraction: 0.1,
        noise_factor: noise,
        noise_replay: true,
    }
}

fn run_sequence(root: &DataRoot, strategy: Strategy, seed: u64, noise: Option<f64>) -> Result<(f64, f64), String> {
    let cfg = sequence_config(strategy, seed, noise);
    let tasks: Vec<TaskData> = load_tasks(&cfg, root).map_err(|e| e.to_string())?;
    let res = train_sequence_on(&cfg, &tasks).map_err(|e| e.to_string())?;
    Ok((res.summary.avg_mae, res.summary.bwt.unwrap()))
}

fn c7_forgetting(root: &DataRoot) -> Outcome {
    let (mut sft, mut fc, mut core) = (Vec::new(), Vec::new(), Vec::new());
    for s in 1..=3 {
        sft.push(run_sequence(root, Strategy::Sft, s, None)?);
        fc.push(run_sequence(root, Strategy::Flashcards, s, None)?);
        core.push(run_sequence(root, Strategy::Coreset, s, None)?);
    }
    let med = |v: &[(f64, f64)], f: fn(&(f64, f64)) -> f64| median(&v.iter().map(f).collect::<Vec<_>>());
    let (bwt_sft, bwt_fc) = (med(&sft, |r| r.1), med(&fc, |r| r.1));
    let (avg_fc, avg_core) = (med(&fc, |r| r.0), med(&core, |r| r.0));
    check(
        bwt_fc.abs() <= 0.5 * bwt_sft.abs() && avg_fc <= 1.3 * avg_core,
        format!(
            "median BWT flashcards {bwt_fc:.4} vs SFT {bwt_sft:.4}; AvgMAE flashcards {avg_fc:.4} vs coreset {avg_core:.4} (SFT {:.4})",
            med(&sft, |r| r.0)
        ),
    )
}

fn c8_denoising(root: &DataRoot) -> Outcome {
    let (sft, _) = run_sequence(root, Strategy::Sft, 1, Some(0.1))?;
    let (fc, _) = run_sequence(root, Strategy::Flashcards, 1, Some(0.1))?;
    check(fc < sft, format!("AvgMAE against clean targets: flashcards {fc:.4}, SFT {sft:.4}"))
}

fn c9_task_il(root: &DataRoot) -> Outcome {
    let train = root.load("mnist", Split::Train, Some(6000)).map_err(|e| e.to_string())?;
    let test = root.load("mnist", Split::Test, Some(2000)).map_err(|e| e.to_string())?;
    let tasks = split_by_classes(&train, &test, &[vec![0, 1, 2, 3, 4], vec![5, 6, 7, 8, 9]]).map_err(|e| e.to_string())?;
    let run = |lambda: f64, s: u64| -> Result<f64, String> {
        let cfg = TaskIlConfig {
            classifier: ClassifierConfig::default(),
            iterations: 1000,
            ae_iterations: None,
            batch_size: 32,
            optimizer: OptimizerKind::Adam { lr: 1e-4 },
            lambda,
            latent_regularization: true,
            flashcards: FlashcardConfig::new(2000, 10, 3),
            seed: s,
        };
        Ok(train_task_il(&tasks, &cfg).map_err(|e| e.to_string())?.final_without_id())
    };
    let (mut with, mut without) = (Vec::new(), Vec::new());
    for s in 0..3 {
        with.push(run(1.0, s)?);
        without.push(run(0.0, s)?);
    }
    let (a, b) = (median(&with), median(&without));
    check(a >= b + 10.0, format!("median without-id accuracy: distillation {a:.2}%, lambda = 0 {b:.2}%"))
}

fn c10_st_nil(root: &DataRoot) -> Outcome {
    let train = root.load("cifar10", Split::Train, Some(5000)).map_err(|e| e.to_string())?;
    let test = root.load("cifar10", Split::Test, Some(2000)).map_err(|e| e.to_string())?;
    let run = |lambda: f64| -> Result<Vec<f64>, String> {
        let cfg = StNilConfig {
            classifier: ClassifierConfig::default(),
            sessions: vec![
                SessionJitter { brightness: 0.0, saturation: 0.0 },
                SessionJitter { brightness: 0.15, saturation: 0.3 },
                SessionJitter { brightness: -0.15, saturation: -0.3 },
            ],
            epochs: 20,
            batch_size: 32,
            optimizer: OptimizerKind::Sgd { lr: 1e-3, momentum: 0.9 },
            lambda,
            flashcards: FlashcardConfig::new(500, 10, 5),
            ae: bn16(),
            ae_hyper: TrainHyper { epochs: 20, batch_size: 32, ..Default::default() },
            seed: 0,
        };
        Ok(train_st_nil(&train, &test, &cfg).map_err(|e| e.to_string())?.accuracies)
    };
    let fc = run(1.0)?;
    let naive = run(0.0)?;
    let (last_fc, last_naive) = (fc[fc.len() - 1], naive[naive.len() - 1]);
    check(
        last_fc >= last_naive && fc[2] >= fc[0],
        format!("flashcards {fc:.2?}, naive {naive:.2?}"),
    )
}

fn c11_properties() -> Outcome {
    for s in 0..100u64 {
        let g = [4, 8, 16][(s % 3) as usize];
        let (right, down) = maze_tree(g, &mut seed::rng(s));
        if !is_spanning_tree(g * g, &maze_edges(g, &right, &down)) {
            return Err(format!("maze seed {s} is not a spanning tree"));
        }
    }
    let model = build_ae(&AeConfig::new(2, 4), 5).unwrap();
    let x = generate_patterns(&PatternSpec::maze(6, 3)).unwrap();
    for (a, b) in [(0, 3), (2, 3), (4, 1)] {
        let lhs = recursive_pass(&model, &x, a + b).unwrap();
        let rhs = recursive_pass(&model, &recursive_pass(&model, &x, a).unwrap(), b).unwrap();
        if lhs != rhs {
            return Err(format!("recursion composition fails for a = {a}, b = {b}"));
        }
    }
    for kind in [PatternKind::Maze, PatternKind::Gaussian, PatternKind::Geometric] {
        let spec = PatternSpec { kind, count: 8, cell_sizes: vec![2, 4, 8], colorize: true, seed: 4 };
        if generate_patterns(&spec).unwrap() != generate_patterns(&spec).unwrap() {
            return Err(format!("{kind:?} patterns not deterministic"));
        }
    }
    let fcfg = FlashcardConfig::new(10, 4, 2);
    let set = construct_flashcards(&model, &fcfg).unwrap();
    if set != construct_flashcards(&model, &fcfg).unwrap() {
        return Err("flashcards not deterministic".into());
    }
    let raw = generate_patterns(&fcfg.pattern_spec()).unwrap();
    let prev = recursive_pass(&model, &raw, 3).unwrap();
    let deltas = prev.per_sample_mae(&set.images).unwrap();
    let gamma2 = deltas.iter().copied().fold(f64::MIN, f64::max);
    if (set.gamma().1 - gamma2).abs() > 1e-9 || !set.satisfies_p1(gamma2 * 1.01) || set.satisfies_p1(gamma2 * 0.99) {
        return Err(format!("P1 bookkeeping: stored gamma2 {} vs recomputed {gamma2}", set.gamma().1));
    }

    let root = DataRoot::new("unused");
    let blobs = root.load("synthetic-blobs", Split::Train, Some(200)).unwrap();
    let test = root.load("synthetic-blobs", Split::Test, Some(100)).unwrap();
    let mk = |n: usize| -> Vec<TaskData> {
        (0..n)
            .map(|c| {
                let g = [c as u32];
                TaskData::from_sets(&blobs.filter_classes(&g).unwrap().take(24), &test.filter_classes(&g).unwrap(), 0.2, c as u64)
                    .unwrap()
            })
            .collect()
    };
    let cfg = |n: usize| SequenceConfig {
        tasks: (0..n).map(|_| TaskSpec { dataset: "synthetic-blobs".into(), train_limit: None, test_limit: None }).collect(),
        strategy: Strategy::Flashcards,
        arch: AeConfig::new(1, 4),
        lambda: 1.0,
        flashcards: FlashcardConfig::new(16, 2, 0),
        coreset_size: 0,
        hyper: TrainHyper { epochs: 1, batch_size: 16, ..Default::default() },
        seed: 1,
        val_fraction: 0.2,
        noise_factor: None,
        noise_replay: true,
    };
    let run = |n: usize| train_sequence_on(&cfg(n), &mk(n)).unwrap();
    let (a, b) = (run(2), run(2));
    if a.metrics.m != b.metrics.m {
        return Err("sequence training not deterministic".into());
    }
    let peaks = [a.summary.peak_aux_images, run(3).summary.peak_aux_images, run(5).summary.peak_aux_images];
    check(
        peaks.iter().all(|&p| p == 16),
        format!("100 maze seeds, composition, determinism, P1 bookkeeping ok; flashcard storage peaks for 2/3/5 tasks {peaks:?}"),
    )
}

type Criterion<'a> = (u32, &'a str, Box<dyn FnOnce() -> Outcome + 'a>);

fn main() -> ExitCode {
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |n: u32| only.as_ref().is_none_or(|v| v.contains(&n));
    let root = data_root();

    let criteria: Vec<Criterion> = vec![
        (1, "metric oracles", Box::new(c1_metric_oracles)),
        (2, "FLSD correctness", Box::new(c2_flsd)),
        (3, "architecture parity", Box::new(c3_parity)),
        (4, "gradient check", Box::new(c4_gradient)),
    ];
    let mut failed = 0;
    let mut report = |n: u32, name: &str, out: Outcome, secs: f64| {
        let (tag, detail) = match out {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n:>2} {tag} {name}: {detail} [{secs:.1} s]");
    };
    for (n, name, f) in criteria {
        if wanted(n) {
            let t = Instant::now();
            let out = f();
            report(n, name, out, t.elapsed().as_secs_f64());
        }
    }
    // criteria 5 and 6 share one trained model
    let mut capture: Option<Result<Capture, String>> = None;
    for (n, name, f) in [(5, "knowledge capture", c5_capture as fn(&Capture) -> Outcome), (6, "r-sweep shape", c6_sweep)] {
        if wanted(n) {
            let t = Instant::now();
            let out = match capture.get_or_insert_with(|| train_capture_model(&root)) {
                Ok(c) => f(c),
                Err(e) => Err(e.clone()),
            };
            report(n, name, out, t.elapsed().as_secs_f64());
        }
    }
    let rest: Vec<Criterion> = vec![
        (7, "forgetting mitigation", Box::new(|| c7_forgetting(&root))),
        (8, "continual denoising", Box::new(|| c8_denoising(&root))),
        (9, "Task-IL ordinal", Box::new(|| c9_task_il(&root))),
        (10, "ST-NIL ordinal", Box::new(|| c10_st_nil(&root))),
        (11, "property suites", Box::new(c11_properties)),
    ];
    for (n, name, f) in rest {
        if wanted(n) {
            let t = Instant::now();
            let out = f();
            report(n, name, out, t.elapsed().as_secs_f64());
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
