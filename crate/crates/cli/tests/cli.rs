use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flashcards_cli::manifest::{RunManifest, MANIFEST_FILE};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_flashcards"));
    c.env_remove("FLASHCARDS_DATA");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const TRAIN_AE: &str = r#"
dataset = "synthetic-blobs"
train_limit = 60
test_limit = 16
arch = "Blk_1_fil_4"

[hyper]
epochs = 2
batch_size = 16
"#;

fn train_ae(dir: &Path, seed: &str) -> PathBuf {
    let cfg = write(dir, "ae.toml", TRAIN_AE);
    let out = dir.join(format!("ae-{seed}"));
    let o = run(&["train-ae", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn train_ae_emits_four_files_and_a_valid_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = train_ae(tmp.path(), "1");
    let mut names: Vec<String> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["history.csv", "manifest.json", "model.ckpt", "recon.png"]);
    let m = RunManifest::load(&out).unwrap();
    assert_eq!(m.command, "train-ae");
    assert_eq!(m.seed, Some(1));
    assert_eq!(m.outputs.len(), 3);
    m.verify(&out).unwrap();
    std::fs::write(out.join("history.csv"), "tampered").unwrap();
    assert!(m.verify(&out).is_err());
}

#[test]
fn same_seed_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = RunManifest::load(&train_ae(tmp.path(), "5")).unwrap();
    let b_dir = tmp.path().join("again");
    std::fs::create_dir(&b_dir).unwrap();
    let b = RunManifest::load(&train_ae(&b_dir, "5")).unwrap();
    let hashes = |m: &RunManifest| m.outputs.iter().map(|o| (o.path.clone(), o.sha256.clone())).collect::<Vec<_>>();
    assert_eq!(hashes(&a), hashes(&b));
    let c = RunManifest::load(&train_ae(tmp.path(), "6")).unwrap();
    assert_ne!(hashes(&a), hashes(&c));
}

#[test]
fn unknown_config_field_exits_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", &format!("{TRAIN_AE}\nlearning_rat = 0.1\n"));
    let o = run(&["train-ae", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("learning_rat"), "{err}");
    assert!(err.contains("line"), "{err}");
}

#[test]
fn missing_dataset_exits_with_code_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", &TRAIN_AE.replace("synthetic-blobs", "mnist"));
    let o = bin()
        .args(["train-ae", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()])
        .args(["--data-root", tmp.path().join("nowhere").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn flags_override_config_values() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "ae.toml", TRAIN_AE);
    let out = tmp.path().join("o");
    let o = run(&["train-ae", "--config", cfg.to_str().unwrap(), "--epochs", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let m = RunManifest::load(&out).unwrap();
    assert_eq!(m.config["hyper"]["epochs"], 1);
    assert_eq!(std::fs::read_to_string(out.join("history.csv")).unwrap().lines().count(), 2);
}

#[test]
fn eval_prints_one_json_line() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = train_ae(tmp.path(), "1").join("model.ckpt");
    let o = run(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--dataset", "synthetic-blobs", "--limit", "10"]);
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert!(v["test_mae"].as_f64().unwrap() >= 0.0);
    assert_eq!(v["samples"], 10);
}

#[test]
fn sweep_writes_csv_with_fixed_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = train_ae(tmp.path(), "1").join("model.ckpt");
    let out = tmp.path().join("sweep");
    let o = run(&[
        "sweep-r", "--checkpoint", ckpt.to_str().unwrap(), "--dataset", "synthetic-blobs", "--limit", "20",
        "--r-max", "4", "--n-flashcards", "20", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "r,flsd,delta_mae");
    assert_eq!(csv.lines().count(), 6);
    assert!(out.join("sweep.png").exists());
    RunManifest::load(&out).unwrap().verify(&out).unwrap();
}

#[test]
fn flashcards_and_patterns_commands_write_sets() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = train_ae(tmp.path(), "1").join("model.ckpt");
    let out = tmp.path().join("fc");
    let o = run(&["make-flashcards", "--checkpoint", ckpt.to_str().unwrap(), "--n-flashcards", "12", "--iterations", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("flashcards.fct").exists() && out.join("flashcards.fct.json").exists());
    let pat = tmp.path().join("pat");
    let o = run(&["patterns", "--kind", "maze", "--count", "5", "--seed", "2", "--out", pat.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(RunManifest::load(&pat).unwrap().summary["count"], 5);
}

/// Three visually distinct tasks: blobs, then two directories of stripes
/// and checkerboards.
fn write_task_dirs(root: &Path) -> (PathBuf, PathBuf) {
    let stripes = root.join("stripes");
    let checks = root.join("checks");
    for (dir, f) in [(&stripes, 0u32), (&checks, 1u32)] {
        for split in ["train", "test"] {
            let d = dir.join(split);
            std::fs::create_dir_all(&d).unwrap();
            for i in 0..40u32 {
                let period = 2 + i % 6;
                let img = image::RgbImage::from_fn(32, 32, |x, y| {
                    let on = if f == 0 { (x / period) % 2 == 0 } else { (x / period + y / period) % 2 == 0 };
                    let c = (i * 37 % 200) as u8 + 55;
                    if on { image::Rgb([c, 255 - c, c / 2]) } else { image::Rgb([0, 0, 0]) }
                });
                img.save(d.join(format!("{i:03}.png"))).unwrap();
            }
        }
    }
    (stripes, checks)
}

#[test]
fn run_sequence_writes_one_matrix_per_strategy() {
    let tmp = tempfile::tempdir().unwrap();
    let (stripes, checks) = write_task_dirs(tmp.path());
    let cfg = write(
        tmp.path(),
        "seq.toml",
        &format!(
            r#"
strategy = "sft"
arch = "Blk_2_fil_8_bn"
lambda = 1.0
seed = 4

[flashcards]
n_flashcards = 64
iterations = 5

[hyper]
epochs = 6
batch_size = 16

[[tasks]]
dataset = "synthetic-blobs"
train_limit = 40
test_limit = 40

[[tasks]]
dataset = "dir:{}"

[[tasks]]
dataset = "dir:{}"
"#,
            stripes.display(),
            checks.display()
        ),
    );
    let out = tmp.path().join("seq");
    let o = run(&["run-sequence", "--config", cfg.to_str().unwrap(), "--strategy", "sft,flashcards", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for s in ["sft", "flashcards"] {
        let csv = std::fs::read_to_string(out.join(s).join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5, "{csv}");
    }
    let m = RunManifest::load(&out).unwrap();
    m.verify(&out).unwrap();
    let bwt = |s: &str| m.summary[s]["bwt"].as_f64().unwrap();
    assert!(bwt("flashcards").abs() < bwt("sft").abs(), "flashcards {} vs sft {}", bwt("flashcards"), bwt("sft"));
    assert!(!tmp.path().join(MANIFEST_FILE).exists());
}

#[test]
fn shipped_configs_parse_and_validate() {
    use flashcards_cli::commands::{StNilFile, TaskIlFile};
    use flashcards_cli::config::{load, Overrides};
    use flashcards_core::continual::SequenceConfig;
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let none = Overrides::default();
    let seq: SequenceConfig = load(Some(&dir.join("desk_sequence.toml")), &none).unwrap();
    seq.validate().unwrap();
    assert_eq!(seq.tasks.len(), 3);
    let til: TaskIlFile = load(Some(&dir.join("task_il_mnist.toml")), &none).unwrap();
    til.task_il.validate().unwrap();
    let st: StNilFile = load(Some(&dir.join("st_nil_cifar10.toml")), &none).unwrap();
    st.st_nil.validate().unwrap();
    assert_eq!(st.st_nil.sessions.len(), 3);
}
