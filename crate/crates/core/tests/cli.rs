//! End-to-end runs of the `dqclab` binary on a small configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dqclab::cli::{RunDir, EXIT_CAPACITY, EXIT_CONFIG, EXIT_RUNTIME};

const SMALL: &str = r#"
[data]
num_labels = 4
num_samples = 300
height = 16
width = 16
min_split_positives = 2
tail_frequency = 0.15
signal_strength = 3.0

[preprocess]
resize = 18
crop = 16

[extractor]
pool = 4
feature_dim = 64

[train]
max_epochs = 3
lr = 0.01
"#;

fn dqclab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dqclab"))
        .current_dir(dir)
        .env_remove("DQCLAB_CACHE")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = dqclab(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

/// Run directories listed by a train command, in output order.
fn run_dirs(root: &Path, table: &str) -> Vec<PathBuf> {
    table.lines().skip(1).map(|l| root.join(l.split('\t').next().unwrap())).collect()
}

#[test]
fn gen_data_writes_manifest_cache_and_index() {
    let ws = workspace();
    let table = ok(ws.path(), &["gen-data", "--config", "small.toml", "--out", "d"]);
    assert!(table.starts_with("label\ttrain\tvalidation\ttest\n"));
    for f in ["lab.toml", "manifest.tsv", "dataset.json", "cache/index.sqlite"] {
        assert!(ws.path().join("d").join(f).exists(), "{f}");
    }
    let manifest = fs::read_to_string(ws.path().join("d/manifest.tsv")).unwrap();
    let count = |s: &str| manifest.lines().filter(|l| l.split('\t').nth(1) == Some(s)).count();
    assert_eq!((count("train"), count("validation"), count("test")), (210, 30, 60));
    assert_eq!(manifest.lines().nth(1).unwrap().split('\t').nth(2).unwrap().len(), 4);

    let refused = dqclab(ws.path(), &["gen-data", "--config", "small.toml", "--out", "d"]);
    assert_eq!(refused.status.code(), Some(EXIT_CONFIG));

    ok(ws.path(), &["gen-data", "--config", "small.toml", "--out", "d", "--force"]);
    assert_eq!(fs::read_to_string(ws.path().join("d/manifest.tsv")).unwrap(), manifest);
}

#[test]
fn gen_data_label_override_and_cache_env() {
    let ws = workspace();
    let cache = ws.path().join("elsewhere");
    let out = Command::new(env!("CARGO_BIN_EXE_dqclab"))
        .current_dir(ws.path())
        .env("DQCLAB_CACHE", &cache)
        .args(["gen-data", "--config", "small.toml", "--out", "d19", "--labels", "19", "--samples", "2000"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().filter(|l| l.starts_with("label") && !l.starts_with("label\t")).count(), 19);
    assert!(cache.join("index.sqlite").exists());
    assert!(!ws.path().join("d19/cache").exists());
}

#[test]
fn paired_heads_share_stream_and_runs_reproduce() {
    let ws = workspace();
    ok(ws.path(), &["gen-data", "--config", "small.toml", "--out", "d"]);
    let cdl = run_dirs(ws.path(), &ok(ws.path(), &["train", "--config", "small.toml", "--data", "d", "--head", "cdl", "--seed", "0"]));
    let dqc = run_dirs(ws.path(), &ok(ws.path(), &["train", "--config", "small.toml", "--data", "d", "--head", "dqc", "--seed", "0"]));
    let (cdl, dqc) = (RunDir::open(&cdl[0]).unwrap(), RunDir::open(&dqc[0]).unwrap());
    let (a, b) = (cdl.epoch_digests().unwrap(), dqc.epoch_digests().unwrap());
    let common = a.len().min(b.len());
    assert!(common >= 1);
    assert_eq!(a[..common], b[..common]);
    for f in ["config.toml", "manifest.json", "loss_curve.tsv", "best.ckpt", "stream.tsv"] {
        assert!(cdl.root.join(f).exists(), "{f}");
    }

    // The run's own config reproduces it bit for bit.
    let config = cdl.root.join("config.toml");
    let ckpt = fs::read(cdl.checkpoint_path()).unwrap();
    let again = ok(
        ws.path(),
        &["train", "--config", config.to_str().unwrap(), "--out", "rerun", "--force"],
    );
    let rerun = run_dirs(ws.path(), &again);
    assert_eq!(rerun[0].file_name(), cdl.root.file_name());
    assert_eq!(fs::read(rerun[0].join("best.ckpt")).unwrap(), ckpt);
    assert_eq!(fs::read_to_string(rerun[0].join("config.toml")).unwrap(), fs::read_to_string(&config).unwrap());
}

#[test]
fn paired_seeds_train_evaluate_and_compare() {
    let ws = workspace();
    let table = ok(ws.path(), &["train", "--config", "small.toml", "--seeds", "0..4", "--paired"]);
    let dirs = run_dirs(ws.path(), &table);
    assert_eq!(dirs.len(), 10);
    let args: Vec<&str> = dirs.iter().map(|d| d.to_str().unwrap()).collect();

    let mut eval = vec!["eval", "--paired", "--out", "report"];
    eval.extend(&args);
    let text = ok(ws.path(), &eval);
    assert!(text.contains("label\ttask\tcdl_mean\tcdl_std\tdqc_mean\tdqc_std\tt\tp\tpct_diff\n"));
    for f in ["auroc.tsv", "comparison.tsv", "volcano.tsv"] {
        assert!(ws.path().join("report").join(f).exists(), "{f}");
    }
    let comparison = fs::read_to_string(ws.path().join("report/comparison.tsv")).unwrap();
    assert_eq!(comparison.lines().count(), 1 + 4 + 1);

    let single = ok(ws.path(), &["eval", args[0]]);
    assert!(single.starts_with("head\tseed\tlabel\tauroc\n"));
    assert!(!single.contains("pct_diff"));
    assert_eq!(single.lines().count(), 1 + 4 + 1);

    let unpaired = dqclab(ws.path(), &["eval", "--paired", args[0], args[2]]);
    assert_eq!(unpaired.status.code(), Some(EXIT_CONFIG));

    ok(ws.path(), &["gen-data", "--config", "small.toml", "--out", "ext", "--data-seed", "99"]);
    let mut external = vec!["eval", "--paired", "--external", "ext"];
    external.extend(&args);
    let text = ok(ws.path(), &external);
    assert!(text.contains("\texternal\t"));
    assert!(!text.contains("\tinternal\t"));
}

#[test]
fn damaged_checkpoint_is_a_runtime_error() {
    let ws = workspace();
    let dirs = run_dirs(ws.path(), &ok(ws.path(), &["train", "--config", "small.toml", "--head", "cdl"]));
    let ckpt = dirs[0].join("best.ckpt");
    let mut bytes = fs::read(&ckpt).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&ckpt, bytes).unwrap();
    let out = dqclab(ws.path(), &["eval", dirs[0].to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_RUNTIME));
}

#[test]
fn capacity_and_usage_errors_have_their_own_codes() {
    let ws = workspace();
    let big = dqclab(ws.path(), &["train", "--head", "dqc", "--labels", "30"]);
    assert_eq!(big.status.code(), Some(EXIT_CAPACITY));
    let bench = dqclab(ws.path(), &["bench", "--head", "dqc", "--labels", "25", "--log", "b.tsv"]);
    assert_eq!(bench.status.code(), Some(EXIT_CAPACITY));
    let usage = dqclab(ws.path(), &["train", "--no-such-flag"]);
    assert_eq!(usage.status.code(), Some(EXIT_CONFIG));
    fs::write(ws.path().join("bad.toml"), "[train]\nlearning_rate = 1\n").unwrap();
    let bad = dqclab(ws.path(), &["config", "--config", "bad.toml"]);
    assert_eq!(bad.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn bench_appends_rows_and_sweeps() {
    let ws = workspace();
    let quick = ["--warmup", "1", "--steps", "2", "--batch", "2", "--log", "logs/bench.tsv", "--config", "small.toml"];
    let mut args = vec!["bench", "--head", "dqc", "--labels", "2", "3", "4", "--tag", "first"];
    args.extend(quick);
    let table = ok(ws.path(), &args);
    assert!(table.starts_with("head\tn\tmean_s\tstd_s\tsteps\tstate_bytes\n"));
    assert_eq!(table.lines().count(), 4);
    let log = ws.path().join("logs/bench.tsv");
    let first = fs::read_to_string(&log).unwrap();
    assert_eq!(first.lines().count(), 4);

    let mut sweep = vec!["bench", "--sweep", "2:4", "--tag", "second"];
    sweep.extend(quick);
    let table = ok(ws.path(), &sweep);
    assert!(table.starts_with("n\thead\tmean_s\tstd_s\tstate_bytes\n"));
    assert!(table.contains("# dqc: "));
    let second = fs::read_to_string(&log).unwrap();
    assert!(second.starts_with(&first));
    assert_eq!(second.lines().count(), 4 + 6);
    assert!(!ws.path().join("logs/bench.tsv.lock").exists());
}
