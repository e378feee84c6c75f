//! Command implementations behind the `dqclab` binary.
//!
//! ```text
//! dqclab config   [--config FILE]                      print the resolved config
//! dqclab gen-data [--config FILE] [--out DIR] [--labels N] [--samples N] [--data-seed S] [--force]
//! dqclab train    [--config FILE] [--data DIR] [--out DIR] [--head cdl|dqc] [--labels N]
//!                 [--seed S | --seeds A..B] [--paired] [--force]
//! dqclab eval     RUN_DIR... [--paired] [--external DIR] [--out DIR]
//! dqclab bench    [--config FILE] [--head cdl|dqc|both] [--labels N...] [--sweep A:B]
//!                 [--tag TAG] [--log FILE]
//! ```
//!
//! Every table goes to stdout as tab-separated text with a header row. The
//! tensor cache lives under `$DQCLAB_CACHE` when set, else under the data
//! directory. Exit codes: 0 success, 2 configuration or usage error, 3
//! runtime error, 4 simulator capacity exceeded.
//!
//! A data directory holds `lab.toml`, `manifest.tsv`, `dataset.json` and
//! `cache/`. A run directory, named `<head>-n<labels>-seed<seed>-<hash>`
//! after the SHA-256 of its config, holds `config.toml`, `manifest.json`,
//! `loss_curve.tsv`, `best.ckpt` and `stream.tsv`.

mod artifacts;
mod commands;
mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

pub use artifacts::{
    cache_root, prepare, run_dir_name, sha256_hex, stream_tsv, write_atomic, DataDir, DataRecord, Prepared, RunDir,
    RunManifest, RunSummary, CACHE_ENV, CHECKPOINT_FILE, DATA_CONFIG_FILE, DATA_MANIFEST_FILE, DATA_RECORD_FILE,
    LOSS_CURVE_FILE, RUN_CONFIG_FILE, RUN_MANIFEST_FILE, STREAM_FILE,
};
pub use commands::{
    cmd_bench, cmd_eval, cmd_gen_data, cmd_train, format_train_outcomes, BenchOutcome, BenchRequest, EvalReport,
    TrainOutcome, TrainRequest,
};
pub use config::{BenchSection, DataSection, ExtractorSection, LabConfig, PreprocessSection, TrainSection};

use crate::model::HeadKind;
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_CAPACITY: i32 = 4;

/// Exit code class of an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Validation(_) => EXIT_CONFIG,
        Error::Capacity { .. } => EXIT_CAPACITY,
        _ => EXIT_RUNTIME,
    }
}

#[derive(Debug, Parser)]
#[command(name = "dqclab", version, about = "Train, evaluate and benchmark CDL and DQC classification heads")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HeadArg {
    Cdl,
    Dqc,
}

impl From<HeadArg> for HeadKind {
    fn from(h: HeadArg) -> Self {
        match h {
            HeadArg::Cdl => HeadKind::Cdl,
            HeadArg::Dqc => HeadKind::Dqc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchHeads {
    Cdl,
    Dqc,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the resolved configuration as TOML.
    Config {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic long-tailed dataset and fill the tensor cache.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[arg(long)]
        labels: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        data_seed: Option<u64>,
        /// Overwrite an existing dataset.
        #[arg(long)]
        force: bool,
    },
    /// Train heads and write one directory per run.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Data directory from gen-data; without it the data is generated
        /// from the config.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long, value_enum, conflicts_with = "paired")]
        head: Option<HeadArg>,
        #[arg(long)]
        labels: Option<usize>,
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// Inclusive range `A..B` or a comma list.
        #[arg(long, value_parser = parse_seeds)]
        seeds: Option<SeedList>,
        /// Train both heads on every seed.
        #[arg(long)]
        paired: bool,
        /// Retrain runs that already exist.
        #[arg(long)]
        force: bool,
    },
    /// Score run checkpoints on a test split.
    Eval {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Pair CDL and DQC runs by seed and test their differences.
        #[arg(long)]
        paired: bool,
        /// Data directory whose test split replaces the runs' own.
        #[arg(long)]
        external: Option<PathBuf>,
        /// Directory for auroc.tsv, comparison.tsv and volcano.tsv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time training steps on a zero batch.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        head: BenchHeads,
        #[arg(long, num_args = 1.., default_values_t = [8usize, 14, 19])]
        labels: Vec<usize>,
        /// Inclusive label-count range `A:B`, both heads.
        #[arg(long, value_parser = parse_sweep, conflicts_with = "labels")]
        sweep: Option<(usize, usize)>,
        #[arg(long, default_value = "")]
        tag: String,
        #[arg(long, default_value = "bench_log.tsv")]
        log: PathBuf,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
    },
}

/// Seeds given as one flag value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

fn parse_seeds(s: &str) -> std::result::Result<SeedList, String> {
    let bad = || format!("expected A..B or a comma list, got {s:?}");
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok(SeedList((a..=b).collect()));
    }
    s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect::<std::result::Result<_, _>>().map(SeedList)
}

fn parse_sweep(s: &str) -> std::result::Result<(usize, usize), String> {
    let bad = || format!("expected A:B, got {s:?}");
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn load_config(path: Option<&Path>) -> Result<LabConfig> {
    path.map_or_else(|| Ok(LabConfig::default()), LabConfig::load)
}

/// Runs one parsed command, writing tables to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let emit = |out: &mut dyn Write, text: &str| out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e));
    match cli.command {
        Command::Config { config } => {
            let cfg = load_config(config.as_deref())?;
            cfg.validate()?;
            emit(out, &cfg.to_toml())
        }
        Command::GenData {
            config,
            out: dir,
            labels,
            samples,
            data_seed,
            force,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(n) = labels {
                cfg.data.num_labels = n;
            }
            if let Some(n) = samples {
                cfg.data.num_samples = n;
            }
            if let Some(s) = data_seed {
                cfg.data.seed = s;
            }
            let record = cmd_gen_data(&cfg, &dir, force)?;
            let mut text = String::from("label\ttrain\tvalidation\ttest\n");
            for (r, p) in record.positives.iter().enumerate() {
                text.push_str(&format!("label{r}\t{}\t{}\t{}\n", p[0], p[1], p[2]));
            }
            emit(out, &text)?;
            emit(
                out,
                &format!("# {} samples in {}, data {}\n", record.num_samples, dir.display(), record.prepared_fingerprint),
            )
        }
        Command::Train {
            config,
            data,
            out: dir,
            head,
            labels,
            seed,
            seeds,
            paired,
            force,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(h) = head {
                cfg.train.head = h.into();
            }
            match (labels, &data) {
                (Some(n), _) => cfg.data.num_labels = n,
                (None, Some(d)) => cfg.data.num_labels = LabConfig::load(&d.join(DATA_CONFIG_FILE))?.data.num_labels,
                (None, None) => {}
            }
            let seeds = seeds.map_or_else(|| vec![seed.unwrap_or(cfg.train.seed)], |s| s.0);
            let req = TrainRequest {
                config: cfg,
                config_path: config,
                data_dir: data,
                out: dir,
                seeds,
                paired,
                force,
            };
            emit(out, &format_train_outcomes(&cmd_train(&req)?))
        }
        Command::Eval {
            runs,
            paired,
            external,
            out: dir,
        } => {
            let report = cmd_eval(&runs, paired, external.as_deref())?;
            emit(out, &report.auroc_tsv())?;
            if let Some(t) = report.comparison_tsv() {
                emit(out, "\n")?;
                emit(out, &t)?;
            }
            if let Some(v) = &report.volcano {
                emit(out, "\n")?;
                emit(out, &v.to_tsv())?;
            }
            if let Some(dir) = dir {
                report.write(&dir)?;
            }
            Ok(())
        }
        Command::Bench {
            config,
            head,
            labels,
            sweep,
            tag,
            log,
            warmup,
            steps,
            batch,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(w) = warmup {
                cfg.bench.warmup_steps = w;
            }
            if let Some(s) = steps {
                cfg.bench.measured_steps = s;
            }
            if let Some(b) = batch {
                cfg.bench.batch_size = b;
            }
            let heads = match head {
                BenchHeads::Cdl => vec![HeadKind::Cdl],
                BenchHeads::Dqc => vec![HeadKind::Dqc],
                BenchHeads::Both => vec![HeadKind::Cdl, HeadKind::Dqc],
            };
            let req = BenchRequest {
                config: cfg,
                heads,
                labels,
                sweep,
                tag,
                log,
            };
            emit(out, &cmd_bench(&req)?.to_tsv())
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors go to stderr.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("dqclab: {e}");
            exit_code(&e)
        }
    }
}
