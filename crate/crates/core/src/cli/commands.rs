use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use super::artifacts::*;
use super::LabConfig;
use crate::analytics::{
    auroc_table, comparison_table, evaluate_labels, label_sets, volcano_data, PairedComparison, VolcanoTable,
};
use crate::bench::{append_log, format_results, run_bench, scaling_sweep, BenchLock, BenchResult, ScalingTable};
use crate::datapipe::{PreparedData, Split};
use crate::model::{FeatureExtractor, HeadKind};
use crate::trainer::{paired_seed_protocol, predict, train, Checkpoint, FeatureSet, TrainRun};
use crate::{Error, Result};

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn label_names(n: usize) -> Vec<String> {
    (0..n).map(|r| format!("label{r}")).collect()
}

/// Generates the dataset `config` describes into `out`: the resolved config,
/// the manifest, a dataset record, and the preprocessed tensors in the cache.
pub fn cmd_gen_data(config: &LabConfig, out: &Path, force: bool) -> Result<DataRecord> {
    config.validate()?;
    if out.join(DATA_MANIFEST_FILE).exists() && !force {
        return Err(Error::Config(format!(
            "{} already holds a dataset; pass --force to overwrite it",
            out.display()
        )));
    }
    create_dir(out)?;
    let cache = cache_root(Some(out));
    let prepared = prepare(config, cache.as_deref())?;
    let record = DataRecord {
        dataset_fingerprint: prepared.dataset_fingerprint,
        prepared_fingerprint: prepared.data.fingerprint.clone(),
        num_samples: prepared.data.len(),
        num_labels: prepared.data.num_labels(),
        positives: config.spec().positive_counts()?,
    };
    let manifest = prepared.manifest;
    write_atomic(&out.join(DATA_CONFIG_FILE), config.to_toml().as_bytes())?;
    write_atomic(&out.join(DATA_MANIFEST_FILE), manifest.to_tsv().as_bytes())?;
    let json = serde_json::to_string_pretty(&record).expect("record serializes");
    write_atomic(&out.join(DATA_RECORD_FILE), json.as_bytes())?;
    Ok(record)
}

/// What `train` should run.
#[derive(Clone, Debug)]
pub struct TrainRequest {
    pub config: LabConfig,
    pub config_path: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    /// Train both heads on every seed.
    pub paired: bool,
    /// Retrain runs whose directory already exists.
    pub force: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    /// False when a finished run with the same config was already on disk.
    pub trained: bool,
}

/// Trains every requested run and writes one directory per run.
pub fn cmd_train(req: &TrainRequest) -> Result<Vec<TrainOutcome>> {
    let mut config = req.config.clone();
    let data = match &req.data_dir {
        Some(dir) => {
            let opened = DataDir::open(dir)?;
            if opened.config.data.num_labels != config.data.num_labels {
                return Err(Error::Config(format!(
                    "{} has {} labels, the request has {}",
                    dir.display(),
                    opened.config.data.num_labels,
                    config.data.num_labels
                )));
            }
            config.data = opened.config.data.clone();
            config.preprocess = opened.config.preprocess.clone();
            opened.data
        }
        None => {
            config.validate()?;
            prepare(&config, cache_root(None).as_deref())?.data
        }
    };
    config.validate()?;
    let extractor = FeatureExtractor::projection(config.projection())?;
    if req.seeds.is_empty() {
        return Err(Error::Config("no seeds given".into()));
    }
    create_dir(&req.out)?;
    let mut outcomes = Vec::new();
    for &seed in &req.seeds {
        let heads: Vec<HeadKind> = if req.paired {
            vec![HeadKind::Cdl, HeadKind::Dqc]
        } else {
            vec![config.train.head]
        };
        let mut pending = Vec::new();
        for &head in &heads {
            let mut run_cfg = config.clone();
            run_cfg.train.head = head;
            run_cfg.train.seed = seed;
            let dir = req.out.join(run_dir_name(&run_cfg));
            if dir.join(RUN_MANIFEST_FILE).exists() && !req.force {
                let existing = RunDir::open(&dir)?;
                outcomes.push(TrainOutcome {
                    dir,
                    manifest: existing.manifest,
                    trained: false,
                });
            } else {
                pending.push((run_cfg, dir));
            }
        }
        let runs: Vec<TrainRun> = if req.paired && pending.len() == 2 {
            let cdl = pending[0].0.train_config(&data.fingerprint);
            let dqc = pending[1].0.train_config(&data.fingerprint);
            let paired = paired_seed_protocol(&cdl, &dqc, &[seed], &data, &extractor)?;
            paired.cdl.into_iter().chain(paired.dqc).collect()
        } else {
            pending
                .iter()
                .map(|(cfg, _)| train(cfg.train_config(&data.fingerprint), &data, &extractor))
                .collect::<Result<_>>()?
        };
        for ((run_cfg, dir), run) in pending.into_iter().zip(runs) {
            let manifest = write_run(req, &run_cfg, &dir, &run, extractor.feature_dim())?;
            outcomes.push(TrainOutcome {
                dir,
                manifest,
                trained: true,
            });
        }
    }
    Ok(outcomes)
}

fn write_run(req: &TrainRequest, config: &LabConfig, dir: &Path, run: &TrainRun, feature_dim: usize) -> Result<RunManifest> {
    let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("run");
    let staging = dir.with_file_name(format!(".{name}.tmp.{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    create_dir(&staging)?;
    let config_text = config.to_toml();
    let files: Vec<(&str, Vec<u8>)> = vec![
        (RUN_CONFIG_FILE, config_text.into_bytes()),
        (LOSS_CURVE_FILE, run.loss_curve_tsv().into_bytes()),
        (CHECKPOINT_FILE, run.best.to_bytes()),
        (
            STREAM_FILE,
            stream_tsv(&run.epoch_digests, &run.stream_digest(run.epochs_run())).into_bytes(),
        ),
    ];
    let mut artifacts = BTreeMap::new();
    for (file, bytes) in &files {
        let path = staging.join(file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        artifacts.insert(file.to_string(), sha256_hex(bytes));
    }
    let manifest = RunManifest {
        config_path: req.config_path.clone(),
        config: config.clone(),
        train: run.config.clone(),
        config_hash: run.config.hash(feature_dim),
        data_dir: req.data_dir.clone(),
        output_dir: dir.to_path_buf(),
        artifacts,
        summary: RunSummary {
            epochs_run: run.epochs_run(),
            best_epoch: run.best_epoch,
            best_val_loss: run.best_val_loss,
            stop_reason: run.stop_reason,
            stream_digest: run.stream_digest(run.epochs_run()),
        },
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = staging.join(RUN_MANIFEST_FILE);
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))?;
    Ok(manifest)
}

/// One training line per outcome.
pub fn format_train_outcomes(outcomes: &[TrainOutcome]) -> String {
    let mut out = String::from("run_dir\thead\tseed\tepochs\tbest_epoch\tbest_val_loss\tstop\tstatus\n");
    for o in outcomes {
        let s = &o.manifest.summary;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{:.6}\t{:?}\t{}\n",
            o.dir.display(),
            o.manifest.train.head,
            o.manifest.train.seed,
            s.epochs_run,
            s.best_epoch,
            s.best_val_loss,
            s.stop_reason,
            if o.trained { "trained" } else { "existing" }
        ));
    }
    out
}

/// Test-split AUROCs of every run, plus paired comparisons when asked.
#[derive(Clone, Debug)]
pub struct EvalReport {
    /// `"internal"` or `"external"`.
    pub task: String,
    /// `(head, seed, label, auroc)`, with a `mean` row per run.
    pub aurocs: Vec<(String, u64, String, f64)>,
    pub comparisons: Vec<PairedComparison>,
    pub volcano: Option<VolcanoTable>,
}

impl EvalReport {
    pub fn auroc_tsv(&self) -> String {
        auroc_table(&self.aurocs)
    }

    pub fn comparison_tsv(&self) -> Option<String> {
        (!self.comparisons.is_empty()).then(|| comparison_table(&self.comparisons))
    }

    /// Writes `auroc.tsv`, and `comparison.tsv` and `volcano.tsv` when
    /// present, into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        write_atomic(&dir.join("auroc.tsv"), self.auroc_tsv().as_bytes())?;
        if let Some(t) = self.comparison_tsv() {
            write_atomic(&dir.join("comparison.tsv"), t.as_bytes())?;
        }
        if let Some(v) = &self.volcano {
            write_atomic(&dir.join("volcano.tsv"), v.to_tsv().as_bytes())?;
        }
        Ok(())
    }
}

/// Scores the best checkpoint of every run on a test split. Internal runs
/// use the test split of the data each run trained on; `external` names a
/// data directory whose test split replaces it.
pub fn cmd_eval(run_dirs: &[PathBuf], paired: bool, external: Option<&Path>) -> Result<EvalReport> {
    if run_dirs.is_empty() {
        return Err(Error::Config("no run directories given".into()));
    }
    let runs = run_dirs.iter().map(|d| RunDir::open(d)).collect::<Result<Vec<_>>>()?;
    let num_labels = runs[0].manifest.train.num_labels;
    if runs.iter().any(|r| r.manifest.train.num_labels != num_labels) {
        return Err(Error::Config("runs use different label counts".into()));
    }
    let external = external.map(DataDir::open).transpose()?;
    let mut datasets: HashMap<String, PreparedData> = HashMap::new();
    let mut features: HashMap<(String, String), FeatureSet> = HashMap::new();
    let names = label_names(num_labels);
    let mut per_run: Vec<(HeadKind, u64, Vec<f64>, f64)> = Vec::new();
    for run in &runs {
        let data_key = match &external {
            Some(ext) => {
                check_external(run, ext)?;
                format!("external:{}", ext.data.fingerprint)
            }
            None => run.manifest.train.dataset.clone(),
        };
        if !datasets.contains_key(&data_key) {
            let loaded = match &external {
                Some(ext) => ext.data.clone(),
                None => load_run_data(run)?,
            };
            datasets.insert(data_key.clone(), loaded);
        }
        let data = &datasets[&data_key];
        let fkey = (data_key.clone(), toml::to_string(&run.config.extractor).expect("extractor section serializes"));
        if !features.contains_key(&fkey) {
            let extractor = FeatureExtractor::projection(run.config.projection())?;
            let idx = data.indices(Split::Test);
            features.insert(fkey.clone(), FeatureSet::for_indices(&extractor, data, &idx)?);
        }
        let set = &features[&fkey];
        let ckpt = Checkpoint::load(&run.checkpoint_path(), &run.manifest.config_hash)?;
        let probs = predict(&ckpt.head, set)?;
        let truths: Vec<Vec<u8>> = set.targets.iter().map(|t| t.iter().map(|&y| y as u8).collect()).collect();
        let (per_label, mean) = evaluate_labels(&label_sets(&names, &probs, &truths)?)?;
        per_run.push((run.manifest.train.head, run.manifest.train.seed, per_label, mean));
    }
    let task = if external.is_some() { "external" } else { "internal" }.to_string();
    let mut aurocs = Vec::new();
    for (head, seed, per_label, mean) in &per_run {
        for (name, a) in names.iter().zip(per_label) {
            aurocs.push((head.to_string(), *seed, name.clone(), *a));
        }
        aurocs.push((head.to_string(), *seed, "mean".to_string(), *mean));
    }
    let (comparisons, volcano) = if paired {
        let comparisons = pair_runs(&runs, &per_run, &names, &task)?;
        let labels_only: Vec<PairedComparison> = comparisons.iter().filter(|c| c.label != "mean").cloned().collect();
        let volcano = volcano_data(&labels_only)?;
        (comparisons, Some(volcano))
    } else {
        (Vec::new(), None)
    };
    Ok(EvalReport {
        task,
        aurocs,
        comparisons,
        volcano,
    })
}

fn check_external(run: &RunDir, ext: &DataDir) -> Result<()> {
    let (r, e) = (&run.config, &ext.config);
    if e.data.num_labels != r.data.num_labels || e.data.channels != r.data.channels || e.preprocess.crop != r.preprocess.crop
    {
        return Err(Error::Config(format!(
            "external data in {} does not fit run {}: labels, channels and crop must match",
            ext.root.display(),
            run.root.display()
        )));
    }
    Ok(())
}

fn load_run_data(run: &RunDir) -> Result<PreparedData> {
    let cache = cache_root(run.manifest.data_dir.as_deref());
    let data = prepare(&run.config, cache.as_deref())?.data;
    if data.fingerprint != run.manifest.train.dataset {
        return Err(Error::Validation(format!(
            "the config in {} no longer generates the data the run trained on",
            run.root.display()
        )));
    }
    Ok(data)
}

fn pair_runs(
    runs: &[RunDir],
    per_run: &[(HeadKind, u64, Vec<f64>, f64)],
    names: &[String],
    task: &str,
) -> Result<Vec<PairedComparison>> {
    let mut by_seed: BTreeMap<u64, [Option<usize>; 2]> = BTreeMap::new();
    for (i, (head, seed, _, _)) in per_run.iter().enumerate() {
        let slot = &mut by_seed.entry(*seed).or_default()[(*head == HeadKind::Dqc) as usize];
        if slot.is_some() {
            return Err(Error::Config(format!("unpaired runs: seed {seed} has two {head} runs")));
        }
        *slot = Some(i);
    }
    let mut pairs = Vec::new();
    for (seed, slots) in &by_seed {
        match slots {
            [Some(c), Some(d)] => {
                if runs[*c].manifest.train.dataset != runs[*d].manifest.train.dataset {
                    return Err(Error::Config(format!("unpaired runs: seed {seed} heads trained on different data")));
                }
                pairs.push((*c, *d));
            }
            _ => return Err(Error::Config(format!("unpaired runs: seed {seed} lacks a CDL or DQC run"))),
        }
    }
    let mut out = Vec::new();
    for (l, name) in names.iter().enumerate() {
        let cdl = pairs.iter().map(|&(c, _)| per_run[c].2[l]).collect();
        let dqc = pairs.iter().map(|&(_, d)| per_run[d].2[l]).collect();
        out.push(PairedComparison::new(name.clone(), task, cdl, dqc)?);
    }
    let cdl = pairs.iter().map(|&(c, _)| per_run[c].3).collect();
    let dqc = pairs.iter().map(|&(_, d)| per_run[d].3).collect();
    out.push(PairedComparison::new("mean", task, cdl, dqc)?);
    Ok(out)
}

/// What `bench` should measure.
#[derive(Clone, Debug)]
pub struct BenchRequest {
    pub config: LabConfig,
    pub heads: Vec<HeadKind>,
    pub labels: Vec<usize>,
    /// Inclusive label-count range for a scaling sweep of both heads.
    pub sweep: Option<(usize, usize)>,
    pub tag: String,
    pub log: PathBuf,
}

#[derive(Clone, Debug)]
pub enum BenchOutcome {
    Table(Vec<BenchResult>),
    Sweep(ScalingTable),
}

impl BenchOutcome {
    pub fn results(&self) -> &[BenchResult] {
        match self {
            BenchOutcome::Table(r) => r,
            BenchOutcome::Sweep(t) => &t.results,
        }
    }

    pub fn to_tsv(&self) -> String {
        match self {
            BenchOutcome::Table(r) => format_results(r),
            BenchOutcome::Sweep(t) => t.to_tsv(),
        }
    }
}

/// Runs the benchmark under the log's lock file and appends to the log.
pub fn cmd_bench(req: &BenchRequest) -> Result<BenchOutcome> {
    if let Some(parent) = req.log.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut lock_name = req.log.as_os_str().to_owned();
    lock_name.push(".lock");
    let _lock = BenchLock::acquire(Path::new(&lock_name))?;
    let outcome = match req.sweep {
        Some((lo, hi)) => {
            if lo == 0 || lo > hi {
                return Err(Error::Config(format!("sweep range {lo}:{hi} must be ascending and start at 1 or more")));
            }
            let ns: Vec<usize> = (lo..=hi).collect();
            BenchOutcome::Sweep(scaling_sweep(&ns, &req.config.bench_protocol(HeadKind::Dqc, lo))?)
        }
        None => {
            if req.labels.is_empty() || req.heads.is_empty() {
                return Err(Error::Config("bench needs at least one head and one label count".into()));
            }
            let mut results = Vec::new();
            for &head in &req.heads {
                for &n in &req.labels {
                    results.push(run_bench(&req.config.bench_protocol(head, n))?);
                }
            }
            BenchOutcome::Table(results)
        }
    };
    append_log(&req.log, outcome.results(), &req.tag)?;
    Ok(outcome)
}
