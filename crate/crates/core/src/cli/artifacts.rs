use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LabConfig;
use crate::datapipe::{generate_longtail, Manifest, PreparedData, TensorCache};
use crate::trainer::{StopReason, TrainConfig};
use crate::{Error, Result};

/// Environment variable naming the tensor cache root.
pub const CACHE_ENV: &str = "DQCLAB_CACHE";

pub const DATA_CONFIG_FILE: &str = "lab.toml";
pub const DATA_MANIFEST_FILE: &str = "manifest.tsv";
pub const DATA_RECORD_FILE: &str = "dataset.json";

pub const RUN_CONFIG_FILE: &str = "config.toml";
pub const RUN_MANIFEST_FILE: &str = "manifest.json";
pub const LOSS_CURVE_FILE: &str = "loss_curve.tsv";
pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const STREAM_FILE: &str = "stream.tsv";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp.{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &'static str) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Format {
        what,
        reason: format!("{}: {e}", path.display()),
    })
}

/// Cache root: `$DQCLAB_CACHE` if set, else `cache/` under the data
/// directory, else none.
pub fn cache_root(data_dir: Option<&Path>) -> Option<PathBuf> {
    match std::env::var_os(CACHE_ENV) {
        Some(v) if !v.is_empty() => Some(PathBuf::from(v)),
        _ => data_dir.map(|d| d.join("cache")),
    }
}

/// Summary of a generated dataset, stored next to its manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataRecord {
    pub dataset_fingerprint: String,
    /// Fingerprint of the preprocessed data; training configs refer to it.
    pub prepared_fingerprint: String,
    pub num_samples: usize,
    pub num_labels: usize,
    /// Positives per label in the train, validation and test splits.
    pub positives: Vec<[usize; 3]>,
}

pub struct Prepared {
    pub data: PreparedData,
    pub manifest: Manifest,
    pub dataset_fingerprint: String,
}

/// Regenerates and preprocesses the data a config describes, reading and
/// filling the cache under `cache` if given.
pub fn prepare(config: &LabConfig, cache: Option<&Path>) -> Result<Prepared> {
    let (dataset, split) = generate_longtail(&config.spec())?;
    let cache = cache.map(TensorCache::open).transpose()?;
    let data = PreparedData::from_dataset(&dataset, &split, &config.preprocess(), cache.as_ref())?;
    Ok(Prepared {
        data,
        manifest: Manifest::from_dataset(&dataset, &split),
        dataset_fingerprint: dataset.fingerprint(),
    })
}

/// A data directory written by `gen-data`, verified against its record.
pub struct DataDir {
    pub root: PathBuf,
    pub config: LabConfig,
    pub record: DataRecord,
    pub data: PreparedData,
}

impl DataDir {
    pub fn open(root: &Path) -> Result<Self> {
        let config = LabConfig::load(&root.join(DATA_CONFIG_FILE))?;
        let record: DataRecord = read_json(&root.join(DATA_RECORD_FILE), "dataset record")?;
        let stored = Manifest::read(&root.join(DATA_MANIFEST_FILE))?;
        let Prepared { data, manifest, .. } = prepare(&config, cache_root(Some(root)).as_deref())?;
        if manifest != stored || data.fingerprint != record.prepared_fingerprint {
            return Err(Error::Validation(format!(
                "{} does not match the data its {DATA_CONFIG_FILE} generates; regenerate with gen-data --force",
                root.display()
            )));
        }
        Ok(DataDir {
            root: root.to_path_buf(),
            config,
            record,
            data,
        })
    }
}

/// Identity, provenance and artifact hashes of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Config file the command was given, if any.
    pub config_path: Option<PathBuf>,
    /// The resolved config; identical to the run directory's `config.toml`.
    pub config: LabConfig,
    pub train: TrainConfig,
    /// Hash checkpoints are keyed by.
    pub config_hash: String,
    pub data_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// SHA-256 of each artifact file, by file name.
    pub artifacts: BTreeMap<String, String>,
    pub summary: RunSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
    pub stream_digest: String,
}

/// Directory name of a run: readable prefix plus the config text's hash.
pub fn run_dir_name(config: &LabConfig) -> String {
    let t = &config.train;
    let id = sha256_hex(config.to_toml().as_bytes());
    format!("{}-n{}-seed{}-{}", t.head, config.data.num_labels, t.seed, &id[..12])
}

/// A completed run directory.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
    pub config: LabConfig,
    pub manifest: RunManifest,
}

impl RunDir {
    /// Loads a run, checking its config snapshot and artifact hashes.
    pub fn open(root: &Path) -> Result<Self> {
        let manifest: RunManifest = read_json(&root.join(RUN_MANIFEST_FILE), "run manifest")?;
        let config = LabConfig::load(&root.join(RUN_CONFIG_FILE))?;
        if config != manifest.config {
            return Err(Error::Validation(format!(
                "{} differs from the config recorded in {RUN_MANIFEST_FILE}",
                root.join(RUN_CONFIG_FILE).display()
            )));
        }
        for (name, expected) in &manifest.artifacts {
            let path = root.join(name);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if &sha256_hex(&bytes) != expected {
                return Err(Error::Corruption {
                    id: path.display().to_string(),
                    reason: "artifact hash does not match the run manifest".into(),
                });
            }
        }
        Ok(RunDir {
            root: root.to_path_buf(),
            config,
            manifest,
        })
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.root.join(CHECKPOINT_FILE)
    }

    /// Per-epoch stream digests, epoch 1 first.
    pub fn epoch_digests(&self) -> Result<Vec<String>> {
        let path = self.root.join(STREAM_FILE);
        parse_stream(&read_text(&path)?).map_err(|reason| Error::Format { what: "stream file", reason })
    }
}

/// `epoch\tdigest` rows, then an `all` row over every epoch.
pub fn stream_tsv(epoch_digests: &[String], all: &str) -> String {
    let mut out = String::from("epoch\tdigest\n");
    for (i, d) in epoch_digests.iter().enumerate() {
        out.push_str(&format!("{}\t{d}\n", i + 1));
    }
    out.push_str(&format!("all\t{all}\n"));
    out
}

fn parse_stream(text: &str) -> std::result::Result<Vec<String>, String> {
    let mut lines = text.lines();
    if lines.next() != Some("epoch\tdigest") {
        return Err("missing header".into());
    }
    let mut out = Vec::new();
    for line in lines {
        let (epoch, digest) = line.split_once('\t').ok_or_else(|| format!("bad row {line:?}"))?;
        if epoch == "all" {
            continue;
        }
        if epoch.parse::<usize>().ok() != Some(out.len() + 1) {
            return Err(format!("epoch {epoch:?} out of order"));
        }
        out.push(digest.to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_file_lists_epochs_in_order() {
        let digests = vec!["aa".to_string(), "bb".to_string()];
        let text = stream_tsv(&digests, "cc");
        assert_eq!(text, "epoch\tdigest\n1\taa\n2\tbb\nall\tcc\n");
        assert_eq!(parse_stream(&text).unwrap(), digests);
        assert!(parse_stream("epoch\tdigest\n2\taa\n").is_err());
    }

    #[test]
    fn run_names_follow_config() {
        let mut cfg = LabConfig::default();
        let a = run_dir_name(&cfg);
        assert!(a.starts_with("dqc-n8-seed0-"), "{a}");
        cfg.train.lr = 2e-4;
        assert_ne!(run_dir_name(&cfg), a);
    }

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.tsv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
