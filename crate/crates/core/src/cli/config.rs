use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::BenchProtocol;
use crate::datapipe::{decay_for_tail, LongTailSpec, PayloadSpec, PreprocessConfig, SplitFractions};
use crate::mlcore::ANGLE_STD;
use crate::model::{HeadKind, ProjectionConfig};
use crate::trainer::TrainConfig;
use crate::{Error, Result};

/// Everything a command needs, as one TOML document. Missing keys take the
/// defaults below, unknown keys are refused.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    pub data: DataSection,
    pub preprocess: PreprocessSection,
    pub extractor: ExtractorSection,
    pub train: TrainSection,
    pub bench: BenchSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub num_labels: usize,
    pub num_samples: usize,
    pub seed: u64,
    /// Frequency of the most common label.
    pub head_frequency: f64,
    /// Frequency of the rarest label; fixes the geometric decay.
    pub tail_frequency: f64,
    pub signal_strength: f64,
    pub min_split_positives: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        let spec = LongTailSpec::desk_default(8, 4000, 7);
        let PayloadSpec::Image { height, width, channels } = spec.payload else {
            unreachable!("desk default is an image dataset")
        };
        DataSection {
            num_labels: spec.num_labels,
            num_samples: spec.num_samples,
            seed: spec.seed,
            head_frequency: spec.head_frequency,
            tail_frequency: crate::datapipe::DEFAULT_TAIL_FREQUENCY,
            signal_strength: spec.signal_strength,
            min_split_positives: spec.min_split_positives,
            height,
            width,
            channels,
            train_fraction: spec.fractions.train,
            validation_fraction: spec.fractions.validation,
            test_fraction: spec.fractions.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub resize: usize,
    pub crop: usize,
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        let p = PreprocessConfig::imagenet(72, 64);
        PreprocessSection {
            resize: p.resize,
            crop: p.crop,
            mean: p.mean,
            std: p.std,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorSection {
    /// Side of the average-pooling grid.
    pub pool: usize,
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for ExtractorSection {
    fn default() -> Self {
        ExtractorSection {
            pool: 8,
            feature_dim: crate::model::DEFAULT_FEATURE_DIM,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub head: HeadKind,
    pub depth: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub augment: bool,
    pub angle_std: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::new(HeadKind::Dqc, 1, 0);
        TrainSection {
            head: t.head,
            depth: t.depth,
            lr: t.lr,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            seed: t.seed,
            augment: t.augment,
            angle_std: ANGLE_STD,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub warmup_steps: usize,
    pub measured_steps: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for BenchSection {
    fn default() -> Self {
        let p = BenchProtocol::new(HeadKind::Dqc, 1);
        BenchSection {
            warmup_steps: p.warmup_steps,
            measured_steps: p.measured_steps,
            batch_size: p.batch_size,
            seed: p.seed,
        }
    }
}

impl LabConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("lab config serializes")
    }

    pub fn spec(&self) -> LongTailSpec {
        let d = &self.data;
        LongTailSpec {
            num_labels: d.num_labels,
            num_samples: d.num_samples,
            head_frequency: d.head_frequency,
            decay: decay_for_tail(d.head_frequency, d.tail_frequency, d.num_labels),
            signal_strength: d.signal_strength,
            seed: d.seed,
            payload: PayloadSpec::Image {
                height: d.height,
                width: d.width,
                channels: d.channels,
            },
            fractions: SplitFractions {
                train: d.train_fraction,
                validation: d.validation_fraction,
                test: d.test_fraction,
            },
            min_split_positives: d.min_split_positives,
        }
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        let p = &self.preprocess;
        PreprocessConfig {
            resize: p.resize,
            crop: p.crop,
            mean: p.mean.clone(),
            std: p.std.clone(),
        }
    }

    /// The extractor reads the preprocessed crop.
    pub fn projection(&self) -> ProjectionConfig {
        let e = &self.extractor;
        let crop = self.preprocess.crop;
        ProjectionConfig::image(self.data.channels, crop, crop, e.pool, e.feature_dim, e.seed)
    }

    /// Training configuration for data with fingerprint `dataset`.
    pub fn train_config(&self, dataset: &str) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            head: t.head,
            num_labels: self.data.num_labels,
            depth: t.depth,
            lr: t.lr,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            seed: t.seed,
            dataset: dataset.to_string(),
            augment: t.augment,
            angle_std: t.angle_std,
        }
    }

    pub fn bench_protocol(&self, head: HeadKind, num_labels: usize) -> BenchProtocol {
        let b = &self.bench;
        let crop = self.preprocess.crop;
        BenchProtocol {
            warmup_steps: b.warmup_steps,
            measured_steps: b.measured_steps,
            batch_size: b.batch_size,
            seed: b.seed,
            feature_dim: self.extractor.feature_dim,
            depth: self.train.depth,
            input_shape: vec![self.data.channels, crop, crop],
            pool: self.extractor.pool,
            ..BenchProtocol::new(head, num_labels)
        }
    }

    /// Checks everything that can be checked without generating data.
    pub fn validate(&self) -> Result<()> {
        self.spec().positive_counts().map_err(|e| Error::Config(e.to_string()))?;
        self.train_config("").validate()?;
        let p = &self.preprocess;
        if p.crop == 0 || p.crop > p.resize {
            return Err(Error::Config(format!("crop {} must be positive and at most resize {}", p.crop, p.resize)));
        }
        if p.mean.len() != self.data.channels || p.std.len() != self.data.channels {
            return Err(Error::Config(format!(
                "preprocess mean/std need {} entries, one per channel",
                self.data.channels
            )));
        }
        let e = &self.extractor;
        if e.feature_dim == 0 || e.pool == 0 || e.pool > p.crop {
            return Err(Error::Config(format!(
                "extractor needs a positive feature_dim and a pool grid within the {} pixel crop",
                p.crop
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_training_procedure() {
        let cfg = LabConfig::default();
        let t = cfg.train_config("");
        assert_eq!(t.lr, 1e-4);
        assert_eq!(t.batch_size, 32);
        assert_eq!(t.patience, 5);
        assert_eq!(t.max_epochs, 50);
        assert_eq!(t.depth, 3);
        assert_eq!(t.angle_std, std::f64::consts::TAU);
        assert_eq!(cfg.spec(), LongTailSpec::desk_default(8, 4000, 7));
        assert_eq!(cfg.preprocess(), PreprocessConfig::imagenet(72, 64));
        assert_eq!(cfg.projection(), ProjectionConfig::image(3, 64, 64, 8, 2048, 0));
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn written_defaults_parse_back() {
        let cfg = LabConfig::default();
        let text = cfg.to_toml();
        for key in ["lr = 0.0001", "batch_size = 32", "patience = 5", "max_epochs = 50", "depth = 3"] {
            assert!(text.contains(key), "{key} missing from\n{text}");
        }
        assert_eq!(LabConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_documents_fill_in() {
        let cfg = LabConfig::parse("[data]\nnum_labels = 19\n[train]\nhead = \"cdl\"\n").unwrap();
        assert_eq!(cfg.data.num_labels, 19);
        assert_eq!(cfg.train.head, HeadKind::Cdl);
        assert_eq!(cfg.train.lr, 1e-4);
        assert!(matches!(LabConfig::parse("[train]\nlearning_rate = 1\n"), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_settings_are_config_errors() {
        let mut cfg = LabConfig::default();
        cfg.preprocess.crop = 100;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = LabConfig::default();
        cfg.data.num_samples = 50;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = LabConfig::default();
        cfg.data.num_labels = 25;
        cfg.data.num_samples = 40_000;
        assert!(matches!(cfg.validate(), Err(Error::Capacity { .. })));
    }
}
