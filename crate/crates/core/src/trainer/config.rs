use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::HeadKind;
use crate::qsim::MAX_QUBITS;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub head: HeadKind,
    pub num_labels: usize,
    #[serde(default = "defaults::depth")]
    pub depth: usize,
    #[serde(default = "defaults::lr")]
    pub lr: f64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "defaults::patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    /// Fingerprint of the prepared data the run trains on.
    #[serde(default)]
    pub dataset: String,
    /// Random flips and rotations of training inputs.
    #[serde(default = "defaults::augment")]
    pub augment: bool,
    /// Standard deviation of the initial circuit angles.
    #[serde(default = "defaults::angle_std")]
    pub angle_std: f64,
}

mod defaults {
    pub fn depth() -> usize {
        3
    }
    pub fn lr() -> f64 {
        1e-4
    }
    pub fn batch_size() -> usize {
        32
    }
    pub fn max_epochs() -> usize {
        50
    }
    pub fn patience() -> usize {
        5
    }
    pub fn augment() -> bool {
        true
    }
    pub fn angle_std() -> f64 {
        crate::mlcore::ANGLE_STD
    }
}

impl TrainConfig {
    pub fn new(head: HeadKind, num_labels: usize, seed: u64) -> Self {
        TrainConfig {
            head,
            num_labels,
            depth: defaults::depth(),
            lr: defaults::lr(),
            batch_size: defaults::batch_size(),
            max_epochs: defaults::max_epochs(),
            patience: defaults::patience(),
            seed,
            dataset: String::new(),
            augment: defaults::augment(),
            angle_std: defaults::angle_std(),
        }
    }

    pub fn with_head(&self, head: HeadKind) -> Self {
        TrainConfig { head, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_labels", self.num_labels),
            ("depth", self.depth),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.angle_std.is_finite() && self.angle_std >= 0.0) {
            return Err(Error::Config(format!("angle_std must be finite and non-negative, got {}", self.angle_std)));
        }
        if self.head == HeadKind::Dqc && self.num_labels > MAX_QUBITS {
            return Err(Error::Capacity {
                what: "DQC head".into(),
                required_bytes: crate::qsim::state_bytes(self.num_labels),
                detail: format!("{} qubits exceeds the simulator cap of {MAX_QUBITS}", self.num_labels),
            });
        }
        Ok(())
    }

    /// Identity of everything a checkpoint's parameters depend on.
    pub fn hash(&self, feature_dim: usize) -> String {
        #[derive(Serialize)]
        struct Keyed<'a> {
            config: &'a TrainConfig,
            feature_dim: usize,
        }
        let json = serde_json::to_string(&Keyed { config: self, feature_dim }).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
