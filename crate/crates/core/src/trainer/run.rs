use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Checkpoint, EarlyStopping, TrainConfig, Verdict};
use crate::datapipe::{make_batches, AugmentDecision, LabeledBatch, PreparedData, Split};
use crate::mlcore::{adam_step, bce_logits_sum_and_grad, AdamConfig, AdamState, Rng};
use crate::model::{ExtractorInput, FeatureExtractor, Head};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Early,
    MaxEpochs,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    /// 1-based optimizer step.
    pub step: u64,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub config: TrainConfig,
    pub train_losses: Vec<StepLoss>,
    /// Mean validation BCE after each epoch, epoch 1 first.
    pub val_losses: Vec<f64>,
    /// 1-based epoch of the lowest validation loss.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best: Checkpoint,
    pub stop_reason: StopReason,
    /// SHA-256 of each epoch's `(epoch, batch, sample_id, augmentation)` stream.
    pub epoch_digests: Vec<String>,
}

impl TrainRun {
    pub fn epochs_run(&self) -> usize {
        self.val_losses.len()
    }

    /// Digest over the per-epoch stream digests of the first `epochs` epochs.
    pub fn stream_digest(&self, epochs: usize) -> String {
        let mut h = Sha256::new();
        for d in &self.epoch_digests[..epochs.min(self.epoch_digests.len())] {
            h.update(d.as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// `step\tsplit\tloss` table; validation rows sit at the last step of
    /// their epoch.
    pub fn loss_curve_tsv(&self) -> String {
        let mut out = String::from("step\tsplit\tloss\n");
        let mut val = self.val_losses.iter().enumerate().peekable();
        for (i, s) in self.train_losses.iter().enumerate() {
            let _ = writeln!(out, "{}\ttrain\t{:.17e}", s.step, s.loss);
            let epoch_ends = self.train_losses.get(i + 1).is_none_or(|next| next.epoch != s.epoch);
            if epoch_ends {
                if let Some((_, v)) = val.next_if(|(e, _)| e + 1 == s.epoch) {
                    let _ = writeln!(out, "{}\tvalidation\t{v:.17e}", s.step);
                }
            }
        }
        out
    }
}

/// Features and multi-hot targets of a fixed sample set, computed once.
#[derive(Clone, Debug)]
pub struct FeatureSet {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl FeatureSet {
    pub fn from_batch(extractor: &FeatureExtractor, batch: &LabeledBatch) -> Result<Self> {
        let inputs: Vec<ExtractorInput<'_>> = if extractor.reads_tensors() {
            if batch.inputs.len() != batch.len() {
                return Err(Error::Argument("extractor needs tensors but the data carries none".into()));
            }
            batch.inputs.iter().map(ExtractorInput::Tensor).collect()
        } else {
            batch.sample_ids.iter().map(|id| ExtractorInput::Sample(id)).collect()
        };
        let features = extractor.extract_batch(&inputs)?;
        let targets = batch
            .labels
            .iter()
            .map(|y| y.iter().map(|&v| v as f64).collect())
            .collect();
        Ok(FeatureSet { features, targets })
    }

    pub fn for_indices(extractor: &FeatureExtractor, data: &PreparedData, indices: &[usize]) -> Result<Self> {
        Self::from_batch(extractor, &data.batch(indices, None)?)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Mean BCE of `head` over a feature set.
pub fn mean_loss(head: &Head, set: &FeatureSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Argument("mean loss over an empty set".into()));
    }
    let sums = set
        .features
        .par_iter()
        .zip(&set.targets)
        .map(|(x, y)| Ok(bce_logits_sum_and_grad(&head.forward(x)?.logits, y)?.0))
        .collect::<Result<Vec<f64>>>()?;
    let per_sample = pairwise_f64(&sums);
    Ok(per_sample / (set.len() * head.num_labels()) as f64)
}

fn pairwise_f64(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => pairwise_f64(&xs[..n / 2]) + pairwise_f64(&xs[n / 2..]),
    }
}

/// Probabilities for every sample of a feature set.
pub fn predict(head: &Head, set: &FeatureSet) -> Result<Vec<Vec<f64>>> {
    set.features
        .par_iter()
        .map(|x| Ok(head.forward(x)?.probabilities))
        .collect()
}

/// One Adam step of `head` on the mean BCE of `set`: forward, loss,
/// backward and update. Returns the pre-update loss.
pub fn training_step(head: &mut Head, optimizer: &mut AdamState, adam: &AdamConfig, set: &FeatureSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Argument("training step on an empty batch".into()));
    }
    let (sum, mut grads) = head.batch_loss_and_gradients(&set.features, &set.targets)?;
    let scale = 1.0 / (set.len() * head.num_labels()) as f64;
    let loss = sum * scale;
    let step = optimizer.step() + 1;
    if !loss.is_finite() {
        return Err(Error::Divergence { step, loss });
    }
    for g in grads.iter_mut().flatten() {
        *g *= scale;
    }
    if grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::Divergence { step, loss });
    }
    let mut params = head.param_groups_mut();
    adam_step(adam, &mut params, &grads, optimizer)?;
    Ok(loss)
}

/// Step-level training state for one head.
pub struct Trainer<'a> {
    config: TrainConfig,
    data: &'a PreparedData,
    extractor: &'a FeatureExtractor,
    head: Head,
    optimizer: AdamState,
    adam: AdamConfig,
    config_hash: String,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, data: &'a PreparedData, extractor: &'a FeatureExtractor) -> Result<Self> {
        let mut config = config;
        config.validate()?;
        if config.dataset.is_empty() {
            config.dataset = data.fingerprint.clone();
        } else if config.dataset != data.fingerprint {
            return Err(Error::Argument(format!(
                "config references dataset {} but the data is {}",
                config.dataset, data.fingerprint
            )));
        }
        if data.num_labels() != config.num_labels {
            return Err(Error::Argument(format!(
                "config has {} labels, data has {}",
                config.num_labels,
                data.num_labels()
            )));
        }
        let mut rng = Rng::substream(config.seed, "init", &[]);
        let head = Head::init_with_angle_std(
            config.head,
            &mut rng,
            extractor.feature_dim(),
            config.num_labels,
            config.depth,
            config.angle_std,
        )?;
        let optimizer = AdamState::new(&head.group_sizes());
        let config_hash = config.hash(extractor.feature_dim());
        Ok(Trainer {
            adam: AdamConfig::with_lr(config.lr),
            config,
            data,
            extractor,
            head,
            optimizer,
            config_hash,
        })
    }

    /// Resumes from a checkpoint written under the same configuration.
    pub fn from_checkpoint(
        config: TrainConfig,
        data: &'a PreparedData,
        extractor: &'a FeatureExtractor,
        checkpoint: Checkpoint,
    ) -> Result<Self> {
        let mut t = Self::new(config, data, extractor)?;
        if checkpoint.config_hash != t.config_hash {
            return Err(Error::ConfigHashMismatch {
                expected: t.config_hash,
                found: checkpoint.config_hash,
            });
        }
        t.head = checkpoint.head;
        t.optimizer = checkpoint.optimizer;
        Ok(t)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn steps_taken(&self) -> u64 {
        self.optimizer.step()
    }

    pub fn checkpoint(&self, epoch: usize) -> Checkpoint {
        Checkpoint {
            config_hash: self.config_hash.clone(),
            epoch,
            head: self.head.clone(),
            optimizer: self.optimizer.clone(),
        }
    }

    /// One Adam step on the mean BCE of `set`. Returns the pre-update loss.
    pub fn step_on(&mut self, set: &FeatureSet) -> Result<f64> {
        training_step(&mut self.head, &mut self.optimizer, &self.adam, set)
    }

    pub fn train_step(&mut self, batch: &LabeledBatch) -> Result<f64> {
        let set = FeatureSet::from_batch(self.extractor, batch)?;
        self.step_on(&set)
    }

    fn augment_stream(&self, epoch: usize) -> Option<(u64, u64)> {
        (self.config.augment && self.data.has_inputs()).then_some((self.config.seed, epoch as u64))
    }

    /// Trains to early stopping or `max_epochs`, keeping the best checkpoint.
    pub fn run(mut self) -> Result<TrainRun> {
        let train_idx = self.data.indices(Split::Train);
        let val_idx = self.data.indices(Split::Validation);
        if val_idx.is_empty() {
            return Err(Error::Argument("validation split is empty".into()));
        }
        let val_set = FeatureSet::for_indices(self.extractor, self.data, &val_idx)?;
        let fixed_train = if self.augment_stream(1).is_none() {
            Some(FeatureSet::for_indices(self.extractor, self.data, &train_idx)?)
        } else {
            None
        };

        let mut stopper = EarlyStopping::new(self.config.patience);
        let mut train_losses = Vec::new();
        let mut val_losses = Vec::new();
        let mut epoch_digests = Vec::new();
        let mut best = self.checkpoint(0);
        let mut stop_reason = StopReason::MaxEpochs;

        for epoch in 1..=self.config.max_epochs {
            let mut digest = Sha256::new();
            let augment = self.augment_stream(epoch);
            for (b, indices) in make_batches(&train_idx, self.config.batch_size, self.config.seed, epoch as u64)?
                .iter()
                .enumerate()
            {
                for &i in indices {
                    let id = &self.data.sample_ids[i];
                    let decision = match augment {
                        Some((seed, e)) => AugmentDecision::draw(seed, e, id),
                        None => AugmentDecision::identity(),
                    };
                    digest.update((epoch as u64).to_le_bytes());
                    digest.update((b as u64).to_le_bytes());
                    digest.update(id.as_bytes());
                    digest.update([0, decision.flip as u8]);
                    digest.update(decision.angle_deg.to_bits().to_le_bytes());
                }
                let set = match &fixed_train {
                    Some(all) => {
                        let pos: Vec<usize> = indices
                            .iter()
                            .map(|i| train_idx.binary_search(i).expect("batch drawn from train split"))
                            .collect();
                        FeatureSet {
                            features: pos.iter().map(|&p| all.features[p].clone()).collect(),
                            targets: pos.iter().map(|&p| all.targets[p].clone()).collect(),
                        }
                    }
                    None => FeatureSet::from_batch(self.extractor, &self.data.batch(indices, augment)?)?,
                };
                let loss = self.step_on(&set)?;
                train_losses.push(StepLoss {
                    step: self.optimizer.step(),
                    epoch,
                    loss,
                });
            }
            epoch_digests.push(hex::encode(digest.finalize()));

            let val = mean_loss(&self.head, &val_set)?;
            if !val.is_finite() {
                return Err(Error::Divergence {
                    step: self.optimizer.step(),
                    loss: val,
                });
            }
            val_losses.push(val);
            log::debug!("{} seed {} epoch {epoch}: validation {val:.5}", self.config.head, self.config.seed);
            match stopper.observe(val) {
                Verdict::Improved => best = self.checkpoint(epoch),
                Verdict::Continue => {}
                Verdict::Stop => {
                    stop_reason = StopReason::Early;
                    break;
                }
            }
        }

        Ok(TrainRun {
            config: self.config,
            train_losses,
            val_losses,
            best_epoch: stopper.best_epoch(),
            best_val_loss: stopper.best_loss(),
            best,
            stop_reason,
            epoch_digests,
        })
    }
}

pub fn train(config: TrainConfig, data: &PreparedData, extractor: &FeatureExtractor) -> Result<TrainRun> {
    Trainer::new(config, data, extractor)?.run()
}

/// CDL and DQC runs paired by seed.
#[derive(Clone, Debug)]
pub struct PairedRuns {
    pub seeds: Vec<u64>,
    pub cdl: Vec<TrainRun>,
    pub dqc: Vec<TrainRun>,
}

/// Trains both heads on every seed. Runs with equal seeds see the same
/// batches and augmentations because both are drawn from streams keyed by
/// `(seed, epoch)` and `(seed, epoch, sample_id)` alone.
pub fn paired_seed_protocol(
    cdl: &TrainConfig,
    dqc: &TrainConfig,
    seeds: &[u64],
    data: &PreparedData,
    extractor: &FeatureExtractor,
) -> Result<PairedRuns> {
    use crate::model::HeadKind;
    if cdl.head != HeadKind::Cdl || dqc.head != HeadKind::Dqc {
        return Err(Error::Argument("paired protocol needs one CDL and one DQC config".into()));
    }
    if cdl.dataset != dqc.dataset {
        return Err(Error::Argument(format!(
            "configs reference different datasets ({:?} vs {:?})",
            cdl.dataset, dqc.dataset
        )));
    }
    if cdl.num_labels != dqc.num_labels {
        return Err(Error::Argument("configs use different label sets".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Argument("no seeds given".into()));
    }
    let mut out = PairedRuns {
        seeds: seeds.to_vec(),
        cdl: Vec::new(),
        dqc: Vec::new(),
    };
    for &seed in seeds {
        out.cdl.push(train(cdl.with_seed(seed), data, extractor)?);
        out.dqc.push(train(dqc.with_seed(seed), data, extractor)?);
        log::info!("seed {seed}: paired runs done");
    }
    Ok(out)
}
