use rand::seq::SliceRandom;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{
    augment, preprocess_payload, AugmentDecision, Dataset, Manifest, PreprocessConfig, Split, SplitAssignment, Tensor,
    TensorCache,
};
use crate::mlcore::Rng;
use crate::{Error, Result};

/// Shuffled sample indices for one epoch, chunked into batches. The order
/// depends only on `(seed, epoch)` and the split contents; the last batch may
/// be short.
pub fn make_batches(split: &[usize], batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Argument("batch_size must be at least 1".into()));
    }
    if split.is_empty() {
        return Err(Error::Argument("cannot batch an empty split".into()));
    }
    let mut order = split.to_vec();
    order.shuffle(&mut Rng::substream(seed, "shuffle", &[epoch]));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Fixed-order chunks of `split`, for evaluation.
pub fn sequential_batches(split: &[usize], batch_size: usize) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Argument("batch_size must be at least 1".into()));
    }
    Ok(split.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBatch {
    pub sample_ids: Vec<String>,
    /// Empty when the data set carries no tensors (precomputed features).
    pub inputs: Vec<Tensor>,
    pub labels: Vec<Vec<u8>>,
}

impl LabeledBatch {
    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }
}

/// Preprocessed inputs plus labels and split, ready for batching.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub sample_ids: Vec<String>,
    pub labels: Vec<Vec<u8>>,
    pub split: SplitAssignment,
    pub inputs: Vec<Tensor>,
    /// Identifies dataset contents and preprocessing.
    pub fingerprint: String,
}

fn preprocess_key(cfg: &PreprocessConfig) -> String {
    let json = serde_json::to_string(cfg).expect("preprocess config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Cache key for one sample: the same id under a different dataset or
/// preprocessing maps to a different entry.
pub fn cache_key(dataset_fingerprint: &str, cfg: &PreprocessConfig, sample_id: &str) -> String {
    format!("{}:{}:{sample_id}", &dataset_fingerprint[..16], &preprocess_key(cfg)[..16])
}

impl PreparedData {
    /// Preprocesses every sample, reading from and filling `cache` if given.
    pub fn from_dataset(
        dataset: &Dataset,
        split: &SplitAssignment,
        cfg: &PreprocessConfig,
        cache: Option<&TensorCache>,
    ) -> Result<Self> {
        if split.len() != dataset.len() {
            return Err(Error::shape("split assignment", dataset.len(), split.len()));
        }
        let dataset_fp = dataset.fingerprint();
        let inputs = dataset
            .samples
            .par_iter()
            .map(|s| {
                let Some(cache) = cache else {
                    return preprocess_payload(&s.payload, cfg);
                };
                let key = cache_key(&dataset_fp, cfg, &s.sample_id);
                match cache.get(&key)? {
                    Some(t) => Ok(t),
                    None => {
                        let t = preprocess_payload(&s.payload, cfg)?;
                        cache.put(&key, &t)?;
                        Ok(t)
                    }
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let fingerprint = hex::encode(Sha256::digest(format!("{dataset_fp}:{}", preprocess_key(cfg))));
        Ok(PreparedData {
            sample_ids: dataset.samples.iter().map(|s| s.sample_id.clone()).collect(),
            labels: dataset.samples.iter().map(|s| s.labels.clone()).collect(),
            split: split.clone(),
            inputs,
            fingerprint,
        })
    }

    /// Labels and split only; inputs come from a precomputed feature table.
    pub fn from_manifest(manifest: &Manifest) -> Self {
        let fingerprint = hex::encode(Sha256::digest(manifest.to_tsv().as_bytes()));
        PreparedData {
            sample_ids: manifest.rows.iter().map(|r| r.sample_id.clone()).collect(),
            labels: manifest.rows.iter().map(|r| r.labels.clone()).collect(),
            split: manifest.split_assignment(),
            inputs: Vec::new(),
            fingerprint,
        }
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.labels.first().map_or(0, Vec::len)
    }

    pub fn has_inputs(&self) -> bool {
        !self.inputs.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.split.indices(split)
    }

    /// Gathers a batch. With `augment_stream = Some((seed, epoch))` each input
    /// is augmented from its own `(seed, epoch, sample_id)` stream.
    pub fn batch(&self, indices: &[usize], augment_stream: Option<(u64, u64)>) -> Result<LabeledBatch> {
        let inputs = if self.has_inputs() {
            indices
                .iter()
                .map(|&i| match augment_stream {
                    Some((seed, epoch)) => augment(&self.inputs[i], AugmentDecision::draw(seed, epoch, &self.sample_ids[i])),
                    None => Ok(self.inputs[i].clone()),
                })
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(LabeledBatch {
            sample_ids: indices.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            inputs,
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
        })
    }
}
