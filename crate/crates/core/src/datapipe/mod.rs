//! Synthetic long-tailed data, image preprocessing and augmentation, and the
//! compressed tensor cache.
//!
//! Manifest format (`manifest.tsv`): header `sample_id\tsplit\tlabels`, one
//! row per sample, split one of `train`/`validation`/`test`, labels as a
//! string of `0`/`1` characters in label-rank order.
//!
//! Serialized tensor (little-endian): magic `DQTN`, `u16` version (1), `u8`
//! dtype (1 = f32), `u8` rank, `rank` x `u64` dims, then row-major f32 data.

mod cache;
mod image;
mod loader;
mod longtail;
mod manifest;
mod tensor;

pub use cache::{CacheEntry, FaultPoint, Recovery, TensorCache, CODEC};
pub use image::{
    augment, preprocess, preprocess_payload, resized_dims, AugmentDecision, PreprocessConfig, MAX_ROTATION_DEG,
};
pub use loader::{cache_key, make_batches, sequential_batches, LabeledBatch, PreparedData};
pub use longtail::{
    decay_for_tail, generate_longtail, sample_id, Dataset, Image, LabeledSample, LongTailSpec, Payload, PayloadSpec,
    Split, SplitAssignment, SplitFractions, DEFAULT_TAIL_FREQUENCY,
};
pub use manifest::{Manifest, ManifestRow, MANIFEST_HEADER};
pub use tensor::{Tensor, DTYPE_F32, TENSOR_MAGIC, TENSOR_VERSION};
