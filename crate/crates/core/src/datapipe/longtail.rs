use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::mlcore::Rng;
use crate::{Error, Result};

/// Raw image, row-major `height x width x channels` bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::shape("image bytes", height * width * channels, data.len()));
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Self {
        Image {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn pixel(&self, y: usize, x: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Image(Image),
    Vector(Vec<f32>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub sample_id: String,
    pub payload: Payload,
    /// Multi-hot, one entry per label.
    pub labels: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.name() == s)
            .ok_or_else(|| Error::Format {
                what: "split name",
                reason: format!("{s:?}"),
            })
    }
}

/// Train / validation / test fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.7,
            validation: 0.1,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    fn sizes(&self, n: usize) -> Result<[usize; 3]> {
        let sum = self.train + self.validation + self.test;
        if [self.train, self.validation, self.test].iter().any(|f| *f <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("split fractions {self:?} must be positive and sum to 1")));
        }
        let train = (n as f64 * self.train).round() as usize;
        let validation = (n as f64 * self.validation).round() as usize;
        Ok([train, validation, n.saturating_sub(train + validation)])
    }
}

/// Seeded split of sample indices. Every sample belongs to exactly one split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitAssignment {
    splits: Vec<Split>,
}

impl SplitAssignment {
    pub fn from_splits(splits: Vec<Split>) -> Self {
        SplitAssignment { splits }
    }

    pub fn split_of(&self, index: usize) -> Split {
        self.splits[index]
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    /// Sample indices in `split`, ascending.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.splits.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PayloadSpec {
    Image { height: usize, width: usize, channels: usize },
    Vector { len: usize },
}

/// Parameters of a synthetic long-tailed multi-label dataset.
///
/// Label `r` (0-based rank) is positive in a `head_frequency * decay^r`
/// fraction of each split, exactly up to rounding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongTailSpec {
    pub num_labels: usize,
    pub num_samples: usize,
    pub head_frequency: f64,
    pub decay: f64,
    /// Amplitude of each planted label pattern relative to the per-sample
    /// nuisance pattern.
    pub signal_strength: f64,
    pub seed: u64,
    pub payload: PayloadSpec,
    #[serde(default)]
    pub fractions: SplitFractions,
    /// Fewest positives any label may have in any split.
    #[serde(default = "default_min_positives")]
    pub min_split_positives: usize,
}

fn default_min_positives() -> usize {
    10
}

/// Rarest label frequency the default decay is chosen to reach.
pub const DEFAULT_TAIL_FREQUENCY: f64 = 0.04;

impl LongTailSpec {
    /// Desk-scale defaults: 64x64 RGB images, 70/10/20 splits, head label at
    /// 30% and a geometric decay that puts the rarest label at 4%.
    pub fn desk_default(num_labels: usize, num_samples: usize, seed: u64) -> Self {
        LongTailSpec {
            num_labels,
            num_samples,
            head_frequency: 0.3,
            decay: decay_for_tail(0.3, DEFAULT_TAIL_FREQUENCY, num_labels),
            signal_strength: 1.0,
            seed,
            payload: PayloadSpec::Image {
                height: 64,
                width: 64,
                channels: 3,
            },
            fractions: SplitFractions::default(),
            min_split_positives: default_min_positives(),
        }
    }

    pub fn frequency(&self, rank: usize) -> f64 {
        self.head_frequency * self.decay.powi(rank as i32)
    }

    /// Positive count of every label in every split (`[label][split]`), or the
    /// first rank that falls under the minimum.
    pub fn positive_counts(&self) -> Result<Vec<[usize; 3]>> {
        if self.num_labels == 0 || self.num_samples == 0 {
            return Err(Error::Validation("need at least one label and one sample".into()));
        }
        if !(self.head_frequency > 0.0 && self.head_frequency <= 1.0) {
            return Err(Error::Validation(format!("head_frequency {} not in (0, 1]", self.head_frequency)));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Validation(format!("decay {} not in (0, 1]", self.decay)));
        }
        if !self.signal_strength.is_finite() || self.signal_strength < 0.0 {
            return Err(Error::Validation("signal_strength must be finite and non-negative".into()));
        }
        let sizes = self.fractions.sizes(self.num_samples)?;
        let mut counts = Vec::with_capacity(self.num_labels);
        for rank in 0..self.num_labels {
            let f = self.frequency(rank);
            let per_split = sizes.map(|s| (s as f64 * f).round() as usize);
            if let Some(si) = per_split.iter().position(|&c| c < self.min_split_positives) {
                return Err(Error::Validation(format!(
                    "label rank {rank} (frequency {f:.4}) gets {} positives in the {} split; at least {} required",
                    per_split[si],
                    Split::ALL[si],
                    self.min_split_positives
                )));
            }
            counts.push(per_split);
        }
        Ok(counts)
    }
}

/// Geometric ratio taking `head` to `tail` over `num_labels` ranks.
pub fn decay_for_tail(head: f64, tail: f64, num_labels: usize) -> f64 {
    if num_labels <= 1 {
        return 1.0;
    }
    (tail / head).powf(1.0 / (num_labels - 1) as f64).min(1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub num_labels: usize,
    pub samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Positives per label over the given sample indices.
    pub fn label_counts(&self, indices: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.num_labels];
        for &i in indices {
            for (c, &y) in counts.iter_mut().zip(&self.samples[i].labels) {
                *c += y as usize;
            }
        }
        counts
    }

    /// SHA-256 over ids, labels and payload bytes.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.samples {
            h.update(s.sample_id.as_bytes());
            h.update([0u8]);
            h.update(&s.labels);
            match &s.payload {
                Payload::Image(img) => {
                    h.update([1u8]);
                    for d in [img.height, img.width, img.channels] {
                        h.update((d as u64).to_le_bytes());
                    }
                    h.update(&img.data);
                }
                Payload::Vector(v) => {
                    h.update([2u8]);
                    for x in v {
                        h.update(x.to_le_bytes());
                    }
                }
            }
        }
        hex::encode(h.finalize())
    }
}

const PATTERN_GRID: usize = 4;
const GRAY_SCALE: f64 = 24.0;
const PIXEL_NOISE: f64 = 8.0;

/// Smooth field from a coarse `grid x grid` lattice by bilinear interpolation.
fn upsample(coarse: &[f64], grid: usize, height: usize, width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(height * width);
    let coord = |i: usize, n: usize| {
        let t = ((i as f64 + 0.5) / n as f64) * grid as f64 - 0.5;
        let t = t.clamp(0.0, (grid - 1) as f64);
        let i0 = (t.floor() as usize).min(grid - 2);
        (i0, t - i0 as f64)
    };
    for y in 0..height {
        let (y0, ty) = coord(y, height);
        let y1 = (y0 + 1).min(grid - 1);
        for x in 0..width {
            let (x0, tx) = coord(x, width);
            let x1 = (x0 + 1).min(grid - 1);
            let v00 = coarse[y0 * grid + x0];
            let v01 = coarse[y0 * grid + x1];
            let v10 = coarse[y1 * grid + x0];
            let v11 = coarse[y1 * grid + x1];
            out.push((v00 * (1.0 - tx) + v01 * tx) * (1.0 - ty) + (v10 * (1.0 - tx) + v11 * tx) * ty);
        }
    }
    out
}

/// Per-label pattern planes, `channels` planes of `height x width` each.
/// Patterns are left-right symmetric, so horizontal flips preserve them.
fn label_patterns(spec: &LongTailSpec, height: usize, width: usize, channels: usize) -> Vec<Vec<Vec<f64>>> {
    let g = PATTERN_GRID;
    (0..spec.num_labels)
        .map(|label| {
            let mut rng = Rng::substream(spec.seed, "pattern", &[label as u64]);
            (0..channels)
                .map(|_| {
                    let mut coarse = vec![0.0; g * g];
                    for y in 0..g {
                        for x in 0..g.div_ceil(2) {
                            let v = if rand::Rng::random_bool(&mut rng, 0.5) { 1.0 } else { -1.0 };
                            coarse[y * g + x] = v;
                            coarse[y * g + (g - 1 - x)] = v;
                        }
                    }
                    upsample(&coarse, g, height, width)
                })
                .collect()
        })
        .collect()
}

fn label_directions(spec: &LongTailSpec, len: usize) -> Vec<Vec<f64>> {
    (0..spec.num_labels)
        .map(|label| {
            let mut rng = Rng::substream(spec.seed, "pattern", &[label as u64]);
            let v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.into_iter().map(|x| x / norm * (len as f64).sqrt()).collect()
        })
        .collect()
}

/// Generates the dataset and its split.
///
/// Positives of each label are drawn independently of the other labels, so
/// labels co-occur freely. Each positive label adds its fixed pattern to the
/// payload, scaled by `signal_strength`, on top of a per-sample random
/// low-frequency nuisance pattern and pixel noise.
pub fn generate_longtail(spec: &LongTailSpec) -> Result<(Dataset, SplitAssignment)> {
    let counts = spec.positive_counts()?;
    if spec.decay == 1.0 && spec.num_labels > 1 {
        log::warn!("decay = 1.0: every label has the same frequency; the dataset is not long-tailed");
    }
    let n = spec.num_samples;
    let sizes = spec.fractions.sizes(n)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut Rng::substream(spec.seed, "split", &[]));
    let mut splits = vec![Split::Train; n];
    for (pos, &i) in order.iter().enumerate() {
        splits[i] = if pos < sizes[0] {
            Split::Train
        } else if pos < sizes[0] + sizes[1] {
            Split::Validation
        } else {
            Split::Test
        };
    }
    let assignment = SplitAssignment { splits };

    let mut labels = vec![vec![0u8; spec.num_labels]; n];
    for (si, split) in Split::ALL.into_iter().enumerate() {
        let members = assignment.indices(split);
        for (rank, per_split) in counts.iter().enumerate() {
            let mut rng = Rng::substream(spec.seed, "labels", &[rank as u64, si as u64]);
            for k in sample_indices(&mut rng, members.len(), per_split[si]) {
                labels[members[k]][rank] = 1;
            }
        }
    }

    let samples = match spec.payload {
        PayloadSpec::Image {
            height,
            width,
            channels,
        } => {
            if height == 0 || width == 0 || channels == 0 {
                return Err(Error::Validation("image dimensions must be positive".into()));
            }
            let patterns = label_patterns(spec, height, width, channels);
            labels
                .into_iter()
                .enumerate()
                .map(|(i, y)| {
                    let mut rng = Rng::substream(spec.seed, "payload", &[i as u64]);
                    let nuisance: Vec<Vec<f64>> = (0..channels)
                        .map(|_| {
                            let coarse: Vec<f64> = (0..PATTERN_GRID * PATTERN_GRID)
                                .map(|_| StandardNormal.sample(&mut rng))
                                .collect();
                            upsample(&coarse, PATTERN_GRID, height, width)
                        })
                        .collect();
                    let pixel_noise = Normal::new(0.0, PIXEL_NOISE).unwrap();
                    let mut data = Vec::with_capacity(height * width * channels);
                    for p in 0..height * width {
                        for c in 0..channels {
                            let mut v = nuisance[c][p];
                            for (l, &on) in y.iter().enumerate() {
                                if on == 1 {
                                    v += spec.signal_strength * patterns[l][c][p];
                                }
                            }
                            let px = 128.0 + GRAY_SCALE * v + pixel_noise.sample(&mut rng);
                            data.push(px.round().clamp(0.0, 255.0) as u8);
                        }
                    }
                    LabeledSample {
                        sample_id: sample_id(i),
                        payload: Payload::Image(Image {
                            height,
                            width,
                            channels,
                            data,
                        }),
                        labels: y,
                    }
                })
                .collect()
        }
        PayloadSpec::Vector { len } => {
            if len == 0 {
                return Err(Error::Validation("vector payload length must be positive".into()));
            }
            let dirs = label_directions(spec, len);
            labels
                .into_iter()
                .enumerate()
                .map(|(i, y)| {
                    let mut rng = Rng::substream(spec.seed, "payload", &[i as u64]);
                    let v = (0..len)
                        .map(|k| {
                            let mut x: f64 = StandardNormal.sample(&mut rng);
                            for (l, &on) in y.iter().enumerate() {
                                if on == 1 {
                                    x += spec.signal_strength * dirs[l][k];
                                }
                            }
                            x as f32
                        })
                        .collect();
                    LabeledSample {
                        sample_id: sample_id(i),
                        payload: Payload::Vector(v),
                        labels: y,
                    }
                })
                .collect()
        }
    };

    Ok((
        Dataset {
            num_labels: spec.num_labels,
            samples,
        },
        assignment,
    ))
}

pub fn sample_id(index: usize) -> String {
    format!("s{index:06}")
}
