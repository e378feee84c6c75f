use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datapipe::Tensor;
use crate::mlcore::Rng;
use crate::{Error, Result};

/// Default feature width, matching the backbone the heads were sized for.
pub const DEFAULT_FEATURE_DIM: usize = 2048;

/// Configuration of the frozen random projection.
///
/// For image inputs (`input_shape = [channels, height, width]`) the image is
/// first averaged over a `pool x pool` grid of cells; vector inputs
/// (`input_shape = [len]`) are used as they are. Both steps are linear, so the
/// whole map is one fixed seeded linear map followed by `tanh`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub input_shape: Vec<usize>,
    pub pool: usize,
    pub feature_dim: usize,
    pub seed: u64,
}

impl ProjectionConfig {
    pub fn image(channels: usize, height: usize, width: usize, pool: usize, feature_dim: usize, seed: u64) -> Self {
        ProjectionConfig {
            input_shape: vec![channels, height, width],
            pool,
            feature_dim,
            seed,
        }
    }

    pub fn vector(len: usize, feature_dim: usize, seed: u64) -> Self {
        ProjectionConfig {
            input_shape: vec![len],
            pool: 1,
            feature_dim,
            seed,
        }
    }

    fn reduced_dim(&self) -> Result<usize> {
        match self.input_shape.as_slice() {
            [len] => Ok(*len),
            [c, h, w] => {
                if self.pool == 0 || self.pool > *h || self.pool > *w {
                    return Err(Error::Argument(format!(
                        "pool grid {} does not fit a {h}x{w} image",
                        self.pool
                    )));
                }
                Ok(c * self.pool * self.pool)
            }
            other => Err(Error::Argument(format!("unsupported extractor input shape {other:?}"))),
        }
    }
}

/// Frozen seeded projection standing in for a pretrained backbone.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomProjection {
    config: ProjectionConfig,
    reduced_dim: usize,
    // feature_dim x reduced_dim
    projection: DMatrix<f64>,
    // pooling geometry for image inputs
    row_bin: Vec<usize>,
    col_bin: Vec<usize>,
    cell_area: Vec<f64>,
}

impl RandomProjection {
    pub fn new(config: ProjectionConfig) -> Result<Self> {
        let reduced_dim = config.reduced_dim()?;
        if config.feature_dim == 0 {
            return Err(Error::Argument("feature_dim must be positive".into()));
        }
        let scale = 1.0 / (reduced_dim as f64).sqrt();
        let mut rng = Rng::substream(config.seed, "extractor", &[]);
        // Drawn one reduced input at a time: column r holds the weights of
        // reduced input r.
        let mut projection = DMatrix::zeros(config.feature_dim, reduced_dim);
        for r in 0..reduced_dim {
            for f in 0..config.feature_dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                projection[(f, r)] = z * scale;
            }
        }
        let (mut row_bin, mut col_bin, mut cell_area) = (Vec::new(), Vec::new(), Vec::new());
        if let [_, h, w] = *config.input_shape {
            let p = config.pool;
            row_bin = (0..h).map(|y| y * p / h).collect();
            col_bin = (0..w).map(|x| x * p / w).collect();
            let mut rows = vec![0usize; p];
            let mut cols = vec![0usize; p];
            row_bin.iter().for_each(|&b| rows[b] += 1);
            col_bin.iter().for_each(|&b| cols[b] += 1);
            cell_area = (0..p * p).map(|i| (rows[i / p] * cols[i % p]) as f64).collect();
        }
        Ok(RandomProjection {
            config,
            reduced_dim,
            projection,
            row_bin,
            col_bin,
            cell_area,
        })
    }

    pub fn config(&self) -> &ProjectionConfig {
        &self.config
    }

    pub fn reduced_dim(&self) -> usize {
        self.reduced_dim
    }

    fn reduce(&self, input: &Tensor) -> Result<Vec<f64>> {
        if input.shape() != self.config.input_shape.as_slice() {
            return Err(Error::Argument(format!(
                "extractor expects input shape {:?}, got {:?}",
                self.config.input_shape,
                input.shape()
            )));
        }
        let data = input.data();
        if let [c, h, w] = *input.shape() {
            let p = self.config.pool;
            let mut out = vec![0.0; c * p * p];
            let (row_bin, col_bin) = (&self.row_bin, &self.col_bin);
            for ch in 0..c {
                let plane = &data[ch * h * w..(ch + 1) * h * w];
                let cells = &mut out[ch * p * p..(ch + 1) * p * p];
                for (y, row) in plane.chunks_exact(w).enumerate() {
                    let base = row_bin[y] * p;
                    for (x, v) in row.iter().enumerate() {
                        cells[base + col_bin[x]] += *v as f64;
                    }
                }
            }
            for (i, cell) in out.iter_mut().enumerate() {
                *cell /= self.cell_area[i % (p * p)];
            }
            Ok(out)
        } else {
            Ok(data.iter().map(|&v| v as f64).collect())
        }
    }

    pub fn extract(&self, input: &Tensor) -> Result<Vec<f64>> {
        Ok(self.extract_batch(&[input])?.pop().expect("one input gives one row"))
    }

    /// Features for many inputs. Inputs go through the matrix product in
    /// zero-padded blocks of fixed width, so every row is computed by the same
    /// kernel and does not depend on batch composition.
    pub fn extract_batch(&self, inputs: &[&Tensor]) -> Result<Vec<Vec<f64>>> {
        let reduced = inputs.par_iter().map(|t| self.reduce(t)).collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in reduced.chunks(EXTRACT_CHUNK) {
            let x = DMatrix::from_fn(self.reduced_dim, EXTRACT_CHUNK, |r, c| chunk.get(c).map_or(0.0, |v| v[r]));
            let y = &self.projection * x;
            out.extend(
                y.column_iter()
                    .take(chunk.len())
                    .map(|col| col.iter().map(|v| v.tanh()).collect::<Vec<f64>>()),
            );
        }
        Ok(out)
    }
}

const EXTRACT_CHUNK: usize = 64;

/// Feature rows computed elsewhere, keyed by sample id.
///
/// On disk this is a tab-separated table with a header row: `sample_id`
/// followed by `f0 .. f{m-1}`, one sample per line, values in Rust's
/// shortest round-trip float notation.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PrecomputedFeatures {
    feature_dim: usize,
    rows: HashMap<String, Vec<f64>>,
}

impl PrecomputedFeatures {
    pub fn new(feature_dim: usize) -> Self {
        PrecomputedFeatures {
            feature_dim,
            rows: HashMap::new(),
        }
    }

    pub fn insert(&mut self, sample_id: impl Into<String>, features: Vec<f64>) -> Result<()> {
        if features.len() != self.feature_dim {
            return Err(Error::shape("precomputed feature row", self.feature_dim, features.len()));
        }
        self.rows.insert(sample_id.into(), features);
        Ok(())
    }

    pub fn get(&self, sample_id: &str) -> Result<&[f64]> {
        self.rows
            .get(sample_id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Lookup(sample_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut ids: Vec<&String> = self.rows.keys().collect();
        ids.sort();
        let io = |e| Error::io(path, e);
        write!(w, "sample_id").map_err(io)?;
        for j in 0..self.feature_dim {
            write!(w, "\tf{j}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
        for id in ids {
            write!(w, "{id}").map_err(io)?;
            for v in &self.rows[id] {
                write!(w, "\t{v}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let bad = |reason: String| Error::Format {
            what: "feature table",
            reason,
        };
        let header = lines
            .next()
            .ok_or_else(|| bad("empty file".into()))?
            .map_err(|e| Error::io(path, e))?;
        let cols: Vec<&str> = header.split('\t').collect();
        if cols.first() != Some(&"sample_id") {
            return Err(bad("first column must be sample_id".into()));
        }
        let mut table = PrecomputedFeatures::new(cols.len() - 1);
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let id = fields.next().unwrap_or_default().to_string();
            let values = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("line {}: {e}", lineno + 2)))?;
            table.insert(id, values)?;
        }
        Ok(table)
    }
}

/// What a [`FeatureExtractor`] is asked to map.
#[derive(Clone, Copy, Debug)]
pub enum ExtractorInput<'a> {
    Tensor(&'a Tensor),
    Sample(&'a str),
}

/// Frozen map from samples to `feature_dim` reals. Never trained.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureExtractor {
    Projection(RandomProjection),
    Precomputed(PrecomputedFeatures),
}

impl FeatureExtractor {
    pub fn projection(config: ProjectionConfig) -> Result<Self> {
        Ok(FeatureExtractor::Projection(RandomProjection::new(config)?))
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            FeatureExtractor::Projection(p) => p.config.feature_dim,
            FeatureExtractor::Precomputed(t) => t.feature_dim,
        }
    }

    /// Whether this extractor consumes pixels (and so benefits from
    /// augmentation).
    pub fn reads_tensors(&self) -> bool {
        matches!(self, FeatureExtractor::Projection(_))
    }

    pub fn extract(&self, input: ExtractorInput<'_>) -> Result<Vec<f64>> {
        match (self, input) {
            (FeatureExtractor::Projection(p), ExtractorInput::Tensor(t)) => p.extract(t),
            (FeatureExtractor::Precomputed(t), ExtractorInput::Sample(id)) => Ok(t.get(id)?.to_vec()),
            (FeatureExtractor::Projection(_), ExtractorInput::Sample(_)) => Err(Error::Argument(
                "random projection needs a tensor, not a sample id".into(),
            )),
            (FeatureExtractor::Precomputed(_), ExtractorInput::Tensor(_)) => Err(Error::Argument(
                "precomputed features are looked up by sample id".into(),
            )),
        }
    }

    /// Same as [`extract`](Self::extract) over many inputs at once.
    pub fn extract_batch(&self, inputs: &[ExtractorInput<'_>]) -> Result<Vec<Vec<f64>>> {
        match self {
            FeatureExtractor::Projection(p) => {
                let tensors = inputs
                    .iter()
                    .map(|i| match i {
                        ExtractorInput::Tensor(t) => Ok(*t),
                        ExtractorInput::Sample(_) => Err(Error::Argument(
                            "random projection needs a tensor, not a sample id".into(),
                        )),
                    })
                    .collect::<Result<Vec<_>>>()?;
                p.extract_batch(&tensors)
            }
            FeatureExtractor::Precomputed(_) => inputs.iter().map(|&i| self.extract(i)).collect(),
        }
    }
}

pub fn extract_features(fx: &FeatureExtractor, input: ExtractorInput<'_>) -> Result<Vec<f64>> {
    fx.extract(input)
}
