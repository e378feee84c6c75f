//! Wall-clock benchmark of one training step on a pre-staged zero batch.
//!
//! A step is feature extraction from the staged inputs, head forward, mean
//! BCE, backward and the Adam update. Warmup steps run untimed first; every
//! measured step is timed on its own with a monotonic clock.
//!
//! Results log (`bench_log.tsv`, append-only): header
//! `timestamp\ttag\thead\tn\tfeature_dim\tbatch\twarmup\tmeasured\tmean_s\tstd_s\tstate_bytes\thost\tcores\tworkers\tprofile`.

use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::datapipe::{LabeledBatch, Tensor};
use crate::mlcore::{AdamConfig, AdamState, Rng};
use crate::model::{FeatureExtractor, Head, HeadKind, ProjectionConfig, DEFAULT_FEATURE_DIM};
use crate::qsim::state_bytes;
use crate::trainer::{training_step, FeatureSet};
use crate::{Error, Result};

pub const BENCH_LOG_HEADER: &str = "timestamp\ttag\thead\tn\tfeature_dim\tbatch\twarmup\tmeasured\tmean_s\tstd_s\tstate_bytes\thost\tcores\tworkers\tprofile";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchProtocol {
    pub warmup_steps: usize,
    pub measured_steps: usize,
    pub batch_size: usize,
    pub head: HeadKind,
    pub num_labels: usize,
    pub feature_dim: usize,
    pub depth: usize,
    pub seed: u64,
    /// Shape of each staged input, `[channels, height, width]`.
    pub input_shape: Vec<usize>,
    /// Pooling grid of the projection extractor.
    pub pool: usize,
}

impl BenchProtocol {
    pub fn new(head: HeadKind, num_labels: usize) -> Self {
        BenchProtocol {
            warmup_steps: 10,
            measured_steps: 30,
            batch_size: 32,
            head,
            num_labels,
            feature_dim: DEFAULT_FEATURE_DIM,
            depth: 3,
            seed: 0,
            input_shape: vec![3, 64, 64],
            pool: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps < 1 {
            return Err(Error::Config("benchmark needs at least 1 warmup step".into()));
        }
        if self.measured_steps < 2 {
            return Err(Error::Config("benchmark needs at least 2 measured steps".into()));
        }
        if self.batch_size == 0 || self.num_labels == 0 || self.feature_dim == 0 {
            return Err(Error::Config("batch size, label count and feature dim must be positive".into()));
        }
        if self.input_shape.len() != 3 || self.input_shape.contains(&0) {
            return Err(Error::Config(format!(
                "input shape must be [channels, height, width], got {:?}",
                self.input_shape
            )));
        }
        Ok(())
    }
}

/// All-zero inputs of `shape` and all-zero label vectors of length `num_labels`.
pub fn zero_batch(batch_size: usize, shape: &[usize], num_labels: usize) -> LabeledBatch {
    LabeledBatch {
        sample_ids: (0..batch_size).map(|i| format!("zero-{i}")).collect(),
        inputs: (0..batch_size).map(|_| Tensor::zeros(shape.to_vec())).collect(),
        labels: vec![vec![0; num_labels]; batch_size],
    }
}

/// Where and how a benchmark ran.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub host: String,
    pub cores: usize,
    /// Worker threads available to the step.
    pub workers: usize,
    pub profile: String,
    pub target: String,
    pub crate_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl Environment {
    pub fn capture() -> Self {
        let host = fs::read_to_string("/proc/sys/kernel/hostname")
            .or_else(|_| fs::read_to_string("/etc/hostname"))
            .map(|h| h.trim().to_string())
            .ok()
            .or_else(|| std::env::var("HOSTNAME").ok())
            .filter(|h| !h.is_empty())
            .unwrap_or_else(|| "unknown".into());
        Environment {
            host,
            cores: std::thread::available_parallelism().map_or(1, usize::from),
            workers: rayon::current_num_threads(),
            profile: if cfg!(debug_assertions) { "debug" } else { "optimized" }.into(),
            target: format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub protocol: BenchProtocol,
    /// Seconds per measured step.
    pub samples: Vec<f64>,
    /// Seconds per warmup step; kept for inspection, never reported.
    pub warmup_samples: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    /// Loss returned by the last step.
    pub final_loss: f64,
    /// Simulator state size for the DQC head, `None` for CDL.
    pub state_bytes: Option<u128>,
    pub environment: Environment,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Outcome of the warmup check: the first warmup step should cost at least
/// the measured mean, since it pays for first-touch allocation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarmupCheck {
    pub first_warmup: f64,
    pub measured_mean: f64,
    pub holds: bool,
    /// True when the two are equal, so the check holds without evidence.
    pub vacuous: bool,
}

impl BenchResult {
    pub fn warmup_check(&self) -> WarmupCheck {
        let first = self.warmup_samples.first().copied().unwrap_or(0.0);
        WarmupCheck {
            first_warmup: first,
            measured_mean: self.mean,
            holds: first >= self.mean,
            vacuous: first == self.mean,
        }
    }
}

/// Builds the head, stages a zero batch, runs the warmup steps untimed and
/// times each measured step.
pub fn run_bench(protocol: &BenchProtocol) -> Result<BenchResult> {
    protocol.validate()?;
    let [c, h, w] = protocol.input_shape[..] else {
        unreachable!("validated shape");
    };
    let extractor = FeatureExtractor::projection(ProjectionConfig::image(
        c,
        h,
        w,
        protocol.pool,
        protocol.feature_dim,
        protocol.seed,
    ))?;
    let mut head = Head::init(
        protocol.head,
        &mut Rng::substream(protocol.seed, "init", &[]),
        protocol.feature_dim,
        protocol.num_labels,
        protocol.depth,
    )?;
    let mut optimizer = AdamState::new(&head.group_sizes());
    let adam = AdamConfig::default();
    let batch = zero_batch(protocol.batch_size, &protocol.input_shape, protocol.num_labels);

    let step = |head: &mut Head, optimizer: &mut AdamState| -> Result<(f64, f64)> {
        let start = Instant::now();
        let set = FeatureSet::from_batch(&extractor, &batch)?;
        let loss = training_step(head, optimizer, &adam, &set)?;
        Ok((start.elapsed().as_secs_f64(), loss))
    };

    let mut warmup_samples = Vec::with_capacity(protocol.warmup_steps);
    let mut final_loss = f64::NAN;
    for _ in 0..protocol.warmup_steps {
        let (t, loss) = step(&mut head, &mut optimizer)?;
        warmup_samples.push(t);
        final_loss = loss;
    }
    let mut samples = Vec::with_capacity(protocol.measured_steps);
    for _ in 0..protocol.measured_steps {
        let (t, loss) = step(&mut head, &mut optimizer)?;
        samples.push(t);
        final_loss = loss;
    }
    let (mean, std) = mean_std(&samples);
    Ok(BenchResult {
        protocol: protocol.clone(),
        samples,
        warmup_samples,
        mean,
        std,
        final_loss,
        state_bytes: (protocol.head == HeadKind::Dqc).then(|| state_bytes(protocol.num_labels)),
        environment: Environment::capture(),
    })
}

/// Least-squares fit `y = intercept + slope * x` with its Akaike criterion
/// under Gaussian residuals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub rss: f64,
    pub aic: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::shape("fit points", xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(Error::Argument("a fit needs at least 3 points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Argument("fit needs at least two distinct x values".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    // Floor keeps an exact fit from producing ln(0).
    let aic = n * (rss.max(f64::MIN_POSITIVE) / n).ln() + 4.0;
    Ok(LinearFit {
        intercept,
        slope,
        rss,
        aic,
    })
}

/// Growth model preferred by AIC.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Growth {
    /// Step time linear in `n`.
    Linear,
    /// Step time linear in `2^n`.
    Exponential,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthFit {
    pub head: HeadKind,
    /// Mean step time against `n`.
    pub linear: LinearFit,
    /// Mean step time against `2^n`.
    pub exponential: LinearFit,
    /// Slope of `log2(mean)` against `n`: near 1 for doubling per qubit,
    /// near 0 for flat cost.
    pub log2_slope: f64,
    pub preferred: Growth,
}

pub fn fit_growth(head: HeadKind, ns: &[usize], means: &[f64]) -> Result<GrowthFit> {
    let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let x2: Vec<f64> = ns.iter().map(|&n| (n as f64).exp2()).collect();
    let logy: Vec<f64> = means.iter().map(|m| m.max(f64::MIN_POSITIVE).log2()).collect();
    let linear = fit_line(&x, means)?;
    let exponential = fit_line(&x2, means)?;
    Ok(GrowthFit {
        head,
        linear,
        exponential,
        log2_slope: fit_line(&x, &logy)?.slope,
        preferred: if exponential.aic < linear.aic { Growth::Exponential } else { Growth::Linear },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub head: HeadKind,
    pub mean: f64,
    pub std: f64,
    /// `2^n * 16`, the amplitude storage a DQC head of this width needs.
    pub state_bytes: u128,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    /// One fit per head; empty with fewer than 3 widths.
    pub fits: Vec<GrowthFit>,
    pub results: Vec<BenchResult>,
}

impl ScalingTable {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("n\thead\tmean_s\tstd_s\tstate_bytes\n");
        for r in &self.rows {
            let _ = writeln!(out, "{}\t{}\t{:.6}\t{:.6}\t{}", r.n, r.head, r.mean, r.std, r.state_bytes);
        }
        for f in &self.fits {
            let _ = writeln!(
                out,
                "# {}: aic_linear={:.3} aic_exponential={:.3} log2_slope={:.3} preferred={}",
                f.head,
                f.linear.aic,
                f.exponential.aic,
                f.log2_slope,
                match f.preferred {
                    Growth::Linear => "linear",
                    Growth::Exponential => "exponential",
                }
            );
        }
        out
    }
}

/// Benchmarks both heads at every width in `n_values` (ascending) using
/// `protocol` for everything but the head and label count.
pub fn scaling_sweep(n_values: &[usize], protocol: &BenchProtocol) -> Result<ScalingTable> {
    if n_values.is_empty() || n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument(format!("sweep widths must be strictly ascending, got {n_values:?}")));
    }
    let mut rows = Vec::new();
    let mut results = Vec::new();
    let mut fits = Vec::new();
    for head in [HeadKind::Cdl, HeadKind::Dqc] {
        let mut means = Vec::new();
        for &n in n_values {
            let p = BenchProtocol {
                head,
                num_labels: n,
                ..protocol.clone()
            };
            let r = run_bench(&p)?;
            rows.push(ScalingRow {
                n,
                head,
                mean: r.mean,
                std: r.std,
                state_bytes: state_bytes(n),
            });
            means.push(r.mean);
            results.push(r);
        }
        if n_values.len() >= 3 {
            fits.push(fit_growth(head, n_values, &means)?);
        }
    }
    Ok(ScalingTable { rows, fits, results })
}

/// Results as a text table: one row per benchmark.
pub fn format_results(results: &[BenchResult]) -> String {
    let mut out = String::from("head\tn\tmean_s\tstd_s\tsteps\tstate_bytes\n");
    for r in results {
        let _ = writeln!(
            out,
            "{}\t{}\t{:.6}\t{:.6}\t{}\t{}",
            r.protocol.head,
            r.protocol.num_labels,
            r.mean,
            r.std,
            r.samples.len(),
            r.state_bytes.map_or_else(|| "-".to_string(), |b| b.to_string())
        );
    }
    out
}

/// Appends one row per result to the log at `path`, writing the header when
/// the file is new. Existing rows are never rewritten.
pub fn append_log(path: &Path, results: &[BenchResult], tag: &str) -> Result<()> {
    if tag.contains(['\t', '\n']) {
        return Err(Error::Argument("tag may not contain tabs or newlines".into()));
    }
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    if file.metadata().map_err(|e| Error::io(path, e))?.len() == 0 {
        text.push_str(BENCH_LOG_HEADER);
        text.push('\n');
    }
    for r in results {
        let e = &r.environment;
        let p = &r.protocol;
        let _ = writeln!(
            text,
            "{}\t{tag}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{}\t{}",
            e.timestamp,
            p.head,
            p.num_labels,
            p.feature_dim,
            p.batch_size,
            p.warmup_steps,
            p.measured_steps,
            r.mean,
            r.std,
            r.state_bytes.map_or_else(|| "-".to_string(), |b| b.to_string()),
            e.host,
            e.cores,
            e.workers,
            e.profile
        );
    }
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Exclusive benchmark lock, released on drop. A lock left by a process that
/// no longer exists is taken over.
#[derive(Debug)]
pub struct BenchLock {
    path: PathBuf,
}

impl BenchLock {
    pub fn acquire(path: &Path) -> Result<Self> {
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(path) {
                Ok(mut f) => {
                    let _ = writeln!(f, "{}", std::process::id());
                    return Ok(BenchLock { path: path.to_path_buf() });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    if !Self::is_stale(path) {
                        return Err(Error::Locked(path.to_path_buf()));
                    }
                    let _ = fs::remove_file(path);
                }
                Err(e) => return Err(Error::io(path, e)),
            }
        }
        Err(Error::Locked(path.to_path_buf()))
    }

    fn is_stale(path: &Path) -> bool {
        let Ok(text) = fs::read_to_string(path) else {
            return false;
        };
        match text.trim().parse::<u32>() {
            Ok(pid) => Path::new("/proc").is_dir() && !Path::new(&format!("/proc/{pid}")).exists(),
            Err(_) => false,
        }
    }
}

impl Drop for BenchLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(head: HeadKind, n: usize) -> BenchProtocol {
        BenchProtocol {
            warmup_steps: 2,
            measured_steps: 3,
            batch_size: 4,
            feature_dim: 64,
            input_shape: vec![3, 16, 16],
            pool: 4,
            ..BenchProtocol::new(head, n)
        }
    }

    #[test]
    fn zero_batch_is_all_zero() {
        let b = zero_batch(32, &[3, 8, 8], 8);
        assert_eq!(b.len(), 32);
        assert!(b.labels.iter().all(|y| y.len() == 8 && y.iter().all(|&v| v == 0)));
        assert!(b.inputs.iter().all(|t| t.shape() == [3, 8, 8] && t.data().iter().all(|&v| v == 0.0)));
        assert_eq!(zero_batch(1, &[3, 8, 8], 2).len(), 1);
    }

    #[test]
    fn defaults_follow_protocol() {
        let p = BenchProtocol::new(HeadKind::Dqc, 8);
        assert_eq!((p.warmup_steps, p.measured_steps, p.batch_size), (10, 30, 32));
        assert_eq!(p.feature_dim, 2048);
        let bad = BenchProtocol {
            measured_steps: 1,
            ..p.clone()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = BenchProtocol { warmup_steps: 0, ..p };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn records_exactly_measured_samples() {
        let r = run_bench(&quick(HeadKind::Dqc, 3)).unwrap();
        assert_eq!(r.samples.len(), 3);
        assert_eq!(r.warmup_samples.len(), 2);
        let (m, s) = mean_std(&r.samples);
        assert_eq!((r.mean, r.std), (m, s));
        assert_eq!(r.state_bytes, Some(128));
    }

    #[test]
    fn work_is_deterministic() {
        for head in [HeadKind::Cdl, HeadKind::Dqc] {
            let a = run_bench(&quick(head, 4)).unwrap();
            let b = run_bench(&quick(head, 4)).unwrap();
            assert_eq!(a.final_loss.to_bits(), b.final_loss.to_bits());
        }
    }

    #[test]
    fn capacity_error_over_cap() {
        let p = quick(HeadKind::Dqc, 40);
        assert!(matches!(run_bench(&p), Err(Error::Capacity { .. })));
    }

    #[test]
    fn sample_std_uses_n_minus_one() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sum of squared deviations 5, over 3
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn growth_fit_tells_flat_from_doubling() {
        let ns: Vec<usize> = (2..=12).collect();
        let doubling: Vec<f64> = ns.iter().map(|&n| 1e-4 * (n as f64).exp2() + 0.01).collect();
        let flat: Vec<f64> = ns.iter().map(|&n| 0.05 + 1e-4 * n as f64).collect();
        let d = fit_growth(HeadKind::Dqc, &ns, &doubling).unwrap();
        let f = fit_growth(HeadKind::Cdl, &ns, &flat).unwrap();
        assert_eq!(d.preferred, Growth::Exponential);
        assert_eq!(f.preferred, Growth::Linear);
        assert!(d.log2_slope > 0.5 && f.log2_slope.abs() < 0.05);
    }

    #[test]
    fn fit_recovers_exact_line() {
        let f = fit_line(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!(fit_line(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn sweep_rows_and_state_bytes() {
        let t = scaling_sweep(&[2, 3, 4], &quick(HeadKind::Cdl, 1)).unwrap();
        assert_eq!(t.rows.len(), 6);
        assert_eq!(t.fits.len(), 2);
        assert_eq!(t.rows.iter().find(|r| r.n == 4).unwrap().state_bytes, 256);
        assert!(t.to_tsv().starts_with("n\thead\tmean_s\tstd_s\tstate_bytes\n"));
        assert!(scaling_sweep(&[3, 2], &quick(HeadKind::Cdl, 1)).is_err());
        assert_eq!(state_bytes(19), 8_388_608);
    }

    #[test]
    fn log_appends_and_lock_excludes() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("bench_log.tsv");
        let r = run_bench(&quick(HeadKind::Cdl, 2)).unwrap();
        append_log(&log, std::slice::from_ref(&r), "first").unwrap();
        append_log(&log, std::slice::from_ref(&r), "second").unwrap();
        let text = fs::read_to_string(&log).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], BENCH_LOG_HEADER);
        assert!(lines[1].contains("\tfirst\t") && lines[2].contains("\tsecond\t"));

        let lock_path = dir.path().join("bench.lock");
        let lock = BenchLock::acquire(&lock_path).unwrap();
        assert!(matches!(BenchLock::acquire(&lock_path), Err(Error::Locked(_))));
        drop(lock);
        assert!(BenchLock::acquire(&lock_path).is_ok());
    }

    #[test]
    fn stale_lock_is_taken_over() {
        let dir = tempfile::tempdir().unwrap();
        let lock_path = dir.path().join("bench.lock");
        // pid_max on Linux is far below this.
        fs::write(&lock_path, "4294967294\n").unwrap();
        assert!(BenchLock::acquire(&lock_path).is_ok());
    }
}
