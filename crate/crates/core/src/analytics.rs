//! Evaluation statistics: AUROC, percent differences, paired t-tests and
//! volcano-plot tables.
//!
//! Text tables are tab-separated with a header row:
//!
//! - per-seed AUROC: `head  seed  label  auroc`
//! - comparisons: `label  task  cdl_mean  cdl_std  dqc_mean  dqc_std  t  p  pct_diff`
//! - volcano: `label  task  pct_diff  p  x  y  transformable`, where `x` is
//!   empty when `pct_diff <= 0`; a leading `# threshold_y=` comment carries
//!   `-log10(0.05)`.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Scores and binary truths for one label.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredLabelSet {
    pub label: String,
    pub scores: Vec<f64>,
    pub truths: Vec<u8>,
}

impl ScoredLabelSet {
    pub fn new(label: impl Into<String>, scores: Vec<f64>, truths: Vec<u8>) -> Self {
        ScoredLabelSet {
            label: label.into(),
            scores,
            truths,
        }
    }
}

/// Mann-Whitney AUROC with tied pairs counted as one half.
pub fn auroc(set: &ScoredLabelSet) -> Result<f64> {
    let undefined = |reason: String| Error::UndefinedMetric {
        label: set.label.clone(),
        reason,
    };
    if set.scores.len() != set.truths.len() {
        return Err(undefined(format!(
            "{} scores for {} truths",
            set.scores.len(),
            set.truths.len()
        )));
    }
    if set.scores.iter().any(|s| s.is_nan()) {
        return Err(undefined("NaN score".into()));
    }
    if let Some(t) = set.truths.iter().find(|&&t| t > 1) {
        return Err(undefined(format!("truth value {t} is not 0 or 1")));
    }
    let positives = set.truths.iter().filter(|&&t| t == 1).count();
    let negatives = set.truths.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(undefined(format!("{positives} positives and {negatives} negatives")));
    }

    let mut order: Vec<usize> = (0..set.scores.len()).collect();
    order.sort_by(|&a, &b| set.scores[a].partial_cmp(&set.scores[b]).unwrap_or(Ordering::Equal));
    // Twice the rank sum of positives, so tied mid-ranks stay integral.
    let mut rank_sum_x2: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && set.scores[order[end]] == set.scores[order[start]] {
            end += 1;
        }
        let mid_x2 = (start + 1 + end) as u64;
        let tied_positives = order[start..end].iter().filter(|&&i| set.truths[i] == 1).count() as u64;
        rank_sum_x2 += mid_x2 * tied_positives;
        start = end;
    }
    let (p, n) = (positives as u64, negatives as u64);
    let u_x2 = rank_sum_x2 - p * (p + 1);
    Ok(u_x2 as f64 / 2.0 / (p * n) as f64)
}

/// Unweighted mean of per-label AUROCs.
pub fn mean_auroc(per_label: &[f64]) -> Result<f64> {
    if per_label.is_empty() {
        return Err(Error::UndefinedMetric {
            label: "mean".into(),
            reason: "no labels".into(),
        });
    }
    Ok(per_label.iter().sum::<f64>() / per_label.len() as f64)
}

/// AUROC per label, then the mean; the first undefined label aborts with its
/// name.
pub fn evaluate_labels(sets: &[ScoredLabelSet]) -> Result<(Vec<f64>, f64)> {
    let per_label = sets.iter().map(auroc).collect::<Result<Vec<_>>>()?;
    let mean = mean_auroc(&per_label)?;
    Ok((per_label, mean))
}

/// Splits sample-major probabilities into one scored set per label.
pub fn label_sets(names: &[String], probabilities: &[Vec<f64>], truths: &[Vec<u8>]) -> Result<Vec<ScoredLabelSet>> {
    if probabilities.len() != truths.len() {
        return Err(Error::shape("scored samples", truths.len(), probabilities.len()));
    }
    Ok(names
        .iter()
        .enumerate()
        .map(|(l, name)| {
            ScoredLabelSet::new(
                name.clone(),
                probabilities.iter().map(|p| p[l]).collect(),
                truths.iter().map(|t| t[l]).collect(),
            )
        })
        .collect())
}

/// Percent difference `2 (a - b) / (a + b)` as a fraction.
pub fn pct_diff_auroc(a_cdl: f64, a_dqc: f64) -> Result<f64> {
    let sum = a_cdl + a_dqc;
    if !(a_cdl.is_finite() && a_dqc.is_finite()) || sum == 0.0 {
        return Err(Error::UndefinedMetric {
            label: "pct_diff".into(),
            reason: format!("inputs {a_cdl} and {a_dqc}"),
        });
    }
    Ok(2.0 * (a_cdl - a_dqc) / sum)
}

// Lanczos approximation, g = 7, nine coefficients.
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + 7.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        d = if d.abs() < TINY { TINY } else { d };
        c = 1.0 + aa / c;
        c = if c.abs() < TINY { TINY } else { c };
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        d = if d.abs() < TINY { TINY } else { d };
        c = 1.0 + aa / c;
        c = if c.abs() < TINY { TINY } else { c };
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail probability `P(|T| >= |t|)` of Student's t with `df`
/// degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    pub p: f64,
}

/// Two-sided paired t-test on `x - y`.
pub fn paired_t_test(x: &[f64], y: &[f64]) -> Result<TTest> {
    if x.len() != y.len() {
        return Err(Error::shape("paired samples", x.len(), y.len()));
    }
    let k = x.len();
    if k < 2 {
        return Err(Error::DegenerateTest(format!("need at least 2 pairs, got {k}")));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateTest("non-finite difference".into()));
    }
    let mean = d.iter().sum::<f64>() / k as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    // Differences that agree to rounding error are a constant shift.
    let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if var.sqrt() <= 1e-12 * scale.max(f64::MIN_POSITIVE) || var == 0.0 {
        return Err(Error::DegenerateTest("differences have zero variance".into()));
    }
    let t = mean / (var / k as f64).sqrt();
    let df = k - 1;
    Ok(TTest {
        t,
        df,
        p: t_two_sided_p(t, df as f64),
    })
}

/// Two-sided one-sample t-test of `x` against the constant `mu`.
pub fn one_sample_t_test(x: &[f64], mu: f64) -> Result<TTest> {
    paired_t_test(x, &vec![mu; x.len()])
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std = if x.len() > 1 {
        (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Per-seed AUROCs of both heads for one label (or `"mean"`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub label: String,
    pub task: String,
    pub auroc_cdl: Vec<f64>,
    pub auroc_dqc: Vec<f64>,
    pub t: f64,
    pub p_value: f64,
    /// Percent difference of the seed means, as a fraction.
    pub pct_diff: f64,
}

impl PairedComparison {
    pub fn new(label: impl Into<String>, task: impl Into<String>, cdl: Vec<f64>, dqc: Vec<f64>) -> Result<Self> {
        let test = paired_t_test(&cdl, &dqc)?;
        let pct_diff = pct_diff_auroc(mean_std(&cdl).0, mean_std(&dqc).0)?;
        Ok(PairedComparison {
            label: label.into(),
            task: task.into(),
            auroc_cdl: cdl,
            auroc_dqc: dqc,
            t: test.t,
            p_value: test.p,
            pct_diff,
        })
    }

    pub fn cdl_mean_std(&self) -> (f64, f64) {
        mean_std(&self.auroc_cdl)
    }

    pub fn dqc_mean_std(&self) -> (f64, f64) {
        mean_std(&self.auroc_dqc)
    }
}

pub fn comparison_table(rows: &[PairedComparison]) -> String {
    let mut out = String::from("label\ttask\tcdl_mean\tcdl_std\tdqc_mean\tdqc_std\tt\tp\tpct_diff\n");
    for r in rows {
        let ((cm, cs), (dm, ds)) = (r.cdl_mean_std(), r.dqc_mean_std());
        let _ = writeln!(
            out,
            "{}\t{}\t{cm:.6}\t{cs:.6}\t{dm:.6}\t{ds:.6}\t{:.6}\t{:.6e}\t{:.6}",
            r.label, r.task, r.t, r.p_value, r.pct_diff
        );
    }
    out
}

/// `(head, seed, label, auroc)` rows.
pub fn auroc_table(rows: &[(String, u64, String, f64)]) -> String {
    let mut out = String::from("head\tseed\tlabel\tauroc\n");
    for (head, seed, label, a) in rows {
        let _ = writeln!(out, "{head}\t{seed}\t{label}\t{a:.6}");
    }
    out
}

pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolcanoRow {
    pub label: String,
    pub task: String,
    pub pct_diff: f64,
    pub p: f64,
    /// `log2(pct_diff)`; `None` when the difference is not positive.
    pub x: Option<f64>,
    /// `-log10(p)`.
    pub y: f64,
}

impl VolcanoRow {
    pub fn transformable(&self) -> bool {
        self.x.is_some()
    }

    pub fn significant(&self) -> bool {
        self.p < SIGNIFICANCE
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolcanoTable {
    pub rows: Vec<VolcanoRow>,
    /// `-log10(0.05)`.
    pub threshold_y: f64,
}

impl VolcanoTable {
    pub fn to_tsv(&self) -> String {
        let mut out = format!("# threshold_y={:.6}\nlabel\ttask\tpct_diff\tp\tx\ty\ttransformable\n", self.threshold_y);
        for r in &self.rows {
            let x = r.x.map(|x| format!("{x:.6}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6e}\t{x}\t{:.6}\t{}",
                r.label,
                r.task,
                r.pct_diff,
                r.p,
                r.y,
                r.transformable()
            );
        }
        out
    }
}

pub fn volcano_row(label: &str, task: &str, pct_diff: f64, p: f64) -> Result<VolcanoRow> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Argument(format!("p-value {p} for {label} outside (0, 1]")));
    }
    Ok(VolcanoRow {
        label: label.to_string(),
        task: task.to_string(),
        pct_diff,
        p,
        x: (pct_diff > 0.0).then(|| pct_diff.log2()),
        y: -p.log10(),
    })
}

pub fn volcano_data(comparisons: &[PairedComparison]) -> Result<VolcanoTable> {
    Ok(VolcanoTable {
        rows: comparisons
            .iter()
            .map(|c| volcano_row(&c.label, &c.task, c.pct_diff, c.p_value))
            .collect::<Result<_>>()?,
        threshold_y: -SIGNIFICANCE.log10(),
    })
}
