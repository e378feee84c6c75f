use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dataset, Split, SplitAssignment};
use crate::{Error, Result};

pub const MANIFEST_HEADER: &str = "sample_id\tsplit\tlabels";

/// One manifest row: id, split and a multi-hot label string such as `0110`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    pub sample_id: String,
    pub split: Split,
    pub labels: Vec<u8>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn from_dataset(dataset: &Dataset, split: &SplitAssignment) -> Self {
        Manifest {
            rows: dataset
                .samples
                .iter()
                .enumerate()
                .map(|(i, s)| ManifestRow {
                    sample_id: s.sample_id.clone(),
                    split: split.split_of(i),
                    labels: s.labels.clone(),
                })
                .collect(),
        }
    }

    pub fn num_labels(&self) -> usize {
        self.rows.first().map_or(0, |r| r.labels.len())
    }

    pub fn split_assignment(&self) -> SplitAssignment {
        SplitAssignment::from_splits(self.rows.iter().map(|r| r.split).collect())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for r in &self.rows {
            let labels: String = r.labels.iter().map(|&y| if y == 1 { '1' } else { '0' }).collect();
            let _ = writeln!(out, "{}\t{}\t{}", r.sample_id, r.split, labels);
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let bad = |line: usize, reason: String| Error::Format {
            what: "manifest",
            reason: format!("line {line}: {reason}"),
        };
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_HEADER) {
            return Err(bad(1, format!("expected header {MANIFEST_HEADER:?}")));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, split, labels] = fields[..] else {
                return Err(bad(i + 2, format!("expected 3 fields, got {}", fields.len())));
            };
            let labels = labels
                .chars()
                .map(|c| match c {
                    '0' => Ok(0),
                    '1' => Ok(1),
                    other => Err(bad(i + 2, format!("label character {other:?}"))),
                })
                .collect::<Result<Vec<u8>>>()?;
            if rows.first().is_some_and(|r: &ManifestRow| r.labels.len() != labels.len()) {
                return Err(bad(i + 2, "label width differs from first row".into()));
            }
            rows.push(ManifestRow {
                sample_id: id.to_string(),
                split: split.parse().map_err(|e: Error| bad(i + 2, e.to_string()))?,
                labels,
            });
        }
        Ok(Manifest { rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse_tsv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_round_trip() {
        let m = Manifest {
            rows: vec![
                ManifestRow {
                    sample_id: "s0".into(),
                    split: Split::Test,
                    labels: vec![0, 1, 1],
                },
                ManifestRow {
                    sample_id: "s1".into(),
                    split: Split::Train,
                    labels: vec![1, 0, 0],
                },
            ],
        };
        let text = m.to_tsv();
        assert!(text.starts_with("sample_id\tsplit\tlabels\ns0\ttest\t011\n"));
        assert_eq!(Manifest::parse_tsv(&text).unwrap(), m);
    }

    #[test]
    fn rejects_ragged_labels() {
        let text = "sample_id\tsplit\tlabels\na\ttrain\t01\nb\ttrain\t011\n";
        assert!(matches!(Manifest::parse_tsv(text), Err(Error::Format { .. })));
    }
}
