//! The PLD text format.
//!
//! ```text
//! PLD1 <N> <d> <Q> <has_truth>
//! <d space-separated features>          N lines
//! <ascending 0-based candidate classes> N lines
//! <true class>                          N lines, only when has_truth = 1
//! ```
//!
//! UTF-8 with LF line endings. Lines starting with `#` are ignored anywhere.

use std::fmt::Write as _;
use std::path::Path;

use crate::numkit::Matrix;
use crate::{Error, Result};

/// Instances with candidate label sets and, optionally, their true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialDataset {
    pub features: Matrix,
    /// Sorted, non-empty candidate classes per instance.
    pub candidates: Vec<Vec<usize>>,
    pub truth: Option<Vec<usize>>,
    pub classes: usize,
    /// Display names for classes. Not stored in PLD files.
    pub names: Option<Vec<String>>,
}

impl PartialDataset {
    /// Validates every invariant: non-empty sorted candidate sets within range
    /// and, when present, true labels contained in their candidate sets.
    pub fn new(features: Matrix, candidates: Vec<Vec<usize>>, truth: Option<Vec<usize>>, classes: usize) -> Result<Self> {
        let ds = Self { features, candidates, truth, classes, names: None };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.features.rows();
        if self.candidates.len() != n {
            return Err(Error::Data(format!("{} candidate rows for {n} instances", self.candidates.len())));
        }
        for (i, set) in self.candidates.iter().enumerate() {
            check_candidate_row(i, set, self.classes).map_err(Error::Data)?;
        }
        if let Some(truth) = &self.truth {
            if truth.len() != n {
                return Err(Error::Data(format!("{} true labels for {n} instances", truth.len())));
            }
            for (i, &y) in truth.iter().enumerate() {
                if self.candidates[i].binary_search(&y).is_err() {
                    return Err(Error::Data(format!("instance {i}: true label {y} is not a candidate")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> PartialDataset {
        PartialDataset {
            features: self.features.select_rows(idx),
            candidates: idx.iter().map(|&i| self.candidates[i].clone()).collect(),
            truth: self.truth.as_ref().map(|t| idx.iter().map(|&i| t[i]).collect()),
            classes: self.classes,
            names: self.names.clone(),
        }
    }

    pub fn mean_candidate_size(&self) -> f64 {
        self.candidates.iter().map(Vec::len).sum::<usize>() as f64 / self.len().max(1) as f64
    }

    /// Shifts every feature column to zero mean and scales it to unit variance.
    /// Constant columns are only centred.
    pub fn standardize(&mut self) {
        let (n, d) = self.features.shape();
        if n == 0 {
            return;
        }
        for c in 0..d {
            let mean = (0..n).map(|r| self.features.get(r, c)).sum::<f64>() / n as f64;
            let var = (0..n).map(|r| (self.features.get(r, c) - mean).powi(2)).sum::<f64>() / n as f64;
            let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
            for r in 0..n {
                let v = (self.features.get(r, c) - mean) * scale;
                self.features.set(r, c, v);
            }
        }
    }

    pub fn to_pld(&self) -> String {
        let (n, d) = self.features.shape();
        let mut out = format!("PLD1 {n} {d} {} {}\n", self.classes, u8::from(self.truth.is_some()));
        for r in 0..n {
            let row: Vec<String> = self.features.row(r).iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        for set in &self.candidates {
            let row: Vec<String> = set.iter().map(usize::to_string).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        if let Some(truth) = &self.truth {
            for y in truth {
                let _ = writeln!(out, "{y}");
            }
        }
        out
    }

    pub fn from_pld(text: &str) -> Result<Self> {
        let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse { line: 1, reason: "empty file".into() })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "PLD1" {
            return Err(Error::Parse { line: hline, reason: "header must be `PLD1 N d Q has_truth`".into() });
        }
        let num = |s: &str, what: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Parse { line: hline, reason: format!("bad {what} {s:?}") })
        };
        let n = num(fields[1], "N")?;
        let d = num(fields[2], "d")?;
        let q = num(fields[3], "Q")?;
        let has_truth = match fields[4] {
            "0" => false,
            "1" => true,
            other => return Err(Error::Parse { line: hline, reason: format!("has_truth must be 0 or 1, got {other:?}") }),
        };
        if q == 0 {
            return Err(Error::Parse { line: hline, reason: "Q must be positive".into() });
        }
        let eof_line = text.split('\n').count();
        let mut next = |what: &str| {
            lines.next().ok_or(Error::Parse { line: eof_line, reason: format!("file ends before {what}") })
        };

        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            let (ln, line) = next("features")?;
            let before = data.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| Error::Parse { line: ln, reason: format!("bad feature {tok:?}") })?;
                if !v.is_finite() {
                    return Err(Error::Parse { line: ln, reason: format!("non-finite feature {tok:?}") });
                }
                data.push(v);
            }
            if data.len() - before != d {
                return Err(Error::Parse {
                    line: ln,
                    reason: format!("instance {i} has {} features, expected {d}", data.len() - before),
                });
            }
        }
        let features = Matrix::from_vec(n, d, data)?;

        let mut candidates = Vec::with_capacity(n);
        for i in 0..n {
            let (ln, line) = next("candidate rows")?;
            let set = line
                .split_whitespace()
                .map(|tok| tok.parse::<usize>().map_err(|_| Error::Parse { line: ln, reason: format!("bad class {tok:?}") }))
                .collect::<Result<Vec<usize>>>()?;
            check_candidate_row(i, &set, q).map_err(|reason| Error::Parse { line: ln, reason })?;
            candidates.push(set);
        }

        let truth = if has_truth {
            let mut truth = Vec::with_capacity(n);
            for i in 0..n {
                let (ln, line) = next("true labels")?;
                let y: usize = line
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse { line: ln, reason: format!("bad true label {line:?}") })?;
                if candidates[i].binary_search(&y).is_err() {
                    return Err(Error::Parse { line: ln, reason: format!("instance {i}: true label {y} is not a candidate") });
                }
                truth.push(y);
            }
            Some(truth)
        } else {
            None
        };
        for (ln, line) in lines {
            if !line.trim().is_empty() {
                return Err(Error::Parse { line: ln, reason: "unexpected trailing content".into() });
            }
        }
        Ok(Self { features, candidates, truth, classes: q, names: None })
    }
}

fn check_candidate_row(i: usize, set: &[usize], classes: usize) -> std::result::Result<(), String> {
    if set.is_empty() {
        return Err(format!("instance {i} has an empty candidate set"));
    }
    if set.windows(2).any(|w| w[0] >= w[1]) {
        return Err(format!("instance {i}: candidate classes must be strictly ascending"));
    }
    if let Some(&c) = set.iter().find(|&&c| c >= classes) {
        return Err(format!("instance {i}: candidate {c} outside {classes} classes"));
    }
    Ok(())
}

pub fn parse_dataset(path: &Path) -> Result<PartialDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    PartialDataset::from_pld(&text)
}

/// Parses and, when `standardize` is set, standardizes feature columns.
pub fn load_dataset(path: &Path, standardize: bool) -> Result<PartialDataset> {
    let mut ds = parse_dataset(path)?;
    if standardize {
        ds.standardize();
    }
    Ok(ds)
}

pub fn write_dataset(ds: &PartialDataset, path: &Path) -> Result<()> {
    std::fs::write(path, ds.to_pld()).map_err(|e| Error::io(path, e))
}
