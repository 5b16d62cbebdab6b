//! Text checkpoint container.
//!
//! ```text
//! DDMPCKPT 1
//! meta <key> <value>
//! tensor <name> <rows> <cols>
//! <cols space-separated values>      (repeated <rows> times)
//! ```
//!
//! Values are written in shortest round-trip exponent notation, so a
//! save/load cycle is lossless. Blank lines and `#` comments are ignored.
//! Entries keep insertion order.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::Matrix;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "DDMPCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    meta: Vec<(String, String)>,
    tensors: Vec<(String, Matrix)>,
}

fn check_token(s: &str) {
    assert!(!s.is_empty() && !s.contains(char::is_whitespace), "checkpoint keys must be single tokens: {s:?}");
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        check_token(key);
        let value = value.to_string();
        assert!(!value.contains('\n'), "meta values must be single-line");
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn meta_parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.meta(key).ok_or_else(|| Error::Data(format!("checkpoint is missing meta key {key}")))?;
        raw.parse().map_err(|_| Error::Data(format!("checkpoint meta {key}={raw} is malformed")))
    }

    pub fn insert(&mut self, name: &str, value: Matrix) {
        check_token(name);
        match self.tensors.iter_mut().find(|(k, _)| k == name) {
            Some(entry) => entry.1 = value,
            None => self.tensors.push((name.to_string(), value)),
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|(k, _)| k == name).map(|(_, m)| m)
    }

    pub fn tensor_shaped(&self, name: &str, shape: (usize, usize)) -> Result<&Matrix> {
        let m = self.tensor(name).ok_or_else(|| Error::Data(format!("checkpoint is missing tensor {name}")))?;
        if m.shape() != shape {
            return Err(Error::shape("checkpoint", format!("{name} has shape {:?}, expected {shape:?}", m.shape())));
        }
        Ok(m)
    }

    pub fn meta_entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.meta.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(k, _)| k.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n");
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for (name, m) in &self.tensors {
            let _ = writeln!(out, "tensor {name} {} {}", m.rows(), m.cols());
            for r in 0..m.rows() {
                let line: Vec<String> = m.row(r).iter().map(|v| format!("{v:e}")).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (line_no, header) = lines.next().ok_or(Error::Parse { line: 1, reason: "empty checkpoint".into() })?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(CHECKPOINT_MAGIC) {
            return Err(Error::Parse { line: line_no, reason: format!("expected {CHECKPOINT_MAGIC} header") });
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or(Error::Parse { line: line_no, reason: "missing version".into() })?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Parse { line: line_no, reason: format!("unsupported checkpoint version {version}") });
        }
        let mut ckpt = Checkpoint::new();
        while let Some((line_no, line)) = lines.next() {
            let bad = |reason: &str| Error::Parse { line: line_no, reason: reason.to_string() };
            let mut parts = line.splitn(3, ' ');
            match parts.next() {
                Some("meta") => {
                    let key = parts.next().ok_or_else(|| bad("meta without key"))?;
                    let value = parts.next().unwrap_or("");
                    ckpt.meta.push((key.to_string(), value.to_string()));
                }
                Some("tensor") => {
                    let fields: Vec<&str> = line.split_whitespace().collect();
                    if fields.len() != 4 {
                        return Err(bad("tensor header needs name, rows and cols"));
                    }
                    let rows: usize = fields[2].parse().map_err(|_| bad("bad row count"))?;
                    let cols: usize = fields[3].parse().map_err(|_| bad("bad column count"))?;
                    let mut data = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        let (row_no, row) = lines
                            .next()
                            .ok_or_else(|| bad(&format!("tensor {} is truncated", fields[1])))?;
                        let before = data.len();
                        for tok in row.split_whitespace() {
                            let v: f64 = tok
                                .parse()
                                .map_err(|_| Error::Parse { line: row_no, reason: format!("bad value {tok:?}") })?;
                            data.push(v);
                        }
                        if data.len() - before != cols {
                            return Err(Error::Parse { line: row_no, reason: format!("expected {cols} values") });
                        }
                    }
                    ckpt.tensors.push((fields[1].to_string(), Matrix::from_vec(rows, cols, data)?));
                }
                _ => return Err(bad("expected a meta or tensor entry")),
            }
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_wrong_header_and_truncation() {
        assert!(Checkpoint::from_text("NOPE 1\n").is_err());
        assert!(Checkpoint::from_text("DDMPCKPT 2\n").is_err());
        let err = Checkpoint::from_text("DDMPCKPT 1\ntensor w 2 2\n1 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = Checkpoint::from_text("DDMPCKPT 1\ntensor w 1 2\n1 2 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    proptest! {
        #[test]
        fn text_round_trip_is_lossless(
            rows in 0usize..4,
            cols in 1usize..4,
            seed in proptest::collection::vec(-1e300f64..1e300, 16),
            tiny in proptest::collection::vec(-1e-300f64..1e-300, 16),
        ) {
            let n = rows * cols;
            let mut ck = Checkpoint::new();
            ck.set_meta("hidden", 128);
            ck.set_meta("note", "two words");
            ck.insert("a.weight", Matrix::from_vec(rows, cols, seed[..n].to_vec()).unwrap());
            ck.insert("b", Matrix::from_vec(rows, cols, tiny[..n].to_vec()).unwrap());
            let back = Checkpoint::from_text(&ck.to_text()).unwrap();
            prop_assert_eq!(back, ck);
        }
    }
}
