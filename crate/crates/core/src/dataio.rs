//! Prompt corpora, feature matrices and dataset splitting.
//!
//! Feature and embedding matrices live on disk in the `FMAT v1` layout:
//!
//! ```text
//! b"FMAT" | u32 version=1 | u32 rows | u32 cols | rows*cols f32 | rows u64 ids
//! ```
//!
//! All integers and floats are little-endian, payload is row-major.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

pub const FMAT_MAGIC: [u8; 4] = *b"FMAT";
pub const FMAT_VERSION: u32 = 1;
const FMAT_HEADER_LEN: usize = 16;

/// Number of leading/trailing characters compared by the near-duplicate step.
pub const DEDUP_WINDOW: usize = 50;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: u64,
    #[serde(rename = "prompt")]
    pub text: String,
}

impl PromptRecord {
    pub fn new(id: u64, text: impl Into<String>) -> Self {
        PromptRecord {
            id,
            text: text.into(),
        }
    }
}

/// Dense row-major `f32` matrix with one identifier per row.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    row_ids: Vec<u64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>, row_ids: Vec<u64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if row_ids.len() != rows {
            return Err(Error::Shape(format!(
                "{} row ids for {rows} rows",
                row_ids.len()
            )));
        }
        if let Some(row) = first_non_finite_row(&data, cols) {
            return Err(Error::Data(format!("non-finite value in row {row}")));
        }
        let mut seen = HashSet::with_capacity(rows);
        for id in &row_ids {
            if !seen.insert(*id) {
                return Err(Error::Data(format!("duplicate row id {id}")));
            }
        }
        Ok(FeatureMatrix {
            rows,
            cols,
            data,
            row_ids,
        })
    }

    /// Builds a matrix with ids `0..rows`.
    pub fn with_sequential_ids(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        FeatureMatrix::new(rows, cols, data, (0..rows as u64).collect())
    }

    /// Narrows an `f64` matrix to `f32` storage.
    pub fn from_mat(m: &Mat, row_ids: Vec<u64>) -> Result<Self> {
        FeatureMatrix::new(
            m.rows,
            m.cols,
            m.data.iter().map(|&v| v as f32).collect(),
            row_ids,
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| v as f64).collect()
    }

    pub fn to_mat(&self) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }

    /// Rows whose ids appear in `ids`, in the order of `ids`.
    pub fn select(&self, ids: &[u64]) -> Result<FeatureMatrix> {
        let index: std::collections::HashMap<u64, usize> = self
            .row_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (*id, i))
            .collect();
        let mut data = Vec::with_capacity(ids.len() * self.cols);
        for id in ids {
            let i = *index
                .get(id)
                .ok_or_else(|| Error::Data(format!("row id {id} not present")))?;
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix::new(ids.len(), self.cols, data, ids.to_vec())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FMAT_HEADER_LEN + self.data.len() * 4 + self.rows * 8);
        out.extend_from_slice(&FMAT_MAGIC);
        out.extend_from_slice(&FMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for id in &self.row_ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < FMAT_HEADER_LEN {
            return Err(Error::Format(format!(
                "file is {} bytes, shorter than the {FMAT_HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if bytes[..4] != FMAT_MAGIC {
            return Err(Error::Format(format!(
                "bad magic bytes {:02x?}",
                &bytes[..4]
            )));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = word(4);
        if version != FMAT_VERSION {
            return Err(Error::Format(format!("unsupported FMAT version {version}")));
        }
        let rows = word(8) as usize;
        let cols = word(12) as usize;
        let expected = rows * cols * 4 + rows * 8;
        let payload = &bytes[FMAT_HEADER_LEN..];
        if payload.len() != expected {
            return Err(Error::Length {
                expected,
                found: payload.len(),
            });
        }
        let (values, ids) = payload.split_at(rows * cols * 4);
        let data: Vec<f32> = values
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let row_ids = ids
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        FeatureMatrix::new(rows, cols, data, row_ids)
    }
}

fn first_non_finite_row(data: &[f32], cols: usize) -> Option<usize> {
    data.iter()
        .position(|v| !v.is_finite())
        .map(|pos| if cols == 0 { 0 } else { pos / cols })
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureMatrix::from_bytes(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn save_matrix(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, m.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads a JSON-lines corpus of `{"id": .., "prompt": ..}` objects.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<PromptRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PromptRecord = serde_json::from_str(&line).map_err(|e| {
            Error::Format(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        records.push(rec);
    }
    Ok(records)
}

pub fn write_corpus(records: &[PromptRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        let line = serde_json::to_string(rec).expect("prompt records always serialise");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Removal counts of [`filter_prompts`], one per step.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    /// Records whose text changed under trimming (never removed by it).
    pub trimmed: usize,
    pub dropped_empty_or_null: usize,
    pub dropped_non_english: usize,
    pub dropped_duplicate: usize,
    pub kept: usize,
}

impl FilterReport {
    pub fn dropped(&self) -> usize {
        self.dropped_empty_or_null + self.dropped_non_english + self.dropped_duplicate
    }
}

fn is_empty_or_null(text: &str) -> bool {
    let mut words = text.split_whitespace().peekable();
    if words.peek().is_none() {
        return true;
    }
    words.any(|w| w == "Null" || w == "NaN")
}

fn has_non_english(text: &str) -> bool {
    text.bytes().any(|b| !(0x20..=0x7e).contains(&b))
}

/// Applies the four successive cleaning steps: trim, drop empty/`Null`/`NaN`,
/// drop non-printable-ASCII, drop near duplicates (shared 50-character prefix
/// or suffix, or full equality for shorter prompts). First occurrence wins.
pub fn filter_prompts(records: &[PromptRecord]) -> (Vec<PromptRecord>, FilterReport) {
    let mut report = FilterReport {
        input: records.len(),
        ..FilterReport::default()
    };
    let mut prefixes: HashSet<String> = HashSet::new();
    let mut suffixes: HashSet<String> = HashSet::new();
    let mut short: HashSet<String> = HashSet::new();
    let mut kept = Vec::new();

    for rec in records {
        let text = rec.text.trim();
        if text.len() != rec.text.len() {
            report.trimmed += 1;
        }
        if is_empty_or_null(text) {
            report.dropped_empty_or_null += 1;
            continue;
        }
        if has_non_english(text) {
            report.dropped_non_english += 1;
            continue;
        }
        // Only printable ASCII survives this far, so byte offsets are char offsets.
        if text.len() < DEDUP_WINDOW {
            if !short.insert(text.to_string()) {
                report.dropped_duplicate += 1;
                continue;
            }
        } else {
            let head = &text[..DEDUP_WINDOW];
            let tail = &text[text.len() - DEDUP_WINDOW..];
            if prefixes.contains(head) || suffixes.contains(tail) {
                report.dropped_duplicate += 1;
                continue;
            }
            prefixes.insert(head.to_string());
            suffixes.insert(tail.to_string());
        }
        kept.push(PromptRecord::new(rec.id, text));
    }
    report.kept = kept.len();
    (kept, report)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_ids: Vec<u64>,
    pub val_ids: Vec<u64>,
    pub test_ids: Vec<u64>,
}

/// Deterministically shuffles `ids` and cuts them into train/val/test.
///
/// Validation and test sizes are floored; the remainder goes to train.
pub fn split_dataset(ids: &[u64], fractions: (f64, f64, f64), seed: u64) -> Result<DatasetSplit> {
    if ids.is_empty() {
        return Err(Error::Invalid("cannot split an empty id list".into()));
    }
    let (tr, va, te) = fractions;
    if !(tr > 0.0 && va > 0.0 && te > 0.0) {
        return Err(Error::Invalid(format!(
            "split fractions must be positive, got ({tr}, {va}, {te})"
        )));
    }
    if ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!(
            "split fractions sum to {}, expected 1",
            tr + va + te
        )));
    }
    let n = ids.len();
    // Tolerate representation error so 30/730 of 730000 floors to 30000.
    let alloc = |f: f64| ((n as f64 * f) + 1e-6).floor() as usize;
    let n_val = alloc(va);
    let n_test = alloc(te);
    let n_train = n - n_val - n_test;

    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test_ids = shuffled.split_off(n_train + n_val);
    let val_ids = shuffled.split_off(n_train);
    Ok(DatasetSplit {
        train_ids: shuffled,
        val_ids,
        test_ids,
    })
}
