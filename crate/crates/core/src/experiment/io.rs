//! Dataset and report files.
//!
//! CSVs carry a header row and print every float as `{:.16e}`: seventeen
//! significant digits, enough to parse back to the same bits.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{analytic_diameter, fingerprint, Dataset, DatasetParams, Split, SplitId, Splits};
use crate::error::{Error, Result};
use crate::math::Matrix;

pub const DATASET_FORMAT: &str = "vaecert-dataset/1";

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Empty for an absent value.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(std::io::Error::other(format!("{}: {e}", path.display())))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io_err(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Writes a header and string rows.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// One sample per row, columns `x0, x1, ...`.
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let header: Vec<String> = (0..m.cols()).map(|j| format!("x{j}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = (0..m.rows()).map(|r| m.row(r).iter().map(|&v| fmt_f64(v)).collect()).collect();
    write_csv(path, &header, &rows)
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let cols = rd.headers().map_err(|e| csv_err(path, e))?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in rd.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("{}: row {}: not a number: {field:?}", path.display(), rows + 1)))?;
            data.push(v);
        }
        rows += 1;
    }
    Matrix::from_vec(rows, cols, data)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Sidecar describing the three split files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub format: String,
    pub kind: String,
    pub params: DatasetParams,
    pub seed: u64,
    pub split_sizes: [usize; 3],
    pub analytic_diameter: Option<f64>,
    pub splits: Vec<SplitId>,
}

impl DatasetMetadata {
    pub fn split_id(&self, split: Split) -> Result<&SplitId> {
        self.splits
            .iter()
            .find(|s| s.split == split)
            .ok_or_else(|| Error::Format(format!("metadata lists no {} split", split.name())))
    }
}

pub fn split_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.csv", split.name()))
}

pub fn metadata_path(dir: &Path) -> PathBuf {
    dir.join("metadata.json")
}

pub fn save_splits(dir: &Path, splits: &Splits) -> Result<DatasetMetadata> {
    ensure_dir(dir)?;
    let meta = DatasetMetadata {
        format: DATASET_FORMAT.into(),
        kind: splits.train.kind_name().into(),
        params: splits.train.params.clone(),
        seed: splits.train.seed,
        split_sizes: [splits.train.len(), splits.val.len(), splits.test.len()],
        analytic_diameter: analytic_diameter(&splits.train.params).ok(),
        splits: Split::ALL.iter().map(|&s| splits.get(s).id()).collect(),
    };
    for s in Split::ALL {
        write_matrix_csv(&split_path(dir, s), &splits.get(s).samples)?;
    }
    write_json(&metadata_path(dir), &meta)?;
    Ok(meta)
}

/// Loads the three splits, checks each against its recorded hash and
/// checks that no sample is shared between splits.
pub fn load_splits(dir: &Path) -> Result<(Splits, DatasetMetadata)> {
    let meta_path = metadata_path(dir);
    if !meta_path.exists() {
        return Err(io_err(dir, "no dataset here; run gen-data first"));
    }
    let meta: DatasetMetadata = read_json(&meta_path)?;
    if meta.format != DATASET_FORMAT {
        return Err(Error::Format(format!("unsupported dataset format {:?}, expected {DATASET_FORMAT:?}", meta.format)));
    }
    let load = |split: Split| -> Result<Dataset> {
        let samples = read_matrix_csv(&split_path(dir, split))?;
        let recorded = meta.split_id(split)?;
        if fingerprint(&samples) != recorded.fingerprint {
            return Err(Error::Protocol(format!("{} split does not match its recorded hash", split.name())));
        }
        Ok(Dataset { samples, params: meta.params.clone(), seed: meta.seed, split, latent: None })
    };
    let splits = Splits { train: load(Split::Train)?, val: load(Split::Val)?, test: load(Split::Test)? };
    splits.verify()?;
    Ok((splits, meta))
}
