//! Run artifacts: the metrics document, the embedding and predicted labels.
//!
//! Scores in the metrics document are percentages; the library itself works
//! in the unit scale.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Ablation;
use crate::diff::Matrix;
use crate::error::{Error, Result};
use crate::metrics::Scores;
use crate::trainer::{EpochRecord, TrainReport};

/// Normalization used for the reported NMI.
pub const NMI_VARIANT: &str = "arithmetic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub epoch: usize,
    pub loss: f64,
    pub loss_dt: f64,
    pub loss_ct: f64,
    pub loss_en: f64,
    pub n_ct: usize,
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub ablation: Ablation,
    pub nmi_variant: String,
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
    pub history: Vec<HistoryEntry>,
}

fn percent(s: Option<Scores>) -> (Option<f64>, Option<f64>, Option<f64>) {
    match s {
        Some(s) => (Some(100.0 * s.acc), Some(100.0 * s.nmi), Some(100.0 * s.ari)),
        None => (None, None, None),
    }
}

impl From<&EpochRecord> for HistoryEntry {
    fn from(r: &EpochRecord) -> Self {
        let (acc, nmi, ari) = percent(r.scores);
        Self {
            epoch: r.epoch,
            loss: r.loss,
            loss_dt: r.loss_dt,
            loss_ct: r.loss_ct,
            loss_en: r.loss_en,
            n_ct: r.n_ct,
            acc,
            nmi,
            ari,
        }
    }
}

impl From<&TrainReport> for MetricsDocument {
    fn from(report: &TrainReport) -> Self {
        let (acc, nmi, ari) = percent(report.scores);
        Self {
            ablation: report.ablation,
            nmi_variant: NMI_VARIANT.into(),
            acc,
            nmi,
            ari,
            history: report.history.iter().map(HistoryEntry::from).collect(),
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_metrics(path: &Path, report: &TrainReport) -> Result<()> {
    let text = serde_json::to_string_pretty(&MetricsDocument::from(report)).expect("metrics serialize");
    fs::write(path, text + "\n").map_err(io(path))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingShape {
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
}

/// Writes `<stem>.f32le` (row-major little-endian f32) and `<stem>.json`
/// holding the shape. Returns the binary path.
pub fn write_embedding(dir: &Path, stem: &str, z: &Matrix) -> Result<PathBuf> {
    let bin = dir.join(format!("{stem}.f32le"));
    let bytes: Vec<u8> = z.to_f32().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&bin, bytes).map_err(io(&bin))?;
    let shape = EmbeddingShape {
        rows: z.rows(),
        cols: z.cols(),
        dtype: "f32le".into(),
    };
    let json = dir.join(format!("{stem}.json"));
    fs::write(&json, serde_json::to_string(&shape).expect("shape serializes")).map_err(io(&json))?;
    Ok(bin)
}

/// Reads an embedding written by [`write_embedding`].
pub fn read_embedding(dir: &Path, stem: &str) -> Result<Matrix> {
    let json = dir.join(format!("{stem}.json"));
    let text = fs::read_to_string(&json).map_err(io(&json))?;
    let shape: EmbeddingShape =
        serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", json.display())))?;
    let (rows, cols) = (shape.rows, shape.cols);
    let bin = dir.join(format!("{stem}.f32le"));
    let bytes = fs::read(&bin).map_err(io(&bin))?;
    if bytes.len() != rows * cols * 4 {
        return Err(Error::InvalidArgument(format!(
            "{}: expected {} bytes, found {}",
            bin.display(),
            rows * cols * 4,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(Matrix::from_vec(rows, cols, data))
}

/// One label per line.
pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    fs::write(path, text).map_err(io(path))
}

/// Reads one non-negative integer label per non-blank line.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| {
                Error::InvalidArgument(format!("{}:{}: invalid label {:?}", path.display(), i + 1, l.trim()))
            })
        })
        .collect()
}
