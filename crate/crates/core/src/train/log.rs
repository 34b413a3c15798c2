use std::fs::{File, OpenOptions};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;

/// One line of the loss log. `val_loss` is empty when not evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub wall_ms: u64,
}

fn log_err(path: &Path, e: impl std::fmt::Display) -> TrainError {
    TrainError::Log(format!("{}: {e}", path.display()))
}

pub fn read_log(path: &Path) -> Result<Vec<TrainLogRow>, TrainError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| log_err(path, e))?;
    let mut rows: Vec<TrainLogRow> = Vec::new();
    for row in reader.deserialize() {
        let row: TrainLogRow = row.map_err(|e| log_err(path, e))?;
        if let Some(prev) = rows.last() {
            if row.step <= prev.step {
                return Err(log_err(path, format!("step {} does not increase", row.step)));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Appends rows, writing the header first if the file is new or empty.
pub fn append_rows(path: &Path, rows: &[TrainLogRow]) -> Result<(), TrainError> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| log_err(path, e))?;
    let mut writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    if fresh && rows.is_empty() {
        writer
            .write_record(["step", "lr", "train_loss", "val_loss", "wall_ms"])
            .map_err(|e| log_err(path, e))?;
    }
    for row in rows {
        writer.serialize(row).map_err(|e| log_err(path, e))?;
    }
    writer.flush().map_err(|e| log_err(path, e))
}

/// Rewrites the log keeping only rows before `step`.
pub fn truncate_log(path: &Path, step: usize) -> Result<(), TrainError> {
    let kept: Vec<TrainLogRow> = if path.exists() {
        read_log(path)?.into_iter().filter(|r| r.step < step).collect()
    } else {
        Vec::new()
    };
    File::create(path).map_err(|e| log_err(path, e))?;
    append_rows(path, &kept)
}
