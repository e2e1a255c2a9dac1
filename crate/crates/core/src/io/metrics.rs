//! CSV metrics: the optimization trace and simple per-step loss curves.

use std::path::Path;

use crate::error::{CoreError, Result};
use crate::grpo::TrainMetrics;

fn csv_err(path: &Path, e: csv::Error) -> CoreError {
    CoreError::MalformedFile {
        path: path.display().to_string(),
        format: "CSV",
        offset: match e.position() {
            Some(p) => p.byte() as usize,
            None => 0,
        },
        message: e.to_string(),
    }
}

/// Writes the optimization trace, one row per step, header first. Column
/// order follows the field order of [`TrainMetrics`].
pub fn write_metrics_csv(path: &Path, rows: &[TrainMetrics]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    let bytes = writer.into_inner().expect("vec sink cannot fail");
    super::write_bytes(path, &bytes)
}

/// Reads a metrics CSV written by [`write_metrics_csv`].
pub fn read_metrics_csv(path: &Path) -> Result<Vec<TrainMetrics>> {
    let bytes = super::read_bytes(path)?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    reader
        .deserialize()
        .map(|row| row.map_err(|e| csv_err(path, e)))
        .collect()
}

/// Writes a per-step loss curve as `step,loss` rows.
pub fn write_loss_csv(path: &Path, losses: &[f64]) -> Result<()> {
    let mut out = String::from("step,loss\n");
    for (step, loss) in losses.iter().enumerate() {
        out.push_str(&format!("{step},{loss}\n"));
    }
    super::write_bytes(path, out.as_bytes())
}

/// Reads a loss curve written by [`write_loss_csv`].
pub fn read_loss_csv(path: &Path) -> Result<Vec<f64>> {
    let bytes = super::read_bytes(path)?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let mut losses = Vec::new();
    for row in reader.deserialize() {
        let (_step, loss): (usize, f64) = row.map_err(|e| csv_err(path, e))?;
        losses.push(loss);
    }
    Ok(losses)
}
