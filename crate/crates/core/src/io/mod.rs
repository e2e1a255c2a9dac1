//! File formats the pipeline stages communicate through.
//!
//! Binary PGM (P5, 16-bit) for depth rasters, binary PPM (P6, 8-bit) for
//! pseudo-images, JSONL for record streams, JSON for checkpoints and
//! reports, CSV for metrics. Every writer is deterministic: identical
//! inputs produce byte-identical files.

pub mod checkpoint;
pub mod jsonl;
pub mod metrics;
pub mod pnm;

pub use checkpoint::{FlowCheckpoint, NetData, PolicyCheckpoint, CHECKPOINT_VERSION};
pub use jsonl::{read_jsonl, write_jsonl};
pub use metrics::{read_loss_csv, read_metrics_csv, write_loss_csv, write_metrics_csv};
pub use pnm::{
    dequantize_channel, dequantize_unit, quantize_channel, quantize_unit, read_pgm16, read_ppm8,
    write_pgm16, write_ppm8,
};

use crate::error::{CoreError, Result};
use std::path::Path;

/// Reads a whole file, annotating failures with the path.
pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| CoreError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes a whole file, annotating failures with the path.
pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| CoreError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
    }
    std::fs::write(path, bytes).map_err(|source| CoreError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Serializes a value as pretty JSON with a trailing newline and writes it.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CoreError::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Reads and deserializes a JSON file.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CoreError::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
