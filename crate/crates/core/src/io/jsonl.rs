//! JSON-lines record streams: one compact JSON object per line.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CoreError, Result};

/// Writes one compact JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = String::new();
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| CoreError::Json {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        out.push_str(&line);
        out.push('\n');
    }
    super::write_bytes(path, out.as_bytes())
}

/// Reads a JSONL file, reporting the byte offset and line number of the
/// first malformed record. Blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let bytes = super::read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| CoreError::MalformedFile {
        path: path.display().to_string(),
        format: "JSONL",
        offset: e.valid_up_to(),
        message: "file is not valid UTF-8".into(),
    })?;
    let mut records = Vec::new();
    let mut offset = 0usize;
    for (lineno, line) in text.split('\n').enumerate() {
        let trimmed = line.trim();
        if !trimmed.is_empty() {
            let record = serde_json::from_str(trimmed).map_err(|e| CoreError::MalformedFile {
                path: path.display().to_string(),
                format: "JSONL",
                offset,
                message: format!("line {}: {e}", lineno + 1),
            })?;
            records.push(record);
        }
        offset += line.len() + 1;
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cognition::{generate_items, ToyItem};
    use crate::curation::CurationRecord;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("cooper-jsonl-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn items_round_trip() {
        let path = tmp("items.jsonl");
        let items = generate_items(7, 3);
        write_jsonl(&path, &items).unwrap();
        let back: Vec<ToyItem> = read_jsonl(&path).unwrap();
        assert_eq!(back, items);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn malformed_lines_report_position() {
        let path = tmp("broken.jsonl");
        std::fs::write(
            &path,
            "{\"item_id\":1,\"acc_raw\":0.5,\"acc_aux\":1.0,\"gain\":1}\nnot json\n",
        )
        .unwrap();
        match read_jsonl::<CurationRecord>(&path).unwrap_err() {
            CoreError::MalformedFile {
                offset, message, ..
            } => {
                assert_eq!(offset, 51); // first line is 50 bytes plus newline
                assert!(message.starts_with("line 2"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn blank_lines_are_skipped() {
        let path = tmp("blank.jsonl");
        std::fs::write(
            &path,
            "\n{\"item_id\":1,\"acc_raw\":0.5,\"acc_aux\":1.0,\"gain\":1}\n\n",
        )
        .unwrap();
        let records: Vec<CurationRecord> = read_jsonl(&path).unwrap();
        assert_eq!(records.len(), 1);
    }
}
