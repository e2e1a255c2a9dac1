//! Canonical artifact layout of one output directory, plus loaders that turn
//! stored stage outputs back into in-memory training sets.
//!
//! Every stage addresses its inputs and outputs only through [`Workspace`],
//! so the file names live in exactly one place and a missing upstream
//! artifact produces the same "run `cooper <stage>` first" error everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cooper_core::cognition::{CuratedItem, ToyItem};
use cooper_core::curation::CurationRecord;
use cooper_core::io::read_jsonl;
use cooper_core::{CoreError, Result};

/// One run's output directory.
pub struct Workspace {
    dir: PathBuf,
}

impl Workspace {
    pub fn new(out_dir: &str) -> Workspace {
        Workspace {
            dir: PathBuf::from(out_dir),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Synthetic task items, one JSON object per line.
    pub fn items(&self) -> PathBuf {
        self.dir.join("items.jsonl")
    }

    /// Velocity-field training pairs, one JSON object per line.
    pub fn pairs(&self) -> PathBuf {
        self.dir.join("pairs.jsonl")
    }

    pub fn flow_checkpoint(&self) -> PathBuf {
        self.dir.join("flow.json")
    }

    pub fn flow_loss(&self) -> PathBuf {
        self.dir.join("flow_loss.csv")
    }

    /// Per-item accuracy probes and gain labels.
    pub fn records(&self) -> PathBuf {
        self.dir.join("records.jsonl")
    }

    /// Item-id lists for the supervised and RL splits.
    pub fn splits(&self) -> PathBuf {
        self.dir.join("splits.json")
    }

    pub fn sft_checkpoint(&self) -> PathBuf {
        self.dir.join("sft.json")
    }

    pub fn sft_loss(&self) -> PathBuf {
        self.dir.join("sft_loss.csv")
    }

    pub fn grpo_checkpoint(&self) -> PathBuf {
        self.dir.join("grpo.json")
    }

    pub fn grpo_metrics(&self) -> PathBuf {
        self.dir.join("grpo_metrics.csv")
    }

    pub fn eval_report(&self) -> PathBuf {
        self.dir.join("eval.json")
    }

    pub fn report(&self) -> PathBuf {
        self.dir.join("report.json")
    }

    pub fn sample_latent(&self, control: &str) -> PathBuf {
        self.dir.join(format!("sample_{control}.json"))
    }

    pub fn sample_image(&self, control: &str) -> PathBuf {
        self.dir.join(format!("sample_{control}.ppm"))
    }
}

/// Returns the path if it exists, otherwise an input error naming the stage
/// that produces it.
pub fn require(path: PathBuf, stage: &str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CoreError::InvalidArgument {
            context: "pipeline",
            message: format!("{} not found; run `cooper {stage}` first", path.display()),
        })
    }
}

/// Item-id lists routed to each downstream stage by curation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub sft: Vec<u64>,
    pub rl: Vec<u64>,
}

/// The curation artifacts every post-curation stage starts from.
pub struct PipelineData {
    pub items: Vec<ToyItem>,
    pub records: Vec<CurationRecord>,
    pub splits: Splits,
}

impl PipelineData {
    /// Loads items, records, and splits, all of which `cooper curate` writes.
    pub fn load(ws: &Workspace) -> Result<PipelineData> {
        let items: Vec<ToyItem> = read_jsonl(&require(ws.items(), "curate")?)?;
        let records: Vec<CurationRecord> = read_jsonl(&require(ws.records(), "curate")?)?;
        let splits: Splits = cooper_core::io::read_json(&require(ws.splits(), "curate")?)?;
        Ok(PipelineData {
            items,
            records,
            splits,
        })
    }

    /// Rebuilds the curated items behind a split: each id resolves to its
    /// stored item and the gain label its curation record assigned.
    pub fn curated(&self, ids: &[u64]) -> Result<Vec<CuratedItem>> {
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            let item = self
                .items
                .iter()
                .find(|item| item.id == id)
                .ok_or_else(|| stale_split(id, "items.jsonl"))?;
            let record = self
                .records
                .iter()
                .find(|r| r.item_id == id)
                .ok_or_else(|| stale_split(id, "records.jsonl"))?;
            out.push(CuratedItem {
                item: item.clone(),
                curated_gain: record.gain,
            });
        }
        Ok(out)
    }
}

fn stale_split(id: u64, file: &str) -> CoreError {
    CoreError::InvalidArgument {
        context: "pipeline",
        message: format!(
            "split references item {id} that {file} does not contain; re-run `cooper curate`"
        ),
    }
}
