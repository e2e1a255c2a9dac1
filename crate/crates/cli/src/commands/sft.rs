//! Supervised warm start on demonstrations built from the curated split.

use cooper_core::cognition::{build_demos, sft_train, PolicyParams};
use cooper_core::config::RunConfig;
use cooper_core::io::{write_loss_csv, PolicyCheckpoint};
use cooper_core::{CoreError, Result};

use crate::workspace::{PipelineData, Workspace};

pub fn run(cfg: &RunConfig, ws: &Workspace) -> Result<()> {
    let data = PipelineData::load(ws)?;
    let sft_items = data.curated(&data.splits.sft)?;
    let demos = build_demos(&sft_items, cfg.sft.n_per_item)?;
    if demos.is_empty() {
        return Err(CoreError::InvalidArgument {
            context: "sft",
            message: "supervised split yields no demonstrations; re-run `cooper curate` \
                      with more items or another seed"
                .into(),
        });
    }

    let mut policy = PolicyParams::base_init(cfg.seed);
    let curve = sft_train(&mut policy, &demos, &cfg.hints, &cfg.sft)?;

    PolicyCheckpoint::new(&policy, "sft", cfg).save(&ws.sft_checkpoint())?;
    write_loss_csv(&ws.sft_loss(), &curve)?;
    let last = curve.last().copied().unwrap_or(f64::NAN);
    println!(
        "wrote {} and {} ({} demos, {} steps, final loss {last:.6})",
        ws.sft_checkpoint().display(),
        ws.sft_loss().display(),
        demos.len(),
        curve.len()
    );
    Ok(())
}
