//! Dataset curation: probe the base policy with and without auxiliary views,
//! label each item's visual gain, and split the retained items.

use cooper_core::cognition::{generate_items, GainLabel, PolicyParams};
use cooper_core::config::RunConfig;
use cooper_core::curation::curate;
use cooper_core::io::{write_json, write_jsonl, FlowCheckpoint};
use cooper_core::Result;

use crate::workspace::{require, Splits, Workspace};

pub fn run(cfg: &RunConfig, ws: &Workspace) -> Result<()> {
    let items = generate_items(cfg.item_count, cfg.seed);
    write_jsonl(&ws.items(), &items)?;

    let field = FlowCheckpoint::load(&require(ws.flow_checkpoint(), "flow train")?)?.to_field()?;
    let policy = PolicyParams::base_init(cfg.seed);
    let (sft_items, rl_items, records) = curate(
        &policy,
        &items,
        &cfg.sampling,
        &cfg.curation,
        Some(&field),
        &cfg.hints,
        &cfg.solver,
    )?;

    write_jsonl(&ws.records(), &records)?;
    let splits = Splits {
        sft: sft_items.iter().map(|c| c.item.id).collect(),
        rl: rl_items.iter().map(|c| c.item.id).collect(),
    };
    write_json(&ws.splits(), &splits)?;

    let count = |gain: GainLabel| records.iter().filter(|r| r.gain == gain).count();
    println!(
        "wrote {}, {}, {} ({} items: {} positive / {} negative / {} boundary; split {} sft / {} rl)",
        ws.items().display(),
        ws.records().display(),
        ws.splits().display(),
        records.len(),
        count(GainLabel::Positive),
        count(GainLabel::Negative),
        count(GainLabel::Zero),
        splits.sft.len(),
        splits.rl.len(),
    );
    Ok(())
}
