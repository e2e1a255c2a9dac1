//! Group-relative policy optimization starting from the warm-started policy.

use cooper_core::config::RunConfig;
use cooper_core::grpo::train_loop;
use cooper_core::io::{write_metrics_csv, FlowCheckpoint, PolicyCheckpoint};
use cooper_core::Result;

use crate::workspace::{require, PipelineData, Workspace};

pub fn run(cfg: &RunConfig, ws: &Workspace) -> Result<()> {
    let data = PipelineData::load(ws)?;
    let rl_items = data.curated(&data.splits.rl)?;
    let field = FlowCheckpoint::load(&require(ws.flow_checkpoint(), "flow train")?)?.to_field()?;
    let mut policy = PolicyCheckpoint::load(&require(ws.sft_checkpoint(), "sft")?)?.to_policy()?;

    let history = train_loop(
        &mut policy,
        &rl_items,
        Some(&field),
        &cfg.grpo,
        &cfg.hints,
        &cfg.solver,
        cfg.seed,
    )?;

    PolicyCheckpoint::new(&policy, "grpo", cfg).save(&ws.grpo_checkpoint())?;
    write_metrics_csv(&ws.grpo_metrics(), &history)?;
    match history.last() {
        Some(last) => println!(
            "wrote {} and {} ({} steps, final mean reward {:.4}, answer {:.4}, \
             aux usage +/0/- {:.2}/{:.2}/{:.2})",
            ws.grpo_checkpoint().display(),
            ws.grpo_metrics().display(),
            history.len(),
            last.mean_reward,
            last.mean_r_a,
            last.aux_rate_pos,
            last.aux_rate_bnd,
            last.aux_rate_neg,
        ),
        None => println!(
            "wrote {} and {} (0 steps)",
            ws.grpo_checkpoint().display(),
            ws.grpo_metrics().display()
        ),
    }
    Ok(())
}
