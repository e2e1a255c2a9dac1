//! Held-out scoring: replay a policy checkpoint over every curated item on a
//! dedicated evaluation random stream and report accuracy and auxiliary
//! usage per gain label.

use std::path::Path;

use serde::{Deserialize, Serialize};

use cooper_core::cognition::{policy_sample, rollout_seed, GainLabel};
use cooper_core::config::RunConfig;
use cooper_core::io::{write_json, FlowCheckpoint, PolicyCheckpoint};
use cooper_core::reward::answer_reward;
use cooper_core::rng::{derive_seed, stream};
use cooper_core::Result;

use crate::workspace::{require, PipelineData, Workspace};

/// Evaluation summary; aux rates are `None` when no item carries the label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint_stage: String,
    pub items: usize,
    pub rollouts_per_item: usize,
    pub accuracy: f64,
    pub aux_rate_pos: Option<f64>,
    pub aux_rate_neg: Option<f64>,
    pub aux_rate_bnd: Option<f64>,
    pub items_pos: usize,
    pub items_neg: usize,
    pub items_bnd: usize,
}

pub fn run(cfg: &RunConfig, ws: &Workspace, checkpoint: Option<&Path>) -> Result<()> {
    let ckpt_path = match checkpoint {
        Some(path) => path.to_path_buf(),
        None => require(ws.grpo_checkpoint(), "grpo")?,
    };
    let ckpt = PolicyCheckpoint::load(&ckpt_path)?;
    let policy = ckpt.to_policy()?;
    let field = FlowCheckpoint::load(&require(ws.flow_checkpoint(), "flow train")?)?.to_field()?;
    let data = PipelineData::load(ws)?;

    let mut ids = data.splits.sft.clone();
    ids.extend_from_slice(&data.splits.rl);
    let curated = data.curated(&ids)?;

    let base_seed = derive_seed(cfg.seed, &[stream::EVAL]);
    let mut correct_sum = 0.0;
    let mut used = [0u64; 3];
    let mut total = [0u64; 3];
    let mut item_counts = [0usize; 3];
    for item in &curated {
        let class = label_slot(item.curated_gain);
        item_counts[class] += 1;
        for j in 0..cfg.sampling.k {
            let response = policy_sample(
                &policy,
                &item.item,
                cfg.sampling.tau,
                &cfg.hints,
                Some(&field),
                &cfg.solver,
                rollout_seed(base_seed, item.item.id, j as u64),
            )?;
            correct_sum += answer_reward(&response, &item.item);
            total[class] += 1;
            if response.used_aux {
                used[class] += 1;
            }
        }
    }

    let rate = |class: usize| -> Option<f64> {
        (total[class] > 0).then(|| used[class] as f64 / total[class] as f64)
    };
    let rollouts = curated.len() * cfg.sampling.k;
    let report = EvalReport {
        checkpoint_stage: ckpt.stage.clone(),
        items: curated.len(),
        rollouts_per_item: cfg.sampling.k,
        accuracy: correct_sum / rollouts.max(1) as f64,
        aux_rate_pos: rate(0),
        aux_rate_neg: rate(1),
        aux_rate_bnd: rate(2),
        items_pos: item_counts[0],
        items_neg: item_counts[1],
        items_bnd: item_counts[2],
    };
    write_json(&ws.eval_report(), &report)?;
    println!(
        "wrote {} (accuracy {:.4} over {} items x {} rollouts)",
        ws.eval_report().display(),
        report.accuracy,
        report.items,
        report.rollouts_per_item
    );
    Ok(())
}

fn label_slot(gain: GainLabel) -> usize {
    match gain {
        GainLabel::Positive => 0,
        GainLabel::Negative => 1,
        GainLabel::Zero => 2,
    }
}
