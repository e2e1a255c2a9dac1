//! Velocity-field training and one-shot sampling.

use std::path::Path;

use clap::ValueEnum;

use cooper_core::config::RunConfig;
use cooper_core::flow::{
    demo_pairs, fm_train, generate_aux, ConditionVector, FlowPair, SolverConfig, TaskKind,
    VelocityField,
};
use cooper_core::io::{
    quantize_channel, read_jsonl, write_json, write_jsonl, write_loss_csv, write_ppm8,
    FlowCheckpoint,
};
use cooper_core::numerics::RealVector;
use cooper_core::rng::{derive_rng, stream};
use cooper_core::{CoreError, Result};

use crate::workspace::{require, Workspace};

/// Task tag selecting what a sampled latent is decoded as.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Control {
    Depth,
    Seg,
}

impl Control {
    fn task(self) -> TaskKind {
        match self {
            Control::Depth => TaskKind::Depth,
            Control::Seg => TaskKind::Seg,
        }
    }
}

/// Fits a fresh field to the pair dataset and writes the checkpoint and the
/// per-step loss curve.
pub fn train(cfg: &RunConfig, ws: &Workspace, pairs_flag: Option<&Path>) -> Result<()> {
    let pairs_path = match pairs_flag {
        Some(path) => path.to_path_buf(),
        None => {
            let path = ws.pairs();
            if !path.exists() {
                write_jsonl(&path, &demo_pairs())?;
                log::info!("materialized built-in demo pairs at {}", path.display());
            }
            path
        }
    };
    let pairs: Vec<FlowPair> = read_jsonl(&pairs_path)?;
    let content_dim = check_pairs(&pairs, cfg.latent_dim, &pairs_path)?;

    let mut rng = derive_rng(cfg.seed, &[stream::FIELD_INIT]);
    let mut field = VelocityField::new(
        cfg.latent_dim,
        ConditionVector::encoded_dim(content_dim),
        &cfg.flow_hidden,
        &mut rng,
    )?;
    let curve = fm_train(&mut field, &pairs, &cfg.flow, cfg.seed)?;

    FlowCheckpoint::new(&field, cfg).save(&ws.flow_checkpoint())?;
    write_loss_csv(&ws.flow_loss(), &curve)?;
    let last = curve.last().copied().unwrap_or(f64::NAN);
    println!(
        "wrote {} and {} ({} steps, final loss {last:.6})",
        ws.flow_checkpoint().display(),
        ws.flow_loss().display(),
        curve.len()
    );
    Ok(())
}

/// Every pair must match the configured latent dimension and share one
/// content dimension; returns that content dimension.
fn check_pairs(pairs: &[FlowPair], latent_dim: usize, path: &Path) -> Result<usize> {
    let bad = |message: String| CoreError::InvalidArgument {
        context: "flow train",
        message: format!("{}: {message}", path.display()),
    };
    let first = pairs
        .first()
        .ok_or_else(|| bad("pair dataset is empty".into()))?;
    let content_dim = first.cond.content.len();
    for (i, pair) in pairs.iter().enumerate() {
        if pair.z1.len() != latent_dim {
            return Err(bad(format!(
                "pair {i} has target dim {}, config says latent_dim {latent_dim}",
                pair.z1.len()
            )));
        }
        if pair.cond.content.len() != content_dim {
            return Err(bad(format!(
                "pair {i} has content dim {}, pair 0 has {content_dim}",
                pair.cond.content.len()
            )));
        }
    }
    Ok(content_dim)
}

/// Draws one latent from noise under the given task tag and writes it both
/// as JSON and as a single-row PPM with the value replicated per channel.
pub fn sample(
    cfg: &RunConfig,
    ws: &Workspace,
    control: Control,
    steps: Option<usize>,
) -> Result<()> {
    let ckpt = FlowCheckpoint::load(&require(ws.flow_checkpoint(), "flow train")?)?;
    let field = ckpt.to_field()?;
    let solver = SolverConfig {
        steps: steps.unwrap_or(cfg.solver.steps),
        method: cfg.solver.method,
    };
    // The task tag occupies the encoded slots beyond the content vector.
    let content_dim = field.cond_dim() - ConditionVector::encoded_dim(0);
    let cond = ConditionVector::new(control.task(), RealVector::zeros(content_dim));
    let generated = generate_aux(&field, &cond, cfg.seed, &solver)?;

    write_json(&ws.sample_latent(control.task().label()), &generated)?;
    let rgb: Vec<u8> = generated
        .latent
        .as_slice()
        .iter()
        .flat_map(|&v| {
            let c = quantize_channel(v);
            [c, c, c]
        })
        .collect();
    write_ppm8(
        &ws.sample_image(control.task().label()),
        field.latent_dim(),
        1,
        &rgb,
    )?;
    println!(
        "wrote {} and {}",
        ws.sample_latent(control.task().label()).display(),
        ws.sample_image(control.task().label()).display()
    );
    Ok(())
}
