//! JSON checkpoints for the velocity field and the policy.
//!
//! Checkpoints are human-inspectable at this scale and carry a snapshot of
//! the run configuration that produced them. They contain nothing
//! time-dependent, so save → load → save reproduces the file byte for byte
//! — the determinism contract the pipeline tests rely on.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cognition::PolicyParams;
use crate::config::RunConfig;
use crate::error::{CoreError, Result};
use crate::flow::VelocityField;
use crate::numerics::{Matrix, MlpParams};

/// Format version accepted by the loaders.
pub const CHECKPOINT_VERSION: u32 = 1;

/// A network's parameters in plain JSON-friendly form: per-layer row-major
/// weight matrices and bias vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetData {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl NetData {
    pub fn from_net(net: &MlpParams) -> NetData {
        NetData {
            layer_sizes: net.layer_sizes().to_vec(),
            weights: net
                .weights()
                .iter()
                .map(|w| w.as_row_major().to_vec())
                .collect(),
            biases: net.biases().to_vec(),
        }
    }

    pub fn to_net(&self) -> Result<MlpParams> {
        if self.layer_sizes.len() < 2 {
            return Err(CoreError::InvalidArgument {
                context: "NetData::to_net",
                message: format!("layer_sizes too short: {:?}", self.layer_sizes),
            });
        }
        let weights = self
            .layer_sizes
            .windows(2)
            .zip(&self.weights)
            .map(|(pair, data)| Matrix::from_row_major(pair[1], pair[0], data.clone()))
            .collect::<Result<Vec<_>>>()?;
        MlpParams::from_parts(self.layer_sizes.clone(), weights, self.biases.clone())
    }
}

/// Deterministic provenance entries shared by both checkpoint kinds.
fn standard_meta(seed: u64) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("tool".into(), "cooper".into()),
        ("format".into(), format!("json-v{CHECKPOINT_VERSION}")),
        ("crate_version".into(), env!("CARGO_PKG_VERSION").into()),
        ("seed".into(), seed.to_string()),
    ])
}

fn check_version(version: u32, stage: &str, path: &Path) -> Result<()> {
    if version != CHECKPOINT_VERSION {
        return Err(CoreError::MalformedFile {
            path: path.display().to_string(),
            format: "checkpoint",
            offset: 0,
            message: format!(
                "unsupported {stage} checkpoint version {version} (loader speaks {CHECKPOINT_VERSION})"
            ),
        });
    }
    Ok(())
}

/// Serialized velocity field plus the config that trained it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowCheckpoint {
    pub version: u32,
    pub stage: String,
    pub latent_dim: usize,
    pub condition_dim: usize,
    pub net: NetData,
    pub config: RunConfig,
    pub meta: BTreeMap<String, String>,
}

impl FlowCheckpoint {
    pub fn new(field: &VelocityField, config: &RunConfig) -> FlowCheckpoint {
        FlowCheckpoint {
            version: CHECKPOINT_VERSION,
            stage: "flow".into(),
            latent_dim: field.latent_dim(),
            condition_dim: field.cond_dim(),
            net: NetData::from_net(&field.net),
            config: config.clone(),
            meta: standard_meta(config.seed),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<FlowCheckpoint> {
        let ckpt: FlowCheckpoint = super::read_json(path)?;
        check_version(ckpt.version, &ckpt.stage, path)?;
        Ok(ckpt)
    }

    pub fn to_field(&self) -> Result<VelocityField> {
        VelocityField::from_net(self.latent_dim, self.condition_dim, self.net.to_net()?)
    }
}

/// Serialized policy (all three heads) plus the config that trained it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub version: u32,
    pub stage: String,
    pub gate: NetData,
    pub modality: NetData,
    pub answer: NetData,
    pub config: RunConfig,
    pub meta: BTreeMap<String, String>,
}

impl PolicyCheckpoint {
    pub fn new(p: &PolicyParams, stage: &str, config: &RunConfig) -> PolicyCheckpoint {
        PolicyCheckpoint {
            version: CHECKPOINT_VERSION,
            stage: stage.into(),
            gate: NetData::from_net(&p.gate_net),
            modality: NetData::from_net(&p.modality_net),
            answer: NetData::from_net(&p.answer_net),
            config: config.clone(),
            meta: standard_meta(config.seed),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<PolicyCheckpoint> {
        let ckpt: PolicyCheckpoint = super::read_json(path)?;
        check_version(ckpt.version, &ckpt.stage, path)?;
        Ok(ckpt)
    }

    pub fn to_policy(&self) -> Result<PolicyParams> {
        let p = PolicyParams {
            gate_net: self.gate.to_net()?,
            modality_net: self.modality.to_net()?,
            answer_net: self.answer.to_net()?,
        };
        p.validate_shape()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::ConditionVector;
    use crate::rng::derive_rng;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("cooper-checkpoint-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn flow_checkpoint_reload_then_save_is_byte_identical() {
        let field = VelocityField::new(
            8,
            ConditionVector::encoded_dim(8),
            &[6, 5],
            &mut derive_rng(3, &[1]),
        )
        .unwrap();
        let cfg = RunConfig::default();
        let path = tmp("flow.json");
        FlowCheckpoint::new(&field, &cfg).save(&path).unwrap();
        let first = std::fs::read(&path).unwrap();

        let loaded = FlowCheckpoint::load(&path).unwrap();
        let refit = loaded.to_field().unwrap();
        assert_eq!(refit.net, field.net);
        assert_eq!(loaded.config, cfg);

        let path2 = tmp("flow-resaved.json");
        FlowCheckpoint::new(&refit, &loaded.config)
            .save(&path2)
            .unwrap();
        assert_eq!(std::fs::read(&path2).unwrap(), first);
    }

    #[test]
    fn policy_checkpoint_round_trips_parameters_exactly() {
        let p = PolicyParams::random(11);
        let cfg = RunConfig::default();
        let path = tmp("policy.json");
        PolicyCheckpoint::new(&p, "sft", &cfg).save(&path).unwrap();
        let loaded = PolicyCheckpoint::load(&path).unwrap();
        assert_eq!(loaded.stage, "sft");
        assert_eq!(loaded.to_policy().unwrap(), p);

        let first = std::fs::read(&path).unwrap();
        PolicyCheckpoint::new(&loaded.to_policy().unwrap(), &loaded.stage, &loaded.config)
            .save(&path)
            .unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn unsupported_versions_are_refused() {
        let p = PolicyParams::random(12);
        let mut ckpt = PolicyCheckpoint::new(&p, "sft", &RunConfig::default());
        ckpt.version = 99;
        let path = tmp("vfuture.json");
        ckpt.save(&path).unwrap();
        let err = PolicyCheckpoint::load(&path).unwrap_err().to_string();
        assert!(err.contains("version 99"), "{err}");
    }

    #[test]
    fn mangled_net_shapes_are_refused() {
        let p = PolicyParams::random(13);
        let mut ckpt = PolicyCheckpoint::new(&p, "grpo", &RunConfig::default());
        ckpt.gate.weights[0].pop();
        let path = tmp("mangled.json");
        ckpt.save(&path).unwrap();
        assert!(PolicyCheckpoint::load(&path).unwrap().to_policy().is_err());
    }
}
