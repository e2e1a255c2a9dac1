//! Run configuration: one TOML file with a table per pipeline stage.
//!
//! Every field has a default, so an empty file is a valid configuration and
//! partial files override only what they name. Precedence is CLI flag over
//! file over default. A single run-level `seed` drives the whole pipeline:
//! stage seeds (`sampling.seed`, `curation.split_seed`) left at the default
//! `0` are replaced by values derived from the run seed, so one knob
//! reseeds everything while an explicit non-zero stage seed still pins that
//! stage alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::MAX_PALETTE;
use crate::cognition::{HintConfig, SftConfig};
use crate::curation::{CurationConfig, SamplingConfig};
use crate::error::{CoreError, Result};
use crate::flow::{FlowTrainConfig, SolverConfig, DEFAULT_HIDDEN};
use crate::grpo::GrpoConfig;
use crate::rng::{derive_seed, stream};

/// Whole-pipeline settings; see the module docs for seed semantics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Run-level seed; every stage derives from it unless pinned.
    pub seed: u64,
    /// Directory all artifacts are written under.
    pub out_dir: String,
    /// Number of synthetic items to generate.
    pub item_count: usize,
    /// Latent dimension of generated auxiliary views.
    pub latent_dim: usize,
    /// Segmentation palette size.
    pub palette_size: usize,
    /// Hidden layer widths of the velocity network.
    pub flow_hidden: Vec<usize>,
    pub solver: SolverConfig,
    pub flow: FlowTrainConfig,
    pub hints: HintConfig,
    pub sampling: SamplingConfig,
    pub curation: CurationConfig,
    pub sft: SftConfig,
    pub grpo: GrpoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out_dir: "runs/cooper".into(),
            item_count: 96,
            latent_dim: 8,
            palette_size: 150,
            flow_hidden: DEFAULT_HIDDEN.to_vec(),
            solver: SolverConfig::default(),
            flow: FlowTrainConfig::default(),
            hints: HintConfig::default(),
            sampling: SamplingConfig::default(),
            curation: CurationConfig::default(),
            sft: SftConfig::default(),
            grpo: GrpoConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses a TOML file; unknown keys are rejected to catch typos.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| CoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CoreError::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Applies CLI overrides (flag beats file), then resolves derived seeds.
    pub fn with_overrides(mut self, seed: Option<u64>, out_dir: Option<String>) -> RunConfig {
        if let Some(seed) = seed {
            self.seed = seed;
        }
        if let Some(out_dir) = out_dir {
            self.out_dir = out_dir;
        }
        self.resolve_seeds();
        self
    }

    /// Replaces stage seeds left at the `0` sentinel with values derived
    /// from the run seed.
    pub fn resolve_seeds(&mut self) {
        if self.sampling.seed == 0 {
            self.sampling.seed = derive_seed(self.seed, &[stream::CURATION, 0x5EED]);
        }
        if self.curation.split_seed == 0 {
            self.curation.split_seed = derive_seed(self.seed, &[stream::CURATION, 0x5117]);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.item_count == 0 {
            return Err(CoreError::Config("item_count must be at least 1".into()));
        }
        if self.latent_dim == 0 {
            return Err(CoreError::Config("latent_dim must be at least 1".into()));
        }
        if self.palette_size == 0 || self.palette_size > MAX_PALETTE {
            return Err(CoreError::Config(format!(
                "palette_size must be in 1..={MAX_PALETTE}, got {}",
                self.palette_size
            )));
        }
        if self.flow_hidden.is_empty() || self.flow_hidden.iter().any(|&w| w == 0) {
            return Err(CoreError::Config(format!(
                "flow_hidden must be non-empty with positive widths, got {:?}",
                self.flow_hidden
            )));
        }
        self.solver.validate().map_err(reword("solver"))?;
        self.flow.validate().map_err(reword("flow"))?;
        self.hints.validate().map_err(reword("hints"))?;
        self.sampling.validate().map_err(reword("sampling"))?;
        self.curation.validate().map_err(reword("curation"))?;
        self.sft.validate().map_err(reword("sft"))?;
        self.grpo.validate().map_err(reword("grpo"))?;
        Ok(())
    }
}

/// Prefixes a sub-config failure with the table it came from.
fn reword(table: &'static str) -> impl Fn(CoreError) -> CoreError {
    move |e| CoreError::Config(format!("[{table}] {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::SolverMethod;

    #[test]
    fn empty_file_yields_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.grpo.group_size, 8);
        assert_eq!(cfg.grpo.batch_items, 32);
        assert_eq!(cfg.grpo.steps, 100);
        assert_eq!(cfg.grpo.clip_eps, 0.2);
        assert_eq!(cfg.grpo.kl_beta, 0.0);
        assert_eq!(cfg.grpo.sigma, 4);
        assert_eq!(cfg.sampling.k, 8);
        assert_eq!(cfg.sampling.tau, 1.0);
        assert_eq!(cfg.curation.lambda, 0.375);
        assert_eq!(cfg.palette_size, 150);
        assert_eq!(cfg.solver.steps, 50);
    }

    #[test]
    fn partial_file_overrides_only_named_fields() {
        let cfg: RunConfig = toml::from_str(
            r#"
            seed = 7
            [solver]
            method = "heun"
            [grpo]
            steps = 3
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.solver.method, SolverMethod::Heun);
        assert_eq!(cfg.solver.steps, 50);
        assert_eq!(cfg.grpo.steps, 3);
        assert_eq!(cfg.grpo.group_size, 8);
    }

    #[test]
    fn flag_beats_file_and_seeds_resolve() {
        let cfg: RunConfig = toml::from_str("seed = 7").unwrap();
        let resolved = cfg.with_overrides(Some(99), Some("elsewhere".into()));
        assert_eq!(resolved.seed, 99);
        assert_eq!(resolved.out_dir, "elsewhere");
        assert_ne!(resolved.sampling.seed, 0);
        assert_ne!(resolved.curation.split_seed, 0);
        assert_ne!(resolved.sampling.seed, resolved.curation.split_seed);

        // Same run seed, same derived seeds; pinned stage seeds survive.
        let again = RunConfig::default().with_overrides(Some(99), None);
        assert_eq!(again.sampling.seed, resolved.sampling.seed);
        let mut pinned: RunConfig = toml::from_str("[sampling]\nseed = 5").unwrap();
        pinned = pinned.with_overrides(Some(99), None);
        assert_eq!(pinned.sampling.seed, 5);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sedd = 7").is_err());
        assert!(toml::from_str::<RunConfig>("[grpo]\nclip_epsilon = 0.2").is_err());

        let cfg: RunConfig = toml::from_str("[grpo]\nclip_eps = 1.5").unwrap();
        assert!(cfg.validate().is_err());
        let cfg: RunConfig = toml::from_str("palette_size = 0").unwrap();
        assert!(cfg.validate().is_err());
        let cfg: RunConfig = toml::from_str("flow_hidden = []").unwrap();
        assert!(cfg.validate().is_err());
        // The failure names the offending table.
        let cfg: RunConfig = toml::from_str("[curation]\nlambda = 2.0").unwrap();
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("[curation]"), "{msg}");
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.seed = 3;
        cfg.grpo.kl_beta = 0.25;
        cfg.flow_hidden = vec![16, 8];
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
