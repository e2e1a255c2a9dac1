//! Group-relative policy optimization with a clipped surrogate objective.
//!
//! For each item the policy samples a group of N responses, scores them with
//! the composite reward, and normalizes rewards *within the group* into
//! advantages `A_i = (r_i − mean)/std` (population statistics; a group with
//! no reward spread contributes zero advantage everywhere). The surrogate
//! objective averages `min(s_i·A_i, clip(s_i, 1−ε, 1+ε)·A_i)` over all
//! responses, where `s_i` is the response-level probability ratio between
//! the current policy and the behavior policy that sampled the group, minus
//! an optional exact-KL penalty toward a frozen reference policy.
//!
//! One gradient update follows each sampling round, so ratios start at 1 and
//! the clip only engages when steps are deliberately replayed on stale
//! rollouts (exercised by the stress tests).

use serde::{Deserialize, Serialize};

use crate::cognition::{
    policy_adam_step, policy_kl, policy_kl_grad, policy_logprob, policy_logprob_grad,
    policy_sample, rollout_seed, CuratedItem, GainLabel, HintConfig, PolicyGrads, PolicyOptState,
    PolicyParams, Response, ToyItem,
};
use crate::error::{CoreError, Result};
use crate::flow::{SolverConfig, VelocityField};
use crate::numerics::AdamConfig;
use crate::reward::{cpr_total, ExplorationContext, RewardBreakdown};
use crate::rng::{derive_rng, derive_seed, stream};
use rand::seq::SliceRandom;

/// Hyperparameters of the optimization stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoConfig {
    /// Half-width ε of the ratio clip band `[1−ε, 1+ε]`.
    pub clip_eps: f64,
    /// Weight β of the reference-policy KL penalty.
    pub kl_beta: f64,
    /// Peak learning rate.
    pub lr: f64,
    /// Responses sampled per item per step.
    pub group_size: usize,
    /// Items per optimization step.
    pub batch_items: usize,
    /// Optimization steps.
    pub steps: usize,
    /// Below this reward spread a group's advantages are all zero.
    pub std_floor: f64,
    /// Group-usage threshold for the exploration reward term.
    pub sigma: u32,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            clip_eps: 0.2,
            kl_beta: 0.0,
            lr: 1e-3,
            group_size: 8,
            batch_items: 32,
            steps: 100,
            std_floor: 1e-8,
            sigma: 4,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(CoreError::Config(format!(
                "clip_eps must be in (0, 1), got {}",
                self.clip_eps
            )));
        }
        if !(self.kl_beta >= 0.0) || !self.kl_beta.is_finite() {
            return Err(CoreError::Config(format!(
                "kl_beta must be finite and non-negative, got {}",
                self.kl_beta
            )));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(CoreError::Config(format!(
                "lr must be positive and finite, got {}",
                self.lr
            )));
        }
        if self.group_size < 2 {
            return Err(CoreError::Config(format!(
                "group_size must be at least 2, got {}",
                self.group_size
            )));
        }
        if self.batch_items == 0 {
            return Err(CoreError::Config("batch_items must be at least 1".into()));
        }
        if !(self.std_floor > 0.0) || !self.std_floor.is_finite() {
            return Err(CoreError::Config(format!(
                "std_floor must be positive and finite, got {}",
                self.std_floor
            )));
        }
        if self.sigma as usize > self.group_size {
            return Err(CoreError::Config(format!(
                "exploration threshold sigma ({}) exceeds the group size ({})",
                self.sigma, self.group_size
            )));
        }
        Ok(())
    }
}

/// A frozen snapshot of the policy used as the KL anchor for a whole run.
#[derive(Clone, Debug)]
pub struct ReferencePolicy(PolicyParams);

impl ReferencePolicy {
    pub fn snapshot(p: &PolicyParams) -> Self {
        ReferencePolicy(p.clone())
    }

    pub fn params(&self) -> &PolicyParams {
        &self.0
    }
}

/// One item's sampled group: N responses with their scored rewards.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutGroup {
    pub item: ToyItem,
    pub responses: Vec<Response>,
    pub rewards: Vec<RewardBreakdown>,
}

impl RolloutGroup {
    pub fn validate(&self) -> Result<()> {
        if self.responses.len() < 2 {
            return Err(CoreError::InvalidArgument {
                context: "rollout_group",
                message: format!(
                    "a group needs at least 2 responses, got {}",
                    self.responses.len()
                ),
            });
        }
        if self.responses.len() != self.rewards.len() {
            return Err(CoreError::ShapeMismatch {
                context: "rollout_group",
                expected: format!("{} rewards", self.responses.len()),
                actual: format!("{}", self.rewards.len()),
            });
        }
        Ok(())
    }

    /// Total reward per response, in group order.
    pub fn totals(&self) -> Vec<f64> {
        self.rewards.iter().map(|r| r.total).collect()
    }

    /// Number of responses in the group that used an auxiliary view.
    pub fn aux_count(&self) -> u32 {
        self.responses.iter().filter(|r| r.used_aux).count() as u32
    }
}

/// Group-normalized advantages `(r_i − mean)/std` with population statistics;
/// all zero when the spread is below `std_floor`.
pub fn compute_advantages(totals: &[f64], std_floor: f64) -> Result<Vec<f64>> {
    if totals.len() < 2 {
        return Err(CoreError::InvalidArgument {
            context: "compute_advantages",
            message: format!("need at least 2 rewards, got {}", totals.len()),
        });
    }
    crate::error::ensure_finite(totals, "compute_advantages")?;
    let n = totals.len() as f64;
    let mean = totals.iter().sum::<f64>() / n;
    let var = totals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < std_floor {
        return Ok(vec![0.0; totals.len()]);
    }
    Ok(totals.iter().map(|r| (r - mean) / std).collect())
}

/// Response-level probability ratio between the current policy and the
/// behavior policy that sampled the response.
pub fn importance_ratio(
    p: &PolicyParams,
    item: &ToyItem,
    response: &Response,
    env: &HintConfig,
) -> Result<f64> {
    let s = (policy_logprob(p, item, response, env)? - response.log_prob).exp();
    if !s.is_finite() {
        return Err(CoreError::Numeric {
            context: "importance_ratio",
            message: format!(
                "ratio overflowed (stored log-prob {}, item {})",
                response.log_prob, item.id
            ),
        });
    }
    Ok(s)
}

/// One response's clipped surrogate term `min(s·A, clip(s, 1−ε, 1+ε)·A)`.
pub fn clipped_term(s: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = s.clamp(1.0 - clip_eps, 1.0 + clip_eps) * advantage;
    (s * advantage).min(clipped)
}

/// Diagnostics from one objective evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveStats {
    /// Fraction of responses whose clipped branch was strictly selected.
    pub clip_fraction: f64,
    /// Mean exact divergence from the reference policy over the items.
    pub mean_kl: f64,
}

fn objective_inner(
    p: &PolicyParams,
    groups: &[RolloutGroup],
    reference: &ReferencePolicy,
    cfg: &GrpoConfig,
    env: &HintConfig,
    mut per_response: Option<&mut dyn FnMut(&RolloutGroup, usize, f64, f64) -> Result<()>>,
) -> Result<(f64, ObjectiveStats)> {
    cfg.validate()?;
    if groups.is_empty() {
        return Err(CoreError::InvalidArgument {
            context: "grpo_objective",
            message: "need at least one rollout group".into(),
        });
    }
    let mut surrogate_sum = 0.0;
    let mut clipped_count = 0usize;
    let mut n_responses = 0usize;
    for group in groups {
        group.validate()?;
        let advantages = compute_advantages(&group.totals(), cfg.std_floor)?;
        for (i, response) in group.responses.iter().enumerate() {
            let s = importance_ratio(p, &group.item, response, env)?;
            let unclipped = s * advantages[i];
            let term = clipped_term(s, advantages[i], cfg.clip_eps);
            if term < unclipped {
                clipped_count += 1;
            }
            surrogate_sum += term;
            n_responses += 1;
            if let Some(callback) = per_response.as_mut() {
                callback(group, i, s, advantages[i])?;
            }
        }
    }
    let mut kl_sum = 0.0;
    for group in groups {
        kl_sum += policy_kl(p, reference.params(), &group.item, env)?;
    }
    let mean_kl = kl_sum / groups.len() as f64;
    let objective = surrogate_sum / n_responses as f64 - cfg.kl_beta * mean_kl;
    if !objective.is_finite() {
        return Err(CoreError::NonFinite {
            context: "grpo objective",
            step: None,
        });
    }
    Ok((
        objective,
        ObjectiveStats {
            clip_fraction: clipped_count as f64 / n_responses as f64,
            mean_kl,
        },
    ))
}

/// The surrogate objective: mean clipped term over every response in every
/// group, minus `β ×` the mean reference divergence over the items.
pub fn grpo_objective(
    p: &PolicyParams,
    groups: &[RolloutGroup],
    reference: &ReferencePolicy,
    cfg: &GrpoConfig,
    env: &HintConfig,
) -> Result<f64> {
    objective_inner(p, groups, reference, cfg, env, None).map(|(j, _)| j)
}

/// [`grpo_objective`] with its gradient (direction of *ascent*) and the
/// objective diagnostics.
///
/// A response contributes `A_i·s_i·∇log π` when its unclipped branch is
/// selected and nothing when the clip is strictly active (the clipped branch
/// is constant in the parameters there); the KL penalty subtracts
/// `β·∇KL`.
pub fn grpo_objective_grad(
    p: &PolicyParams,
    groups: &[RolloutGroup],
    reference: &ReferencePolicy,
    cfg: &GrpoConfig,
    env: &HintConfig,
) -> Result<(f64, PolicyGrads, ObjectiveStats)> {
    let n_responses: usize = groups.iter().map(|g| g.responses.len()).sum();
    let response_scale = 1.0 / n_responses.max(1) as f64;
    let mut grads = PolicyGrads::zeros_like(p);
    let mut callback = |group: &RolloutGroup, i: usize, s: f64, advantage: f64| -> Result<()> {
        let unclipped = s * advantage;
        let term = clipped_term(s, advantage, cfg.clip_eps);
        if term < unclipped || advantage == 0.0 {
            return Ok(()); // clip active, or nothing to push
        }
        let (_, g) = policy_logprob_grad(p, &group.item, &group.responses[i], env)?;
        grads.add_scaled(&g, response_scale * advantage * s);
        Ok(())
    };
    let (objective, stats) = objective_inner(p, groups, reference, cfg, env, Some(&mut callback))?;
    if cfg.kl_beta > 0.0 {
        let item_scale = cfg.kl_beta / groups.len() as f64;
        for group in groups {
            let (_, g) = policy_kl_grad(p, reference.params(), &group.item, env)?;
            grads.add_scaled(&g, -item_scale);
        }
    }
    if grads.flatten().iter().any(|g| !g.is_finite()) {
        return Err(CoreError::NonFinite {
            context: "grpo gradient",
            step: None,
        });
    }
    Ok((objective, grads, stats))
}

/// Samples one item's group of `group_size` responses at temperature `τ` and
/// scores each against the group's own auxiliary-usage count. The curated
/// label drives the exploration term; the item itself (with its generative
/// gain) drives sampling and the hint environment.
#[allow(clippy::too_many_arguments)]
pub fn rollout_group(
    p: &PolicyParams,
    curated: &CuratedItem,
    flow: Option<&VelocityField>,
    env: &HintConfig,
    solver: &SolverConfig,
    cfg: &GrpoConfig,
    temperature: f64,
    base_seed: u64,
) -> Result<RolloutGroup> {
    let item = &curated.item;
    let mut responses = Vec::with_capacity(cfg.group_size);
    for i in 0..cfg.group_size {
        let seed = rollout_seed(base_seed, item.id, i as u64);
        responses.push(policy_sample(
            p,
            item,
            temperature,
            env,
            flow,
            solver,
            seed,
        )?);
    }
    let aux_count = responses.iter().filter(|r| r.used_aux).count() as u32;
    let rewards = responses
        .iter()
        .map(|response| {
            cpr_total(
                response,
                item,
                &ExplorationContext {
                    gain: curated.curated_gain,
                    sigma: cfg.sigma,
                    group_size: cfg.group_size as u32,
                    aux_count,
                    used_aux: response.used_aux,
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RolloutGroup {
        item: item.clone(),
        responses,
        rewards,
    })
}

/// Per-step training diagnostics; one CSV row per step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub step: usize,
    pub mean_reward: f64,
    pub mean_r_a: f64,
    pub mean_r_f: f64,
    pub mean_r_e: f64,
    pub aux_rate_pos: f64,
    pub aux_rate_neg: f64,
    pub aux_rate_bnd: f64,
    pub kl: f64,
    pub clip_fraction: f64,
}

/// Mean auxiliary-usage rate over the groups whose item carries `gain`;
/// `NaN` when the batch contains no such item.
fn aux_rate(groups: &[RolloutGroup], gain: GainLabel) -> f64 {
    let mut used = 0usize;
    let mut total = 0usize;
    for group in groups.iter().filter(|g| g.item.gain == gain) {
        used += group.responses.iter().filter(|r| r.used_aux).count();
        total += group.responses.len();
    }
    if total == 0 {
        f64::NAN
    } else {
        used as f64 / total as f64
    }
}

fn batch_metrics(step: usize, groups: &[RolloutGroup], stats: &ObjectiveStats) -> TrainMetrics {
    let n: usize = groups.iter().map(|g| g.rewards.len()).sum();
    let scale = 1.0 / n as f64;
    let mut mean_reward = 0.0;
    let mut mean_r_a = 0.0;
    let mut mean_r_f = 0.0;
    let mut mean_r_e = 0.0;
    for reward in groups.iter().flat_map(|g| g.rewards.iter()) {
        mean_reward += scale * reward.total;
        mean_r_a += scale * reward.r_a;
        mean_r_f += scale * reward.r_f;
        mean_r_e += scale * reward.r_e;
    }
    TrainMetrics {
        step,
        mean_reward,
        mean_r_a,
        mean_r_f,
        mean_r_e,
        aux_rate_pos: aux_rate(groups, GainLabel::Positive),
        aux_rate_neg: aux_rate(groups, GainLabel::Negative),
        aux_rate_bnd: aux_rate(groups, GainLabel::Zero),
        kl: stats.mean_kl,
        clip_fraction: stats.clip_fraction,
    }
}

/// One optimization step: pick a batch of items, sample and score a group
/// per item at τ = 1, then take one ascent step on the surrogate objective.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    p: &mut PolicyParams,
    items: &[CuratedItem],
    flow: Option<&VelocityField>,
    reference: &ReferencePolicy,
    cfg: &GrpoConfig,
    env: &HintConfig,
    solver: &SolverConfig,
    opt: &mut PolicyOptState,
    adam: &AdamConfig,
    step: usize,
    seed: u64,
) -> Result<TrainMetrics> {
    cfg.validate()?;
    if items.is_empty() {
        return Err(CoreError::InvalidArgument {
            context: "grpo train_step",
            message: "item set must be non-empty".into(),
        });
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut derive_rng(seed, &[stream::GRPO, step as u64]));
    order.truncate(cfg.batch_items.min(items.len()));

    let sample_seed = derive_seed(seed, &[stream::GRPO, step as u64]);
    let mut groups = Vec::with_capacity(order.len());
    for index in order {
        groups.push(rollout_group(
            p,
            &items[index],
            flow,
            env,
            solver,
            cfg,
            1.0,
            sample_seed,
        )?);
    }

    let (_, mut grads, stats) = grpo_objective_grad(p, &groups, reference, cfg, env)?;
    grads.scale(-1.0); // the optimizer descends; the objective is ascended
    policy_adam_step(p, &grads, opt, adam)?;
    Ok(batch_metrics(step, &groups, &stats))
}

/// Runs the full optimization loop. The reference policy is frozen at entry;
/// everything downstream is deterministic in `(params, items, seed)`.
pub fn train_loop(
    p: &mut PolicyParams,
    items: &[CuratedItem],
    flow: Option<&VelocityField>,
    cfg: &GrpoConfig,
    env: &HintConfig,
    solver: &SolverConfig,
    seed: u64,
) -> Result<Vec<TrainMetrics>> {
    cfg.validate()?;
    env.validate()?;
    let reference = ReferencePolicy::snapshot(p);
    let mut opt = PolicyOptState::new(p);
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        history.push(train_step(
            p, items, flow, &reference, cfg, env, solver, &mut opt, &adam, step, seed,
        )?);
    }
    Ok(history)
}
