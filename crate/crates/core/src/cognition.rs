//! Synthetic spatial-question environment and the factored interleaved
//! policy trained on it.
//!
//! Each task item is an 8-dim scene descriptor with a four-way answer key
//! and a hidden gain label describing whether a generated auxiliary view
//! helps (+1), misleads (-1), or changes nothing (0). The policy factors
//! into three small tanh networks: a *gate* deciding whether to generate an
//! auxiliary view, a *modality* head choosing depth or segmentation, and an
//! *answer* head reading the scene features concatenated with the evidence
//! vector the environment returns for the chosen mode. Every response
//! probability is a product of these discrete heads, so each expectation
//! used by the trainers is exactly enumerable (≤ 12 outcomes per item).
//!
//! The module also builds supervised demonstrations (auxiliary view plus
//! correct answer for gain +1 items, direct answers otherwise) and trains on
//! them with cross-entropy over the discrete decisions only — the content of
//! visual segments is never supervised.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{CoreError, Result};
use crate::flow::{generate_aux, ConditionVector, SolverConfig, TaskKind, VelocityField};
use crate::numerics::{
    adam_step_mlp, log_softmax, mlp_backward, mlp_forward, softmax_probs, softmax_sample,
    AdamConfig, MlpGrads, MlpParams, OptState, RealVector,
};
use crate::rng::{derive_rng, derive_seed, standard_normal, stream};
use rand::Rng;

/// Dimension of every item's scene-descriptor vector.
pub const FEATURE_DIM: usize = 8;
/// Number of multiple-choice answers.
pub const NUM_ANSWERS: usize = 4;
/// Layer sizes of the gate head (features -> 1 logit for "use aux").
pub const GATE_LAYERS: [usize; 3] = [FEATURE_DIM, 8, 1];
/// Layer sizes of the modality head (features -> 2 logits over depth/seg).
pub const MODALITY_LAYERS: [usize; 3] = [FEATURE_DIM, 8, 2];
/// Layer sizes of the answer head (features ⊕ hint -> 4 logits).
pub const ANSWER_LAYERS: [usize; 3] = [FEATURE_DIM + NUM_ANSWERS, 8, NUM_ANSWERS];

/// Template text inside the thinking block that precedes a generation tag.
pub const THINK_GEN_TEXT: &str = "the scene needs an auxiliary view";
/// Template text inside the thinking block that precedes the answer tag.
pub const THINK_ANSWER_TEXT: &str = "combining the available evidence";

// ---------------------------------------------------------------------------
// Items
// ---------------------------------------------------------------------------

/// One of the four answer options.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnswerChoice {
    A,
    B,
    C,
    D,
}

impl AnswerChoice {
    pub const ALL: [AnswerChoice; NUM_ANSWERS] = [
        AnswerChoice::A,
        AnswerChoice::B,
        AnswerChoice::C,
        AnswerChoice::D,
    ];

    pub fn index(self) -> usize {
        match self {
            AnswerChoice::A => 0,
            AnswerChoice::B => 1,
            AnswerChoice::C => 2,
            AnswerChoice::D => 3,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or(CoreError::InvalidArgument {
            context: "answer_choice",
            message: format!("index {i} out of range 0..{NUM_ANSWERS}"),
        })
    }

    pub fn letter(self) -> &'static str {
        match self {
            AnswerChoice::A => "A",
            AnswerChoice::B => "B",
            AnswerChoice::C => "C",
            AnswerChoice::D => "D",
        }
    }
}

impl fmt::Display for AnswerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

impl FromStr for AnswerChoice {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(AnswerChoice::A),
            "B" => Ok(AnswerChoice::B),
            "C" => Ok(AnswerChoice::C),
            "D" => Ok(AnswerChoice::D),
            other => Err(CoreError::InvalidArgument {
                context: "answer_choice",
                message: format!("expected one of A/B/C/D, got {other:?}"),
            }),
        }
    }
}

/// Whether auxiliary views help (+1), mislead (-1), or change nothing (0)
/// for an item. Serialized as the bare integer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum GainLabel {
    Positive,
    Zero,
    Negative,
}

impl GainLabel {
    pub const ALL: [GainLabel; 3] = [GainLabel::Positive, GainLabel::Zero, GainLabel::Negative];

    pub fn value(self) -> i8 {
        match self {
            GainLabel::Positive => 1,
            GainLabel::Zero => 0,
            GainLabel::Negative => -1,
        }
    }
}

impl From<GainLabel> for i8 {
    fn from(g: GainLabel) -> i8 {
        g.value()
    }
}

impl TryFrom<i8> for GainLabel {
    type Error = CoreError;

    fn try_from(v: i8) -> Result<Self> {
        match v {
            1 => Ok(GainLabel::Positive),
            0 => Ok(GainLabel::Zero),
            -1 => Ok(GainLabel::Negative),
            other => Err(CoreError::InvalidArgument {
                context: "gain_label",
                message: format!("expected -1, 0, or 1, got {other}"),
            }),
        }
    }
}

/// One synthetic task: a scene descriptor, its answer key, and the hidden
/// gain label controlling how auxiliary evidence behaves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyItem {
    pub id: u64,
    pub features: Vec<f64>,
    pub correct: AnswerChoice,
    pub gain: GainLabel,
    pub misleading: AnswerChoice,
}

impl ToyItem {
    pub fn validate(&self) -> Result<()> {
        if self.features.len() != FEATURE_DIM {
            return Err(CoreError::ShapeMismatch {
                context: "toy_item",
                expected: format!("{FEATURE_DIM} features"),
                actual: format!("{}", self.features.len()),
            });
        }
        crate::error::ensure_finite(&self.features, "toy_item")?;
        if self.gain == GainLabel::Negative && self.misleading == self.correct {
            return Err(CoreError::InvalidArgument {
                context: "toy_item",
                message: format!(
                    "item {}: misleading answer must differ from the correct one",
                    self.id
                ),
            });
        }
        Ok(())
    }
}

/// Unit-norm class direction the features of each gain class cluster around.
fn class_direction(gain: GainLabel) -> [f64; FEATURE_DIM] {
    let s = 1.0 / (FEATURE_DIM as f64).sqrt();
    let mut dir = [0.0; FEATURE_DIM];
    for (d, slot) in dir.iter_mut().enumerate() {
        *slot = s * match gain {
            GainLabel::Positive => 1.0,
            GainLabel::Negative => {
                if d % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            GainLabel::Zero => {
                if (d / 2) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
        };
    }
    dir
}

/// Generates `n` items with gain labels cycling +1, -1, 0. Features cluster
/// at 1.5 × a per-class unit direction plus 0.5 × standard normal noise, so
/// the gate and modality heads can in principle separate the classes.
pub fn generate_items(n: usize, seed: u64) -> Vec<ToyItem> {
    let mut items = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = derive_rng(seed, &[stream::ITEMS, i as u64]);
        let gain = [GainLabel::Positive, GainLabel::Negative, GainLabel::Zero][i % 3];
        let dir = class_direction(gain);
        let features: Vec<f64> = dir
            .iter()
            .map(|d| 1.5 * d + 0.5 * standard_normal(&mut rng))
            .collect();
        let correct = AnswerChoice::ALL[rng.random_range(0..NUM_ANSWERS)];
        let skip = rng.random_range(0..NUM_ANSWERS - 1);
        let mis_index = if skip >= correct.index() {
            skip + 1
        } else {
            skip
        };
        let misleading = AnswerChoice::ALL[mis_index];
        items.push(ToyItem {
            id: i as u64,
            features,
            correct,
            gain,
            misleading,
        });
    }
    items
}

// ---------------------------------------------------------------------------
// Responses
// ---------------------------------------------------------------------------

/// One segment of an interleaved response: free text, or a generated
/// auxiliary view carried as its latent plus the modality that decodes it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    Text {
        content: String,
    },
    VisualAux {
        modality: TaskKind,
        latent: Vec<f64>,
    },
}

impl Segment {
    pub fn text(&self) -> Option<&str> {
        match self {
            Segment::Text { content } => Some(content),
            Segment::VisualAux { .. } => None,
        }
    }
}

/// A sampled (or demonstrated) interleaved response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub segments: Vec<Segment>,
    pub used_aux: bool,
    pub answer: Option<AnswerChoice>,
    /// Log-probability of the discrete decisions under the behavior policy
    /// at sampling time (at its sampling temperature).
    pub log_prob: f64,
}

impl Response {
    /// 1.0 if the response contains an auxiliary segment, else 0.0.
    pub fn aux_indicator(&self) -> f64 {
        if self.used_aux {
            1.0
        } else {
            0.0
        }
    }

    /// Content of the final segment, which must be text in well-formed
    /// responses.
    pub fn final_text(&self) -> Option<&str> {
        self.segments.last().and_then(Segment::text)
    }

    /// Modality of the first auxiliary segment, if any.
    pub fn modality(&self) -> Option<TaskKind> {
        self.segments.iter().find_map(|s| match s {
            Segment::VisualAux { modality, .. } => Some(*modality),
            Segment::Text { .. } => None,
        })
    }

    /// Checks the structural invariants: non-empty, text-final, the aux flag
    /// agrees with the segments, and the stored log-probability is finite.
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(CoreError::InvalidArgument {
                context: "response",
                message: "response has no segments".into(),
            });
        }
        if self.final_text().is_none() {
            return Err(CoreError::InvalidArgument {
                context: "response",
                message: "final segment must be text".into(),
            });
        }
        let has_visual = self
            .segments
            .iter()
            .any(|s| matches!(s, Segment::VisualAux { .. }));
        if has_visual != self.used_aux {
            return Err(CoreError::InvalidArgument {
                context: "response",
                message: format!(
                    "aux flag {} disagrees with segments (visual present: {has_visual})",
                    self.used_aux
                ),
            });
        }
        if !self.log_prob.is_finite() {
            return Err(CoreError::NonFinite {
                context: "response log_prob",
                step: None,
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Environment hints
// ---------------------------------------------------------------------------

/// Strengths of the evidence vector the environment returns: `h_plus` on the
/// correct slot when a helpful view was generated, `h_minus` on the
/// misleading slot for a harmful view, `h_zero` on the correct slot
/// otherwise (weak direct evidence).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HintConfig {
    pub h_plus: f64,
    pub h_zero: f64,
    pub h_minus: f64,
}

impl Default for HintConfig {
    fn default() -> Self {
        HintConfig {
            h_plus: 4.0,
            h_zero: 0.5,
            h_minus: 4.0,
        }
    }
}

impl HintConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [self.h_plus, self.h_zero, self.h_minus];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Config("hint strengths must be finite".into()));
        }
        if !(self.h_plus > 0.0) || !(self.h_minus > 0.0) {
            return Err(CoreError::Config(
                "h_plus and h_minus must be positive".into(),
            ));
        }
        if self.h_zero < 0.0 {
            return Err(CoreError::Config("h_zero must be non-negative".into()));
        }
        if self.h_plus <= self.h_zero {
            return Err(CoreError::Config(format!(
                "h_plus ({}) must exceed h_zero ({})",
                self.h_plus, self.h_zero
            )));
        }
        Ok(())
    }
}

/// Deterministic evidence vector for answering: which answer slot lights up
/// and how strongly, given whether an auxiliary view was generated.
pub fn observe(item: &ToyItem, used_aux: bool, env: &HintConfig) -> [f64; NUM_ANSWERS] {
    let mut hint = [0.0; NUM_ANSWERS];
    if used_aux {
        match item.gain {
            GainLabel::Positive => hint[item.correct.index()] = env.h_plus,
            GainLabel::Negative => hint[item.misleading.index()] = env.h_minus,
            GainLabel::Zero => hint[item.correct.index()] = env.h_zero,
        }
    } else {
        hint[item.correct.index()] = env.h_zero;
    }
    hint
}

// ---------------------------------------------------------------------------
// Policy parameters
// ---------------------------------------------------------------------------

/// The three-headed factored policy.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub gate_net: MlpParams,
    pub modality_net: MlpParams,
    pub answer_net: MlpParams,
}

impl PolicyParams {
    /// All heads randomly initialized (used by gradient-oracle tests).
    pub fn random(seed: u64) -> Self {
        let mut rng = derive_rng(seed, &[stream::POLICY_INIT]);
        PolicyParams {
            gate_net: MlpParams::random(&GATE_LAYERS, &mut rng).expect("fixed sizes"),
            modality_net: MlpParams::random(&MODALITY_LAYERS, &mut rng).expect("fixed sizes"),
            answer_net: MlpParams::random(&ANSWER_LAYERS, &mut rng).expect("fixed sizes"),
        }
    }

    /// Calibrated starting point for the pipeline:
    ///
    /// * gate and modality heads: random hidden layer, zero output layer —
    ///   both decisions start exactly uniform while remaining trainable;
    /// * answer head: hidden units 0..4 each read one hint slot
    ///   (weight 1 on hint j, bias -2.5) and feed logit j with weight 4, so
    ///   `logit_j = 4·tanh(hint_j - 2.5)`; hidden units 4..8 carry random
    ///   feature taps behind zero output weights as spare capacity.
    ///
    /// With default hint strengths this answer head follows a strong hint
    /// with probability ≈ 0.998 and resolves weak direct evidence with
    /// probability ≈ 0.267 — the asymmetry that makes helpful views worth
    /// generating and misleading ones costly.
    pub fn base_init(seed: u64) -> Self {
        let mut rng = derive_rng(seed, &[stream::POLICY_INIT]);
        let mut gate_net = MlpParams::random(&GATE_LAYERS, &mut rng).expect("fixed sizes");
        zero_output_layer(&mut gate_net);
        let mut modality_net = MlpParams::random(&MODALITY_LAYERS, &mut rng).expect("fixed sizes");
        zero_output_layer(&mut modality_net);

        let mut answer_net = MlpParams::zeros(&ANSWER_LAYERS).expect("fixed sizes");
        for j in 0..NUM_ANSWERS {
            answer_net.weight_mut(0).set(j, FEATURE_DIM + j, 1.0);
            answer_net.bias_mut(0)[j] = -2.5;
        }
        for j in NUM_ANSWERS..8 {
            for d in 0..FEATURE_DIM {
                answer_net
                    .weight_mut(0)
                    .set(j, d, 0.3 * standard_normal(&mut rng));
            }
        }
        for k in 0..NUM_ANSWERS {
            answer_net.weight_mut(1).set(k, k, 4.0);
        }

        PolicyParams {
            gate_net,
            modality_net,
            answer_net,
        }
    }

    pub fn validate_shape(&self) -> Result<()> {
        for (net, want, name) in [
            (&self.gate_net, &GATE_LAYERS[..], "gate"),
            (&self.modality_net, &MODALITY_LAYERS[..], "modality"),
            (&self.answer_net, &ANSWER_LAYERS[..], "answer"),
        ] {
            if net.layer_sizes() != want {
                return Err(CoreError::ShapeMismatch {
                    context: "policy_params",
                    expected: format!("{name} layers {want:?}"),
                    actual: format!("{:?}", net.layer_sizes()),
                });
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.gate_net.param_count()
            + self.modality_net.param_count()
            + self.answer_net.param_count()
    }

    /// Gate, then modality, then answer parameters, each in network order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = self.gate_net.flatten();
        flat.extend(self.modality_net.flatten());
        flat.extend(self.answer_net.flatten());
        flat
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(CoreError::ShapeMismatch {
                context: "policy_params",
                expected: format!("{} parameters", self.param_count()),
                actual: format!("{}", flat.len()),
            });
        }
        let (g, rest) = flat.split_at(self.gate_net.param_count());
        let (m, a) = rest.split_at(self.modality_net.param_count());
        self.gate_net.assign_flat(g)?;
        self.modality_net.assign_flat(m)?;
        self.answer_net.assign_flat(a)?;
        Ok(())
    }
}

fn zero_output_layer(net: &mut MlpParams) {
    let last = net.layer_sizes().len() - 2;
    let (rows, cols) = (net.weights()[last].rows(), net.weights()[last].cols());
    for r in 0..rows {
        for c in 0..cols {
            net.weight_mut(last).set(r, c, 0.0);
        }
        net.bias_mut(last)[r] = 0.0;
    }
}

/// Gradients with the same three-headed shape as [`PolicyParams`].
#[derive(Clone, Debug)]
pub struct PolicyGrads {
    pub gate: MlpGrads,
    pub modality: MlpGrads,
    pub answer: MlpGrads,
}

impl PolicyGrads {
    pub fn zeros_like(p: &PolicyParams) -> Self {
        PolicyGrads {
            gate: MlpGrads::zeros_like(&p.gate_net),
            modality: MlpGrads::zeros_like(&p.modality_net),
            answer: MlpGrads::zeros_like(&p.answer_net),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &PolicyGrads, scale: f64) {
        self.gate.add_scaled(&other.gate, scale);
        self.modality.add_scaled(&other.modality, scale);
        self.answer.add_scaled(&other.answer, scale);
    }

    pub fn scale(&mut self, s: f64) {
        self.gate.scale(s);
        self.modality.scale(s);
        self.answer.scale(s);
    }

    /// Same flat layout as [`PolicyParams::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = self.gate.flatten();
        flat.extend(self.modality.flatten());
        flat.extend(self.answer.flatten());
        flat
    }
}

/// Per-head first/second-moment optimizer state for the policy.
#[derive(Clone, Debug)]
pub struct PolicyOptState {
    pub gate: OptState,
    pub modality: OptState,
    pub answer: OptState,
}

impl PolicyOptState {
    pub fn new(p: &PolicyParams) -> Self {
        PolicyOptState {
            gate: OptState::new(p.gate_net.param_count()),
            modality: OptState::new(p.modality_net.param_count()),
            answer: OptState::new(p.answer_net.param_count()),
        }
    }
}

/// One moment-estimation step on all three heads.
pub fn policy_adam_step(
    p: &mut PolicyParams,
    grads: &PolicyGrads,
    opt: &mut PolicyOptState,
    cfg: &AdamConfig,
) -> Result<()> {
    adam_step_mlp(&mut p.gate_net, &grads.gate, &mut opt.gate, cfg)?;
    adam_step_mlp(&mut p.modality_net, &grads.modality, &mut opt.modality, cfg)?;
    adam_step_mlp(&mut p.answer_net, &grads.answer, &mut opt.answer, cfg)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Head evaluation
// ---------------------------------------------------------------------------

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(z)` computed without overflow for large |z|.
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

fn modality_index(task: TaskKind) -> usize {
    match task {
        TaskKind::Depth => 0,
        TaskKind::Seg => 1,
    }
}

fn modality_from_index(i: usize) -> TaskKind {
    if i == 0 {
        TaskKind::Depth
    } else {
        TaskKind::Seg
    }
}

fn answer_input(item: &ToyItem, used_aux: bool, env: &HintConfig) -> Vec<f64> {
    let mut input = item.features.clone();
    input.extend(observe(item, used_aux, env));
    input
}

/// Probability that the gate chooses to generate an auxiliary view (τ = 1).
pub fn aux_probability(p: &PolicyParams, item: &ToyItem) -> Result<f64> {
    let (out, _) = mlp_forward(&p.gate_net, &item.features)?;
    Ok(sigmoid(out[0]))
}

/// Modality distribution over {depth, seg} (τ = 1).
pub fn modality_probs(p: &PolicyParams, item: &ToyItem) -> Result<Vec<f64>> {
    let (logits, _) = mlp_forward(&p.modality_net, &item.features)?;
    softmax_probs(&logits, 1.0)
}

/// Answer distribution given whether an auxiliary view was generated (τ = 1).
pub fn answer_probs(
    p: &PolicyParams,
    item: &ToyItem,
    used_aux: bool,
    env: &HintConfig,
) -> Result<Vec<f64>> {
    let (logits, _) = mlp_forward(&p.answer_net, &answer_input(item, used_aux, env))?;
    softmax_probs(&logits, 1.0)
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Samples one interleaved response: gate flip at `sigmoid(logit/τ)`, then —
/// when an auxiliary view is requested — a modality draw and a real latent
/// generation, then an answer draw from the hint-conditioned head.
///
/// `log_prob` on the result is the sum of the sampled decisions'
/// log-probabilities at temperature `τ`. The latent itself contributes
/// nothing: its generation is a deterministic function of the decisions and
/// the seed.
pub fn policy_sample(
    p: &PolicyParams,
    item: &ToyItem,
    temperature: f64,
    env: &HintConfig,
    flow: Option<&VelocityField>,
    solver: &SolverConfig,
    seed: u64,
) -> Result<Response> {
    sample_with_gate(p, item, temperature, env, flow, solver, seed, None)
}

/// [`policy_sample`] with the gate pinned (used by the curation probes that
/// measure accuracy with and without auxiliary views). The pinned decision
/// contributes no log-probability.
pub fn policy_sample_forced(
    p: &PolicyParams,
    item: &ToyItem,
    force_aux: bool,
    temperature: f64,
    env: &HintConfig,
    flow: Option<&VelocityField>,
    solver: &SolverConfig,
    seed: u64,
) -> Result<Response> {
    sample_with_gate(
        p,
        item,
        temperature,
        env,
        flow,
        solver,
        seed,
        Some(force_aux),
    )
}

#[allow(clippy::too_many_arguments)]
fn sample_with_gate(
    p: &PolicyParams,
    item: &ToyItem,
    temperature: f64,
    env: &HintConfig,
    flow: Option<&VelocityField>,
    solver: &SolverConfig,
    seed: u64,
    forced: Option<bool>,
) -> Result<Response> {
    item.validate()?;
    env.validate()?;
    p.validate_shape()?;
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(CoreError::InvalidArgument {
            context: "policy_sample",
            message: format!("temperature must be positive and finite, got {temperature}"),
        });
    }

    let (gate_logit, _) = mlp_forward(&p.gate_net, &item.features)?;
    let z = gate_logit[0];
    let (used_aux, mut log_prob) = match forced {
        Some(f) => (f, 0.0),
        None => {
            let u: f64 = derive_rng(seed, &[stream::ROLLOUT, 0]).random();
            let o = u < sigmoid(z / temperature);
            let signed = if o { z } else { -z };
            (o, log_sigmoid(signed / temperature))
        }
    };

    let mut segments = Vec::new();
    if used_aux {
        let field = flow.ok_or(CoreError::InvalidArgument {
            context: "policy_sample",
            message: "auxiliary view requested but no velocity field was provided".into(),
        })?;
        let (logits, _) = mlp_forward(&p.modality_net, &item.features)?;
        let (mi, mlp) = softmax_sample(
            &logits,
            temperature,
            &mut derive_rng(seed, &[stream::ROLLOUT, 1]),
        )?;
        log_prob += mlp;
        let modality = modality_from_index(mi);
        let cond = ConditionVector::new(modality, RealVector::new(item.features.clone())?);
        let generated = generate_aux(field, &cond, seed, solver)?;
        segments.push(Segment::Text {
            content: format!(
                "<think>{THINK_GEN_TEXT}</think><gen>{}</gen>",
                modality.label()
            ),
        });
        segments.push(Segment::VisualAux {
            modality,
            latent: generated.latent.to_vec(),
        });
    }

    let (logits, _) = mlp_forward(&p.answer_net, &answer_input(item, used_aux, env))?;
    let (ai, alp) = softmax_sample(
        &logits,
        temperature,
        &mut derive_rng(seed, &[stream::ROLLOUT, 2]),
    )?;
    log_prob += alp;
    let answer = AnswerChoice::from_index(ai)?;
    segments.push(Segment::Text {
        content: format!("<think>{THINK_ANSWER_TEXT}</think><answer>{answer}</answer>"),
    });

    Ok(Response {
        segments,
        used_aux,
        answer: Some(answer),
        log_prob,
    })
}

// ---------------------------------------------------------------------------
// Log-probability and its gradient
// ---------------------------------------------------------------------------

fn require_decisions(response: &Response) -> Result<(AnswerChoice, Option<TaskKind>)> {
    response.validate()?;
    let answer = response.answer.ok_or(CoreError::InvalidArgument {
        context: "policy_logprob",
        message: "response carries no extracted answer".into(),
    })?;
    let modality = if response.used_aux {
        Some(response.modality().ok_or(CoreError::InvalidArgument {
            context: "policy_logprob",
            message: "aux flag set but no visual segment present".into(),
        })?)
    } else {
        None
    };
    Ok((answer, modality))
}

/// Log-probability of the response's discrete decisions under `p` at τ = 1.
/// The latent content of visual segments contributes nothing.
pub fn policy_logprob(
    p: &PolicyParams,
    item: &ToyItem,
    response: &Response,
    env: &HintConfig,
) -> Result<f64> {
    let (answer, modality) = require_decisions(response)?;
    let (gate_logit, _) = mlp_forward(&p.gate_net, &item.features)?;
    let signed = if response.used_aux {
        gate_logit[0]
    } else {
        -gate_logit[0]
    };
    let mut lp = log_sigmoid(signed);
    if let Some(m) = modality {
        let (logits, _) = mlp_forward(&p.modality_net, &item.features)?;
        lp += log_softmax(&logits, 1.0)?[modality_index(m)];
    }
    let (logits, _) = mlp_forward(&p.answer_net, &answer_input(item, response.used_aux, env))?;
    lp += log_softmax(&logits, 1.0)?[answer.index()];
    Ok(lp)
}

/// [`policy_logprob`] together with its gradient with respect to every
/// policy parameter.
pub fn policy_logprob_grad(
    p: &PolicyParams,
    item: &ToyItem,
    response: &Response,
    env: &HintConfig,
) -> Result<(f64, PolicyGrads)> {
    let (answer, modality) = require_decisions(response)?;
    let mut grads = PolicyGrads::zeros_like(p);

    let (gate_logit, gate_cache) = mlp_forward(&p.gate_net, &item.features)?;
    let o = response.aux_indicator();
    let signed = if response.used_aux {
        gate_logit[0]
    } else {
        -gate_logit[0]
    };
    let mut lp = log_sigmoid(signed);
    let (g, _) = mlp_backward(&p.gate_net, &gate_cache, &[o - sigmoid(gate_logit[0])])?;
    grads.gate.add_scaled(&g, 1.0);

    if let Some(m) = modality {
        let (logits, cache) = mlp_forward(&p.modality_net, &item.features)?;
        let log_probs = log_softmax(&logits, 1.0)?;
        lp += log_probs[modality_index(m)];
        let mut out_grad: Vec<f64> = log_probs.iter().map(|l| -l.exp()).collect();
        out_grad[modality_index(m)] += 1.0;
        let (g, _) = mlp_backward(&p.modality_net, &cache, &out_grad)?;
        grads.modality.add_scaled(&g, 1.0);
    }

    let (logits, cache) = mlp_forward(&p.answer_net, &answer_input(item, response.used_aux, env))?;
    let log_probs = log_softmax(&logits, 1.0)?;
    lp += log_probs[answer.index()];
    let mut out_grad: Vec<f64> = log_probs.iter().map(|l| -l.exp()).collect();
    out_grad[answer.index()] += 1.0;
    let (g, _) = mlp_backward(&p.answer_net, &cache, &out_grad)?;
    grads.answer.add_scaled(&g, 1.0);

    Ok((lp, grads))
}

// ---------------------------------------------------------------------------
// Exact divergence by outcome enumeration
// ---------------------------------------------------------------------------

/// Log-probabilities of all 12 outcomes at τ = 1, in the order: four direct
/// answers, then (depth, four answers), then (seg, four answers).
pub fn outcome_logprobs(p: &PolicyParams, item: &ToyItem, env: &HintConfig) -> Result<Vec<f64>> {
    let (gate_logit, _) = mlp_forward(&p.gate_net, &item.features)?;
    let lg1 = log_sigmoid(gate_logit[0]);
    let lg0 = log_sigmoid(-gate_logit[0]);
    let (mlogits, _) = mlp_forward(&p.modality_net, &item.features)?;
    let lmod = log_softmax(&mlogits, 1.0)?;
    let (alogits0, _) = mlp_forward(&p.answer_net, &answer_input(item, false, env))?;
    let lans0 = log_softmax(&alogits0, 1.0)?;
    let (alogits1, _) = mlp_forward(&p.answer_net, &answer_input(item, true, env))?;
    let lans1 = log_softmax(&alogits1, 1.0)?;

    let mut out = Vec::with_capacity(NUM_ANSWERS * 3);
    for a in 0..NUM_ANSWERS {
        out.push(lg0 + lans0[a]);
    }
    for m in 0..2 {
        for a in 0..NUM_ANSWERS {
            out.push(lg1 + lmod[m] + lans1[a]);
        }
    }
    Ok(out)
}

/// Exact KL divergence `KL(p ‖ p_ref)` of the factored response distribution
/// on one item, by enumeration over all 12 outcomes.
pub fn policy_kl(
    p: &PolicyParams,
    p_ref: &PolicyParams,
    item: &ToyItem,
    env: &HintConfig,
) -> Result<f64> {
    p.validate_shape()?;
    p_ref.validate_shape()?;
    let lp = outcome_logprobs(p, item, env)?;
    let lq = outcome_logprobs(p_ref, item, env)?;
    Ok(lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum())
}

/// [`policy_kl`] together with its gradient with respect to `p`'s
/// parameters (`p_ref` is treated as constant).
///
/// Uses `∇KL = Σ_ω P_ω (ln P_ω − ln Q_ω) ∇ ln P_ω`; the `Σ_ω ∇P_ω = 0`
/// identity removes the remaining term.
pub fn policy_kl_grad(
    p: &PolicyParams,
    p_ref: &PolicyParams,
    item: &ToyItem,
    env: &HintConfig,
) -> Result<(f64, PolicyGrads)> {
    p.validate_shape()?;
    p_ref.validate_shape()?;
    let lp = outcome_logprobs(p, item, env)?;
    let lq = outcome_logprobs(p_ref, item, env)?;
    let weights: Vec<f64> = lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).collect();
    let kl = weights.iter().sum();

    let mut grads = PolicyGrads::zeros_like(p);

    // Gate head: outcomes 0..4 chose no aux, 4..12 chose aux.
    let (gate_logit, gate_cache) = mlp_forward(&p.gate_net, &item.features)?;
    let w_aux: f64 = weights[NUM_ANSWERS..].iter().sum();
    let w_all: f64 = w_aux + weights[..NUM_ANSWERS].iter().sum::<f64>();
    let gate_out = w_aux - sigmoid(gate_logit[0]) * w_all;
    let (g, _) = mlp_backward(&p.gate_net, &gate_cache, &[gate_out])?;
    grads.gate.add_scaled(&g, 1.0);

    // Modality head: only aux outcomes contribute.
    let (mlogits, mcache) = mlp_forward(&p.modality_net, &item.features)?;
    let mprobs = softmax_probs(&mlogits, 1.0)?;
    let mut mod_out = vec![0.0; 2];
    for m in 0..2 {
        for a in 0..NUM_ANSWERS {
            let w = weights[NUM_ANSWERS + m * NUM_ANSWERS + a];
            for (j, out) in mod_out.iter_mut().enumerate() {
                let indicator = if j == m { 1.0 } else { 0.0 };
                *out += w * (indicator - mprobs[j]);
            }
        }
    }
    let (g, _) = mlp_backward(&p.modality_net, &mcache, &mod_out)?;
    grads.modality.add_scaled(&g, 1.0);

    // Answer head: one backward pass per hint condition.
    for used_aux in [false, true] {
        let (alogits, acache) = mlp_forward(&p.answer_net, &answer_input(item, used_aux, env))?;
        let aprobs = softmax_probs(&alogits, 1.0)?;
        let mut ans_out = vec![0.0; NUM_ANSWERS];
        for a in 0..NUM_ANSWERS {
            let w = if used_aux {
                weights[NUM_ANSWERS + a] + weights[2 * NUM_ANSWERS + a]
            } else {
                weights[a]
            };
            for (j, out) in ans_out.iter_mut().enumerate() {
                let indicator = if j == a { 1.0 } else { 0.0 };
                *out += w * (indicator - aprobs[j]);
            }
        }
        let (g, _) = mlp_backward(&p.answer_net, &acache, &ans_out)?;
        grads.answer.add_scaled(&g, 1.0);
    }

    Ok((kl, grads))
}

// ---------------------------------------------------------------------------
// Demonstrations and supervised training
// ---------------------------------------------------------------------------

/// An item paired with the gain label a curator attached to it.
///
/// The attached label steers what is *taught* downstream — which items get
/// auxiliary-view demonstrations, and the sign of the exploration reward —
/// while the item's own `gain` keeps driving the environment's hint
/// behavior: measuring an item does not change how its auxiliary view acts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuratedItem {
    pub item: ToyItem,
    pub curated_gain: GainLabel,
}

impl CuratedItem {
    /// Wraps an item taking its generative gain label at face value, for
    /// pipelines that skip measurement.
    pub fn trusted(item: ToyItem) -> Self {
        let curated_gain = item.gain;
        CuratedItem { item, curated_gain }
    }

    /// [`CuratedItem::trusted`] over a whole set.
    pub fn trust_all(items: &[ToyItem]) -> Vec<CuratedItem> {
        items.iter().cloned().map(CuratedItem::trusted).collect()
    }
}

/// One supervised demonstration: an item paired with the response the policy
/// should imitate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Demo {
    pub item: ToyItem,
    pub response: Response,
}

/// Modality a demonstration uses for an item: a fixed sign rule on the
/// first feature, so the target is a deterministic, learnable function of
/// the modality head's own input and every copy of an item agrees.
pub fn demo_modality(item: &ToyItem) -> TaskKind {
    if item.features[0] >= 0.0 {
        TaskKind::Depth
    } else {
        TaskKind::Seg
    }
}

/// Builds `n_per_item` demonstrations per curated item: items labeled +1
/// demonstrate generating an auxiliary view (modality per [`demo_modality`])
/// before the correct answer; other items demonstrate answering directly.
/// Demo visual segments carry an empty latent — their content is never
/// supervised.
pub fn build_demos(items: &[CuratedItem], n_per_item: usize) -> Result<Vec<Demo>> {
    let mut demos = Vec::with_capacity(items.len() * n_per_item);
    for curated in items {
        let item = &curated.item;
        item.validate()?;
        for _ in 0..n_per_item {
            let used_aux = curated.curated_gain == GainLabel::Positive;
            let mut segments = Vec::new();
            if used_aux {
                let modality = demo_modality(item);
                segments.push(Segment::Text {
                    content: format!(
                        "<think>{THINK_GEN_TEXT}</think><gen>{}</gen>",
                        modality.label()
                    ),
                });
                segments.push(Segment::VisualAux {
                    modality,
                    latent: Vec::new(),
                });
            }
            segments.push(Segment::Text {
                content: format!(
                    "<think>{THINK_ANSWER_TEXT}</think><answer>{}</answer>",
                    item.correct
                ),
            });
            demos.push(Demo {
                item: item.clone(),
                response: Response {
                    segments,
                    used_aux,
                    answer: Some(item.correct),
                    log_prob: 0.0,
                },
            });
        }
    }
    Ok(demos)
}

/// Supervised warm-start settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftConfig {
    /// Full-batch optimizer steps.
    pub steps: usize,
    /// Peak learning rate for the moment-estimation optimizer.
    pub lr: f64,
    /// Demonstrations built per curated item.
    pub n_per_item: usize,
}

impl Default for SftConfig {
    fn default() -> Self {
        SftConfig {
            steps: 400,
            lr: 0.01,
            n_per_item: 1,
        }
    }
}

impl SftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(CoreError::Config("sft steps must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(CoreError::Config(format!(
                "sft lr must be positive and finite, got {}",
                self.lr
            )));
        }
        if self.n_per_item == 0 {
            return Err(CoreError::Config(
                "sft n_per_item must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Mean cross-entropy of the demos' discrete decisions under `p` (τ = 1),
/// with its gradient. No-aux demos are masked out of the modality head, and
/// visual latents never enter: only gate, modality, and answer decisions are
/// supervised.
pub fn sft_loss_grad(
    p: &PolicyParams,
    demos: &[Demo],
    env: &HintConfig,
) -> Result<(f64, PolicyGrads)> {
    if demos.is_empty() {
        return Err(CoreError::InvalidArgument {
            context: "sft",
            message: "demo set must be non-empty".into(),
        });
    }
    let scale = 1.0 / demos.len() as f64;
    let mut loss = 0.0;
    let mut grads = PolicyGrads::zeros_like(p);

    for demo in demos {
        let (answer, modality) = require_decisions(&demo.response)?;

        let (gate_logit, gate_cache) = mlp_forward(&p.gate_net, &demo.item.features)?;
        let o = demo.response.aux_indicator();
        let signed = if demo.response.used_aux {
            gate_logit[0]
        } else {
            -gate_logit[0]
        };
        loss -= scale * log_sigmoid(signed);
        let (g, _) = mlp_backward(
            &p.gate_net,
            &gate_cache,
            &[scale * (sigmoid(gate_logit[0]) - o)],
        )?;
        grads.gate.add_scaled(&g, 1.0);

        if let Some(m) = modality {
            let (logits, cache) = mlp_forward(&p.modality_net, &demo.item.features)?;
            let log_probs = log_softmax(&logits, 1.0)?;
            loss -= scale * log_probs[modality_index(m)];
            let mut out_grad: Vec<f64> = log_probs.iter().map(|l| scale * l.exp()).collect();
            out_grad[modality_index(m)] -= scale;
            let (g, _) = mlp_backward(&p.modality_net, &cache, &out_grad)?;
            grads.modality.add_scaled(&g, 1.0);
        }

        let input = answer_input(&demo.item, demo.response.used_aux, env);
        let (logits, cache) = mlp_forward(&p.answer_net, &input)?;
        let log_probs = log_softmax(&logits, 1.0)?;
        loss -= scale * log_probs[answer.index()];
        let mut out_grad: Vec<f64> = log_probs.iter().map(|l| scale * l.exp()).collect();
        out_grad[answer.index()] -= scale;
        let (g, _) = mlp_backward(&p.answer_net, &cache, &out_grad)?;
        grads.answer.add_scaled(&g, 1.0);
    }

    if !loss.is_finite() {
        return Err(CoreError::NonFinite {
            context: "sft loss",
            step: None,
        });
    }
    Ok((loss, grads))
}

/// One full-batch supervised step; returns the pre-step loss.
pub fn sft_step(
    p: &mut PolicyParams,
    demos: &[Demo],
    env: &HintConfig,
    opt: &mut PolicyOptState,
    cfg: &AdamConfig,
) -> Result<f64> {
    let (loss, grads) = sft_loss_grad(p, demos, env)?;
    policy_adam_step(p, &grads, opt, cfg)?;
    Ok(loss)
}

/// Runs `cfg.steps` full-batch supervised steps and returns the loss curve.
/// Deterministic: no sampling is involved.
pub fn sft_train(
    p: &mut PolicyParams,
    demos: &[Demo],
    env: &HintConfig,
    cfg: &SftConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    env.validate()?;
    let mut opt = PolicyOptState::new(p);
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let loss = sft_step(p, demos, env, &mut opt, &adam)?;
        if !loss.is_finite() {
            return Err(CoreError::NonFinite {
                context: "sft loss",
                step: Some(step),
            });
        }
        curve.push(loss);
    }
    Ok(curve)
}

/// Derives the rollout seed for `(base_seed, item id, rollout index)`;
/// shared by the optimizer, curation probes, and evaluation so that
/// schedules and thread counts cannot change any draw.
pub fn rollout_seed(base_seed: u64, item_id: u64, rollout_index: u64) -> u64 {
    derive_seed(base_seed, &[stream::ROLLOUT, item_id, rollout_index])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::SolverMethod;
    use crate::numerics::central_difference;

    fn test_env() -> HintConfig {
        HintConfig::default()
    }

    fn item_with(gain: GainLabel, correct: AnswerChoice, misleading: AnswerChoice) -> ToyItem {
        ToyItem {
            id: 7,
            features: vec![0.3, -0.2, 0.8, -1.1, 0.05, 0.6, -0.4, 1.2],
            correct,
            gain,
            misleading,
        }
    }

    fn tiny_field() -> VelocityField {
        VelocityField::new(
            FEATURE_DIM,
            ConditionVector::encoded_dim(FEATURE_DIM),
            &[4],
            &mut derive_rng(99, &[stream::FIELD_INIT]),
        )
        .unwrap()
    }

    fn fast_solver() -> SolverConfig {
        SolverConfig {
            steps: 4,
            method: SolverMethod::Euler,
        }
    }

    #[test]
    fn items_serialize_with_integer_gain_and_letter_answers() {
        let item = item_with(GainLabel::Negative, AnswerChoice::B, AnswerChoice::D);
        let json = serde_json::to_string(&item).unwrap();
        assert!(json.contains("\"gain\":-1"), "{json}");
        assert!(json.contains("\"correct\":\"B\""), "{json}");
        assert!(json.contains("\"misleading\":\"D\""), "{json}");
        let back: ToyItem = serde_json::from_str(&json).unwrap();
        assert_eq!(back, item);
    }

    #[test]
    fn generated_items_are_valid_and_cycle_gain_labels() {
        let items = generate_items(30, 42);
        assert_eq!(items.len(), 30);
        for (i, item) in items.iter().enumerate() {
            item.validate().unwrap();
            assert_eq!(item.id, i as u64);
            let want = [GainLabel::Positive, GainLabel::Negative, GainLabel::Zero][i % 3];
            assert_eq!(item.gain, want);
            assert_ne!(item.misleading, item.correct);
        }
        assert_eq!(generate_items(30, 42), items);
        assert_ne!(generate_items(30, 43), items);
    }

    #[test]
    fn generated_features_cluster_by_class() {
        // Projection onto the own-class direction is 1.5 + 0.5·N(0,1); onto
        // another class's direction it is 0 + 0.5·N(0,1). Class means over
        // 100 items are tight enough to separate cleanly.
        let items = generate_items(300, 1);
        for gain in GainLabel::ALL {
            let own = class_direction(gain);
            let class: Vec<&ToyItem> = items.iter().filter(|i| i.gain == gain).collect();
            let mean_own: f64 = class
                .iter()
                .map(|i| i.features.iter().zip(&own).map(|(f, d)| f * d).sum::<f64>())
                .sum::<f64>()
                / class.len() as f64;
            assert!(mean_own > 1.2, "{gain:?}: own-direction mean {mean_own}");
            for other in GainLabel::ALL.into_iter().filter(|g| *g != gain) {
                let dir = class_direction(other);
                let mean_other: f64 = class
                    .iter()
                    .map(|i| i.features.iter().zip(&dir).map(|(f, d)| f * d).sum::<f64>())
                    .sum::<f64>()
                    / class.len() as f64;
                assert!(
                    mean_other < 0.5,
                    "{gain:?} onto {other:?}: mean {mean_other}"
                );
            }
        }
    }

    #[test]
    fn observe_follows_the_branch_table() {
        let env = test_env();
        let pos = item_with(GainLabel::Positive, AnswerChoice::C, AnswerChoice::A);
        assert_eq!(observe(&pos, true, &env), [0.0, 0.0, 4.0, 0.0]);
        assert_eq!(observe(&pos, false, &env), [0.0, 0.0, 0.5, 0.0]);

        let neg = item_with(GainLabel::Negative, AnswerChoice::C, AnswerChoice::A);
        assert_eq!(observe(&neg, true, &env), [4.0, 0.0, 0.0, 0.0]);
        assert_eq!(observe(&neg, false, &env), [0.0, 0.0, 0.5, 0.0]);

        let zero = item_with(GainLabel::Zero, AnswerChoice::C, AnswerChoice::A);
        assert_eq!(observe(&zero, true, &env), observe(&zero, false, &env));
    }

    #[test]
    fn hint_config_validation() {
        assert!(test_env().validate().is_ok());
        let bad = HintConfig {
            h_plus: 0.5,
            h_zero: 0.5,
            h_minus: 4.0,
        };
        assert!(bad.validate().is_err());
        let negative = HintConfig {
            h_zero: -0.1,
            ..test_env()
        };
        assert!(negative.validate().is_err());
    }

    #[test]
    fn base_policy_gate_and_modality_start_uniform() {
        let p = PolicyParams::base_init(42);
        p.validate_shape().unwrap();
        for item in generate_items(6, 3) {
            assert_eq!(aux_probability(&p, &item).unwrap(), 0.5);
            let m = modality_probs(&p, &item).unwrap();
            assert!((m[0] - 0.5).abs() < 1e-15 && (m[1] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn base_policy_answer_head_matches_closed_form() {
        let p = PolicyParams::base_init(42);
        let env = test_env();
        let item = item_with(GainLabel::Positive, AnswerChoice::B, AnswerChoice::D);

        // Hand recomputation: logit_k = 4·tanh(hint_k − 2.5).
        let probs_for = |hint: [f64; 4]| {
            let logits: Vec<f64> = hint.iter().map(|h| 4.0 * (h - 2.5).tanh()).collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            logits.iter().map(|l| l.exp() / z).collect::<Vec<f64>>()
        };

        let with_aux = answer_probs(&p, &item, true, &env).unwrap();
        let by_hand = probs_for(observe(&item, true, &env));
        for (a, b) in with_aux.iter().zip(&by_hand) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!((with_aux[1] - 0.998451).abs() < 1e-5, "{}", with_aux[1]);

        let raw = answer_probs(&p, &item, false, &env).unwrap();
        assert!((raw[1] - 0.267320).abs() < 1e-5, "{}", raw[1]);
    }

    #[test]
    fn strong_hints_make_gain_labels_realizable() {
        // Helpful views must make the answer nearly certain, and followed
        // misleading views must sink accuracy — otherwise the downstream
        // gain partition has nothing to detect.
        let p = PolicyParams::base_init(42);
        let env = test_env();
        let pos = item_with(GainLabel::Positive, AnswerChoice::A, AnswerChoice::C);
        assert!(answer_probs(&p, &pos, true, &env).unwrap()[0] > 0.9);
        let neg = item_with(GainLabel::Negative, AnswerChoice::A, AnswerChoice::C);
        assert!(answer_probs(&p, &neg, true, &env).unwrap()[0] < 0.3);
    }

    #[test]
    fn sampling_is_deterministic_and_consistent() {
        let p = PolicyParams::random(5);
        let env = test_env();
        let field = tiny_field();
        let item = item_with(GainLabel::Positive, AnswerChoice::A, AnswerChoice::B);
        let sample =
            |seed| policy_sample(&p, &item, 1.0, &env, Some(&field), &fast_solver(), seed).unwrap();
        let a = sample(11);
        assert_eq!(a, sample(11));
        a.validate().unwrap();
        let mut saw_difference = false;
        for seed in 12..24 {
            let b = sample(seed);
            b.validate().unwrap();
            assert_eq!(b.answer.is_some(), true);
            if b != a {
                saw_difference = true;
            }
        }
        assert!(
            saw_difference,
            "twelve fresh seeds all repeated one response"
        );
    }

    #[test]
    fn stored_log_prob_matches_recomputation_at_unit_temperature() {
        let p = PolicyParams::random(6);
        let env = test_env();
        let field = tiny_field();
        for (i, item) in generate_items(9, 8).iter().enumerate() {
            let r = policy_sample(
                &p,
                item,
                1.0,
                &env,
                Some(&field),
                &fast_solver(),
                100 + i as u64,
            )
            .unwrap();
            let lp = policy_logprob(&p, item, &r, &env).unwrap();
            assert!(
                (lp - r.log_prob).abs() < 1e-12,
                "stored {} recomputed {lp}",
                r.log_prob
            );
        }
    }

    #[test]
    fn log_prob_matches_hand_computed_products_on_uniform_heads() {
        // All-zero nets: gate is a fair coin, modality a fair coin, answers
        // uniform over four. The two possible log-probabilities are
        // ln(1/2 · 1/4) and ln(1/2 · 1/2 · 1/4).
        let p = PolicyParams {
            gate_net: MlpParams::zeros(&GATE_LAYERS).unwrap(),
            modality_net: MlpParams::zeros(&MODALITY_LAYERS).unwrap(),
            answer_net: MlpParams::zeros(&ANSWER_LAYERS).unwrap(),
        };
        let env = test_env();
        let field = tiny_field();
        let item = item_with(GainLabel::Zero, AnswerChoice::A, AnswerChoice::B);
        let direct = (0.5f64 * 0.25).ln();
        let with_aux = (0.5f64 * 0.5 * 0.25).ln();
        for seed in 0..16 {
            let r =
                policy_sample(&p, &item, 1.0, &env, Some(&field), &fast_solver(), seed).unwrap();
            let want = if r.used_aux { with_aux } else { direct };
            assert!((r.log_prob - want).abs() < 1e-12);
        }
    }

    #[test]
    fn near_deterministic_policy_has_near_zero_log_prob_on_its_mode() {
        let mut p = PolicyParams {
            gate_net: MlpParams::zeros(&GATE_LAYERS).unwrap(),
            modality_net: MlpParams::zeros(&MODALITY_LAYERS).unwrap(),
            answer_net: MlpParams::zeros(&ANSWER_LAYERS).unwrap(),
        };
        p.gate_net.bias_mut(1)[0] = 40.0; // always generate
        p.modality_net.bias_mut(1)[0] = 40.0; // always depth
        p.answer_net.bias_mut(1)[2] = 40.0; // always C
        let env = test_env();
        let field = tiny_field();
        let item = item_with(GainLabel::Zero, AnswerChoice::C, AnswerChoice::B);
        let r = policy_sample(&p, &item, 1.0, &env, Some(&field), &fast_solver(), 3).unwrap();
        assert!(r.used_aux);
        assert_eq!(r.modality(), Some(TaskKind::Depth));
        assert_eq!(r.answer, Some(AnswerChoice::C));
        assert!(r.log_prob.abs() < 1e-8, "log_prob {}", r.log_prob);
    }

    #[test]
    fn sampling_without_field_fails_only_when_aux_chosen() {
        let mut p = PolicyParams {
            gate_net: MlpParams::zeros(&GATE_LAYERS).unwrap(),
            modality_net: MlpParams::zeros(&MODALITY_LAYERS).unwrap(),
            answer_net: MlpParams::zeros(&ANSWER_LAYERS).unwrap(),
        };
        let env = test_env();
        let item = item_with(GainLabel::Positive, AnswerChoice::A, AnswerChoice::B);

        p.gate_net.bias_mut(1)[0] = -40.0; // never generate
        let r = policy_sample(&p, &item, 1.0, &env, None, &fast_solver(), 1).unwrap();
        assert!(!r.used_aux);
        assert_eq!(r.segments.len(), 1);

        p.gate_net.bias_mut(1)[0] = 40.0; // always generate
        let err = policy_sample(&p, &item, 1.0, &env, None, &fast_solver(), 1).unwrap_err();
        assert!(matches!(err, CoreError::InvalidArgument { .. }), "{err}");
    }

    #[test]
    fn forced_gate_pins_the_decision_and_masks_its_log_prob() {
        let p = PolicyParams::random(9);
        let env = test_env();
        let field = tiny_field();
        let item = item_with(GainLabel::Negative, AnswerChoice::D, AnswerChoice::A);
        let raw =
            policy_sample_forced(&p, &item, false, 1.0, &env, None, &fast_solver(), 4).unwrap();
        assert!(!raw.used_aux);
        let aux = policy_sample_forced(&p, &item, true, 1.0, &env, Some(&field), &fast_solver(), 4)
            .unwrap();
        assert!(aux.used_aux);
        // The pinned gate contributes nothing: the no-aux response's entire
        // log-probability is its answer draw.
        let (alogits, _) = mlp_forward(&p.answer_net, &answer_input(&item, false, &env)).unwrap();
        let lans = log_softmax(&alogits, 1.0).unwrap();
        assert!((raw.log_prob - lans[raw.answer.unwrap().index()]).abs() < 1e-12);
    }

    #[test]
    fn outcome_probabilities_sum_to_one() {
        let env = test_env();
        for seed in [1, 2, 3, 4, 5] {
            let p = PolicyParams::random(seed);
            for item in generate_items(3, seed) {
                let total: f64 = outcome_logprobs(&p, &item, &env)
                    .unwrap()
                    .iter()
                    .map(|l| l.exp())
                    .sum();
                assert!((total - 1.0).abs() < 1e-10, "sum {total}");
            }
        }
    }

    #[test]
    fn malformed_responses_are_rejected() {
        let p = PolicyParams::random(1);
        let env = test_env();
        let item = item_with(GainLabel::Zero, AnswerChoice::A, AnswerChoice::B);

        let no_answer = Response {
            segments: vec![Segment::Text {
                content: "<think>x</think>".into(),
            }],
            used_aux: false,
            answer: None,
            log_prob: 0.0,
        };
        assert!(policy_logprob(&p, &item, &no_answer, &env).is_err());

        let flag_mismatch = Response {
            segments: vec![Segment::Text {
                content: "<think>x</think><answer>A</answer>".into(),
            }],
            used_aux: true,
            answer: Some(AnswerChoice::A),
            log_prob: 0.0,
        };
        assert!(policy_logprob(&p, &item, &flag_mismatch, &env).is_err());

        let visual_final = Response {
            segments: vec![Segment::VisualAux {
                modality: TaskKind::Depth,
                latent: vec![0.0],
            }],
            used_aux: true,
            answer: Some(AnswerChoice::A),
            log_prob: 0.0,
        };
        assert!(policy_logprob(&p, &item, &visual_final, &env).is_err());
    }

    #[test]
    fn log_prob_gradient_matches_central_differences() {
        let env = test_env();
        let field = tiny_field();
        for seed in 0..6 {
            let p = PolicyParams::random(40 + seed);
            let item = &generate_items(3, seed)[(seed % 3) as usize];
            let r = policy_sample(&p, item, 1.0, &env, Some(&field), &fast_solver(), seed).unwrap();
            let (_, analytic) = policy_logprob_grad(&p, item, &r, &env).unwrap();
            let mut scratch = p.clone();
            let numeric = central_difference(
                |x| {
                    scratch.assign_flat(x)?;
                    policy_logprob(&scratch, item, &r, &env)
                },
                &p.flatten(),
                1e-5,
            )
            .unwrap();
            let rel = crate::numerics::max_relative_error(&analytic.flatten(), &numeric);
            assert!(rel < 1e-6, "seed {seed}: rel err {rel}");
        }
    }

    #[test]
    fn kl_is_zero_at_identity_and_non_negative_elsewhere() {
        let env = test_env();
        let item = item_with(GainLabel::Positive, AnswerChoice::A, AnswerChoice::B);
        let p = PolicyParams::random(3);
        assert_eq!(policy_kl(&p, &p, &item, &env).unwrap(), 0.0);
        for seed in 0..20 {
            let a = PolicyParams::random(seed);
            let b = PolicyParams::random(seed + 1000);
            let kl = policy_kl(&a, &b, &item, &env).unwrap();
            assert!(kl >= 0.0, "seed {seed}: negative divergence {kl}");
            assert!(kl.is_finite());
        }
    }

    #[test]
    fn kl_reduces_to_the_bernoulli_closed_form_when_only_the_gate_differs() {
        // Gate probabilities 0.5 vs 0.9 with identical modality and answer
        // heads: 0.5·ln(0.5/0.9) + 0.5·ln(0.5/0.1).
        let zeros = PolicyParams {
            gate_net: MlpParams::zeros(&GATE_LAYERS).unwrap(),
            modality_net: MlpParams::zeros(&MODALITY_LAYERS).unwrap(),
            answer_net: MlpParams::zeros(&ANSWER_LAYERS).unwrap(),
        };
        let mut shifted = zeros.clone();
        shifted.gate_net.bias_mut(1)[0] = (9.0f64).ln(); // sigmoid → 0.9
        let env = test_env();
        let item = item_with(GainLabel::Zero, AnswerChoice::B, AnswerChoice::C);
        let kl = policy_kl(&zeros, &shifted, &item, &env).unwrap();
        assert!((kl - 0.5108256237659907).abs() < 1e-12, "divergence {kl}");
    }

    #[test]
    fn kl_gradient_matches_central_differences() {
        let env = test_env();
        for seed in 0..4 {
            let p = PolicyParams::random(70 + seed);
            let q = PolicyParams::random(170 + seed);
            let item = &generate_items(3, 9 + seed)[(seed % 3) as usize];
            let (kl, analytic) = policy_kl_grad(&p, &q, item, &env).unwrap();
            assert!((kl - policy_kl(&p, &q, item, &env).unwrap()).abs() < 1e-14);
            let mut scratch = p.clone();
            let numeric = central_difference(
                |x| {
                    scratch.assign_flat(x)?;
                    policy_kl(&scratch, &q, item, &env)
                },
                &p.flatten(),
                1e-5,
            )
            .unwrap();
            let rel = crate::numerics::max_relative_error(&analytic.flatten(), &numeric);
            assert!(rel < 1e-5, "seed {seed}: rel err {rel}");
        }
    }

    #[test]
    fn demos_follow_the_gain_rules() {
        let items = generate_items(9, 21);
        let demos = build_demos(&CuratedItem::trust_all(&items), 2).unwrap();
        assert_eq!(demos.len(), 18);
        for demo in &demos {
            demo.response.validate().unwrap();
            assert_eq!(demo.response.answer, Some(demo.item.correct));
            assert_eq!(
                demo.response.used_aux,
                demo.item.gain == GainLabel::Positive
            );
            let final_text = demo.response.final_text().unwrap();
            assert!(final_text.contains(&format!("<answer>{}</answer>", demo.item.correct)));
        }
        // Aux demos follow the deterministic modality rule, and copies of
        // one item never disagree.
        for demo in demos.iter().filter(|d| d.response.used_aux) {
            assert_eq!(demo.response.modality(), Some(demo_modality(&demo.item)));
        }
    }

    #[test]
    fn sft_gradient_matches_central_differences() {
        let env = test_env();
        let items = generate_items(6, 33);
        let demos = build_demos(&CuratedItem::trust_all(&items), 1).unwrap();
        for seed in 0..4 {
            let p = PolicyParams::random(200 + seed);
            let (_, analytic) = sft_loss_grad(&p, &demos, &env).unwrap();
            let mut scratch = p.clone();
            let numeric = central_difference(
                |x| {
                    scratch.assign_flat(x)?;
                    sft_loss_grad(&scratch, &demos, &env).map(|(l, _)| l)
                },
                &p.flatten(),
                1e-5,
            )
            .unwrap();
            let rel = crate::numerics::max_relative_error(&analytic.flatten(), &numeric);
            assert!(rel < 1e-6, "seed {seed}: rel err {rel}");
        }
    }

    #[test]
    fn no_aux_demos_leave_the_modality_head_untouched() {
        let env = test_env();
        let items: Vec<ToyItem> = generate_items(9, 5)
            .into_iter()
            .filter(|i| i.gain != GainLabel::Positive)
            .collect();
        assert!(!items.is_empty());
        let demos = build_demos(&CuratedItem::trust_all(&items), 2).unwrap();
        let p = PolicyParams::random(8);
        let (_, grads) = sft_loss_grad(&p, &demos, &env).unwrap();
        assert!(grads.modality.flatten().iter().all(|g| *g == 0.0));
        assert!(grads.gate.flatten().iter().any(|g| *g != 0.0));
        assert!(grads.answer.flatten().iter().any(|g| *g != 0.0));
    }

    #[test]
    fn supervised_training_drives_the_loss_down() {
        let env = test_env();
        let items = generate_items(24, 77);
        let demos = build_demos(&CuratedItem::trust_all(&items), 2).unwrap();
        let mut p = PolicyParams::base_init(42);
        let curve = sft_train(
            &mut p,
            &demos,
            &env,
            &SftConfig {
                steps: 1500,
                lr: 0.01,
                n_per_item: 2,
            },
        )
        .unwrap();
        assert_eq!(curve.len(), 1500);
        let last = *curve.last().unwrap();
        assert!(
            last < 0.1,
            "final demo cross-entropy {last} (start {})",
            curve[0]
        );
        // After the warm start the gate separates the classes.
        for item in &items {
            let p_aux = aux_probability(&p, item).unwrap();
            if item.gain == GainLabel::Positive {
                assert!(p_aux > 0.8, "item {}: p_aux {p_aux}", item.id);
            } else {
                assert!(p_aux < 0.2, "item {}: p_aux {p_aux}", item.id);
            }
        }
    }

    #[test]
    fn loss_decreases_monotonically_once_demos_match_the_argmax() {
        // Warm the policy until its argmax agrees with every demo decision,
        // then check the remaining descent is strictly monotone (up to
        // plateau noise) until it crosses 0.1.
        let env = test_env();
        let items = generate_items(12, 101);
        let demos = build_demos(&CuratedItem::trust_all(&items), 2).unwrap();
        let mut p = PolicyParams::base_init(42);
        sft_train(
            &mut p,
            &demos,
            &env,
            &SftConfig {
                steps: 250,
                lr: 0.01,
                n_per_item: 2,
            },
        )
        .unwrap();
        for demo in &demos {
            let p_aux = aux_probability(&p, &demo.item).unwrap();
            assert_eq!(p_aux > 0.5, demo.response.used_aux, "gate argmax off");
            let ans = answer_probs(&p, &demo.item, demo.response.used_aux, &env).unwrap();
            let argmax = ans
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax, demo.item.correct.index(), "answer argmax off");
        }
        let curve = sft_train(
            &mut p,
            &demos,
            &env,
            &SftConfig {
                steps: 1500,
                lr: 0.01,
                n_per_item: 2,
            },
        )
        .unwrap();
        let crossing = curve
            .iter()
            .position(|l| *l < 0.1)
            .expect("loss never crossed 0.1");
        for w in curve[..=crossing].windows(2) {
            assert!(
                w[1] < w[0] + 1e-9,
                "loss rose from {} to {} above the 0.1 line",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn empty_demo_set_is_rejected() {
        let env = test_env();
        let p = PolicyParams::random(1);
        assert!(sft_loss_grad(&p, &[], &env).is_err());
    }

    #[test]
    fn response_round_trips_through_serde() {
        let p = PolicyParams::random(15);
        let env = test_env();
        let field = tiny_field();
        let item = item_with(GainLabel::Positive, AnswerChoice::B, AnswerChoice::C);
        for seed in 0..8 {
            let r =
                policy_sample(&p, &item, 1.0, &env, Some(&field), &fast_solver(), seed).unwrap();
            let json = serde_json::to_string(&r).unwrap();
            let back: Response = serde_json::from_str(&json).unwrap();
            assert_eq!(back, r);
        }
    }

    #[test]
    fn rollout_seeds_are_schedule_independent() {
        let a = rollout_seed(42, 3, 1);
        assert_eq!(a, rollout_seed(42, 3, 1));
        assert_ne!(a, rollout_seed(42, 3, 2));
        assert_ne!(a, rollout_seed(42, 4, 1));
        assert_ne!(a, rollout_seed(43, 3, 1));
    }
}
