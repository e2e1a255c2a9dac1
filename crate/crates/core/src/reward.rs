//! Composite response reward: answer correctness + interleaved-format
//! validity + a threshold-gated exploration term.
//!
//! The total reward of a response is `r_a + r_f + r_e`:
//!
//! * `r_a ∈ {0, 1}` — the first `<answer>…</answer>` span in the final text
//!   segment, trimmed and uppercased, equals the item's answer key;
//! * `r_f ∈ {0, 1}` — every non-final text segment is a single well-nested
//!   `<think>…</think><gen>depth|seg</gen>` block immediately followed by an
//!   auxiliary segment of the declared modality, and the final segment is a
//!   single `<think>…</think><answer>…</answer>` block;
//! * `r_e ∈ {−0.2, 0, +0.2}` — responses that generated an auxiliary view
//!   earn +0.2 on gain +1 items while group-wide usage is at most σ, and
//!   −0.2 on gain −1 items once usage has reached σ. Boundary (gain 0)
//!   items and responses without auxiliary views never receive either.
//!
//! σ is compared against the *count* of auxiliary-using responses in the
//! group, so with the default group size 8 the default threshold 4 means
//! "half the group".

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::cognition::{GainLabel, Response, Segment, ToyItem};
use crate::error::{CoreError, Result};
use crate::flow::TaskKind;

/// Default group-usage threshold for the exploration term.
pub const DEFAULT_SIGMA: u32 = 4;
/// Magnitude of the exploration bonus and penalty.
pub const EXPLORATION_BONUS: f64 = 0.2;

/// One response's scored components; `total` is exactly their sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_a: f64,
    pub r_f: f64,
    pub r_e: f64,
    pub total: f64,
}

/// Group-level facts the exploration term needs about one response.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExplorationContext {
    /// The item's gain label.
    pub gain: GainLabel,
    /// Usage threshold, compared against `aux_count`.
    pub sigma: u32,
    /// Number of responses in the group.
    pub group_size: u32,
    /// How many responses in the group used an auxiliary view.
    pub aux_count: u32,
    /// Whether the response under scoring used one.
    pub used_aux: bool,
}

impl ExplorationContext {
    pub fn validate(&self) -> Result<()> {
        if self.sigma > self.group_size {
            return Err(CoreError::Config(format!(
                "exploration threshold sigma ({}) exceeds the group size ({})",
                self.sigma, self.group_size
            )));
        }
        if self.aux_count > self.group_size {
            return Err(CoreError::InvalidArgument {
                context: "exploration_context",
                message: format!(
                    "aux_count {} exceeds group size {}",
                    self.aux_count, self.group_size
                ),
            });
        }
        Ok(())
    }

    /// Fraction of the group that used auxiliary views.
    pub fn usage_fraction(&self) -> f64 {
        f64::from(self.aux_count) / f64::from(self.group_size)
    }
}

/// Compiled format patterns; `thinking_generation` admits intermediate text
/// segments and captures the declared modality, `thinking_answer` admits
/// final segments. Both are total: any string either matches or scores 0.
pub struct FormatPatterns {
    pub thinking_generation: Regex,
    pub thinking_answer: Regex,
}

impl FormatPatterns {
    fn compiled() -> &'static FormatPatterns {
        static PATTERNS: OnceLock<FormatPatterns> = OnceLock::new();
        PATTERNS.get_or_init(|| FormatPatterns {
            thinking_generation: Regex::new(r"\A<think>[^<>]*</think><gen>(depth|seg)</gen>\z")
                .expect("fixed pattern"),
            thinking_answer: Regex::new(r"\A<think>[^<>]*</think><answer>[^<>]*</answer>\z")
                .expect("fixed pattern"),
        })
    }

    /// The modality a generation segment declares, if the segment is
    /// well-formed.
    pub fn declared_modality(&self, text: &str) -> Option<TaskKind> {
        let captures = self.thinking_generation.captures(text)?;
        match captures.get(1).map(|m| m.as_str()) {
            Some("depth") => Some(TaskKind::Depth),
            Some("seg") => Some(TaskKind::Seg),
            _ => None,
        }
    }
}

/// Extracts the first `<answer>…</answer>` span from the final text segment,
/// trimmed and uppercased. Absent or malformed spans yield `None`.
pub fn extract_answer(response: &Response) -> Option<String> {
    static ANSWER_SPAN: OnceLock<Regex> = OnceLock::new();
    let re = ANSWER_SPAN
        .get_or_init(|| Regex::new(r"<answer>([^<>]*)</answer>").expect("fixed pattern"));
    let text = response.final_text()?;
    let captures = re.captures(text)?;
    Some(captures[1].trim().to_ascii_uppercase())
}

/// 1.0 iff the extracted answer equals the item's answer key.
pub fn answer_reward(response: &Response, item: &ToyItem) -> f64 {
    match extract_answer(response) {
        Some(ans) if ans == item.correct.letter() => 1.0,
        _ => 0.0,
    }
}

/// 1.0 iff the whole segment sequence is well-formed: each intermediate text
/// segment is a single thinking+generation block whose declared modality
/// matches the auxiliary segment that must immediately follow it, and the
/// final segment is a single thinking+answer block.
pub fn format_reward(response: &Response) -> f64 {
    let patterns = FormatPatterns::compiled();
    let segments = &response.segments;
    let Some((Segment::Text { content: last }, body)) = segments.split_last() else {
        return 0.0;
    };
    if !patterns.thinking_answer.is_match(last) {
        return 0.0;
    }
    let mut expect_visual: Option<TaskKind> = None;
    for segment in body {
        match segment {
            Segment::Text { content } => {
                if expect_visual.is_some() {
                    return 0.0; // declared a generation but none followed
                }
                match patterns.declared_modality(content) {
                    Some(m) => expect_visual = Some(m),
                    None => return 0.0,
                }
            }
            Segment::VisualAux { modality, .. } => {
                if expect_visual != Some(*modality) {
                    return 0.0; // undeclared or mismatched modality
                }
                expect_visual = None;
            }
        }
    }
    if expect_visual.is_some() {
        return 0.0; // trailing declaration before the answer block
    }
    1.0
}

/// The threshold-gated exploration term. Using an auxiliary view earns +0.2
/// on gain +1 items while group usage is still at most σ, and −0.2 on
/// gain −1 items once group usage has reached σ; everything else scores 0.
pub fn exploration_reward(ctx: &ExplorationContext) -> Result<f64> {
    ctx.validate()?;
    if !ctx.used_aux {
        return Ok(0.0);
    }
    Ok(match ctx.gain {
        GainLabel::Positive if ctx.aux_count <= ctx.sigma => EXPLORATION_BONUS,
        GainLabel::Negative if ctx.aux_count >= ctx.sigma => -EXPLORATION_BONUS,
        _ => 0.0,
    })
}

/// Scores one response: answer + format + exploration, with the components
/// kept separate for metrics.
pub fn cpr_total(
    response: &Response,
    item: &ToyItem,
    ctx: &ExplorationContext,
) -> Result<RewardBreakdown> {
    let r_a = answer_reward(response, item);
    let r_f = format_reward(response);
    let r_e = exploration_reward(ctx)?;
    Ok(RewardBreakdown {
        r_a,
        r_f,
        r_e,
        total: r_a + r_f + r_e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cognition::{
        build_demos, generate_items, policy_sample, AnswerChoice, CuratedItem, HintConfig,
        PolicyParams,
    };
    use crate::flow::{ConditionVector, SolverConfig, SolverMethod, VelocityField};
    use crate::rng::{derive_rng, stream};

    fn text_response(final_text: &str) -> Response {
        Response {
            segments: vec![Segment::Text {
                content: final_text.into(),
            }],
            used_aux: false,
            answer: None,
            log_prob: 0.0,
        }
    }

    fn item_with_correct(correct: AnswerChoice) -> ToyItem {
        ToyItem {
            id: 0,
            features: vec![0.0; 8],
            correct,
            gain: GainLabel::Zero,
            misleading: if correct == AnswerChoice::A {
                AnswerChoice::B
            } else {
                AnswerChoice::A
            },
        }
    }

    fn aux_then_answer(modality: TaskKind, declared: &str, answer: &str) -> Response {
        Response {
            segments: vec![
                Segment::Text {
                    content: format!("<think>look closer</think><gen>{declared}</gen>"),
                },
                Segment::VisualAux {
                    modality,
                    latent: vec![0.1, -0.2],
                },
                Segment::Text {
                    content: format!("<think>done</think><answer>{answer}</answer>"),
                },
            ],
            used_aux: true,
            answer: None,
            log_prob: 0.0,
        }
    }

    #[test]
    fn answer_reward_normalizes_whitespace_and_case() {
        let item = item_with_correct(AnswerChoice::B);
        let canonical = text_response("<think>x</think><answer>B</answer>");
        assert_eq!(answer_reward(&canonical, &item), 1.0);
        let sloppy = text_response("<answer> b </answer>");
        assert_eq!(answer_reward(&sloppy, &item), 1.0);
        let wrong = text_response("<think>x</think><answer>C</answer>");
        assert_eq!(answer_reward(&wrong, &item), 0.0);
        let missing = text_response("<think>no tag here</think>");
        assert_eq!(answer_reward(&missing, &item), 0.0);
    }

    #[test]
    fn answer_reward_takes_the_first_span_in_the_final_segment() {
        let item = item_with_correct(AnswerChoice::A);
        let two_spans = text_response("<answer>A</answer><answer>D</answer>");
        assert_eq!(answer_reward(&two_spans, &item), 1.0);
        // Spans in earlier segments are invisible to the checker.
        let early_span = Response {
            segments: vec![
                Segment::Text {
                    content: "<answer>A</answer>".into(),
                },
                Segment::Text {
                    content: "<think>x</think>".into(),
                },
            ],
            used_aux: false,
            answer: None,
            log_prob: 0.0,
        };
        assert_eq!(answer_reward(&early_span, &item), 0.0);
    }

    #[test]
    fn canonical_interleaved_form_scores_full_format() {
        let aux = aux_then_answer(TaskKind::Depth, "depth", "A");
        assert_eq!(format_reward(&aux), 1.0);
        let direct = text_response("<think>y</think><answer>A</answer>");
        assert_eq!(format_reward(&direct), 1.0);
    }

    #[test]
    fn format_rejects_missing_answer_block() {
        assert_eq!(format_reward(&text_response("<think>y</think>")), 0.0);
        assert_eq!(format_reward(&text_response("no tags at all")), 0.0);
        // Extra text around the final block breaks the exact match.
        assert_eq!(
            format_reward(&text_response("preamble<think>y</think><answer>A</answer>")),
            0.0
        );
    }

    #[test]
    fn format_rejects_modality_disagreement() {
        let mismatched = aux_then_answer(TaskKind::Seg, "depth", "A");
        assert_eq!(format_reward(&mismatched), 0.0);
        let agreeing = aux_then_answer(TaskKind::Seg, "seg", "A");
        assert_eq!(format_reward(&agreeing), 1.0);
    }

    #[test]
    fn format_rejects_structural_violations() {
        // Visual segment with no declaring text segment before it.
        let undeclared = Response {
            segments: vec![
                Segment::VisualAux {
                    modality: TaskKind::Depth,
                    latent: vec![],
                },
                Segment::Text {
                    content: "<think>d</think><answer>A</answer>".into(),
                },
            ],
            used_aux: true,
            answer: None,
            log_prob: 0.0,
        };
        assert_eq!(format_reward(&undeclared), 0.0);

        // Declaration followed by another text segment instead of a visual.
        let dangling = Response {
            segments: vec![
                Segment::Text {
                    content: "<think>a</think><gen>depth</gen>".into(),
                },
                Segment::Text {
                    content: "<think>d</think><answer>A</answer>".into(),
                },
            ],
            used_aux: false,
            answer: None,
            log_prob: 0.0,
        };
        assert_eq!(format_reward(&dangling), 0.0);

        // Nested tag inside the thinking block.
        let nested = text_response("<think>a<gen>b</gen></think><answer>A</answer>");
        assert_eq!(format_reward(&nested), 0.0);

        // Unknown modality name in the generation tag.
        let unknown = Response {
            segments: vec![
                Segment::Text {
                    content: "<think>a</think><gen>normals</gen>".into(),
                },
                Segment::VisualAux {
                    modality: TaskKind::Depth,
                    latent: vec![],
                },
                Segment::Text {
                    content: "<think>d</think><answer>A</answer>".into(),
                },
            ],
            used_aux: true,
            answer: None,
            log_prob: 0.0,
        };
        assert_eq!(format_reward(&unknown), 0.0);
    }

    fn ctx(gain: GainLabel, aux_count: u32, used_aux: bool) -> ExplorationContext {
        ExplorationContext {
            gain,
            sigma: 4,
            group_size: 8,
            aux_count,
            used_aux,
        }
    }

    #[test]
    fn exploration_branch_values() {
        // Helpful item, usage still scarce, this response generated: bonus.
        assert_eq!(
            exploration_reward(&ctx(GainLabel::Positive, 3, true)).unwrap(),
            0.2
        );
        // Harmful item, usage already common, this response generated: penalty.
        assert_eq!(
            exploration_reward(&ctx(GainLabel::Negative, 5, true)).unwrap(),
            -0.2
        );
        // No auxiliary view: always zero.
        assert_eq!(
            exploration_reward(&ctx(GainLabel::Positive, 3, false)).unwrap(),
            0.0
        );
    }

    #[test]
    fn exploration_twelve_case_truth_table() {
        // gain × (aux_count vs σ) × used_aux, with σ = 4: below (3), at (4),
        // above (5) — the boundary count satisfies both ≤ and ≥.
        let table: [(GainLabel, u32, bool, f64); 12] = [
            (GainLabel::Positive, 3, true, 0.2),
            (GainLabel::Positive, 4, true, 0.2),
            (GainLabel::Positive, 5, true, 0.0),
            (GainLabel::Positive, 3, false, 0.0),
            (GainLabel::Negative, 3, true, 0.0),
            (GainLabel::Negative, 4, true, -0.2),
            (GainLabel::Negative, 5, true, -0.2),
            (GainLabel::Negative, 5, false, 0.0),
            (GainLabel::Zero, 3, true, 0.0),
            (GainLabel::Zero, 4, true, 0.0),
            (GainLabel::Zero, 5, true, 0.0),
            (GainLabel::Zero, 4, false, 0.0),
        ];
        for (gain, aux_count, used_aux, want) in table {
            let got = exploration_reward(&ctx(gain, aux_count, used_aux)).unwrap();
            assert_eq!(
                got, want,
                "gain {gain:?}, aux_count {aux_count}, used_aux {used_aux}"
            );
        }
    }

    #[test]
    fn exploration_rejects_bad_contexts() {
        let mut c = ctx(GainLabel::Positive, 3, true);
        c.sigma = 9;
        assert!(exploration_reward(&c).is_err());
        let mut c = ctx(GainLabel::Positive, 3, true);
        c.aux_count = 9;
        assert!(exploration_reward(&c).is_err());
    }

    #[test]
    fn totals_are_exact_sums_and_bounded() {
        let item = item_with_correct(AnswerChoice::A);
        let mut best_item = item.clone();
        best_item.gain = GainLabel::Positive;
        let aux = aux_then_answer(TaskKind::Depth, "depth", "A");
        let best = cpr_total(&aux, &best_item, &ctx(GainLabel::Positive, 2, true)).unwrap();
        assert_eq!(
            best,
            RewardBreakdown {
                r_a: 1.0,
                r_f: 1.0,
                r_e: 0.2,
                total: 2.2
            }
        );

        let dud = text_response("wrong everything");
        let zero = cpr_total(&dud, &item, &ctx(GainLabel::Zero, 4, false)).unwrap();
        assert_eq!(zero.total, 0.0);

        let worst = cpr_total(&dud, &item, &ctx(GainLabel::Negative, 8, true)).unwrap();
        assert_eq!(worst.total, -0.2);

        for aux_count in 0..=8 {
            for gain in GainLabel::ALL {
                for used in [false, true] {
                    let b = cpr_total(&aux, &item, &ctx(gain, aux_count, used)).unwrap();
                    assert_eq!(b.total, b.r_a + b.r_f + b.r_e);
                    assert!((-0.2..=2.2).contains(&b.total));
                }
            }
        }
    }

    #[test]
    fn sampled_responses_always_satisfy_the_format_checker() {
        let p = PolicyParams::random(3);
        let env = HintConfig::default();
        let field = VelocityField::new(
            8,
            ConditionVector::encoded_dim(8),
            &[4],
            &mut derive_rng(1, &[stream::FIELD_INIT]),
        )
        .unwrap();
        let solver = SolverConfig {
            steps: 3,
            method: SolverMethod::Euler,
        };
        for (i, item) in generate_items(12, 9).iter().enumerate() {
            let r = policy_sample(&p, item, 1.0, &env, Some(&field), &solver, i as u64).unwrap();
            assert_eq!(format_reward(&r), 1.0, "sampled response {i} misformatted");
        }
    }

    #[test]
    fn demos_score_full_answer_reward() {
        let items = generate_items(15, 4);
        for demo in build_demos(&CuratedItem::trust_all(&items), 2).unwrap() {
            assert_eq!(answer_reward(&demo.response, &demo.item), 1.0);
            assert_eq!(format_reward(&demo.response), 1.0);
        }
    }
}
