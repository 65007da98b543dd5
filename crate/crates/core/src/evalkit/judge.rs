use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::preference::{check_consistent, Judge, Metric, Strength, Verdict, Winner};
use super::EvalError;
use crate::overlay::encode_png;
use crate::vlm::{extract_json_object, Attachment, VlmRequest};

const COMMON: &str = include_str!("../../prompts/judge_v1_common.txt");
const SCORE: &str = include_str!("../../prompts/judge_v1_score.txt");

/// Criterion text for one metric.
pub fn criterion_text(metric: Metric) -> &'static str {
    match metric {
        Metric::ObjectProperty => include_str!("../../prompts/judge_v1_object_property.txt"),
        Metric::Interaction => include_str!("../../prompts/judge_v1_interaction.txt"),
        Metric::Overall => include_str!("../../prompts/judge_v1_overall.txt"),
        Metric::Physical => include_str!("../../prompts/judge_v1_physical.txt"),
        Metric::Photo => include_str!("../../prompts/judge_v1_photo.txt"),
        Metric::Semantic => include_str!("../../prompts/judge_v1_semantic.txt"),
    }
}

pub fn pairwise_instruction(metric: Metric) -> String {
    format!("{COMMON}{}", criterion_text(metric))
}

pub fn score_instruction(metric: Metric) -> String {
    format!("{SCORE}{}", criterion_text(metric))
}

/// Presentation order of a pair. When `swapped`, video B is shown first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairOrder {
    pub seed: u64,
    pub swapped: bool,
}

impl PairOrder {
    pub fn from_seed(seed: u64) -> Self {
        PairOrder {
            seed,
            swapped: ChaCha8Rng::seed_from_u64(seed).random::<bool>(),
        }
    }

    /// Maps a winner as presented (A = shown first) back to the canonical
    /// A/B labelling. The mapping is its own inverse.
    pub fn unwind(&self, presented: Winner) -> Winner {
        if self.swapped {
            presented.swapped()
        } else {
            presented
        }
    }

    pub fn present(&self, canonical: Winner) -> Winner {
        self.unwind(canonical)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgeRequest {
    pub metric: Metric,
    pub order: PairOrder,
    pub request: VlmRequest,
}

fn png_frames(frames: &[RgbImage]) -> Result<Vec<Vec<u8>>, EvalError> {
    frames
        .iter()
        .map(|f| encode_png(f).map_err(|e| EvalError::Encode(e.to_string())))
        .collect()
}

fn non_empty(img: &RgbImage, what: &str) -> Result<(), EvalError> {
    if img.width() == 0 || img.height() == 0 {
        return Err(EvalError::MissingArtifact(what.to_string()));
    }
    Ok(())
}

/// Assembles a pairwise judging request. Which video is shown first is drawn
/// from `seed` and recorded in the returned order.
pub fn build_judge_request(
    context_frame: &RgbImage,
    trajectory_overlay: &RgbImage,
    prompt: &str,
    video_a: &[RgbImage],
    video_b: &[RgbImage],
    metric: Metric,
    seed: u64,
) -> Result<JudgeRequest, EvalError> {
    non_empty(context_frame, "context frame")?;
    non_empty(trajectory_overlay, "trajectory overlay")?;
    if video_a.is_empty() {
        return Err(EvalError::MissingArtifact("video A".into()));
    }
    if video_b.is_empty() {
        return Err(EvalError::MissingArtifact("video B".into()));
    }
    let order = PairOrder::from_seed(seed);
    let (first, second) = if order.swapped {
        (video_b, video_a)
    } else {
        (video_a, video_b)
    };
    let request = VlmRequest {
        instruction: pairwise_instruction(metric),
        overlay_png: png_frames(std::slice::from_ref(trajectory_overlay))?.remove(0),
        coordinate_text: String::new(),
        user_prompt: Some(prompt.to_string()),
        prior_video: None,
        attachments: vec![
            Attachment {
                label: "context_frame".into(),
                frames_png: png_frames(std::slice::from_ref(context_frame))?,
            },
            Attachment {
                label: "first_video".into(),
                frames_png: png_frames(first)?,
            },
            Attachment {
                label: "second_video".into(),
                frames_png: png_frames(second)?,
            },
        ],
    };
    Ok(JudgeRequest {
        metric,
        order,
        request,
    })
}

#[derive(Deserialize)]
struct PairReply {
    winner: String,
    #[serde(default)]
    strength: Option<String>,
}

/// Reads `{"winner": "first"|"second"|"tie", "strength": ...}` and returns a
/// verdict in canonical A/B terms.
pub fn parse_judge_reply(
    raw: &str,
    request: &JudgeRequest,
    pair_id: &str,
    category: &str,
) -> Result<Verdict, EvalError> {
    let protocol = |msg: String| EvalError::JudgeReply {
        message: msg,
        raw: raw.to_string(),
    };
    let json =
        extract_json_object(raw).ok_or_else(|| protocol("no JSON object in reply".into()))?;
    let reply: PairReply = serde_json::from_str(json).map_err(|e| protocol(e.to_string()))?;
    let presented = match reply.winner.trim().to_ascii_lowercase().as_str() {
        "first" | "a" => Winner::A,
        "second" | "b" => Winner::B,
        "tie" => Winner::Tie,
        other => return Err(protocol(format!("unknown winner `{other}`"))),
    };
    let strength = match reply
        .strength
        .as_deref()
        .map(|s| s.trim().to_ascii_lowercase())
        .as_deref()
    {
        Some("slight") => Strength::Slight,
        Some("moderate") => Strength::Moderate,
        Some("strong") => Strength::Strong,
        Some("none") | Some("") | None => Strength::None,
        Some(other) => return Err(protocol(format!("unknown strength `{other}`"))),
    };
    check_consistent(presented, strength).map_err(|e| protocol(e.to_string()))?;
    Ok(Verdict::new(
        pair_id,
        request.metric,
        request.order.unwind(presented),
        strength,
        Judge::Vlm,
        category,
    )
    .expect("checked above"))
}

#[derive(Deserialize)]
struct ScoreReply {
    score: f64,
}

/// Scalar judge score in `[0, 1]` from `{"score": x}`.
pub fn parse_judge_score(raw: &str) -> Result<f64, EvalError> {
    let protocol = |msg: String| EvalError::JudgeReply {
        message: msg,
        raw: raw.to_string(),
    };
    let json =
        extract_json_object(raw).ok_or_else(|| protocol("no JSON object in reply".into()))?;
    let reply: ScoreReply = serde_json::from_str(json).map_err(|e| protocol(e.to_string()))?;
    if !(0.0..=1.0).contains(&reply.score) {
        return Err(protocol(format!("score {} outside [0, 1]", reply.score)));
    }
    Ok(reply.score)
}

/// Mean score per metric, ordered by metric.
pub fn mean_scores(scores: &[(Metric, f64)]) -> Vec<(Metric, f64)> {
    let mut sums: std::collections::BTreeMap<Metric, (f64, usize)> = Default::default();
    for &(m, s) in scores {
        let e = sums.entry(m).or_default();
        e.0 += s;
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(m, (s, n))| (m, s / n as f64))
        .collect()
}
