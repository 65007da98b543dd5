//! Reasoning-then-generation orchestration: build a model request from the
//! current trajectories, parse the returned plan, merge it and generate.

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::{GenerationInput, GeneratorClient};
use crate::overlay::{compose_vlm_image, OverlayStyle};
use crate::trajectory::{
    format_track_text, parse_track_text, resample_points, Point2, Track, TrackKind,
    TrajectoryError, TrajectorySet,
};
use crate::vlm::{extract_json_object, ClientError, VlmClient, VlmRequest};
use crate::volume::{rasterize, SigmaConfig};

pub const INSTRUCTION_V1: &str = include_str!("../prompts/reason_v1.txt");

pub const REFINED_CONFIDENCE: f64 = 1.0;
pub const PROPOSED_CONFIDENCE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ReasonError {
    #[error("session has no usable image: {0}")]
    MissingImage(String),
    #[error("invalid trajectory set: {0}")]
    InvalidSet(String),
    #[error("unusable model reply: {message}")]
    Protocol { message: String, raw: String },
    #[error("track `{0}` is proposed as secondary but names a user track")]
    IdConflict(String),
    #[error("max_rounds must be at least 1")]
    NoRounds,
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("rendering failed: {0}")]
    Render(String),
}

impl ReasonError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ReasonError::Client(e) if e.is_retryable())
    }

    fn protocol(message: impl Into<String>, raw: &str) -> Self {
        ReasonError::Protocol {
            message: message.into(),
            raw: raw.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonedPlan {
    pub narrative_prompt: String,
    pub refined_tracks: Vec<Track>,
    pub secondary_tracks: Vec<Track>,
    pub done: bool,
}

/// What a merge changed, for auditing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    /// User tracks replaced by their refinement, with the largest point shift in pixels.
    pub refined: Vec<(String, f64)>,
    pub appended_refined: Vec<String>,
    pub replaced_secondary: Vec<String>,
    pub added_secondary: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub plan: ReasonedPlan,
    pub merge: MergeReport,
    /// Reference to the generated video; `None` when the plan was final.
    pub artifact: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub round: usize,
    pub image: RgbImage,
    pub current_set: TrajectorySet,
    pub history: Vec<RoundRecord>,
    /// PNG frames of the latest generation.
    pub last_video: Option<Vec<Vec<u8>>>,
}

impl SessionState {
    pub fn new(image: RgbImage, set: TrajectorySet) -> Result<Self, ReasonError> {
        let state = SessionState {
            round: 0,
            image,
            current_set: set,
            history: Vec::new(),
            last_video: None,
        };
        state.check()?;
        Ok(state)
    }

    fn check(&self) -> Result<(), ReasonError> {
        let (w, h) = self.image.dimensions();
        if w == 0 || h == 0 {
            return Err(ReasonError::MissingImage("image is empty".into()));
        }
        if (w, h) != (self.current_set.width, self.current_set.height) {
            return Err(ReasonError::MissingImage(format!(
                "image is {w}x{h} but the trajectory set is {}x{}",
                self.current_set.width, self.current_set.height
            )));
        }
        self.current_set
            .validate()
            .map_err(|e| ReasonError::InvalidSet(e.to_string()))
    }

    pub fn is_done(&self) -> bool {
        self.history.last().is_some_and(|r| r.plan.done)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ReasonConfig {
    pub sigma: SigmaConfig,
    pub style: OverlayStyle,
}

/// Coordinate text for a set: a header with frame count and rate, then one
/// line per track.
pub fn coordinate_text(set: &TrajectorySet) -> String {
    format!(
        "frames: {}, fps: {}\n{}",
        set.length,
        set.fps,
        format_track_text(&set.tracks)
    )
}

pub fn build_request(state: &SessionState, cfg: &ReasonConfig) -> Result<VlmRequest, ReasonError> {
    state.check()?;
    let overlay_png = compose_vlm_image(&state.image, &state.current_set, &cfg.style)
        .map_err(|e| ReasonError::Render(e.to_string()))?;
    Ok(VlmRequest {
        instruction: INSTRUCTION_V1.to_string(),
        overlay_png,
        coordinate_text: coordinate_text(&state.current_set),
        user_prompt: state.current_set.prompt.clone(),
        prior_video: (state.round > 0).then(|| state.last_video.clone().unwrap_or_default()),
        attachments: Vec::new(),
    })
}

#[derive(Deserialize)]
struct WirePlan {
    #[serde(default)]
    narrative_prompt: String,
    #[serde(default)]
    refined_tracks: Vec<WireTrack>,
    #[serde(default)]
    secondary_tracks: Vec<WireTrack>,
    #[serde(default)]
    done: bool,
}

#[derive(Deserialize)]
struct WireTrack {
    id: String,
    #[serde(default)]
    kind: Option<TrackKind>,
    points: Vec<[f64; 2]>,
}

fn finish_track(
    id: String,
    kind: TrackKind,
    points: &[Point2],
    length: usize,
    raw: &str,
) -> Result<Track, ReasonError> {
    let confidence = if kind.is_user() {
        REFINED_CONFIDENCE
    } else {
        PROPOSED_CONFIDENCE
    };
    let points = resample_points(points, length)
        .map_err(|e| ReasonError::protocol(format!("track `{id}`: {e}"), raw))?;
    let track = Track::new(id, kind, confidence, points);
    track
        .validate(&format!("track `{}`", track.id))
        .map_err(|e| ReasonError::protocol(e.to_string(), raw))?;
    Ok(track)
}

fn secondary_kind(kind: Option<TrackKind>) -> TrackKind {
    match kind {
        Some(TrackKind::Static) => TrackKind::Static,
        _ => TrackKind::Secondary,
    }
}

fn finalize(
    narrative: String,
    refined: Vec<Track>,
    secondary: Vec<Track>,
    done: bool,
    raw: &str,
) -> Result<ReasonedPlan, ReasonError> {
    if done && !secondary.is_empty() {
        return Err(ReasonError::protocol(
            "plan is marked done but proposes secondary tracks",
            raw,
        ));
    }
    Ok(ReasonedPlan {
        narrative_prompt: narrative,
        refined_tracks: refined,
        done: done || secondary.is_empty(),
        secondary_tracks: secondary,
    })
}

fn parse_json_plan(json: &str, length: usize, raw: &str) -> Result<ReasonedPlan, ReasonError> {
    let wire: WirePlan =
        serde_json::from_str(json).map_err(|e| ReasonError::protocol(e.to_string(), raw))?;
    let to_points = |pts: &[[f64; 2]]| {
        pts.iter()
            .map(|&[x, y]| Point2::new(x, y))
            .collect::<Vec<_>>()
    };
    let refined = wire
        .refined_tracks
        .into_iter()
        .map(|t| {
            finish_track(
                t.id,
                TrackKind::RefinedUser,
                &to_points(&t.points),
                length,
                raw,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let secondary = wire
        .secondary_tracks
        .into_iter()
        .map(|t| {
            finish_track(
                t.id,
                secondary_kind(t.kind),
                &to_points(&t.points),
                length,
                raw,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    finalize(wire.narrative_prompt, refined, secondary, wire.done, raw)
}

fn text_field<'a>(raw: &'a str, names: &[&str]) -> Option<&'a str> {
    raw.lines().find_map(|line| {
        let (key, value) = line.split_once(':')?;
        let key = key
            .trim()
            .trim_start_matches(['-', '*'])
            .trim()
            .to_ascii_lowercase();
        names.contains(&key.as_str()).then(|| value.trim())
    })
}

fn parse_text_plan(raw: &str, length: usize) -> Result<ReasonedPlan, ReasonError> {
    // A text reply may legitimately carry no coordinates, e.g. a final plan.
    let tracks = match parse_track_text(raw) {
        Ok(t) => t,
        Err(TrajectoryError::EmptyInput(_)) => Vec::new(),
        Err(e) => return Err(ReasonError::protocol(e.to_string(), raw)),
    };
    let narrative = text_field(raw, &["narrative_prompt", "narrative", "prompt"])
        .ok_or_else(|| ReasonError::protocol("reply has no narrative prompt", raw))?
        .trim_matches('"')
        .to_string();
    let done = text_field(raw, &["done"]).is_some_and(|v| v.eq_ignore_ascii_case("true"));
    let mut refined = Vec::new();
    let mut secondary = Vec::new();
    for t in tracks {
        if t.kind.is_user() {
            refined.push(finish_track(
                t.id,
                TrackKind::RefinedUser,
                &t.points,
                length,
                raw,
            )?);
        } else {
            secondary.push(finish_track(
                t.id,
                secondary_kind(Some(t.kind)),
                &t.points,
                length,
                raw,
            )?);
        }
    }
    finalize(narrative, refined, secondary, done, raw)
}

/// Parses a model reply. A JSON object is preferred; otherwise the reply is
/// read as labelled coordinate text with a `narrative_prompt:` line. Tracks
/// are resampled to `length` frames and confidences are set by role.
pub fn parse_response(raw: &str, length: usize) -> Result<ReasonedPlan, ReasonError> {
    if length == 0 {
        return Err(ReasonError::InvalidSet("session length is zero".into()));
    }
    match extract_json_object(raw) {
        Some(json) if json.contains("\"narrative_prompt\"") || json.contains("_tracks\"") => {
            parse_json_plan(json, length, raw)
        }
        _ => parse_text_plan(raw, length),
    }
}

/// Applies a plan to a set. Refined tracks replace the user track with the
/// same id; secondary tracks replace an earlier proposal with the same id or
/// are appended. A final plan changes nothing.
pub fn merge(
    set: &TrajectorySet,
    plan: &ReasonedPlan,
) -> Result<(TrajectorySet, MergeReport), ReasonError> {
    let mut out = set.clone();
    let mut report = MergeReport::default();
    if plan.done {
        return Ok((out, report));
    }
    let (w, h) = (f64::from(set.width), f64::from(set.height));
    for refined in &plan.refined_tracks {
        let mut track = refined.clone();
        track.kind = TrackKind::RefinedUser;
        track.confidence = REFINED_CONFIDENCE;
        match out
            .tracks
            .iter_mut()
            .find(|t| t.id == track.id && t.kind.is_user())
        {
            Some(slot) => {
                let shift = slot
                    .points
                    .iter()
                    .zip(&track.points)
                    .map(|(a, b)| ((a.x - b.x) * w).hypot((a.y - b.y) * h))
                    .fold(0.0, f64::max);
                report.refined.push((track.id.clone(), shift));
                *slot = track;
            }
            None => {
                report.warnings.push(format!(
                    "refined track `{}` matches no user track; appended",
                    track.id
                ));
                report.appended_refined.push(track.id.clone());
                out.tracks.push(track);
            }
        }
    }
    for proposed in &plan.secondary_tracks {
        let mut track = proposed.clone();
        track.confidence = PROPOSED_CONFIDENCE;
        if track.kind.is_user() {
            track.kind = TrackKind::Secondary;
        }
        match out.tracks.iter_mut().find(|t| t.id == track.id) {
            Some(slot) if slot.kind.is_user() => return Err(ReasonError::IdConflict(track.id)),
            Some(slot) => {
                report.replaced_secondary.push(track.id.clone());
                *slot = track;
            }
            None => {
                report.added_secondary.push(track.id.clone());
                out.tracks.push(track);
            }
        }
    }
    out.validate()
        .map_err(|e| ReasonError::InvalidSet(e.to_string()))?;
    Ok((out, report))
}

/// A failed step or loop. `state` is the last consistent session, with all
/// history up to the failure.
#[derive(Debug, Error)]
#[error("round {}: {source}", state.round)]
pub struct StepError {
    pub state: Box<SessionState>,
    #[source]
    pub source: ReasonError,
}

impl StepError {
    pub fn is_retryable(&self) -> bool {
        self.source.is_retryable()
    }
}

fn advance(
    state: &SessionState,
    vlm: &dyn VlmClient,
    gen: &dyn GeneratorClient,
    cfg: &ReasonConfig,
) -> Result<SessionState, ReasonError> {
    let request = build_request(state, cfg)?;
    let raw = vlm.complete(&request)?;
    let plan = parse_response(&raw, state.current_set.length)?;
    let mut next = state.clone();
    next.round += 1;
    if plan.done {
        next.history.push(RoundRecord {
            plan,
            merge: MergeReport::default(),
            artifact: None,
        });
        return Ok(next);
    }
    let (set, report) = merge(&state.current_set, &plan)?;
    let volume = rasterize(&set, set.height as usize, set.width as usize, &cfg.sigma)
        .map_err(|e| ReasonError::Render(e.to_string()))?;
    let video = gen.generate(&GenerationInput {
        image: &state.image,
        set: &set,
        volume: &volume,
        prompt: &plan.narrative_prompt,
    })?;
    next.last_video = Some(video.png_frames()?);
    next.current_set = set;
    next.history.push(RoundRecord {
        plan,
        merge: report,
        artifact: Some(video.reference),
    });
    Ok(next)
}

/// One reasoning round followed by one generation.
pub fn step(
    state: SessionState,
    vlm: &dyn VlmClient,
    gen: &dyn GeneratorClient,
    cfg: &ReasonConfig,
) -> Result<SessionState, StepError> {
    advance(&state, vlm, gen, cfg).map_err(|source| StepError {
        state: Box::new(state),
        source,
    })
}

/// Steps until the model declares the plan final or `max_rounds` rounds ran.
pub fn run_loop(
    mut state: SessionState,
    vlm: &dyn VlmClient,
    gen: &dyn GeneratorClient,
    max_rounds: usize,
    cfg: &ReasonConfig,
) -> Result<SessionState, StepError> {
    if max_rounds == 0 {
        return Err(StepError {
            state: Box::new(state),
            source: ReasonError::NoRounds,
        });
    }
    for _ in 0..max_rounds {
        state = step(state, vlm, gen, cfg)?;
        if state.is_done() {
            break;
        }
    }
    Ok(state)
}
