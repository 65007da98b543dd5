//! Pairwise preference study sessions and the verdict store.

use std::collections::HashMap;
use std::fs;
use std::path::{Path as FsPath, PathBuf};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::Response;
use axum::Json;
use motionplan_core::evalkit::{
    append_verdict, check_consistent, criterion_text, load_verdicts, Judge, Metric, PairOrder,
    StoredVerdict, Strength, Verdict, Winner,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::config::StudyConfig;
use crate::error::{safe_name, ApiError, ApiResult};
use crate::items::{image_url, overlay_url, png_response};
use crate::SharedState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySession {
    pub token: String,
    pub participant: String,
    pub seed: u64,
    pub assigned_pairs: Vec<String>,
    pub cursor: usize,
    pub created_at: String,
}

impl StudySession {
    pub fn is_done(&self) -> bool {
        self.cursor >= self.assigned_pairs.len()
    }
}

/// A pair id names one comparison: `item:baseline:metric`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSpec {
    pub item_id: String,
    pub baseline: String,
    pub metric: Metric,
}

impl PairSpec {
    pub fn id(&self) -> String {
        format!(
            "{}:{}:{}",
            self.item_id,
            self.baseline,
            self.metric.as_str()
        )
    }

    pub fn parse(id: &str) -> Option<PairSpec> {
        let mut parts = id.split(':');
        let (item, baseline, metric) = (parts.next()?, parts.next()?, parts.next()?);
        if parts.next().is_some() {
            return None;
        }
        let metric = Metric::ALL.into_iter().find(|m| m.as_str() == metric)?;
        Some(PairSpec {
            item_id: item.to_string(),
            baseline: baseline.to_string(),
            metric,
        })
    }
}

/// Every item × baseline × metric combination, in that nesting order.
pub fn pair_universe(items: &[&str], study: &StudyConfig) -> Vec<String> {
    let mut out = Vec::new();
    for item in items {
        for baseline in &study.baselines {
            for &metric in &study.metrics {
                out.push(
                    PairSpec {
                        item_id: item.to_string(),
                        baseline: baseline.clone(),
                        metric,
                    }
                    .id(),
                );
            }
        }
    }
    out
}

/// `n` distinct pairs drawn uniformly from the universe, in draw order.
pub fn assign_pairs(universe: &[String], n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, universe.len(), n.min(universe.len()))
        .into_iter()
        .map(|i| universe[i].clone())
        .collect()
}

/// Seed of the A/B presentation order for one question of a session.
pub fn presentation_seed(session_seed: u64, cursor: usize) -> u64 {
    session_seed ^ (cursor as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn presentation_order(session: &StudySession, cursor: usize) -> PairOrder {
    PairOrder::from_seed(presentation_seed(session.seed, cursor))
}

pub struct StudyStore {
    sessions_dir: PathBuf,
    verdicts_path: PathBuf,
    /// Guards session files and the verdict log.
    sessions: Mutex<HashMap<String, StudySession>>,
}

impl StudyStore {
    /// Loads persisted sessions. A cursor behind the verdicts already stored
    /// for its session is moved forward so no question is recorded twice.
    pub fn open(sessions_dir: PathBuf, verdicts_path: PathBuf) -> std::io::Result<Self> {
        fs::create_dir_all(&sessions_dir)?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(&sessions_dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let session: StudySession = serde_json::from_slice(&fs::read(&path)?)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            sessions.insert(session.token.clone(), session);
        }
        let stored = load_verdicts(&verdicts_path)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
        for v in stored {
            if let (Some(token), Some(cursor)) = (&v.session, v.cursor) {
                if let Some(s) = sessions.get_mut(token) {
                    s.cursor = s.cursor.max(cursor + 1);
                }
            }
        }
        Ok(StudyStore {
            sessions_dir,
            verdicts_path,
            sessions: Mutex::new(sessions),
        })
    }

    pub fn verdicts_path(&self) -> &FsPath {
        &self.verdicts_path
    }

    fn persist(&self, session: &StudySession) -> std::io::Result<()> {
        let path = self.sessions_dir.join(format!("{}.json", session.token));
        let tmp = path.with_extension("json.tmp");
        fs::write(
            &tmp,
            serde_json::to_vec_pretty(session).expect("session serializes"),
        )?;
        fs::rename(tmp, path)
    }

    pub async fn get(&self, token: &str) -> ApiResult<StudySession> {
        self.sessions
            .lock()
            .await
            .get(token)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session `{token}`")))
    }

    pub async fn create(&self, session: StudySession) -> ApiResult<()> {
        let mut sessions = self.sessions.lock().await;
        self.persist(&session)?;
        sessions.insert(session.token.clone(), session);
        Ok(())
    }

    /// Appends the verdict for `cursor` and advances the session.
    pub async fn record(
        &self,
        token: &str,
        cursor: usize,
        build: impl FnOnce(&StudySession) -> ApiResult<Verdict>,
    ) -> ApiResult<StudySession> {
        let mut sessions = self.sessions.lock().await;
        let session = sessions
            .get_mut(token)
            .ok_or_else(|| ApiError::not_found(format!("unknown session `{token}`")))?;
        if session.is_done() {
            return Err(ApiError::conflict("session is finished"));
        }
        if cursor != session.cursor {
            return Err(ApiError::conflict(format!(
                "verdict for question {cursor} but the session is at question {}",
                session.cursor
            )));
        }
        let verdict = build(session)?;
        let entry = StoredVerdict {
            verdict,
            timestamp: Some(now()),
            session: Some(token.to_string()),
            cursor: Some(cursor),
        };
        append_verdict(&self.verdicts_path, &entry).map_err(ApiError::internal)?;
        session.cursor += 1;
        self.persist(session)?;
        Ok(session.clone())
    }

    pub async fn load_verdicts(&self) -> ApiResult<Vec<StoredVerdict>> {
        let _guard = self.sessions.lock().await;
        load_verdicts(&self.verdicts_path).map_err(ApiError::internal)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub participant: String,
    pub seed: Option<u64>,
    pub pairs: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct SessionSummary {
    pub token: String,
    pub participant: String,
    pub seed: u64,
    pub cursor: usize,
    pub total: usize,
    pub done: bool,
    pub created_at: String,
}

impl From<&StudySession> for SessionSummary {
    fn from(s: &StudySession) -> Self {
        SessionSummary {
            token: s.token.clone(),
            participant: s.participant.clone(),
            seed: s.seed,
            cursor: s.cursor,
            total: s.assigned_pairs.len(),
            done: s.is_done(),
            created_at: s.created_at.clone(),
        }
    }
}

pub async fn create(
    State(state): State<SharedState>,
    Json(req): Json<CreateSession>,
) -> ApiResult<(StatusCode, Json<SessionSummary>)> {
    if req.participant.trim().is_empty() {
        return Err(ApiError::invalid(
            "participant must not be empty",
            Some("participant".into()),
        ));
    }
    let study = &state.config.study;
    let ids: Vec<&str> = state.bench.items.iter().map(|i| i.id.as_str()).collect();
    let universe = pair_universe(&ids, study);
    let n = req.pairs.unwrap_or(study.pairs_per_session);
    if n == 0 || n > universe.len() {
        return Err(ApiError::invalid(
            format!("pairs must be in 1..={}", universe.len()),
            Some("pairs".into()),
        ));
    }
    let seed = req.seed.unwrap_or_else(rand::random);
    let session = StudySession {
        token: uuid::Uuid::new_v4().simple().to_string(),
        participant: req.participant,
        seed,
        assigned_pairs: assign_pairs(&universe, n, seed),
        cursor: 0,
        created_at: now(),
    };
    state.studies.create(session.clone()).await?;
    Ok((StatusCode::CREATED, Json(SessionSummary::from(&session))))
}

pub async fn summary(
    State(state): State<SharedState>,
    Path(token): Path<String>,
) -> ApiResult<Json<SessionSummary>> {
    Ok(Json(SessionSummary::from(
        &state.studies.get(&token).await?,
    )))
}

#[derive(Debug, Serialize)]
pub struct VideoRef {
    pub frames: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct PairDescriptor {
    pub done: bool,
    pub cursor: usize,
    pub total: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<PairView>,
}

#[derive(Debug, Serialize)]
pub struct PairView {
    pub pair_id: String,
    pub item_id: String,
    pub metric: Metric,
    pub question: String,
    pub prompt: Option<String>,
    pub context_frame: String,
    pub overlay: String,
    pub video_a: VideoRef,
    pub video_b: VideoRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    A,
    B,
}

/// Method whose video is shown on `side` for question `cursor`.
pub fn method_on_side(
    study: &StudyConfig,
    session: &StudySession,
    cursor: usize,
    pair: &PairSpec,
) -> impl Fn(Side) -> String {
    let swapped = presentation_order(session, cursor).swapped;
    let (first, second) = (study.candidate.clone(), pair.baseline.clone());
    move |side| match (side, swapped) {
        (Side::A, false) | (Side::B, true) => first.clone(),
        _ => second.clone(),
    }
}

fn video_frames(state: &SharedState, method: &str, item_id: &str) -> ApiResult<Vec<PathBuf>> {
    let Some(root) = &state.config.study.videos_dir else {
        return Ok(Vec::new());
    };
    let dir = root.join(safe_name(method)?).join(safe_name(item_id)?);
    let entries = match fs::read_dir(&dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut frames: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("png"))
        .collect();
    frames.sort();
    Ok(frames)
}

fn current_pair(session: &StudySession, cursor: usize) -> ApiResult<PairSpec> {
    let id = &session.assigned_pairs[cursor];
    PairSpec::parse(id).ok_or_else(|| ApiError::internal(format!("malformed pair id `{id}`")))
}

pub async fn next(
    State(state): State<SharedState>,
    Path(token): Path<String>,
) -> ApiResult<Json<PairDescriptor>> {
    let session = state.studies.get(&token).await?;
    let total = session.assigned_pairs.len();
    let cursor = session.cursor;
    if session.is_done() {
        return Ok(Json(PairDescriptor {
            done: true,
            cursor,
            total,
            pair: None,
        }));
    }
    let pair = current_pair(&session, cursor)?;
    let item = state.item(&pair.item_id)?;
    let method = method_on_side(&state.config.study, &session, cursor, &pair);
    let video = |side: Side, tag: &str| -> ApiResult<VideoRef> {
        let n = video_frames(&state, &method(side), &pair.item_id)?.len();
        Ok(VideoRef {
            frames: (0..n)
                .map(|k| format!("/api/study/{token}/video/{cursor}/{tag}/{k}"))
                .collect(),
        })
    };
    Ok(Json(PairDescriptor {
        done: false,
        cursor,
        total,
        pair: Some(PairView {
            pair_id: pair.id(),
            item_id: pair.item_id.clone(),
            metric: pair.metric,
            question: criterion_text(pair.metric).trim().to_string(),
            prompt: item.manifest.prompt.clone(),
            context_frame: image_url(&pair.item_id),
            overlay: overlay_url(&pair.item_id, "bench"),
            video_a: video(Side::A, "a")?,
            video_b: video(Side::B, "b")?,
        }),
    }))
}

pub async fn video_frame(
    State(state): State<SharedState>,
    Path((token, cursor, side, frame)): Path<(String, usize, Side, usize)>,
) -> ApiResult<Response> {
    let session = state.studies.get(&token).await?;
    if cursor >= session.assigned_pairs.len() {
        return Err(ApiError::not_found(format!("no question {cursor}")));
    }
    let pair = current_pair(&session, cursor)?;
    let method = method_on_side(&state.config.study, &session, cursor, &pair)(side);
    let frames = video_frames(&state, &method, &pair.item_id)?;
    let path = frames
        .get(frame)
        .ok_or_else(|| ApiError::not_found(format!("no frame {frame}")))?;
    Ok(png_response(tokio::fs::read(path).await?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictSubmission {
    pub cursor: usize,
    /// As presented: `A` is the video shown first.
    pub winner: Winner,
    pub strength: Strength,
}

#[derive(Debug, Serialize)]
pub struct VerdictAck {
    pub accepted: bool,
    pub cursor: usize,
    pub total: usize,
    pub done: bool,
}

pub async fn verdict(
    State(state): State<SharedState>,
    Path(token): Path<String>,
    Json(sub): Json<VerdictSubmission>,
) -> ApiResult<Json<VerdictAck>> {
    check_consistent(sub.winner, sub.strength)
        .map_err(|e| ApiError::invalid(e.to_string(), Some("strength".into())))?;
    let session = state
        .studies
        .record(&token, sub.cursor, |session| {
            let pair = current_pair(session, sub.cursor)?;
            let winner = presentation_order(session, sub.cursor).unwind(sub.winner);
            Verdict::new(
                pair.id(),
                pair.metric,
                winner,
                sub.strength,
                Judge::Human,
                pair.baseline,
            )
            .map_err(|e| ApiError::invalid(e.to_string(), Some("strength".into())))
        })
        .await?;
    Ok(Json(VerdictAck {
        accepted: true,
        cursor: session.cursor,
        total: session.assigned_pairs.len(),
        done: session.is_done(),
    }))
}
