//! Reasoning jobs on a bounded worker pool.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::Json;
use motionplan_core::reason::{run_loop, RoundRecord, SessionState};
use motionplan_core::trajectory::TrajectorySet;
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, Semaphore};

use crate::annotations::current_set;
use crate::error::{ApiError, ApiResult};
use crate::items::manifest_json;
use crate::SharedState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct JobSnapshot {
    pub id: String,
    pub item_id: String,
    pub status: JobStatus,
    pub error: Option<String>,
    pub round: usize,
    /// Current trajectory set in manifest form.
    pub manifest: serde_json::Value,
    pub history: Vec<RoundRecord>,
}

pub struct JobRegistry {
    jobs: Mutex<HashMap<String, JobSnapshot>>,
    pool: Arc<Semaphore>,
}

impl JobRegistry {
    pub fn new(workers: usize) -> Self {
        JobRegistry {
            jobs: Mutex::new(HashMap::new()),
            pool: Arc::new(Semaphore::new(workers)),
        }
    }

    pub async fn get(&self, id: &str) -> Option<JobSnapshot> {
        self.jobs.lock().await.get(id).cloned()
    }

    async fn update(&self, id: &str, f: impl FnOnce(&mut JobSnapshot)) {
        if let Some(job) = self.jobs.lock().await.get_mut(id) {
            f(job);
        }
    }
}

fn snapshot(state: &SessionState, job: &mut JobSnapshot) {
    job.round = state.round;
    job.manifest = manifest_json(&state.current_set);
    job.history = state.history.clone();
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobRequest {
    pub max_rounds: Option<usize>,
    /// Replaces the manifest prompt for this job.
    pub prompt: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct JobAccepted {
    pub job_id: String,
    pub status: JobStatus,
}

pub async fn submit(
    State(state): State<SharedState>,
    Path(item_id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<JobAccepted>)> {
    let req: JobRequest = if body.iter().all(u8::is_ascii_whitespace) {
        JobRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::invalid(e.to_string(), None))?
    };
    let item = state.item(&item_id)?;
    let mut set: TrajectorySet = current_set(&state, &item_id)?;
    if let Some(prompt) = req.prompt {
        set.prompt = Some(prompt);
    }
    let max_rounds = req.max_rounds.unwrap_or(state.config.max_rounds);
    if max_rounds == 0 {
        return Err(ApiError::invalid(
            "max_rounds must be at least 1",
            Some("max_rounds".into()),
        ));
    }
    let id = uuid::Uuid::new_v4().simple().to_string();
    let mut job = JobSnapshot {
        id: id.clone(),
        item_id: item_id.clone(),
        status: JobStatus::Queued,
        error: None,
        round: 0,
        manifest: manifest_json(&set),
        history: Vec::new(),
    };
    let Some(vlm) = state.vlm.clone() else {
        job.status = JobStatus::Failed;
        job.error = Some(format!(
            "VLM client not configured: set {}",
            motionplan_core::vlm::ENV_ENDPOINT
        ));
        state.jobs.jobs.lock().await.insert(id.clone(), job);
        return Ok((
            StatusCode::ACCEPTED,
            Json(JobAccepted {
                job_id: id,
                status: JobStatus::Failed,
            }),
        ));
    };
    state.jobs.jobs.lock().await.insert(id.clone(), job);

    let image_path = item.image.clone();
    let worker_state = state.clone();
    let job_id = id.clone();
    tokio::spawn(async move {
        let jobs = &worker_state.jobs;
        let _permit = jobs.pool.clone().acquire_owned().await.expect("pool open");
        jobs.update(&job_id, |j| j.status = JobStatus::Running)
            .await;
        let gen = worker_state.generator.clone();
        let cfg = worker_state.config.reason.clone();
        let outcome = tokio::task::spawn_blocking(move || {
            let image = image::open(&image_path)
                .map_err(|e| (None, e.to_string()))?
                .to_rgb8();
            let session = SessionState::new(image, set).map_err(|e| (None, e.to_string()))?;
            run_loop(session, vlm.as_ref(), gen.as_ref(), max_rounds, &cfg).map_err(|e| {
                let message = e.to_string();
                (Some(e.state), message)
            })
        })
        .await;
        jobs.update(&job_id, |j| match outcome {
            Ok(Ok(done)) => {
                snapshot(&done, j);
                j.status = JobStatus::Done;
            }
            Ok(Err((partial, message))) => {
                if let Some(s) = partial {
                    snapshot(&s, j);
                }
                j.status = JobStatus::Failed;
                j.error = Some(message);
            }
            Err(join) => {
                j.status = JobStatus::Failed;
                j.error = Some(format!("worker panicked: {join}"));
            }
        })
        .await;
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(JobAccepted {
            job_id: id,
            status: JobStatus::Queued,
        }),
    ))
}

pub async fn poll(
    State(state): State<SharedState>,
    Path(id): Path<String>,
) -> ApiResult<Json<JobSnapshot>> {
    state
        .jobs
        .get(&id)
        .await
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("unknown job `{id}`")))
}
