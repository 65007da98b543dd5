//! Append-only annotation revisions: `<data_dir>/annotations/<item>/<rev>.json`.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::PathBuf;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use motionplan_core::trajectory::{parse_manifest, TrajectoryError, TrajectorySet};
use serde::Serialize;
use tokio::sync::Mutex;

use crate::error::{safe_name, ApiError, ApiResult};
use crate::SharedState;

pub struct AnnotationStore {
    root: PathBuf,
    write_lock: Mutex<()>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SavedRevision {
    pub item_id: String,
    pub revision: u64,
}

fn revision_file(rev: u64) -> String {
    format!("{rev:06}.json")
}

impl AnnotationStore {
    pub fn new(root: PathBuf) -> Self {
        AnnotationStore {
            root,
            write_lock: Mutex::new(()),
        }
    }

    fn item_dir(&self, item_id: &str) -> ApiResult<PathBuf> {
        Ok(self.root.join(safe_name(item_id)?))
    }

    /// Revision numbers for an item, ascending.
    pub fn revisions(&self, item_id: &str) -> ApiResult<Vec<u64>> {
        let dir = self.item_dir(item_id)?;
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut revs: Vec<u64> = entries
            .filter_map(Result::ok)
            .filter_map(|e| e.file_name().to_str()?.strip_suffix(".json")?.parse().ok())
            .collect();
        revs.sort_unstable();
        Ok(revs)
    }

    pub fn read(&self, item_id: &str, rev: u64) -> ApiResult<Vec<u8>> {
        let path = self.item_dir(item_id)?.join(revision_file(rev));
        fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                ApiError::not_found(format!("no revision {rev} for item `{item_id}`"))
            }
            _ => e.into(),
        })
    }

    pub fn latest(&self, item_id: &str) -> ApiResult<Option<(u64, Vec<u8>)>> {
        match self.revisions(item_id)?.last() {
            Some(&rev) => Ok(Some((rev, self.read(item_id, rev)?))),
            None => Ok(None),
        }
    }

    /// Stores `bytes` verbatim as the next revision.
    pub async fn append(&self, item_id: &str, bytes: &[u8]) -> ApiResult<u64> {
        let _guard = self.write_lock.lock().await;
        let dir = self.item_dir(item_id)?;
        fs::create_dir_all(&dir)?;
        let rev = self.revisions(item_id)?.last().map_or(1, |r| r + 1);
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(dir.join(revision_file(rev)))?;
        f.write_all(bytes)?;
        f.sync_all()?;
        Ok(rev)
    }
}

/// Parses a submitted manifest and checks it against the item's frame size.
pub fn validate_for_item(bytes: &[u8], expected: &TrajectorySet) -> ApiResult<TrajectorySet> {
    let set = parse_manifest(bytes).map_err(|e| match e {
        TrajectoryError::Manifest { field, message } => ApiError::invalid(message, Some(field)),
        other => ApiError::invalid(other.to_string(), None),
    })?;
    for (field, got, want) in [
        ("width", set.width, expected.width),
        ("height", set.height, expected.height),
    ] {
        if got != want {
            return Err(ApiError::invalid(
                format!("{field} is {got} but the item image has {field} {want}"),
                Some(field.to_string()),
            ));
        }
    }
    Ok(set)
}

/// The latest saved annotation for an item, or its benchmark manifest.
pub fn current_set(state: &SharedState, item_id: &str) -> ApiResult<TrajectorySet> {
    let item = state.item(item_id)?;
    match state.annotations.latest(item_id)? {
        Some((_, bytes)) => parse_manifest(&bytes).map_err(ApiError::internal),
        None => Ok(item.manifest.clone()),
    }
}

pub async fn save(
    State(state): State<SharedState>,
    Path(item_id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<SavedRevision>)> {
    let item = state.item(&item_id)?;
    validate_for_item(&body, &item.manifest)?;
    let revision = state.annotations.append(&item_id, &body).await?;
    Ok((
        StatusCode::CREATED,
        Json(SavedRevision { item_id, revision }),
    ))
}

fn manifest_response(rev: u64, bytes: Vec<u8>) -> Response {
    (
        [
            (header::CONTENT_TYPE, "application/json".to_string()),
            (
                header::HeaderName::from_static("x-revision"),
                rev.to_string(),
            ),
        ],
        bytes,
    )
        .into_response()
}

pub async fn latest(
    State(state): State<SharedState>,
    Path(item_id): Path<String>,
) -> ApiResult<Response> {
    state.item(&item_id)?;
    let (rev, bytes) = state
        .annotations
        .latest(&item_id)?
        .ok_or_else(|| ApiError::not_found(format!("no annotation for item `{item_id}`")))?;
    Ok(manifest_response(rev, bytes))
}

pub async fn list(
    State(state): State<SharedState>,
    Path(item_id): Path<String>,
) -> ApiResult<Json<Vec<u64>>> {
    state.item(&item_id)?;
    Ok(Json(state.annotations.revisions(&item_id)?))
}

pub async fn revision(
    State(state): State<SharedState>,
    Path((item_id, rev)): Path<(String, u64)>,
) -> ApiResult<Response> {
    state.item(&item_id)?;
    Ok(manifest_response(
        rev,
        state.annotations.read(&item_id, rev)?,
    ))
}
