use axum::extract::{Query, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use motionplan_core::evalkit::{aggregate, rows_to_csv, rows_to_json, StoredVerdict, Verdict};
use serde::Deserialize;

use crate::error::ApiResult;
use crate::SharedState;

#[derive(Debug, Default, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Default, Deserialize)]
pub struct ResultsQuery {
    #[serde(default)]
    pub format: Format,
}

/// Aggregated table for a verdict store, as CSV or JSON bytes.
pub fn export(stored: &[StoredVerdict], format: Format) -> Vec<u8> {
    let verdicts: Vec<Verdict> = stored.iter().map(|s| s.verdict.clone()).collect();
    let rows = aggregate(&verdicts);
    match format {
        Format::Csv => rows_to_csv(&rows),
        Format::Json => rows_to_json(&rows),
    }
}

pub async fn results(
    State(state): State<SharedState>,
    Query(q): Query<ResultsQuery>,
) -> ApiResult<Response> {
    let stored = state.studies.load_verdicts().await?;
    let mime = match q.format {
        Format::Csv => "text/csv; charset=utf-8",
        Format::Json => "application/json",
    };
    Ok(([(header::CONTENT_TYPE, mime)], export(&stored, q.format)).into_response())
}
