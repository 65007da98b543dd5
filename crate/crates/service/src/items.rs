//! Benchmark items, their assets and server-side renderings.

use std::io::Cursor;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::Json;
use image::{DynamicImage, ImageFormat, RgbImage};
use motionplan_core::bench::{Index, IndexEntry};
use motionplan_core::overlay::draw_overlay;
use motionplan_core::trajectory::{parse_manifest, serialize_manifest, TrajectorySet};
use motionplan_core::volume::{frame_image, rasterize};
use serde::{Deserialize, Serialize};

use crate::annotations::{current_set, validate_for_item};
use crate::error::{ApiError, ApiResult};
use crate::SharedState;

#[derive(Debug, Serialize)]
pub struct ItemAssets {
    pub image: String,
    pub overlay: String,
    pub heatmap: String,
}

#[derive(Debug, Serialize)]
pub struct ItemDetail {
    #[serde(flatten)]
    pub entry: IndexEntry,
    pub width: u32,
    pub height: u32,
    pub length: usize,
    pub prompt: Option<String>,
    pub manifest: serde_json::Value,
    pub assets: ItemAssets,
}

pub fn image_url(id: &str) -> String {
    format!("/api/bench/items/{id}/image")
}

pub fn overlay_url(id: &str, source: &str) -> String {
    format!("/api/bench/items/{id}/overlay?source={source}")
}

pub fn manifest_json(set: &TrajectorySet) -> serde_json::Value {
    serde_json::from_slice(&serialize_manifest(set)).expect("manifest is json")
}

pub async fn list(State(state): State<SharedState>) -> Json<Index> {
    Json(state.bench.index())
}

pub async fn detail(
    State(state): State<SharedState>,
    Path(id): Path<String>,
) -> ApiResult<Json<ItemDetail>> {
    let item = state.item(&id)?;
    let entry = state
        .bench
        .index()
        .items
        .into_iter()
        .find(|e| e.id == id)
        .expect("index mirrors items");
    Ok(Json(ItemDetail {
        entry,
        width: item.manifest.width,
        height: item.manifest.height,
        length: item.manifest.length,
        prompt: item.manifest.prompt.clone(),
        manifest: manifest_json(&item.manifest),
        assets: ItemAssets {
            image: image_url(&id),
            overlay: overlay_url(&id, "latest"),
            heatmap: format!("/api/bench/items/{id}/heatmap?frame=0"),
        },
    }))
}

pub fn png_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

/// The item's image file, byte for byte.
pub async fn image(
    State(state): State<SharedState>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let item = state.item(&id)?;
    let bytes = tokio::fs::read(&item.image).await?;
    let mime = match item.image.extension().and_then(|e| e.to_str()) {
        Some("jpg" | "jpeg") => "image/jpeg",
        _ => "image/png",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    #[default]
    Latest,
    Bench,
}

#[derive(Debug, Default, Deserialize)]
pub struct RenderQuery {
    #[serde(default)]
    pub source: Source,
    pub revision: Option<u64>,
    #[serde(default)]
    pub frame: usize,
}

fn load_image(state: &SharedState, id: &str) -> ApiResult<RgbImage> {
    let item = state.item(id)?;
    Ok(image::open(&item.image)
        .map_err(ApiError::internal)?
        .to_rgb8())
}

fn resolve_set(state: &SharedState, id: &str, q: &RenderQuery) -> ApiResult<TrajectorySet> {
    let item = state.item(id)?;
    if let Some(rev) = q.revision {
        let bytes = state.annotations.read(id, rev)?;
        return parse_manifest(&bytes).map_err(ApiError::internal);
    }
    match q.source {
        Source::Latest => current_set(state, id),
        Source::Bench => Ok(item.manifest.clone()),
    }
}

fn encode(img: DynamicImage) -> ApiResult<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(ApiError::internal)?;
    Ok(buf.into_inner())
}

pub fn render_overlay(state: &SharedState, id: &str, set: &TrajectorySet) -> ApiResult<Vec<u8>> {
    let img = load_image(state, id)?;
    let drawn = draw_overlay(&img, set, &state.config.reason.style)
        .map_err(|e| ApiError::invalid(e.to_string(), None))?;
    encode(DynamicImage::ImageRgb8(drawn))
}

pub fn render_heatmap(
    state: &SharedState,
    set: &TrajectorySet,
    frame: usize,
) -> ApiResult<Vec<u8>> {
    if frame >= set.length {
        return Err(ApiError::invalid(
            format!("frame {frame} is out of range for {} frames", set.length),
            Some("frame".into()),
        ));
    }
    let vol = rasterize(
        set,
        set.height as usize,
        set.width as usize,
        &state.config.reason.sigma,
    )
    .map_err(ApiError::internal)?;
    encode(DynamicImage::ImageLuma8(frame_image(&vol, frame)))
}

pub async fn overlay(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    Query(q): Query<RenderQuery>,
) -> ApiResult<Response> {
    let set = resolve_set(&state, &id, &q)?;
    Ok(png_response(render_overlay(&state, &id, &set)?))
}

pub async fn heatmap(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    Query(q): Query<RenderQuery>,
) -> ApiResult<Response> {
    let set = resolve_set(&state, &id, &q)?;
    Ok(png_response(render_heatmap(&state, &set, q.frame)?))
}

/// Renders an unsaved manifest on the item's image.
pub async fn preview_overlay(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let set = validate_for_item(&body, &state.item(&id)?.manifest)?;
    Ok(png_response(render_overlay(&state, &id, &set)?))
}

pub async fn preview_heatmap(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    Query(q): Query<RenderQuery>,
    body: Bytes,
) -> ApiResult<Response> {
    let set = validate_for_item(&body, &state.item(&id)?.manifest)?;
    Ok(png_response(render_heatmap(&state, &set, q.frame)?))
}
