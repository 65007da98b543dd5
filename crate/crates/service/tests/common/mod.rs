#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{HeaderMap, Method, Request, StatusCode};
use http_body_util::BodyExt;
use image::{Rgb, RgbImage};
use motionplan_core::bench::{write_synthetic_benchmark, SynthSpec};
use motionplan_core::generator::StubGenerator;
use motionplan_core::overlay::encode_png;
use motionplan_core::vlm::VlmClient;
use motionplan_service::{app, AppState, ServiceConfig, SharedState};
use tempfile::TempDir;
use tower::ServiceExt;

pub struct Fixture {
    pub dir: TempDir,
    pub state: SharedState,
}

pub fn config(root: &Path) -> ServiceConfig {
    let mut cfg = ServiceConfig {
        bench_root: root.join("bench"),
        data_dir: root.join("data"),
        ..ServiceConfig::default()
    };
    cfg.study.candidate = "ours".into();
    cfg.study.baselines = vec!["base_x".into(), "base_y".into()];
    cfg.study.videos_dir = Some(root.join("videos"));
    cfg
}

/// Writes a 16-item synthetic benchmark and three frames per method and item.
pub fn prepare(root: &Path) {
    let spec = SynthSpec {
        counts: [4, 4, 3, 2, 3],
        multi_object: 5,
        width: 48,
        height: 32,
        length: 8,
        seed: 11,
    };
    let index = write_synthetic_benchmark(&root.join("bench"), &spec).unwrap();
    for (m, method) in ["ours", "base_x", "base_y"].iter().enumerate() {
        for item in &index.items {
            let dir = root.join("videos").join(method).join(&item.id);
            std::fs::create_dir_all(&dir).unwrap();
            for k in 0..3u8 {
                let img = RgbImage::from_pixel(8, 8, Rgb([m as u8 * 100, k, 7]));
                std::fs::write(
                    dir.join(format!("frame_{k:04}.png")),
                    encode_png(&img).unwrap(),
                )
                .unwrap();
            }
        }
    }
}

pub fn fixture_with(
    vlm: Option<Arc<dyn VlmClient>>,
    tweak: impl FnOnce(&mut ServiceConfig),
) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let mut cfg = config(dir.path());
    tweak(&mut cfg);
    let state = AppState::with_clients(cfg, vlm, Arc::new(StubGenerator::default())).unwrap();
    Fixture { dir, state }
}

pub fn fixture() -> Fixture {
    fixture_with(None, |_| {})
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }
}

pub async fn call(state: &SharedState, method: Method, uri: &str, body: Option<Vec<u8>>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map_or_else(Body::empty, Body::from)).unwrap();
    let resp = app(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    Reply {
        status,
        headers,
        body,
    }
}

pub async fn get(state: &SharedState, uri: &str) -> Reply {
    call(state, Method::GET, uri, None).await
}

pub async fn post(state: &SharedState, uri: &str, body: impl Into<Vec<u8>>) -> Reply {
    call(state, Method::POST, uri, Some(body.into())).await
}

pub async fn post_json(state: &SharedState, uri: &str, body: serde_json::Value) -> Reply {
    post(state, uri, serde_json::to_vec(&body).unwrap()).await
}

/// Polls a job until it leaves the queued and running states.
pub async fn wait_job(state: &SharedState, id: &str) -> serde_json::Value {
    for _ in 0..500 {
        let job = get(state, &format!("/api/jobs/{id}")).await.json();
        if job["status"] == "done" || job["status"] == "failed" {
            return job;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("job {id} did not finish");
}
