//! HTTP API over the motion planning toolkit: benchmark items, annotations,
//! pairwise studies, result exports and reasoning jobs.

pub mod annotations;
pub mod config;
pub mod error;
pub mod items;
pub mod jobs;
pub mod results;
pub mod study;

use std::sync::Arc;
use std::time::Duration;

use axum::routing::{get, post};
use axum::Router;
use motionplan_core::bench::{load_benchmark, BenchItem, Benchmark};
use motionplan_core::generator::{GeneratorClient, HttpGenerator, StubGenerator};
use motionplan_core::vlm::{HttpVlmClient, VlmClient};
use tower_http::services::ServeDir;

use crate::annotations::AnnotationStore;
pub use crate::config::{ServiceConfig, StudyConfig};
use crate::error::{ApiError, ApiResult};
use crate::jobs::JobRegistry;
use crate::study::StudyStore;

pub const VERDICTS_FILE: &str = "verdicts.jsonl";

pub struct AppState {
    pub config: ServiceConfig,
    pub bench: Benchmark,
    pub annotations: AnnotationStore,
    pub studies: StudyStore,
    pub jobs: JobRegistry,
    pub vlm: Option<Arc<dyn VlmClient>>,
    pub generator: Arc<dyn GeneratorClient>,
}

pub type SharedState = Arc<AppState>;

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error("benchmark: {0}")]
    Bench(#[from] motionplan_core::bench::BenchError),
    #[error("storage: {0}")]
    Io(#[from] std::io::Error),
    #[error("client: {0}")]
    Client(#[from] motionplan_core::vlm::ClientError),
    #[error("invalid config: {0}")]
    Config(String),
}

impl AppState {
    /// Loads the benchmark and opens the stores under `config.data_dir`.
    pub fn with_clients(
        config: ServiceConfig,
        vlm: Option<Arc<dyn VlmClient>>,
        generator: Arc<dyn GeneratorClient>,
    ) -> Result<SharedState, StartError> {
        config
            .validate()
            .map_err(|e| StartError::Config(e.to_string()))?;
        let bench = load_benchmark(&config.bench_root)?;
        for name in std::iter::once(&config.study.candidate).chain(&config.study.baselines) {
            error::safe_name(name)
                .map_err(|_| StartError::Config(format!("invalid method name `{name}`")))?;
        }
        std::fs::create_dir_all(&config.data_dir)?;
        let annotations = AnnotationStore::new(config.data_dir.join("annotations"));
        let studies = StudyStore::open(
            config.data_dir.join("sessions"),
            config.data_dir.join(VERDICTS_FILE),
        )?;
        let jobs = JobRegistry::new(config.workers);
        Ok(Arc::new(AppState {
            config,
            bench,
            annotations,
            studies,
            jobs,
            vlm,
            generator,
        }))
    }

    /// Builds the HTTP clients named in the config; the stub generator is
    /// used when no generator endpoint is set. Call outside an async runtime.
    pub fn from_config(config: ServiceConfig) -> Result<SharedState, StartError> {
        let vlm = match &config.vlm {
            Some(c) => Some(Arc::new(HttpVlmClient::new(c.clone())?) as Arc<dyn VlmClient>),
            None => None,
        };
        let generator: Arc<dyn GeneratorClient> = match &config.generator_endpoint {
            Some(url) => Arc::new(HttpGenerator::new(
                url.clone(),
                Duration::from_secs(config.generator_timeout_secs),
            )?),
            None => Arc::new(StubGenerator::default()),
        };
        AppState::with_clients(config, vlm, generator)
    }

    pub fn item(&self, id: &str) -> ApiResult<&BenchItem> {
        self.bench
            .item(id)
            .ok_or_else(|| ApiError::not_found(format!("unknown item `{id}`")))
    }
}

pub fn app(state: SharedState) -> Router {
    let api = Router::new()
        .route("/api/bench/items", get(items::list))
        .route("/api/bench/items/{id}", get(items::detail))
        .route("/api/bench/items/{id}/image", get(items::image))
        .route(
            "/api/bench/items/{id}/overlay",
            get(items::overlay).post(items::preview_overlay),
        )
        .route(
            "/api/bench/items/{id}/heatmap",
            get(items::heatmap).post(items::preview_heatmap),
        )
        .route(
            "/api/annotations/{item_id}",
            get(annotations::latest).post(annotations::save),
        )
        .route(
            "/api/annotations/{item_id}/revisions",
            get(annotations::list),
        )
        .route(
            "/api/annotations/{item_id}/revisions/{rev}",
            get(annotations::revision),
        )
        .route("/api/study", post(study::create))
        .route("/api/study/{token}", get(study::summary))
        .route("/api/study/{token}/next", get(study::next))
        .route("/api/study/{token}/verdict", post(study::verdict))
        .route(
            "/api/study/{token}/video/{cursor}/{side}/{frame}",
            get(study::video_frame),
        )
        .route("/api/results", get(results::results))
        .route("/api/reason/{item_id}", post(jobs::submit))
        .route("/api/jobs/{id}", get(jobs::poll));
    let router = match &state.config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    router.with_state(state)
}

/// Builds the state and serves until the process is stopped.
pub fn serve(config: ServiceConfig) -> Result<(), StartError> {
    let bind = config.bind;
    let state = AppState::from_config(config)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind).await?;
        axum::serve(listener, app(state)).await
    })?;
    Ok(())
}
