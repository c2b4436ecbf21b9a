//! HTTP surface of SmellHunter.
//!
//! | method | path                     | result                                   |
//! |--------|--------------------------|------------------------------------------|
//! | POST   | `/analyses`              | 202 `{correlation_id, accepted_at}`      |
//! | GET    | `/analyses/{id}`         | run status derived from the bus trace    |
//! | GET    | `/analyses/{id}/trace`   | raw events and handler annotations       |
//! | GET    | `/detections`            | `{total, items}` of detection records    |
//! | GET    | `/detections/histogram`  | `{smell name: count}`                    |
//! | GET    | `/executions`            | `{total, items}` of execution records    |
//!
//! `POST /analyses` takes a multipart form with the parts `script`,
//! `metrics`, `thresholds` and `metadata`, plus an optional `label`. Files
//! are parsed before anything is published: structural errors come back as
//! 400 `{"errors": [...]}` and nothing reaches the bus.
//!
//! Query endpoints accept the keys documented in
//! [`smellhunter_core::persistence::DetectionFilter::from_query_pairs`];
//! `/executions` takes `project`, `offset` and `limit`. Other errors are
//! `{"error": {"kind", "message"}}`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::multipart::MultipartError;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

use smellhunter_core::bus::{Annotation, CorrelationId, EventEnvelope};
use smellhunter_core::inputs::{parse_request, Artifact, ArtifactError, InputError, InputErrorKind};
use smellhunter_core::persistence::{history_query_from_pairs, DetectionFilter, HistoryStore, QueryError};
use smellhunter_core::pipeline::{Pipeline, PipelineConfig, DEFAULT_TIMEOUT};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_MAX_PAYLOAD: usize = 10 * 1024 * 1024;

/// Server settings; every flag can also come from the environment.
#[derive(Debug, Clone, clap::Parser)]
#[command(name = "smellhunter-server", version, about = "SmellHunter analysis gateway")]
pub struct ServerArgs {
    /// Address to listen on.
    #[arg(long, env = "SMELLHUNTER_LISTEN", default_value = DEFAULT_LISTEN)]
    pub listen: SocketAddr,
    /// Directory of the context history store.
    #[arg(long, env = "SMELLHUNTER_STORE_DIR", default_value = "smellhunter-data")]
    pub store_dir: PathBuf,
    /// Largest accepted request body, in bytes.
    #[arg(long, env = "SMELLHUNTER_MAX_PAYLOAD", default_value_t = DEFAULT_MAX_PAYLOAD)]
    pub max_payload: usize,
    /// Runs not finished after this many milliseconds are failed.
    #[arg(long, env = "SMELLHUNTER_PIPELINE_TIMEOUT_MS", default_value_t = DEFAULT_TIMEOUT.as_millis() as u64,
          value_parser = clap::value_parser!(u64).range(1..))]
    pub pipeline_timeout_ms: u64,
    /// Static files served under `/` (e.g. the dashboard build).
    #[arg(long, env = "SMELLHUNTER_ASSETS_DIR")]
    pub assets_dir: Option<PathBuf>,
}

impl ServerArgs {
    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig { timeout: Duration::from_millis(self.pipeline_timeout_ms), ..Default::default() }
    }
}

#[derive(Debug, Clone)]
pub struct RouterConfig {
    pub max_payload: usize,
    pub assets_dir: Option<PathBuf>,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig { max_payload: DEFAULT_MAX_PAYLOAD, assets_dir: None }
    }
}

#[derive(Clone)]
struct AppState {
    pipeline: Arc<Pipeline>,
}

pub fn router(pipeline: Arc<Pipeline>, config: &RouterConfig) -> Router {
    let api = Router::new()
        .route("/analyses", post(submit))
        .route("/analyses/{id}", get(status))
        .route("/analyses/{id}/trace", get(trace))
        .route("/detections", get(detections))
        .route("/detections/histogram", get(histogram))
        .route("/executions", get(executions))
        .layer(DefaultBodyLimit::max(config.max_payload))
        .with_state(AppState { pipeline });
    let app = match &config.assets_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(TraceLayer::new_for_http())
}

/// Opens the store, starts the pipeline and serves until ctrl-c.
pub async fn run(args: ServerArgs) -> anyhow::Result<()> {
    let store = Arc::new(HistoryStore::open(&args.store_dir)?);
    let pipeline = Arc::new(Pipeline::start(store, args.pipeline_config())?);
    let config = RouterConfig { max_payload: args.max_payload, assets_dir: args.assets_dir.clone() };
    let listener = tokio::net::TcpListener::bind(args.listen).await?;
    tracing::info!(address = %listener.local_addr()?, store = %args.store_dir.display(), "listening");
    axum::serve(listener, router(pipeline, &config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub correlation_id: CorrelationId,
    pub accepted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceView {
    pub events: Vec<EventEnvelope>,
    pub annotations: Vec<Annotation>,
}

fn error(status: StatusCode, kind: &str, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": { "kind": kind, "message": message.into() } }))).into_response()
}

fn query_error(e: QueryError) -> Response {
    let kind = match e {
        QueryError::InvalidLimit(_) => "invalidLimit",
        QueryError::InvalidBoundingBox(_) => "invalidBoundingBox",
        QueryError::InvalidTimeRange => "invalidTimeRange",
        QueryError::InvalidParameter { .. } => "invalidParameter",
        QueryError::UnknownParameter(_) => "unknownParameter",
    };
    error(StatusCode::BAD_REQUEST, kind, e.to_string())
}

fn input_errors(errors: Vec<ArtifactError>) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({ "errors": errors }))).into_response()
}

fn multipart_error(e: MultipartError) -> Response {
    let status = e.status();
    let kind = if status == StatusCode::PAYLOAD_TOO_LARGE { "payloadTooLarge" } else { "malformedMultipart" };
    error(status, kind, e.body_text())
}

async fn submit(State(state): State<AppState>, mut form: Multipart) -> Response {
    let mut parts: [Option<Vec<u8>>; 4] = Default::default();
    let mut label = None;
    loop {
        let field = match form.next_field().await {
            Ok(Some(field)) => field,
            Ok(None) => break,
            Err(e) => return multipart_error(e),
        };
        let name = field.name().unwrap_or_default().to_string();
        let bytes = match field.bytes().await {
            Ok(b) => b.to_vec(),
            Err(e) => return multipart_error(e),
        };
        match Artifact::ALL.iter().position(|a| a.as_str() == name) {
            Some(i) => parts[i] = Some(bytes),
            None if name == "label" => {
                let text = String::from_utf8_lossy(&bytes).trim().to_string();
                label = (!text.is_empty()).then_some(text);
            }
            None => return error(StatusCode::BAD_REQUEST, "unknownPart", format!("unexpected form part `{name}`")),
        }
    }

    let missing: Vec<ArtifactError> = Artifact::ALL
        .iter()
        .zip(&parts)
        .filter(|(_, p)| p.is_none())
        .map(|(part, _)| ArtifactError {
            part: *part,
            error: InputError {
                kind: InputErrorKind::MissingPart,
                position: None,
                message: format!("the `{}` part is missing", part.as_str()),
            },
        })
        .collect();
    if !missing.is_empty() {
        return input_errors(missing);
    }
    let [script, metrics, thresholds, metadata] = parts.map(Option::unwrap_or_default);
    let request = match parse_request(&script, &metrics, &thresholds, &metadata, label) {
        Ok(r) => r,
        Err(errors) => return input_errors(errors),
    };
    let accepted_at = Utc::now();
    match state.pipeline.submit(request) {
        Ok(correlation_id) => {
            tracing::info!(%correlation_id, "analysis accepted");
            (StatusCode::ACCEPTED, Json(SubmitResponse { correlation_id, accepted_at })).into_response()
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "busError", e.to_string()),
    }
}

fn run_id(raw: &str) -> Result<CorrelationId, Response> {
    CorrelationId::try_from(raw).map_err(|e| error(StatusCode::NOT_FOUND, "unknownRun", e.to_string()))
}

async fn status(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let id = match run_id(&id) {
        Ok(id) => id,
        Err(r) => return r,
    };
    match state.pipeline.status(&id) {
        Some(view) => Json(view).into_response(),
        None => error(StatusCode::NOT_FOUND, "unknownRun", format!("no run with correlation id `{id}`")),
    }
}

async fn trace(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let id = match run_id(&id) {
        Ok(id) => id,
        Err(r) => return r,
    };
    let events = state.pipeline.bus().trace(&id);
    if events.is_empty() {
        return error(StatusCode::NOT_FOUND, "unknownRun", format!("no run with correlation id `{id}`"));
    }
    Json(TraceView { events, annotations: state.pipeline.bus().annotations(&id) }).into_response()
}

type Pairs = Query<Vec<(String, String)>>;

fn borrowed(pairs: &[(String, String)]) -> impl Iterator<Item = (&str, &str)> {
    pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))
}

async fn detections(State(state): State<AppState>, Query(pairs): Pairs) -> Response {
    let result = DetectionFilter::from_query_pairs(borrowed(&pairs))
        .and_then(|(filter, page)| state.pipeline.store().query_detections(&filter, page));
    match result {
        Ok(page) => Json(page).into_response(),
        Err(e) => query_error(e),
    }
}

async fn histogram(State(state): State<AppState>, Query(pairs): Pairs) -> Response {
    let result =
        DetectionFilter::from_query_pairs(borrowed(&pairs)).and_then(|(filter, _)| state.pipeline.store().histogram(&filter));
    match result {
        Ok(counts) => Json(counts).into_response(),
        Err(e) => query_error(e),
    }
}

async fn executions(State(state): State<AppState>, Query(pairs): Pairs) -> Response {
    let result = history_query_from_pairs(borrowed(&pairs))
        .and_then(|(project, page)| state.pipeline.store().execution_history(project.as_deref(), page));
    match result {
        Ok(page) => Json(page).into_response(),
        Err(e) => query_error(e),
    }
}
