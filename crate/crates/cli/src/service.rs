//! HTTP recognition service.
//!
//! `POST /recognize` takes `{"traces": [[[x, y], ...], ...], "config": {...}}`
//! where `config` optionally overrides `correction`, `revise` and
//! `seg_threshold`. Trace `i` of the request is trace id `i` in the response.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hmer_core::ink::write_lg;
use hmer_core::pipeline::{
    recognize, Models, PipelineConfig, PipelineError, RecognitionResult, StageTiming, SymbolScore,
};
use hmer_core::{EdgeSource, Expression, RelationLabel, SymbolId};
use serde::{Deserialize, Serialize};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub correction: Option<bool>,
    pub revise: Option<bool>,
    pub seg_threshold: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecognizeRequest {
    pub traces: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub config: ConfigOverrides,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationOut {
    /// `None` for the root edge.
    pub src: Option<SymbolId>,
    pub dst: SymbolId,
    pub label: RelationLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecognizeResponse {
    pub lg: String,
    pub latex: String,
    pub mathml: String,
    pub symbols: Vec<SymbolScore>,
    pub relations: Vec<RelationOut>,
    pub timings: Vec<StageTiming>,
    pub model: String,
    pub version: String,
}

impl RecognizeResponse {
    pub fn new(r: &RecognitionResult, model: &str) -> Self {
        RecognizeResponse {
            lg: write_lg(&r.slg),
            latex: r.latex.clone(),
            mathml: r.mathml.clone(),
            symbols: r.scores.clone(),
            relations: r
                .slg
                .edges()
                .iter()
                .map(|e| RelationOut {
                    src: match e.src {
                        EdgeSource::Root => None,
                        EdgeSource::Node(s) => Some(s),
                    },
                    dst: e.dst,
                    label: e.label,
                })
                .collect(),
            timings: r.timings.clone(),
            model: model.to_string(),
            version: VERSION.to_string(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelsInfo {
    pub model: String,
    pub version: String,
    pub classes: Vec<String>,
    pub correction: bool,
    pub revise: bool,
}

#[derive(Clone)]
struct AppState {
    models: Arc<Models>,
    config: Arc<PipelineConfig>,
}

fn error(status: StatusCode, msg: impl Into<String>, stage: Option<&str>) -> Response {
    let mut body = serde_json::json!({ "error": msg.into() });
    if let Some(s) = stage {
        body["stage"] = s.into();
    }
    (status, Json(body)).into_response()
}

pub fn router(models: Models, config: PipelineConfig) -> Router {
    let state = AppState {
        models: Arc::new(models),
        config: Arc::new(config),
    };
    Router::new()
        .route("/health", get(health))
        .route("/models", get(models_info))
        .route("/recognize", post(recognize_handler))
        .with_state(state)
}

async fn health() -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "text/plain")], "ok")
}

async fn models_info(State(s): State<AppState>) -> Json<ModelsInfo> {
    Json(ModelsInfo {
        model: s.models.tag.clone(),
        version: VERSION.to_string(),
        classes: s.models.inventory().labels().to_vec(),
        correction: s.config.correction && s.models.corrector.is_some(),
        revise: s.config.revise_enabled(),
    })
}

async fn recognize_handler(State(s): State<AppState>, body: Bytes) -> Response {
    let req: RecognizeRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            return error(
                StatusCode::BAD_REQUEST,
                format!("malformed request: {e}"),
                None,
            )
        }
    };
    if req.traces.is_empty() {
        return error(
            StatusCode::UNPROCESSABLE_ENTITY,
            "trace list is empty",
            None,
        );
    }
    let expr = match Expression::from_point_arrays(&req.traces) {
        Ok(e) => e,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid trace: {e}"), None),
    };
    let mut config = (*s.config).clone();
    if let Some(c) = req.config.correction {
        config.correction = c;
    }
    if let Some(r) = req.config.revise {
        config.revise = r;
    }
    if let Some(t) = req.config.seg_threshold {
        if !(0.0..=1.0).contains(&t) {
            return error(
                StatusCode::BAD_REQUEST,
                format!("seg_threshold {t} outside [0, 1]"),
                None,
            );
        }
        config.seg_threshold = Some(t);
    }
    let models = s.models.clone();
    let out = tokio::task::spawn_blocking(move || {
        recognize(&expr, &models, &config).map(|r| RecognizeResponse::new(&r, &models.tag))
    })
    .await;
    match out {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(e @ PipelineError::Stage { stage, .. })) => error(
            StatusCode::UNPROCESSABLE_ENTITY,
            e.to_string(),
            Some(stage.as_str()),
        ),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None),
    }
}

/// Serves until ctrl-c.
pub async fn serve(addr: &str, models: Models, config: PipelineConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(models, config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
