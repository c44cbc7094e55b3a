//! HTTP inference service.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use ecm_core::corpus::EmotionCategory;
use ecm_core::inference::DecodeConfig;
use ecm_core::model::EcmModel;

use crate::api::{decode_config, parse_emotion, respond, respond_all, ApiError, ChatAllRequest, ChatRequest};

pub struct LoadedModel {
    pub model: EcmModel<f32>,
    pub checkpoint: PathBuf,
}

#[derive(Clone)]
pub struct AppState {
    pub model: Option<Arc<LoadedModel>>,
    pub decode: DecodeConfig,
}

impl AppState {
    pub fn new(model: Option<LoadedModel>, decode: DecodeConfig) -> Self {
        AppState { model: model.map(Arc::new), decode }
    }
}

/// `None` allows any origin.
pub fn router(state: AppState, cors_origin: Option<&str>) -> anyhow::Result<Router> {
    let origin = match cors_origin {
        None | Some("*") => AllowOrigin::from(Any),
        Some(o) => AllowOrigin::exact(HeaderValue::from_str(o)?),
    };
    let cors = CorsLayer::new().allow_origin(origin).allow_methods(Any).allow_headers(Any);
    Ok(Router::new()
        .route("/health", get(health))
        .route("/model", get(model_info))
        .route("/chat", post(chat))
        .route("/chat/all", post(chat_all))
        .layer(cors)
        .with_state(state))
}

fn error(status: StatusCode, body: Value) -> Response {
    (status, Json(body)).into_response()
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match &self {
            ApiError::UnknownEmotion(_) => error(StatusCode::BAD_REQUEST, json!({ "error": self.to_string(), "allowed": EmotionCategory::names() })),
            ApiError::BadRequest(m) => error(StatusCode::BAD_REQUEST, json!({ "error": m })),
            ApiError::Internal(m) => error(StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": m })),
        }
    }
}

fn not_loaded() -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, json!({ "error": "no model loaded" }))
}

fn bad_json(r: JsonRejection) -> Response {
    error(StatusCode::BAD_REQUEST, json!({ "error": r.body_text() }))
}

async fn health(State(st): State<AppState>) -> Json<Value> {
    Json(json!({ "status": "ok", "model_loaded": st.model.is_some() }))
}

async fn model_info(State(st): State<AppState>) -> Response {
    let Some(m) = st.model else { return not_loaded() };
    let c = m.model.config();
    Json(json!({
        "checkpoint": m.checkpoint.display().to_string(),
        "config": c,
        "vocab_size": m.model.vocab().len(),
        "generic_vocab": c.generic_vocab,
        "emotion_vocab": c.emotion_vocab,
        "parameters": m.model.params().num_values(),
        "emotions": EmotionCategory::names(),
        "decode": st.decode,
    }))
    .into_response()
}

async fn chat(State(st): State<AppState>, body: Result<Json<ChatRequest>, JsonRejection>) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(r) => return bad_json(r),
    };
    let emotion = match parse_emotion(&req.emotion) {
        Ok(e) => e,
        Err(e) => return e.into_response(),
    };
    let cfg = match decode_config(&st.decode, req.beam, req.max_len) {
        Ok(c) => c,
        Err(e) => return e.into_response(),
    };
    let Some(m) = st.model else { return not_loaded() };
    let result = tokio::task::spawn_blocking(move || respond(&m.model, &req.post, &[emotion], &cfg, req.trace)).await;
    match result {
        Ok(Ok(mut r)) => Json(r.remove(0)).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => ApiError::Internal(e.to_string()).into_response(),
    }
}

async fn chat_all(State(st): State<AppState>, body: Result<Json<ChatAllRequest>, JsonRejection>) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(r) => return bad_json(r),
    };
    let cfg = match decode_config(&st.decode, req.beam, req.max_len) {
        Ok(c) => c,
        Err(e) => return e.into_response(),
    };
    let Some(m) = st.model else { return not_loaded() };
    match tokio::task::spawn_blocking(move || respond_all(&m.model, &req.post, &cfg, req.trace)).await {
        Ok(Ok(r)) => Json(r).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => ApiError::Internal(e.to_string()).into_response(),
    }
}

pub async fn serve(state: AppState, bind: &str, cors_origin: Option<&str>) -> anyhow::Result<()> {
    let app = router(state, cors_origin)?;
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
