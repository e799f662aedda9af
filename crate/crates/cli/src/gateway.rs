//! Guard-as-a-service HTTP gateway: POST /v1/guard runs the pipeline and
//! returns the fused message; the caller forwards it onward (or configures
//! an upstream relay). Responses fail closed: raw text is never emitted on
//! errors, and a 200 body must pass the gateway's own leak check.

use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use srpg_core::{GuardError, GuardMethod, GuardOutput, GuardPipeline};

use crate::config::GatewayConfig;

pub struct GatewayState {
    pub pipeline: GuardPipeline,
    pub default_method: GuardMethod,
    pub log_raw: bool,
    pub upstream: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct GuardRequest {
    #[serde(default)]
    pub text: String,
    pub method: Option<String>,
    #[serde(default)]
    pub session_id: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct GuardResponse {
    pub fused_text: String,
    pub masked_text: String,
    pub context: Option<srpg_core::MathContext>,
    pub audit: Vec<srpg_core::model::AuditRecord>,
    pub method: String,
    pub degraded: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relay: Option<RelayOutcome>,
}

#[derive(Debug, Serialize)]
pub struct RelayOutcome {
    pub upstream_status: u16,
    pub reply: String,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

fn error_response(status: StatusCode, message: &str) -> Response {
    (status, Json(ErrorBody { error: message.to_string() })).into_response()
}

/// Log line for one request. Raw text never appears unless `log_raw` was
/// explicitly enabled; the default carries only a content hash and length.
pub fn request_log_line(text: &str, session_id: Option<&str>, log_raw: bool) -> String {
    if log_raw {
        format!("guard request session={} text={text:?}", session_id.unwrap_or("-"))
    } else {
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let digest = hasher.finalize();
        format!(
            "guard request session={} text_sha256={:x} chars={}",
            session_id.unwrap_or("-"),
            digest,
            text.chars().count()
        )
    }
}

pub fn build_router(state: Arc<GatewayState>, config: &GatewayConfig) -> Router {
    Router::new()
        .route("/v1/guard", post(guard_handler))
        .route("/healthz", get(|| async { "ok" }))
        .layer(DefaultBodyLimit::max(config.max_body_bytes))
        .with_state(state)
}

async fn guard_handler(
    State(state): State<Arc<GatewayState>>,
    Json(request): Json<GuardRequest>,
) -> Response {
    tracing::info!(
        "{}",
        request_log_line(&request.text, request.session_id.as_deref(), state.log_raw)
    );

    if request.text.trim().is_empty() {
        return error_response(StatusCode::BAD_REQUEST, "text must be non-empty");
    }
    let method = match &request.method {
        None => state.default_method,
        Some(raw) => match raw.parse::<GuardMethod>() {
            Ok(m) => m,
            Err(_) => {
                return error_response(StatusCode::UNPROCESSABLE_ENTITY, "unknown method");
            }
        },
    };

    let text = request.text.clone();
    let state_for_guard = state.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let output = state_for_guard.pipeline.guard(method, &text)?;
        // response-side assertion: a 200 body must pass the gateway's own
        // detector; anything else is served as a guard failure
        let hits: Vec<srpg_core::PiiRecord> = state_for_guard
            .pipeline
            .detector()
            .detect(&text)
            .into_iter()
            .map(|span| srpg_core::PiiRecord {
                kind: span.kind,
                canonical: span.canonical.clone(),
                aliases: vec![span.surface.clone()],
                start: span.start,
                end: span.end,
                surface: span.surface,
            })
            .collect();
        if !srpg_core::text_is_leak_free(&output.fused_text, &hits) {
            return Err(GuardError::Integrity(
                "response body failed the gateway leak check".into(),
            ));
        }
        Ok::<GuardOutput, GuardError>(output)
    })
    .await;

    let output = match outcome {
        Ok(Ok(output)) => output,
        Ok(Err(GuardError::Config(msg))) => {
            return error_response(StatusCode::UNPROCESSABLE_ENTITY, &msg);
        }
        Ok(Err(err)) => {
            tracing::warn!("guard failed closed: {err}");
            return error_response(StatusCode::BAD_GATEWAY, &format!("guard failure: {err}"));
        }
        Err(join_err) => {
            tracing::error!("guard task panicked: {join_err}");
            return error_response(StatusCode::BAD_GATEWAY, "guard failure: internal task error");
        }
    };

    let relay = match &state.upstream {
        None => None,
        Some(upstream) => {
            let upstream = upstream.clone();
            let fused = output.fused_text.clone();
            match tokio::task::spawn_blocking(move || relay_fused(&upstream, &fused)).await {
                Ok(Ok(outcome)) => Some(outcome),
                Ok(Err(err)) => {
                    tracing::warn!("upstream relay failed: {err}");
                    return error_response(StatusCode::BAD_GATEWAY, "upstream relay failfailed");
                }
                Err(_) => {
                    return error_response(StatusCode::BAD_GATEWAY, "upstream relay task error");
                }
            }
        }
    };

    let body = GuardResponse {
        fused_text: output.fused_text,
        masked_text: output.masked_text,
        context: output.context,
        audit: output.audit,
        method: output.method.to_string(),
        degraded: output.degraded,
        relay,
    };
    (StatusCode::OK, Json(body)).into_response()
}

fn relay_fused(upstream: &str, fused_text: &str) -> Result<RelayOutcome, String> {
    let client = reqwest::blocking::Client::new();
    let response = client
        .post(upstream)
        .json(&serde_json::json!({ "text": fused_text }))
        .send()
        .map_err(|e| e.to_string())?;
    let status = response.status().as_u16();
    let reply = response.text().map_err(|e| e.to_string())?;
    Ok(RelayOutcome { upstream_status: status, reply })
}

/// Run the gateway until the process is terminated.
pub fn serve_blocking(
    listen: &str,
    state: Arc<GatewayState>,
    config: &GatewayConfig,
) -> Result<(), String> {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(listen)
            .await
            .map_err(|e| format!("failed to bind {listen}: {e}"))?;
        let local = listener.local_addr().map_err(|e| e.to_string())?;
        eprintln!("srpg gateway listening on {local}");
        axum::serve(listener, build_router(state, config))
            .await
            .map_err(|e| e.to_string())
    })
}
