//! HTTP front end of the suggestion service.

use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use storyctl_core::service::{ErrorCode, ServiceError, Suggester, SuggestionRequest};

/// Rebuilds a suggester from disk for `POST /v1/reload`.
pub type Loader = Arc<dyn Fn() -> anyhow::Result<Suggester> + Send + Sync>;

/// Shared handle to the current model snapshot.
#[derive(Clone)]
pub struct AppState {
    current: Arc<RwLock<Arc<Suggester>>>,
    loader: Option<Loader>,
}

impl AppState {
    pub fn new(suggester: Suggester) -> Self {
        AppState {
            current: Arc::new(RwLock::new(Arc::new(suggester))),
            loader: None,
        }
    }

    pub fn with_loader(mut self, loader: Loader) -> Self {
        self.loader = Some(loader);
        self
    }

    pub fn snapshot(&self) -> Arc<Suggester> {
        Arc::clone(&self.current.read().unwrap_or_else(|e| e.into_inner()))
    }

    /// Replaces the snapshot. Requests already running keep the old one.
    pub fn swap(&self, suggester: Suggester) {
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(suggester);
    }
}

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0.code {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NotImplemented => StatusCode::NOT_IMPLEMENTED,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(self.0)).into_response()
    }
}

fn internal(message: impl Into<String>) -> ApiError {
    ApiError(ServiceError {
        code: ErrorCode::Internal,
        message: message.into(),
    })
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/suggest", post(suggest))
        .route("/v1/attributes", get(attributes))
        .route("/v1/health", get(health))
        .route("/v1/reload", post(reload))
        .with_state(state)
}

async fn suggest(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: SuggestionRequest = serde_json::from_slice(&body)
        .map_err(|e| ServiceError::bad_request(format!("malformed request: {e}")))?;
    let snapshot = state.snapshot();
    let resp = tokio::task::spawn_blocking(move || snapshot.suggest(&req))
        .await
        .map_err(|e| internal(format!("suggestion task failed: {e}")))??;
    Ok(Json(resp).into_response())
}

async fn attributes(State(state): State<AppState>) -> Response {
    Json(state.snapshot().attributes()).into_response()
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    model: String,
}

async fn health(State(state): State<AppState>) -> Response {
    Json(Health {
        status: "ok",
        model: state.snapshot().model_id(),
    })
    .into_response()
}

async fn reload(State(state): State<AppState>) -> Result<Response, ApiError> {
    let loader = state
        .loader
        .clone()
        .ok_or_else(|| ServiceError::not_implemented("this server was started without reloadable paths"))?;
    let fresh = tokio::task::spawn_blocking(move || loader())
        .await
        .map_err(|e| internal(format!("reload task failed: {e}")))?
        .map_err(|e| internal(format!("reload failed: {e:#}")))?;
    state.swap(fresh);
    Ok(health(State(state)).await)
}

/// Serves until interrupted.
pub async fn serve(state: AppState, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
