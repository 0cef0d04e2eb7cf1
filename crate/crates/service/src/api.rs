use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tower_http::services::ServeDir;

use crate::error::{ServiceError, ServiceResult};
use crate::registry::Registry;
use crate::session::{CreateSession, Progress, Snapshot, SubmitAnswer, Task};

#[derive(Debug, Deserialize)]
pub struct TaskQuery {
    pub count: Option<usize>,
}

/// Runs blocking session work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ServiceResult<T> + Send + 'static,
) -> ServiceResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

async fn create(
    State(reg): State<Arc<Registry>>,
    Json(req): Json<CreateSession>,
) -> ServiceResult<(StatusCode, Json<Snapshot>)> {
    let snap = blocking(move || reg.create(req)).await?;
    Ok((StatusCode::CREATED, Json(snap)))
}

async fn tasks(
    State(reg): State<Arc<Registry>>,
    Path(id): Path<String>,
    Query(q): Query<TaskQuery>,
) -> ServiceResult<Json<Vec<Task>>> {
    Ok(Json(blocking(move || reg.next_tasks(&id, q.count)).await?))
}

async fn answer(
    State(reg): State<Arc<Registry>>,
    Path(id): Path<String>,
    Json(body): Json<SubmitAnswer>,
) -> ServiceResult<Json<Progress>> {
    Ok(Json(blocking(move || reg.submit(&id, body)).await?))
}

async fn state(
    State(reg): State<Arc<Registry>>,
    Path(id): Path<String>,
) -> ServiceResult<Json<Snapshot>> {
    Ok(Json(blocking(move || reg.state(&id)).await?))
}

/// The HTTP API, optionally serving a UI bundle from `static_dir` for all
/// other paths.
pub fn router(registry: Arc<Registry>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/tasks", get(tasks))
        .route("/sessions/{id}/answers", post(answer))
        .route("/sessions/{id}/state", get(state))
        .with_state(registry);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(
    addr: SocketAddr,
    registry: Arc<Registry>,
    static_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(registry, static_dir)).await
}
