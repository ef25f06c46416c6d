//! HTTP service.
//!
//! Reads go straight to the in-memory dataset. Every write (sessions,
//! threads, translations, images, annotation edits) is committed to the
//! event store before the response is sent. LLM calls on one
//! (session, scope) thread are serialized; different threads run
//! concurrently.

mod error;
mod routes;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Request, State};
use axum::http::header::AUTHORIZATION;
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::Router;
use cultiverse_core::Dataset;

use crate::files::{load_dataset, IngestError};
use crate::gateway::{Gateway, Scope};
use crate::store::{AnnotationEdit, EventStore, StoreError};

pub use error::ApiError;
pub use routes::{
    AnnotationBody, ElementSummary, ImageBody, InferBody, InferReply, PaintingSummary, QaBody, QaReply,
    RemovedAnnotation, SessionView, TranslateBody, TranslateReply, VerifyBody, VerifyReply,
};

pub const TOKEN_ENV: &str = "CULTIVERSE_API_TOKEN";
pub const STORE_ENV: &str = "CULTIVERSE_STORE_PATH";

pub struct AppState {
    dataset: RwLock<Dataset>,
    store: Mutex<EventStore>,
    gateway: Gateway,
    thread_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    token: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Dataset(#[from] IngestError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl AppState {
    /// Loads the dataset, opens the store and replays persisted annotation
    /// edits and image results.
    pub fn open(root: &Path, store_dir: &Path, gateway: Gateway) -> Result<AppState, StartupError> {
        let mut dataset = load_dataset(root)?;
        let store = EventStore::open(store_dir)?;
        for edit in &store.state().annotation_edits {
            let outcome = match edit {
                AnnotationEdit::Added { annotation } => dataset.restore_annotation(annotation.clone()),
                AnnotationEdit::Removed { annotation_id } => dataset.remove_annotation(annotation_id).map(|_| ()),
            };
            if let Err(e) = outcome {
                tracing::warn!(error = %e, "persisted annotation edit no longer applies");
            }
        }
        for image in store.state().images.values() {
            gateway.restore_image(image.clone());
        }
        Ok(AppState::new(dataset, store, gateway))
    }

    pub fn new(dataset: Dataset, store: EventStore, gateway: Gateway) -> AppState {
        AppState {
            dataset: RwLock::new(dataset),
            store: Mutex::new(store),
            gateway,
            thread_locks: Mutex::new(HashMap::new()),
            token: None,
        }
    }

    /// Requires `Authorization: Bearer <token>` on every route but `/healthz`.
    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token.filter(|t| !t.is_empty());
        self
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn dataset(&self) -> std::sync::RwLockReadGuard<'_, Dataset> {
        self.dataset.read().expect("dataset lock poisoned")
    }

    fn dataset_mut(&self) -> std::sync::RwLockWriteGuard<'_, Dataset> {
        self.dataset.write().expect("dataset lock poisoned")
    }

    fn store(&self) -> std::sync::MutexGuard<'_, EventStore> {
        self.store.lock().expect("store lock poisoned")
    }

    async fn lock_thread(&self, thread_id: &str) -> tokio::sync::OwnedMutexGuard<()> {
        let lock = {
            let mut locks = self.thread_locks.lock().expect("thread lock table poisoned");
            locks.entry(thread_id.to_string()).or_default().clone()
        };
        lock.lock_owned().await
    }
}

pub fn thread_id(session_id: &str, scope: Scope) -> String {
    format!("{session_id}-{}", scope.token())
}

pub fn router(state: Arc<AppState>) -> Router {
    routes::routes()
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .fallback(|| async { ApiError::not_found() })
        .with_state(state)
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Result<Response, ApiError> {
    if let Some(token) = &state.token {
        if req.uri().path() != "/healthz" {
            let ok = req
                .headers()
                .get(AUTHORIZATION)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.strip_prefix("Bearer "))
                .is_some_and(|t| t == token);
            if !ok {
                return Err(ApiError::unauthorized());
            }
        }
    }
    Ok(next.run(req).await)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Store directory: explicit value, else `CULTIVERSE_STORE_PATH`, else
/// `.cultiverse-store` under the dataset root.
pub fn store_dir(explicit: Option<PathBuf>, root: &Path) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os(STORE_ENV).map(PathBuf::from))
        .unwrap_or_else(|| root.join(".cultiverse-store"))
}
