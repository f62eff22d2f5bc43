//! HTTP service over the rexkb engine.
//!
//! Every request carries a static bearer token mapped to an actor. Handlers
//! are thin: one engine call each, results serialized as interchange
//! envelopes where the result is a record, and as plain JSON otherwise.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use axum::extract::{Request, State};
use axum::http::header::AUTHORIZATION;
use axum::http::Method;
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;

use rexkb_core::{ActorId, Engine, TimeWindow};

pub mod api;
pub mod config;
pub mod error;

pub use config::{ServerConfig, TokenEntry, TokenMap};
pub use error::{status_for, ApiError};

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub tokens: Arc<TokenMap>,
}

impl AppState {
    /// Registers the token holders as engine actors.
    pub fn new(engine: Arc<Engine>, tokens: TokenMap) -> Self {
        for actor in tokens.actors() {
            engine.register_actor(actor.clone());
        }
        Self {
            engine,
            tokens: Arc::new(tokens),
        }
    }

    pub fn authenticate(&self, header: Option<&str>) -> Result<ActorId, ApiError> {
        let header = header.ok_or_else(|| ApiError::unauthenticated("missing bearer token"))?;
        let token = header
            .strip_prefix("Bearer ")
            .ok_or_else(|| ApiError::unauthenticated("expected a bearer token"))?;
        self.tokens
            .actor_for(token.trim())
            .cloned()
            .ok_or_else(|| ApiError::unauthenticated("unknown token"))
    }
}

pub fn router(state: AppState) -> Router {
    use api::*;
    Router::new()
        .route("/elements", post(create_element))
        .route("/elements/{id}", get(get_element))
        .route("/elements/{id}/validate", post(validate_element))
        .route("/elements/{id}/neighbors", get(neighbors))
        .route("/elements/{id}/suggestions", get(suggestions))
        .route("/ontology", post(create_ontology_item))
        .route("/ontology/{id}/ancestors", get(ontology_ancestors))
        .route("/links", post(propose_link))
        .route("/links/{id}/decision", post(decide_link))
        .route("/faits", post(declare_fait))
        .route("/faits/{id}/dossier", get(dossier))
        .route("/faits/{id}/similar", get(similar))
        .route("/faits/{id}/start", post(start_analysis))
        .route("/faits/{id}/avis", post(issue_avis))
        .route("/consolidations", post(consolidate))
        .route("/metrics/transfer", get(transfer_metrics))
        .route("/admin/import", post(import))
        .route("/admin/export", get(export))
        .fallback(fallback)
        .layer(middleware::from_fn_with_state(state.clone(), audit_log))
        .with_state(state)
}

/// Logs every mutating request with its actor and outcome.
async fn audit_log(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if req.method() == Method::GET {
        return next.run(req).await;
    }
    let actor = state
        .authenticate(
            req.headers()
                .get(AUTHORIZATION)
                .and_then(|v| v.to_str().ok()),
        )
        .map(|a| a.to_string())
        .unwrap_or_else(|_| "-".into());
    let (method, path) = (req.method().clone(), req.uri().path().to_string());
    let response = next.run(req).await;
    tracing::info!(
        target: "audit",
        %actor,
        %method,
        %path,
        status = response.status().as_u16(),
    );
    response
}

/// Audit length plus read count: moves whenever persisted state changes.
fn change_mark(engine: &Engine) -> (usize, u64) {
    (
        engine.with_state(|st| st.audit_log().len()),
        engine.transfer_metrics(TimeWindow::all()).transmission,
    )
}

/// Writes a snapshot if anything changed since `last`; returns the new mark.
fn snapshot_if_changed(engine: &Engine, path: &Path, last: (usize, u64)) -> (usize, u64) {
    let mark = change_mark(engine);
    if mark != last {
        match engine.snapshot(path) {
            Ok(()) => tracing::info!(path = %path.display(), "snapshot written"),
            Err(e) => {
                tracing::error!(path = %path.display(), error = %e, "snapshot failed");
                return last;
            }
        }
    }
    mark
}

/// Builds the engine from `config`, restoring the snapshot in the data
/// directory if there is one.
pub fn open_engine(config: &ServerConfig) -> anyhow::Result<Arc<Engine>> {
    let engine = Arc::new(Engine::new(config.engine.clone()));
    if let Some(dir) = &config.data_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    if let Some(path) = config.snapshot_path().filter(|p| p.exists()) {
        engine
            .load(&path)
            .with_context(|| format!("loading snapshot {}", path.display()))?;
    }
    Ok(engine)
}

/// Runs the service until Ctrl-C, then writes a final snapshot.
pub async fn serve(config: ServerConfig) -> anyhow::Result<()> {
    let engine = open_engine(&config)?;
    let state = AppState::new(engine.clone(), config.tokens.clone());
    let listener = tokio::net::TcpListener::bind(config.bind)
        .await
        .with_context(|| format!("binding {}", config.bind))?;
    tracing::info!(addr = %listener.local_addr()?, "listening");

    let snapshot_path = config.snapshot_path();
    if let Some(path) = snapshot_path.clone() {
        let engine = engine.clone();
        let every = Duration::from_secs(config.snapshot_interval_secs.max(1));
        let start = change_mark(&engine);
        tokio::spawn(async move {
            let mut last = start;
            let mut ticker = tokio::time::interval(every);
            ticker.tick().await;
            loop {
                ticker.tick().await;
                let (e, p) = (engine.clone(), path.clone());
                last = tokio::task::spawn_blocking(move || snapshot_if_changed(&e, &p, last))
                    .await
                    .unwrap_or(last);
            }
        });
    }

    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await?;

    if let Some(path) = snapshot_path {
        let e = engine.clone();
        tokio::task::spawn_blocking(move || snapshot_if_changed(&e, &path, (usize::MAX, 0)))
            .await?;
    }
    Ok(())
}
