//! Route handlers. Each one authenticates, calls exactly one engine
//! operation, and serializes its result.

use std::collections::BTreeSet;
use std::io::BufReader;

use axum::body::Body;
use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use futures_util::TryStreamExt;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio_util::io::{StreamReader, SyncIoBridge};

use rexkb_core::interchange::{Envelope, Record};
use rexkb_core::{
    Action, ActorId, Decision, Direction, ElementDraft, ElementId, ElementType, ItemId,
    LinkDecision, LinkId, LinkType, NeighborFilter, PathologieTarget, TimeWindow, Timestamp,
    Weights,
};

use crate::error::ApiError;
use crate::AppState;

pub type ApiResult<T> = Result<T, ApiError>;

pub const DEFAULT_K: usize = 10;

/// The authenticated actor behind a request.
#[derive(Debug, Clone)]
pub struct Caller(pub ActorId);

impl FromRequestParts<AppState> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> ApiResult<Self> {
        state
            .authenticate(
                parts
                    .headers
                    .get(AUTHORIZATION)
                    .and_then(|v| v.to_str().ok()),
            )
            .map(Caller)
    }
}

/// JSON body whose syntax or shape errors become `MALFORMED`.
pub struct JsonBody<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> ApiResult<Self> {
        let bytes = axum::body::Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::malformed(e.body_text()))?;
        serde_json::from_slice(&bytes)
            .map(JsonBody)
            .map_err(|e| ApiError::malformed(e.to_string()))
    }
}

/// Query string whose errors become `INVALID_ARGUMENT`.
pub struct Params<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequestParts<S> for Params<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> ApiResult<Self> {
        Query::<T>::from_request_parts(parts, state)
            .await
            .map(|Query(v)| Params(v))
            .map_err(|e| ApiError::invalid(e.body_text()))
    }
}

fn envelope(record: Record) -> Json<Envelope> {
    Json(Envelope::new(record))
}

fn created<T: Serialize>(body: T) -> Response {
    (StatusCode::CREATED, Json(body)).into_response()
}

fn require_read(state: &AppState, caller: &ActorId, element_type: ElementType) -> ApiResult<()> {
    match state
        .engine
        .check_access(caller, Action::Read, element_type)?
    {
        Decision::Allow => Ok(()),
        Decision::Deny => Err(rexkb_core::KbError::PermissionDenied(format!(
            "{caller} may not read {element_type}"
        ))
        .into()),
    }
}

fn element_type_of(state: &AppState, id: &ElementId) -> ApiResult<ElementType> {
    Ok(state.engine.element(id)?.element_type)
}

// ---- elements ----

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewElement {
    pub element_type: ElementType,
    #[serde(flatten)]
    pub draft: ElementDraft,
}

pub async fn create_element(
    State(state): State<AppState>,
    Caller(caller): Caller,
    JsonBody(req): JsonBody<NewElement>,
) -> ApiResult<Response> {
    let el = state
        .engine
        .create_element(&caller, req.element_type, req.draft)?;
    Ok(created(Envelope::new(Record::Element(el))))
}

pub async fn get_element(
    State(state): State<AppState>,
    Caller(caller): Caller,
    Path(id): Path<ElementId>,
) -> ApiResult<Json<Envelope>> {
    require_read(&state, &caller, element_type_of(&state, &id)?)?;
    Ok(envelope(Record::Element(state.engine.read_element(&id)?)))
}

pub async fn validate_element(
    State(state): State<AppState>,
    Caller(caller): Caller,
    Path(id): Path<ElementId>,
) -> ApiResult<Json<Envelope>> {
    Ok(envelope(Record::Element(
        state.engine.validate_element(&caller, &id)?,
    )))
}

// ---- ontology ----

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewOntologyItem {
    pub label: String,
    #[serde(default)]
    pub parent: Option<ItemId>,
}

pub async fn create_ontology_item(
    State(state): State<AppState>,
    Caller(caller): Caller,
    JsonBody(req): JsonBody<NewOntologyItem>,
) -> ApiResult<Response> {
    let item = state
        .engine
        .add_ontology_item(&caller, &req.label, req.parent)?;
    Ok(created(Envelope::new(Record::OntologyItem(item))))
}

pub async fn ontology_ancestors(
    State(state): State<AppState>,
    Caller(_): Caller,
    Path(id): Path<ItemId>,
) -> ApiResult<Json<Vec<ItemId>>> {
    Ok(Json(state.engine.ontology_ancestors(&id)?))
}

// ---- links ----

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewLink {
    pub source: ElementId,
    pub target: ElementId,
    pub link_type: LinkType,
}

pub async fn propose_link(
    State(state): State<AppState>,
    Caller(caller): Caller,
    JsonBody(req): JsonBody<NewLink>,
) -> ApiResult<Response> {
    let link = state
        .engine
        .propose_link(&caller, &req.source, &req.target, req.link_type)?;
    Ok(created(Envelope::new(Record::Link(link))))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub decision: LinkDecision,
}

pub async fn decide_link(
    State(state): State<AppState>,
    Caller(caller): Caller,
    Path(id): Path<LinkId>,
    JsonBody(req): JsonBody<DecisionRequest>,
) -> ApiResult<Json<Envelope>> {
    Ok(envelope(Record::Link(state.engine.decide_link(
        &caller,
        &id,
        req.decision,
    )?)))
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct NeighborQuery {
    /// Comma-separated link type names.
    pub link_types: Option<String>,
    /// `out` (default), `in` or `both`.
    pub direction: Option<String>,
    #[serde(default)]
    pub include_proposed: bool,
}

impl NeighborQuery {
    pub fn filter(&self) -> ApiResult<NeighborFilter> {
        let link_types = match &self.link_types {
            None => None,
            Some(s) => Some(
                s.split(',')
                    .filter(|t| !t.trim().is_empty())
                    .map(|t| t.trim().parse::<LinkType>())
                    .collect::<Result<BTreeSet<_>, _>>()?,
            ),
        };
        let direction = match self
            .direction
            .as_deref()
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            None | Some("out") => Direction::Out,
            Some("in") => Direction::In,
            Some("both") => Direction::Both,
            Some(other) => return Err(ApiError::invalid(format!("unknown direction {other:?}"))),
        };
        Ok(NeighborFilter {
            link_types,
            direction,
            include_proposed: self.include_proposed,
        })
    }
}

pub async fn neighbors(
    State(state): State<AppState>,
    Caller(caller): Caller,
    Path(id): Path<ElementId>,
    Params(q): Params<NeighborQuery>,
) -> ApiResult<Response> {
    require_read(&state, &caller, element_type_of(&state, &id)?)?;
    Ok(Json(state.engine.neighbors(&id, &q.filter()?)?).into_response())
}

// ---- retrieval ----

#[derive(Debug, Clone, Default, Deserialize)]
pub struct KQuery {
    pub k: Option<usize>,
}

pub async fn dossier(
    State(state): State<AppState>,
    Caller(caller): Caller,
    Path(id): Path<ElementId>,
) -> ApiResult<Response> {
    require_read(&state, &caller, ElementType::FaitTechnique)?;
    Ok(Json(state.engine.assemble_dossier(&id)?).into_response())
}

pub async fn similar(
    State(state): State<AppState>,
    Caller(caller): Caller,
    Path(id): Path<ElementId>,
    Params(q): Params<KQuery>,
) -> ApiResult<Response> {
    require_read(&state, &caller, ElementType::FaitTechnique)?;
    let k = q.k.unwrap_or(DEFAULT_K);
    Ok(Json(state.engine.similar_events(&id, k)?).into_response())
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct SuggestQuery {
    pub k: Option<usize>,
    pub text: Option<f64>,
    pub tag: Option<f64>,
    pub prior: Option<f64>,
}

impl SuggestQuery {
    /// Per-request weights; unspecified components keep the configured value.
    pub fn weights(&self, default: Weights) -> Option<Weights> {
        if self.text.is_none() && self.tag.is_none() && self.prior.is_none() {
            return None;
        }
        Some(Weights::new(
            self.text.unwrap_or(default.text),
            self.tag.unwrap_or(default.tag),
            self.prior.unwrap_or(default.prior),
        ))
    }
}

pub async fn suggestions(
    State(state): State<AppState>,
    Caller(caller): Caller,
    Path(id): Path<ElementId>,
    Params(q): Params<SuggestQuery>,
) -> ApiResult<Response> {
    require_read(&state, &caller, element_type_of(&state, &id)?)?;
    let weights = q.weights(state.engine.config().suggester.weights);
    let k = q.k.unwrap_or(DEFAULT_K);
    Ok(Json(state.engine.suggest_links(&id, k, weights)?).into_response())
}

// ---- workflow ----

pub async fn declare_fait(
    State(state): State<AppState>,
    Caller(caller): Caller,
    JsonBody(draft): JsonBody<ElementDraft>,
) -> ApiResult<Response> {
    let (el, st) = state.engine.declare_fait(&caller, draft)?;
    Ok(created(vec![
        Envelope::new(Record::Element(el)),
        Envelope::new(Record::WorkflowState(st)),
    ]))
}

pub async fn start_analysis(
    State(state): State<AppState>,
    Caller(caller): Caller,
    Path(id): Path<ElementId>,
) -> ApiResult<Json<Envelope>> {
    Ok(envelope(Record::WorkflowState(
        state.engine.start_analysis(&caller, &id)?,
    )))
}

pub async fn issue_avis(
    State(state): State<AppState>,
    Caller(caller): Caller,
    Path(id): Path<ElementId>,
    JsonBody(draft): JsonBody<ElementDraft>,
) -> ApiResult<Response> {
    let out = state.engine.issue_avis(&caller, &id, draft)?;
    Ok(created(vec![
        Envelope::new(Record::Element(out.avis)),
        Envelope::new(Record::Link(out.link)),
        Envelope::new(Record::WorkflowState(out.fait)),
    ]))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsolidationRequest {
    pub avis: Vec<ElementId>,
    pub pathologie: PathologieTarget,
}

pub async fn consolidate(
    State(state): State<AppState>,
    Caller(caller): Caller,
    JsonBody(req): JsonBody<ConsolidationRequest>,
) -> ApiResult<Response> {
    let out = state
        .engine
        .consolidate(&caller, &req.avis, req.pathologie)?;
    let mut records = vec![Envelope::new(Record::Element(out.pathologie))];
    records.extend(
        out.links
            .into_iter()
            .map(|l| Envelope::new(Record::Link(l))),
    );
    records.extend(
        out.faits
            .into_iter()
            .map(|f| Envelope::new(Record::WorkflowState(f))),
    );
    Ok(created(records))
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct MetricsQuery {
    pub from: Option<Timestamp>,
    pub to: Option<Timestamp>,
}

pub async fn transfer_metrics(
    State(state): State<AppState>,
    Caller(_): Caller,
    Params(q): Params<MetricsQuery>,
) -> ApiResult<Response> {
    let window = TimeWindow {
        from: q.from,
        to: q.to,
    };
    Ok(Json(state.engine.transfer_metrics(window)).into_response())
}

// ---- admin ----

/// Streams the request body into the importer on a blocking thread, so a
/// large import neither buffers in memory nor stalls the async workers.
pub async fn import(
    State(state): State<AppState>,
    Caller(caller): Caller,
    body: Body,
) -> ApiResult<Response> {
    let engine = state.engine.clone();
    // refuse early, before reading any of the body
    engine.require_admin(&caller)?;
    let stream = body.into_data_stream().map_err(std::io::Error::other);
    let reader = SyncIoBridge::new(StreamReader::new(stream));
    let report =
        tokio::task::spawn_blocking(move || engine.bulk_import(&caller, BufReader::new(reader)))
            .await
            .map_err(|e| {
                ApiError::new(
                    StatusCode::INTERNAL_SERVER_ERROR,
                    "IO_FAILURE",
                    e.to_string(),
                )
            })??;
    tracing::info!(
        target: "audit",
        accepted = report.total_accepted(),
        rejected = report.rejected.len(),
        "import finished"
    );
    Ok(Json(report).into_response())
}

pub async fn export(State(state): State<AppState>, Caller(caller): Caller) -> ApiResult<Response> {
    let engine = state.engine.clone();
    let text = tokio::task::spawn_blocking(move || engine.export_string(&caller))
        .await
        .map_err(|e| {
            ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "IO_FAILURE",
                e.to_string(),
            )
        })??;
    Ok(([(CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

pub async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", "no such endpoint")
}
