use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use cultiverse_core::analytics::{co_occurrence, element_stats, norms_for_element, paintings_for_element};
use cultiverse_core::norm::category_census;
use cultiverse_core::prompt::{
    build_image_prompt, build_inference_prompt, build_qa_prompt, build_translation_prompt, build_verification_prompt,
};
use cultiverse_core::response::{parse_inference_response, parse_translation_reply, parse_verdict_response};
use cultiverse_core::{
    Annotation, AnnotationId, AuditEntry, BoundingBox, CoOccurrenceEdge, CulturalNorm, Element, ElementCategory,
    ElementId, ElementStats, Facet, FacetSet, InferenceItem, NormId, Painting, PaintingId, QaQuestion, SourceNorm,
    TargetNorm, TranslationRequest, UserBackground, Verdict,
};
use serde::{Deserialize, Serialize};

use super::{thread_id, ApiError, AppState};
use crate::gateway::{ConversationThread, ImageResult, Scope, Turn};
use crate::store::{Event, HistoryEvent, Session, StoreState, TranslationRecord};

type Shared = State<Arc<AppState>>;
type Body<T> = Result<Json<T>, JsonRejection>;
type Reply<T> = Result<Json<T>, ApiError>;

pub(super) fn routes() -> Router<Arc<AppState>> {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/qa", post(qa))
        .route("/sessions/{id}/threads/{scope}/turns/{turn_id}", delete(delete_turn))
        .route("/sessions/{id}/image", post(image))
        .route("/sessions/{id}/images/{image_id}/regenerate", post(regenerate_image))
        .route("/sessions/{id}/images/{image_id}", delete(delete_image))
        .route("/sessions/{id}/translate", post(translate))
        .route("/sessions/{id}/translations/{translation_id}", get(get_translation))
        .route("/sessions/{id}/verify", post(verify))
        .route("/sessions/{id}/infer", post(infer))
        .route("/elements", get(list_elements))
        .route("/elements/{id}", get(get_element))
        .route("/elements/{id}/paintings", get(element_paintings))
        .route("/elements/{id}/norms", get(element_norms))
        .route("/norms/{id}", get(get_norm))
        .route("/paintings", get(list_paintings))
        .route("/paintings/{id}", get(get_painting))
        .route("/paintings/{id}/stats", get(painting_stats))
        .route("/paintings/{id}/annotations", post(add_annotation))
        .route("/annotations/{id}", delete(remove_annotation))
        .route("/analytics/frequency", get(frequency))
        .route("/analytics/co-occurrence", get(edges))
        .route("/analytics/census", get(census))
        .route("/audit", get(audit))
        .route("/artifacts/images/{name}", get(artifact))
}

// ---- shared helpers -------------------------------------------------------

impl AppState {
    fn session(&self, id: &str) -> Result<Session, ApiError> {
        self.store().state().sessions.get(id).cloned().ok_or_else(|| ApiError::unknown_session(id))
    }

    fn source_norm(&self, id: &NormId) -> Result<SourceNorm, ApiError> {
        let ds = self.dataset();
        let norm = ds.norm(id).cloned().ok_or_else(|| ApiError::unknown_norm(id.as_str()))?;
        let element = ds.elements.get(&norm.element).cloned().expect("validated dataset resolves norm elements");
        Ok(SourceNorm { norm, element })
    }

    fn thread(&self, session_id: &str, scope: Scope) -> ConversationThread {
        let id = thread_id(session_id, scope);
        self.store().state().threads.get(&id).cloned().unwrap_or_else(|| ConversationThread::new(id, scope))
    }

    /// Commits the events produced by `build` for session `sid` as one
    /// record. When `focus` names a norm whose element differs from the
    /// session's current element, an element switch is recorded first.
    fn commit_session<R>(
        &self,
        sid: &str,
        focus: Option<&SourceNorm>,
        build: impl FnOnce(&StoreState) -> (Vec<Event>, R),
    ) -> Result<R, ApiError> {
        let mut store = self.store();
        let (events, out) = {
            let state = store.state();
            let session = state.sessions.get(sid).ok_or_else(|| ApiError::unknown_session(sid))?;
            let mut events = Vec::new();
            if let Some(src) = focus {
                if session.current_element.as_ref() != Some(&src.element.id) {
                    events.push(Event::History {
                        session_id: sid.to_string(),
                        event: HistoryEvent::ElementSelected {
                            element: src.element.id.clone(),
                            norm_id: src.norm.id.clone(),
                        },
                    });
                }
            }
            let (more, out) = build(state);
            events.extend(more);
            (events, out)
        };
        store.commit(events)?;
        Ok(out)
    }
}

fn history(sid: &str, event: HistoryEvent) -> Event {
    Event::History { session_id: sid.to_string(), event }
}

fn thread_saved(sid: &str, thread: ConversationThread) -> Event {
    Event::ThreadSaved { session_id: sid.to_string(), thread }
}

// ---- health ---------------------------------------------------------------

async fn healthz(State(st): Shared) -> Json<serde_json::Value> {
    let ds = st.dataset();
    Json(serde_json::json!({
        "status": "ok",
        "name": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "dataset": {
            "elements": ds.elements.len(),
            "norms": ds.norms.len(),
            "paintings": ds.paintings.len(),
            "annotations": ds.annotations().count(),
        },
    }))
}

// ---- sessions -------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct SessionBody {
    background: UserBackground,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub session: Session,
    pub threads: BTreeMap<Scope, ConversationThread>,
    pub translations: Vec<TranslationRecord>,
    pub images: Vec<ImageResult>,
}

async fn create_session(State(st): Shared, body: Body<SessionBody>) -> Result<impl IntoResponse, ApiError> {
    let Json(body) = body?;
    body.background.validate()?;
    let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0);
    let mut store = st.store();
    let id = store.state().next_session_id();
    let session = Session {
        id: id.clone(),
        background: body.background,
        created_at,
        threads: BTreeMap::new(),
        current_element: None,
        images: Vec::new(),
        translations: Vec::new(),
        history: Vec::new(),
    };
    store.commit(vec![Event::SessionCreated { session }])?;
    Ok((StatusCode::CREATED, Json(serde_json::json!({ "session_id": id }))))
}

async fn get_session(State(st): Shared, Path(id): Path<String>) -> Reply<SessionView> {
    let store = st.store();
    let state = store.state();
    let session = state.sessions.get(&id).cloned().ok_or_else(|| ApiError::unknown_session(&id))?;
    let threads = session
        .threads
        .iter()
        .filter_map(|(scope, tid)| state.threads.get(tid).map(|t| (*scope, t.clone())))
        .collect();
    let translations = session.translations.iter().filter_map(|t| state.translations.get(t).cloned()).collect();
    let images = session.images.iter().filter_map(|i| state.images.get(i).cloned()).collect();
    Ok(Json(SessionView { session, threads, translations, images }))
}

// ---- source exploration ---------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QaBody {
    pub norm_id: NormId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaReply {
    pub thread_id: String,
    pub turn: Turn,
}

async fn qa(State(st): Shared, Path(sid): Path<String>, body: Body<QaBody>) -> Reply<QaReply> {
    let Json(body) = body?;
    let question = match (body.preset, body.question) {
        (Some(p), None) => QaQuestion::Preset(p),
        (None, Some(q)) => QaQuestion::Free(q),
        _ => return Err(ApiError::invalid_body("give exactly one of preset or question")),
    };
    let session = st.session(&sid)?;
    let source = st.source_norm(&body.norm_id)?;
    let envelope = build_qa_prompt(&session.background, &source, &question)?;

    let scope = Scope::SourceExploration;
    let _guard = st.lock_thread(&thread_id(&sid, scope)).await;
    let mut thread = st.thread(&sid, scope);
    st.gateway.chat(&mut thread, &envelope).await?;
    let turn = thread.turns.last().cloned().expect("chat appended a turn");
    let thread_id = thread.id.clone();
    st.commit_session(&sid, Some(&source), |_| {
        let answered = HistoryEvent::QuestionAnswered {
            norm_id: source.norm.id.clone(),
            thread_id: thread.id.clone(),
            turn_id: turn.id.clone(),
        };
        (vec![thread_saved(&sid, thread), history(&sid, answered)], ())
    })?;
    Ok(Json(QaReply { thread_id, turn }))
}

async fn delete_turn(
    State(st): Shared,
    Path((sid, scope, turn_id)): Path<(String, String, String)>,
) -> Reply<ConversationThread> {
    let scope: Scope = scope.parse().map_err(|_| ApiError::unknown_scope(&scope))?;
    st.session(&sid)?;
    let _guard = st.lock_thread(&thread_id(&sid, scope)).await;
    let mut thread = st.thread(&sid, scope);
    thread.delete_turn(&turn_id)?;
    st.commit_session(&sid, None, |_| {
        let deleted = HistoryEvent::TurnDeleted { thread_id: thread.id.clone(), turn_id: turn_id.clone() };
        (vec![thread_saved(&sid, thread.clone()), history(&sid, deleted)], ())
    })?;
    Ok(Json(thread))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageBody {
    pub norm_id: NormId,
    pub task: String,
}

async fn image(State(st): Shared, Path(sid): Path<String>, body: Body<ImageBody>) -> Result<impl IntoResponse, ApiError> {
    let Json(body) = body?;
    let session = st.session(&sid)?;
    let source = st.source_norm(&body.norm_id)?;
    let envelope = build_image_prompt(&session.background, &source, &body.task)?;
    let result = st.gateway.generate_image(&envelope).await?;
    let out = result.clone();
    st.commit_session(&sid, Some(&source), |_| {
        let generated = HistoryEvent::ImageGenerated {
            norm_id: Some(source.norm.id.clone()),
            image_id: result.id.clone(),
            index: result.index,
        };
        (vec![Event::ImageSaved { session_id: sid.clone(), image: result }, history(&sid, generated)], ())
    })?;
    Ok((StatusCode::CREATED, Json(serde_json::json!({ "image": out }))))
}

fn owned_image(st: &AppState, sid: &str, image_id: &str) -> Result<(), ApiError> {
    let session = st.session(sid)?;
    if session.images.iter().any(|i| i == image_id) {
        Ok(())
    } else {
        Err(crate::gateway::GatewayError::UnknownResult(image_id.to_string()).into())
    }
}

async fn regenerate_image(
    State(st): Shared,
    Path((sid, image_id)): Path<(String, String)>,
) -> Reply<serde_json::Value> {
    owned_image(&st, &sid, &image_id)?;
    let result = st.gateway.regenerate(&image_id).await?;
    let out = result.clone();
    st.commit_session(&sid, None, |_| {
        let generated = HistoryEvent::ImageGenerated { norm_id: None, image_id: result.id.clone(), index: result.index };
        (vec![Event::ImageSaved { session_id: sid.clone(), image: result }, history(&sid, generated)], ())
    })?;
    Ok(Json(serde_json::json!({ "image": out })))
}

async fn delete_image(
    State(st): Shared,
    Path((sid, image_id)): Path<(String, String)>,
) -> Result<StatusCode, ApiError> {
    owned_image(&st, &sid, &image_id)?;
    st.gateway.delete_image(&image_id)?;
    st.commit_session(&sid, None, |_| {
        let deleted = HistoryEvent::ImageDeleted { image_id: image_id.clone() };
        (vec![Event::ImageDeleted { session_id: sid.clone(), image_id: image_id.clone() }, history(&sid, deleted)], ())
    })?;
    Ok(StatusCode::NO_CONTENT)
}

async fn artifact(State(st): Shared, Path(name): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let valid = !name.is_empty() && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'.') && !name.starts_with('.');
    if !valid {
        return Err(ApiError::unknown_artifact(&name));
    }
    let path = st.gateway.artifact_root().join("images").join(&name);
    let bytes = tokio::fs::read(&path).await.map_err(|_| ApiError::unknown_artifact(&name))?;
    let mime = match path.extension().and_then(|e| e.to_str()) {
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes))
}

// ---- transfer and extrapolation -------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranslateBody {
    pub norm_id: NormId,
    pub conditions: FacetSet,
    pub questions: FacetSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslateReply {
    pub translation_id: String,
    pub target_culture: String,
    pub target_norms: Vec<TargetNorm>,
    pub raw: String,
}

async fn translate(State(st): Shared, Path(sid): Path<String>, body: Body<TranslateBody>) -> Reply<TranslateReply> {
    let Json(body) = body?;
    let session = st.session(&sid)?;
    let source = st.source_norm(&body.norm_id)?;
    let request = TranslationRequest::new(session.background, source.clone(), body.conditions, body.questions)?;
    let envelope = build_translation_prompt(&request)?;

    let scope = Scope::Transfer;
    let _guard = st.lock_thread(&thread_id(&sid, scope)).await;
    let mut thread = st.thread(&sid, scope);
    let raw = st.gateway.chat(&mut thread, &envelope).await?;
    match parse_translation_reply(&raw, request.questions) {
        Ok(parsed) => st.commit_session(&sid, Some(&source), |state| {
            let record = TranslationRecord {
                id: state.next_translation_id(),
                session_id: sid.clone(),
                norm_id: source.norm.id.clone(),
                conditions: request.conditions,
                questions: request.questions,
                prompt_hash: envelope.content_hash.clone(),
                target_culture: parsed.target_culture,
                target_norms: parsed.norms,
                raw: raw.clone(),
            };
            let reply = TranslateReply {
                translation_id: record.id.clone(),
                target_culture: record.target_culture.clone(),
                target_norms: record.target_norms.clone(),
                raw: raw.clone(),
            };
            let issued = HistoryEvent::TranslationIssued { translation_id: record.id.clone() };
            (
                vec![thread_saved(&sid, thread), Event::TranslationSaved { translation: record }, history(&sid, issued)],
                Json(reply),
            )
        }),
        Err(e) => Err(reject(&st, &sid, &source, thread, scope, &raw, e)),
    }
}

/// Persists an exchange whose reply did not parse and builds the 422.
fn reject(
    st: &AppState,
    sid: &str,
    source: &SourceNorm,
    thread: ConversationThread,
    scope: Scope,
    raw: &str,
    e: cultiverse_core::ParseError,
) -> ApiError {
    let committed = st.commit_session(sid, Some(source), |_| {
        let rejected = HistoryEvent::ResponseRejected {
            scope,
            norm_id: source.norm.id.clone(),
            raw: raw.to_string(),
            error: e.to_string(),
        };
        (vec![thread_saved(sid, thread), history(sid, rejected)], ())
    });
    match committed {
        Ok(()) => ApiError::malformed_response(&e, raw),
        Err(storage) => storage,
    }
}

async fn get_translation(
    State(st): Shared,
    Path((sid, tid)): Path<(String, String)>,
) -> Reply<TranslationRecord> {
    let store = st.store();
    let state = store.state();
    if !state.sessions.contains_key(&sid) {
        return Err(ApiError::unknown_session(&sid));
    }
    state
        .translations
        .get(&tid)
        .filter(|t| t.session_id == sid)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::unknown_translation(&tid))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyBody {
    pub translation_id: String,
    #[serde(default)]
    pub target_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReply {
    pub translation_id: String,
    pub target_index: usize,
    pub verdict: Verdict,
    pub raw: String,
}

async fn verify(State(st): Shared, Path(sid): Path<String>, body: Body<VerifyBody>) -> Reply<VerifyReply> {
    let Json(body) = body?;
    let session = st.session(&sid)?;
    let record = st
        .store()
        .state()
        .translations
        .get(&body.translation_id)
        .filter(|t| t.session_id == sid)
        .cloned()
        .ok_or_else(|| ApiError::unknown_translation(&body.translation_id))?;
    let target = record
        .target_norms
        .get(body.target_index)
        .ok_or_else(|| ApiError::unknown_target(body.target_index, record.target_norms.len()))?;
    let source = st.source_norm(&record.norm_id)?;
    let request = TranslationRequest::new(session.background.clone(), source.clone(), record.conditions, record.questions)?;
    let envelope = build_verification_prompt(&session.background, &source, &request, target)?;

    let scope = Scope::Transfer;
    let _guard = st.lock_thread(&thread_id(&sid, scope)).await;
    let mut thread = st.thread(&sid, scope);
    let raw = st.gateway.chat(&mut thread, &envelope).await?;
    match parse_verdict_response(&raw) {
        Ok(verdict) => {
            let reply = VerifyReply {
                translation_id: record.id.clone(),
                target_index: body.target_index,
                verdict: verdict.clone(),
                raw: raw.clone(),
            };
            st.commit_session(&sid, Some(&source), |_| {
                let received = HistoryEvent::VerdictReceived {
                    translation_id: record.id.clone(),
                    target_index: body.target_index,
                    verdict,
                    raw,
                };
                (vec![thread_saved(&sid, thread), history(&sid, received)], ())
            })?;
            Ok(Json(reply))
        }
        Err(e) => Err(reject(&st, &sid, &source, thread, scope, &raw, e)),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferBody {
    pub norm_id: NormId,
    #[serde(default = "default_anchor")]
    pub anchor: Facet,
}

fn default_anchor() -> Facet {
    Facet::Symbol
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferReply {
    pub anchor: Facet,
    pub items: Vec<InferenceItem>,
    pub raw: String,
}

async fn infer(State(st): Shared, Path(sid): Path<String>, body: Body<InferBody>) -> Reply<InferReply> {
    let Json(body) = body?;
    let session = st.session(&sid)?;
    let source = st.source_norm(&body.norm_id)?;
    let envelope = build_inference_prompt(&session.background, &source, body.anchor)?;

    let scope = Scope::Extrapolation;
    let _guard = st.lock_thread(&thread_id(&sid, scope)).await;
    let mut thread = st.thread(&sid, scope);
    let raw = st.gateway.chat(&mut thread, &envelope).await?;
    match parse_inference_response(&raw) {
        Ok(items) => {
            let reply = InferReply { anchor: body.anchor, items: items.clone(), raw: raw.clone() };
            st.commit_session(&sid, Some(&source), |_| {
                let received = HistoryEvent::InferenceReceived {
                    norm_id: source.norm.id.clone(),
                    anchor: body.anchor,
                    items,
                    raw,
                };
                (vec![thread_saved(&sid, thread), history(&sid, received)], ())
            })?;
            Ok(Json(reply))
        }
        Err(e) => Err(reject(&st, &sid, &source, thread, scope, &raw, e)),
    }
}

// ---- dataset browsing -----------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementSummary {
    #[serde(flatten)]
    pub element: Element,
    pub frequency: usize,
    pub norm_count: usize,
}

fn summarize(ds: &cultiverse_core::Dataset, e: &Element) -> ElementSummary {
    ElementSummary {
        element: e.clone(),
        frequency: ds.occurrence().frequency(&e.id),
        norm_count: ds.norms.iter().filter(|n| n.element == e.id).count(),
    }
}

async fn list_elements(State(st): Shared) -> Json<Vec<ElementSummary>> {
    let ds = st.dataset();
    Json(ds.elements.iter().map(|e| summarize(&ds, e)).collect())
}

async fn get_element(State(st): Shared, Path(id): Path<ElementId>) -> Reply<ElementSummary> {
    let ds = st.dataset();
    let e = ds.elements.get(&id).ok_or_else(|| cultiverse_core::AnalyticsError::UnknownElement(id.clone()))?;
    Ok(Json(summarize(&ds, e)))
}

async fn element_paintings(State(st): Shared, Path(id): Path<ElementId>) -> Reply<Vec<PaintingId>> {
    Ok(Json(paintings_for_element(&st.dataset(), &id)?))
}

async fn element_norms(State(st): Shared, Path(id): Path<ElementId>) -> Reply<Vec<CulturalNorm>> {
    Ok(Json(norms_for_element(&st.dataset(), &id)?))
}

async fn get_norm(State(st): Shared, Path(id): Path<NormId>) -> Reply<CulturalNorm> {
    st.dataset().norm(&id).cloned().map(Json).ok_or_else(|| ApiError::unknown_norm(id.as_str()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaintingSummary {
    pub id: PaintingId,
    pub title_zh: String,
    pub title_en: String,
    pub artist: String,
    pub dynasty: String,
    pub elements: Vec<ElementId>,
}

async fn list_paintings(State(st): Shared) -> Json<Vec<PaintingSummary>> {
    let ds = st.dataset();
    Json(
        ds.paintings
            .values()
            .map(|p| PaintingSummary {
                id: p.id.clone(),
                title_zh: p.title_zh.clone(),
                title_en: p.title_en.clone(),
                artist: p.artist.clone(),
                dynasty: p.dynasty.clone(),
                elements: p.element_set().into_iter().cloned().collect(),
            })
            .collect(),
    )
}

async fn get_painting(State(st): Shared, Path(id): Path<PaintingId>) -> Reply<Painting> {
    st.dataset()
        .painting(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| cultiverse_core::AnalyticsError::UnknownPainting(id).into())
}

async fn painting_stats(State(st): Shared, Path(id): Path<PaintingId>) -> Reply<Vec<ElementStats>> {
    Ok(Json(element_stats(&st.dataset(), &id)?))
}

async fn frequency(State(st): Shared) -> Json<BTreeMap<ElementId, usize>> {
    Json(st.dataset().occurrence().frequencies())
}

async fn edges(State(st): Shared) -> Json<Vec<CoOccurrenceEdge>> {
    Json(co_occurrence(&st.dataset()))
}

async fn census(State(st): Shared) -> Json<BTreeMap<ElementCategory, usize>> {
    Json(category_census(&st.dataset().elements))
}

async fn audit(State(st): Shared) -> Json<Vec<AuditEntry>> {
    Json(st.dataset().audit_log().to_vec())
}

// ---- annotations ----------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationBody {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub element: ElementId,
    /// Session whose history records the edit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
}

#[derive(Debug, Deserialize)]
struct SessionQuery {
    session_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedAnnotation {
    pub annotation: Annotation,
    pub flagged: bool,
}

async fn add_annotation(
    State(st): Shared,
    Path(pid): Path<PaintingId>,
    body: Body<AnnotationBody>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(body) = body?;
    if let Some(sid) = &body.session_id {
        st.session(sid)?;
    }
    let mut ds = st.dataset_mut();
    let annotation = ds.add_manual_annotation(&pid, body.bbox, &body.element)?;
    let mut events = vec![Event::AnnotationAdded { annotation: annotation.clone() }];
    if let Some(sid) = &body.session_id {
        events.push(history(sid, HistoryEvent::AnnotationAdded { annotation_id: annotation.id.clone() }));
    }
    if let Err(e) = st.store().commit(events) {
        ds.remove_annotation(&annotation.id).ok();
        return Err(e.into());
    }
    Ok((StatusCode::CREATED, Json(annotation)))
}

async fn remove_annotation(
    State(st): Shared,
    Path(id): Path<AnnotationId>,
    query: Result<Query<SessionQuery>, QueryRejection>,
) -> Reply<RemovedAnnotation> {
    let Query(query) = query?;
    if let Some(sid) = &query.session_id {
        st.session(sid)?;
    }
    let mut ds = st.dataset_mut();
    let annotation = ds.remove_annotation(&id)?;
    let flagged = ds.audit_log().last().is_some_and(|a| a.flagged);
    let mut events = vec![Event::AnnotationRemoved { annotation_id: id.clone() }];
    if let Some(sid) = &query.session_id {
        events.push(history(sid, HistoryEvent::AnnotationRemoved { annotation_id: id.clone(), flagged }));
    }
    if let Err(e) = st.store().commit(events) {
        ds.restore_annotation(annotation).ok();
        return Err(e.into());
    }
    Ok(Json(RemovedAnnotation { annotation, flagged }))
}
