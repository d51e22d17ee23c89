//! HTTP API over a finished snapshot and its label journal.
//!
//! The snapshot is immutable and shared by every handler. Labels are the
//! only mutable state: reads take a shared lock on the store, and all writes
//! go through one writer task, so readers always see a whole store version.
//! Every JSON body carries the snapshot's `run_id`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, put};
use axum::{Json, Router};
use horizon_core::layout::KnnGraph;
use horizon_core::lda::TopicDiagnostics;
use horizon_core::lq::{compute_lq, quadrant_classify, ActivityMatrix, LqTable};
use horizon_core::text::RawDocument;
use horizon_core::Matrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{mpsc, oneshot, RwLock};

use crate::error::{Result, ScanError};
use crate::labels::{LabelDraft, LabelError, LabelState, LabelStore, StoreError, TopicLabelRecord};
use crate::mallet;
use crate::pipeline::{self, RunInfo, Workspace};
use crate::report::emerging_rows;
use crate::tables::{self, FitRow};

pub const PORT_ENV: &str = "SCAN_PORT";
pub const DEFAULT_PORT: u16 = 8080;
pub const ANALYST_HEADER: &str = "x-analyst-id";
pub const DEFAULT_DOC_LIMIT: usize = 50;

/// Read-only artifacts of one run.
pub struct Snapshot {
    pub info: RunInfo,
    pub docs: Vec<RawDocument>,
    pub doc_topic: Matrix,
    pub vocabulary: Vec<String>,
    pub term_topic: Matrix,
    pub diagnostics: Vec<Option<TopicDiagnostics>>,
    pub fits: Vec<FitRow>,
    pub sizes: Vec<f64>,
    pub coords: Vec<[f64; 2]>,
    pub knn: KnnGraph,
    pub activity: BTreeMap<String, ActivityMatrix>,
    pub fields: BTreeMap<u32, String>,
}

impl Snapshot {
    pub fn load(dir: &Path) -> Result<Self> {
        let ws = Workspace::new(dir);
        let info: RunInfo = pipeline::read_json(&ws.path(pipeline::RUN_FILE))?;
        let m = pipeline::load_model(&ws)?;
        let docs = pipeline::load_aligned_docs(&ws, &m)?;
        let k = m.term_topic.rows();
        if k != info.topics {
            return Err(ScanError::Input(format!("run record lists {} topics but the model has {k}", info.topics)));
        }
        let mut diagnostics = vec![None; k];
        for d in mallet::parse_diagnostics(&ws.diagnostics())? {
            if let Some(slot) = diagnostics.get_mut(d.topic_id as usize) {
                *slot = Some(d);
            }
        }
        let fits = pipeline::read_fits(&ws)?;
        if fits.len() != k || fits.iter().enumerate().any(|(i, f)| f.topic_id as usize != i) {
            return Err(ScanError::Input("fits table must list every topic once, in order".into()));
        }
        let fields = if ws.fields().is_file() { tables::read_fields(&ws.fields())? } else { BTreeMap::new() };
        Ok(Self {
            sizes: m.doc_topic.col_sums(),
            coords: tables::read_coords(&ws.coords(), k)?,
            knn: tables::read_knn(&ws.knn(), k)?,
            activity: pipeline::read_activity(&ws.activity())?,
            info,
            docs,
            doc_topic: m.doc_topic,
            vocabulary: m.vocabulary,
            term_topic: m.term_topic,
            diagnostics,
            fits,
            fields,
        })
    }

    pub fn num_topics(&self) -> usize {
        self.term_topic.rows()
    }
}

enum WriteOp {
    Label { topic_id: u32, draft: LabelDraft, author: String },
    AddSupertopic(String),
    RemoveSupertopic(String),
}

enum WriteOutcome {
    Label(TopicLabelRecord),
    Done,
}

type WriteReply = oneshot::Sender<std::result::Result<WriteOutcome, StoreError>>;

#[derive(Clone)]
pub struct AppState {
    snapshot: Arc<Snapshot>,
    labels: Arc<RwLock<LabelStore>>,
    writer: mpsc::Sender<(WriteOp, WriteReply)>,
}

impl AppState {
    /// Must be called inside a Tokio runtime: spawns the writer task.
    pub fn new(snapshot: Snapshot, store: LabelStore) -> Self {
        let labels = Arc::new(RwLock::new(store));
        let (tx, mut rx) = mpsc::channel::<(WriteOp, WriteReply)>(64);
        let writer_labels = labels.clone();
        tokio::spawn(async move {
            while let Some((op, reply)) = rx.recv().await {
                let mut store = writer_labels.write().await;
                let outcome = match op {
                    WriteOp::Label { topic_id, draft, author } => {
                        store.put_label(topic_id, draft, &author, chrono::Utc::now()).map(WriteOutcome::Label)
                    }
                    WriteOp::AddSupertopic(name) => store.add_supertopic(&name).map(|_| WriteOutcome::Done),
                    WriteOp::RemoveSupertopic(name) => store.remove_supertopic(&name).map(|_| WriteOutcome::Done),
                };
                drop(store);
                let _ = reply.send(outcome);
            }
        });
        Self { snapshot: Arc::new(snapshot), labels, writer: tx }
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let snapshot = Snapshot::load(dir)?;
        let journal = Workspace::new(dir).journal();
        let store = LabelStore::open(&journal, snapshot.num_topics())?;
        Ok(Self::new(snapshot, store))
    }

    async fn write(&self, op: WriteOp) -> std::result::Result<WriteOutcome, ApiError> {
        let (tx, rx) = oneshot::channel();
        self.writer.send((op, tx)).await.map_err(|_| ApiError::internal("label writer stopped"))?;
        rx.await.map_err(|_| ApiError::internal("label writer dropped the request"))?.map_err(ApiError::from)
    }

    fn run_id(&self) -> &str {
        &self.snapshot.info.run_id
    }
}

pub struct ApiError {
    status: StatusCode,
    message: String,
    run_id: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into(), run_id: None }
    }
    fn bad_request(m: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, m)
    }
    fn not_found(m: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, m)
    }
    fn internal(m: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, m)
    }
    fn with_run(mut self, id: &str) -> Self {
        self.run_id = Some(id.to_string());
        self
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Label(LabelError::UnknownTopic(_)) => Self::not_found(e.to_string()),
            StoreError::Label(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
            StoreError::Scan(_) => Self::internal(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "run_id": self.run_id, "error": self.message }))).into_response()
    }
}

type ApiResult = std::result::Result<Response, ApiError>;

/// Serializes `body` and adds the run id.
fn reply<T: Serialize>(state: &AppState, status: StatusCode, body: T) -> ApiResult {
    let mut v = serde_json::to_value(body).map_err(|e| ApiError::internal(e.to_string()))?;
    match v.as_object_mut() {
        Some(obj) => {
            obj.insert("run_id".into(), Value::String(state.run_id().to_string()));
        }
        None => return Err(ApiError::internal("response body is not an object")),
    }
    Ok((status, Json(v)).into_response())
}

fn topic_index(state: &AppState, id: u32) -> std::result::Result<usize, ApiError> {
    let k = state.snapshot.num_topics();
    if (id as usize) < k {
        Ok(id as usize)
    } else {
        Err(ApiError::not_found(format!("topic {id} does not exist (model has {k} topics)")).with_run(state.run_id()))
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/map", get(get_map))
        .route("/topics/{id}", get(get_topic))
        .route("/topics/{id}/documents", get(get_documents))
        .route("/topics/{id}/label", put(put_label))
        .route("/supertopics", get(list_supertopics).post(add_supertopic))
        .route("/supertopics/{name}", delete(remove_supertopic))
        .route("/screen", get(get_screen))
        .route("/lq", get(get_lq))
        .with_state(state)
}

async fn healthz(State(s): State<AppState>) -> ApiResult {
    let info = &s.snapshot.info;
    reply(
        &s,
        StatusCode::OK,
        json!({
            "status": "ok",
            "documents": info.documents,
            "topics": info.topics,
            "year_first": info.year_first,
            "year_last": info.year_last,
        }),
    )
}

#[derive(Debug, Deserialize)]
pub struct MapQuery {
    color_by: Option<String>,
    source: Option<String>,
}

#[derive(Serialize)]
struct MapPoint<'a> {
    topic_id: u32,
    x: f64,
    y: f64,
    size: f64,
    color: Value,
    muted: bool,
    label: Option<&'a TopicLabelRecord>,
}

async fn get_map(State(s): State<AppState>, Query(q): Query<MapQuery>) -> ApiResult {
    let snap = &s.snapshot;
    let color_by = q.color_by.as_deref().unwrap_or("supertopic");
    let source_column: Option<Vec<Option<f64>>> = match color_by {
        "supertopic" | "cagr" | "field" => None,
        "source_lq" => {
            let source = q
                .source
                .as_deref()
                .ok_or_else(|| ApiError::bad_request("color_by=source_lq requires a source parameter").with_run(s.run_id()))?;
            let act = snap
                .activity
                .get("source")
                .ok_or_else(|| ApiError::not_found("no source activity in this snapshot").with_run(s.run_id()))?;
            let table = compute_lq(act).map_err(|e| ApiError::internal(e.to_string()))?;
            let j = table.entity_index(source).ok_or_else(|| {
                ApiError::not_found(format!("unknown source {source:?}; known: {}", table.entities.join(", "))).with_run(s.run_id())
            })?;
            Some(table.entity_column(j))
        }
        other => {
            return Err(ApiError::bad_request(format!("unknown color_by {other:?}; expected supertopic, cagr, field or source_lq"))
                .with_run(s.run_id()))
        }
    };
    let labels = s.labels.read().await;
    let st = labels.state();
    let points: Vec<MapPoint> = (0..snap.num_topics())
        .map(|t| {
            let id = t as u32;
            let label = st.current.get(&id);
            let color = match color_by {
                "supertopic" => json!(label.map(|l| l.super_topic_name.as_str()).filter(|n| !n.is_empty()).unwrap_or("unlabeled")),
                "cagr" => json!(snap.fits[t].cagr.and_then(finite)),
                "field" => json!(snap.fields.get(&id).map(String::as_str).unwrap_or("unassigned")),
                _ => json!(source_column.as_ref().and_then(|c| c[t])),
            };
            MapPoint {
                topic_id: id,
                x: snap.coords[t][0],
                y: snap.coords[t][1],
                size: snap.sizes[t],
                color,
                muted: st.is_junk(id),
                label,
            }
        })
        .collect();
    reply(&s, StatusCode::OK, json!({ "color_by": color_by, "source": q.source, "topics": points }))
}

#[derive(Serialize)]
struct Term<'a> {
    term: &'a str,
    weight: f64,
}

async fn get_topic(State(s): State<AppState>, UrlPath(id): UrlPath<u32>) -> ApiResult {
    let t = topic_index(&s, id)?;
    let snap = &s.snapshot;
    let m = snap.info.top_terms;
    let mut order: Vec<(usize, f64)> = snap.term_topic.row(t).iter().copied().enumerate().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let terms: Vec<Term> = order.iter().take(m).map(|&(w, p)| Term { term: &snap.vocabulary[w], weight: p }).collect();
    let diag = snap.diagnostics[t].as_ref();
    let fit = &snap.fits[t];
    let labels = s.labels.read().await;
    let st = labels.state();
    let neighbors = &snap.knn.neighbors[t];
    reply(
        &s,
        StatusCode::OK,
        json!({
            "topic_id": id,
            "terms": terms,
            "coherence": diag.and_then(|d| d.coherence),
            "coherence_origin": diag.map(|d| d.coherence_origin),
            "size": snap.sizes[t],
            "fit": if fit.is_fitted() { json!(fit) } else { Value::Null },
            "fit_status": fit.status,
            "label": st.current.get(&id),
            "label_history": st.history.get(&id).cloned().unwrap_or_default(),
            "neighbors": neighbors.iter().map(|n| n.topic_id).collect::<Vec<_>>(),
            "neighbor_distances": neighbors.iter().map(|n| n.distance).collect::<Vec<_>>(),
        }),
    )
}

#[derive(Debug, Deserialize)]
pub struct DocQuery {
    limit: Option<usize>,
}

async fn get_documents(State(s): State<AppState>, UrlPath(id): UrlPath<u32>, Query(q): Query<DocQuery>) -> ApiResult {
    let t = topic_index(&s, id)?;
    let snap = &s.snapshot;
    let limit = q.limit.unwrap_or(DEFAULT_DOC_LIMIT);
    let mut order: Vec<usize> = (0..snap.docs.len()).collect();
    order.sort_by(|&a, &b| {
        snap.doc_topic.get(b, t).total_cmp(&snap.doc_topic.get(a, t)).then_with(|| snap.docs[a].doc_id.cmp(&snap.docs[b].doc_id))
    });
    let rows: Vec<Value> = order
        .into_iter()
        .take(limit)
        .map(|d| {
            let doc = &snap.docs[d];
            json!({
                "doc_id": doc.doc_id,
                "title": doc.title,
                "year": doc.year,
                "source": doc.source.as_str(),
                "fraction": snap.doc_topic.get(d, t),
                "abstract": doc.abstract_text,
            })
        })
        .collect();
    reply(&s, StatusCode::OK, json!({ "topic_id": id, "documents": rows }))
}

async fn put_label(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<u32>,
    headers: HeaderMap,
    Json(draft): Json<LabelDraft>,
) -> ApiResult {
    topic_index(&s, id)?;
    let author = headers.get(ANALYST_HEADER).and_then(|v| v.to_str().ok()).unwrap_or("anonymous").to_string();
    match s.write(WriteOp::Label { topic_id: id, draft, author }).await.map_err(|e| e.with_run(s.run_id()))? {
        WriteOutcome::Label(rec) => reply(&s, StatusCode::OK, json!({ "label": rec })),
        WriteOutcome::Done => Err(ApiError::internal("unexpected writer reply")),
    }
}

fn supertopic_body(st: &LabelState) -> Value {
    json!({ "supertopics": st.supertopics, "warning": st.supertopic_warning() })
}

async fn list_supertopics(State(s): State<AppState>) -> ApiResult {
    let labels = s.labels.read().await;
    reply(&s, StatusCode::OK, supertopic_body(labels.state()))
}

#[derive(Debug, Deserialize)]
pub struct NewSupertopic {
    name: String,
}

async fn add_supertopic(State(s): State<AppState>, Json(body): Json<NewSupertopic>) -> ApiResult {
    s.write(WriteOp::AddSupertopic(body.name)).await.map_err(|e| e.with_run(s.run_id()))?;
    let labels = s.labels.read().await;
    reply(&s, StatusCode::CREATED, supertopic_body(labels.state()))
}

async fn remove_supertopic(State(s): State<AppState>, UrlPath(name): UrlPath<String>) -> ApiResult {
    s.write(WriteOp::RemoveSupertopic(name)).await.map_err(|e| e.with_run(s.run_id()))?;
    let labels = s.labels.read().await;
    reply(&s, StatusCode::OK, supertopic_body(labels.state()))
}

#[derive(Debug, Deserialize)]
pub struct ScreenQuery {
    top_n: Option<usize>,
    coherence_floor: Option<f64>,
}

pub const DEFAULT_TOP_N: usize = 200;
pub const DEFAULT_COHERENCE_FLOOR: f64 = -1000.0;

async fn get_screen(State(s): State<AppState>, Query(q): Query<ScreenQuery>) -> ApiResult {
    let snap = &s.snapshot;
    let top_n = q.top_n.unwrap_or(DEFAULT_TOP_N);
    let floor = q.coherence_floor.unwrap_or(DEFAULT_COHERENCE_FLOOR);
    let diags: Vec<TopicDiagnostics> = snap.diagnostics.iter().flatten().cloned().collect();
    let labels = s.labels.read().await;
    let rows = emerging_rows(&snap.fits, &snap.sizes, &diags, labels.state(), top_n, floor);
    reply(&s, StatusCode::OK, json!({ "top_n": top_n, "coherence_floor": floor, "rows": rows }))
}

#[derive(Debug, Deserialize)]
pub struct LqQuery {
    entity_type: String,
    entities: Option<String>,
    level: Option<String>,
}

#[derive(Serialize)]
struct LqCell<'a> {
    category_id: &'a str,
    lq: Option<f64>,
    lq_err: Option<f64>,
    flag: &'static str,
}

fn lq_entity_json<'a>(t: &'a LqTable, j: usize) -> Value {
    let cells: Vec<LqCell<'a>> = t
        .categories
        .iter()
        .enumerate()
        .map(|(i, c)| LqCell { category_id: c, lq: finite(t.lq.get(i, j)), lq_err: finite(t.err.get(i, j)), flag: t.flag(i, j).as_str() })
        .collect();
    json!({ "entity_id": t.entities[j], "total": t.entity_totals[j], "values": cells })
}

async fn get_lq(State(s): State<AppState>, Query(q): Query<LqQuery>) -> ApiResult {
    let snap = &s.snapshot;
    let err = |e: ApiError| e.with_run(s.run_id());
    let act = snap.activity.get(&q.entity_type).ok_or_else(|| {
        err(ApiError::not_found(format!(
            "unknown entity_type {:?}; known: {}",
            q.entity_type,
            snap.activity.keys().cloned().collect::<Vec<_>>().join(", ")
        )))
    })?;
    let level = q.level.as_deref().unwrap_or("topic");
    let labels = s.labels.read().await;
    let matrix = match level {
        "topic" => act.clone(),
        "supertopic" => {
            let groups: Vec<(String, Vec<usize>)> = labels
                .state()
                .supertopic_members()
                .into_iter()
                .map(|(name, members)| {
                    let idx = members
                        .iter()
                        .filter_map(|m| act.categories.iter().position(|c| *c == m.to_string()))
                        .collect();
                    (name, idx)
                })
                .filter(|(_, idx): &(String, Vec<usize>)| !idx.is_empty())
                .collect();
            if groups.is_empty() {
                return reply(
                    &s,
                    StatusCode::OK,
                    json!({ "entity_type": q.entity_type, "level": level, "categories": [], "entities": [] }),
                );
            }
            act.aggregate_categories(&groups).map_err(|e| err(ApiError::internal(e.to_string())))?
        }
        other => return Err(err(ApiError::bad_request(format!("unknown level {other:?}; expected topic or supertopic")))),
    };
    drop(labels);
    let table = compute_lq(&matrix).map_err(|e| err(ApiError::internal(e.to_string())))?;
    let requested: Vec<&str> = match q.entities.as_deref() {
        Some(list) if !list.trim().is_empty() => list.split(',').map(str::trim).filter(|e| !e.is_empty()).collect(),
        _ => table.entities.iter().map(String::as_str).collect(),
    };
    let unknown: Vec<&str> = requested.iter().copied().filter(|e| table.entity_index(e).is_none()).collect();
    if !unknown.is_empty() {
        return Err(err(ApiError::not_found(format!(
            "unknown entities {}; known: {}",
            unknown.join(", "),
            table.entities.join(", ")
        ))));
    }
    let cols: Vec<usize> = requested.iter().map(|e| table.entity_index(e).expect("checked above")).collect();
    let mut body = json!({
        "entity_type": q.entity_type,
        "level": level,
        "categories": table.categories,
        "entities": cols.iter().map(|&j| lq_entity_json(&table, j)).collect::<Vec<_>>(),
    });
    if let [a, b] = cols[..] {
        let qs = quadrant_classify(&table.entity_column(a), &table.entity_column(b)).map_err(|e| err(ApiError::internal(e.to_string())))?;
        body["quadrants"] = json!(table
            .categories
            .iter()
            .zip(&qs)
            .map(|(c, q)| json!({ "category_id": c, "quadrant": q.map(|q| q.as_str()) }))
            .collect::<Vec<_>>());
    }
    reply(&s, StatusCode::OK, body)
}

pub fn port_from_env() -> Result<u16> {
    match std::env::var(PORT_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| ScanError::Usage(format!("{PORT_ENV}={v:?} is not a port number"))),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

/// Serves the snapshot until Ctrl-C.
pub async fn serve(dir: &Path, port: u16) -> Result<()> {
    let state = AppState::open(dir)?;
    let addr = std::net::SocketAddr::from(([127, 0, 0, 1], port));
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| ScanError::io(addr.to_string(), e))?;
    log::info!("serving run {} on http://{addr}", state.run_id());
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ScanError::io(addr.to_string(), e))
}
