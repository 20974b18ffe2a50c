//! HTTP session service: create a teaching session over a rule space, add
//! labeled examples one at a time, and read back L0/L1 posteriors and
//! suggested next examples.
//!
//! Routes:
//!
//! | method | path | body / query |
//! |---|---|---|
//! | POST | `/sessions` | `{rule_id \| custom_space, alpha?, beta?, eta?, target?}` |
//! | POST | `/sessions/{id}/examples` | `{text, label}` |
//! | GET | `/sessions/{id}` | |
//! | GET | `/sessions/{id}/suggest` | `n`, `max_len?`, `alphabet?` |
//! | DELETE | `/sessions/{id}` | |
//! | GET | `/rule-spaces` | |

mod session;

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pedagogy_core::corpus::corpus_to_line;
use pedagogy_core::experiment::space_alphabet;
use pedagogy_core::regex::Alphabet;
use pedagogy_core::{Dataset, Label, LabeledExample, RuleSpace};
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, RwLock};
use tower_http::cors::CorsLayer;

pub use session::{Params, Posteriors, Session, Suggestion, MAX_TEXT_LEN};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown rule space `{0}`")]
    UnknownRule(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("pattern error: {0}")]
    ParseError(String),
    #[error("unknown or expired session `{0}`")]
    UnknownSession(String),
    #[error("invalid example string: {0}")]
    InvalidString(String),
    #[error("no teaching target was declared for this session")]
    NoTargetDeclared,
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownRule(_) => "unknown_rule",
            ServiceError::InvalidParams(_) => "invalid_params",
            ServiceError::ParseError(_) => "parse_error",
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::InvalidString(_) => "invalid_string",
            ServiceError::NoTargetDeclared => "no_target_declared",
            ServiceError::Internal(_) => "internal",
        }
    }

    fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownRule(_) | ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::NoTargetDeclared => StatusCode::CONFLICT,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.code(), "message": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub idle_timeout: Duration,
    /// Append-only JSONL log of session corpora, one line per added example.
    pub persist_path: Option<PathBuf>,
    /// Default longest candidate string for suggestions.
    pub suggest_max_len: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            idle_timeout: Duration::from_secs(24 * 60 * 60),
            persist_path: None,
            suggest_max_len: 3,
        }
    }
}

type SessionMap = HashMap<String, Arc<Mutex<Session>>>;

pub struct AppState {
    dataset: Dataset,
    config: ServiceConfig,
    sessions: RwLock<SessionMap>,
    log: Option<std::sync::Mutex<File>>,
}

impl AppState {
    pub fn new(dataset: Dataset, config: ServiceConfig) -> std::io::Result<Arc<Self>> {
        let log = match &config.persist_path {
            Some(path) => Some(std::sync::Mutex::new(
                OpenOptions::new().create(true).append(true).open(path)?,
            )),
            None => None,
        };
        Ok(Arc::new(AppState {
            dataset,
            config,
            sessions: RwLock::new(HashMap::new()),
            log,
        }))
    }

    async fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        let found = self.sessions.read().await.get(id).cloned();
        let session = found.ok_or_else(|| ServiceError::UnknownSession(id.to_string()))?;
        let expired = session.lock().await.last_used.elapsed() > self.config.idle_timeout;
        if expired {
            self.sessions.write().await.remove(id);
            return Err(ServiceError::UnknownSession(id.to_string()));
        }
        Ok(session)
    }

    /// Drops every session idle for longer than the configured timeout.
    pub async fn expire_idle(&self) -> usize {
        let snapshot: Vec<(String, Arc<Mutex<Session>>)> = self
            .sessions
            .read()
            .await
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let mut stale = Vec::new();
        for (id, s) in snapshot {
            if s.lock().await.last_used.elapsed() > self.config.idle_timeout {
                stale.push(id);
            }
        }
        let mut map = self.sessions.write().await;
        for id in &stale {
            map.remove(id);
        }
        stale.len()
    }

    pub async fn session_count(&self) -> usize {
        self.sessions.read().await.len()
    }
}

/// Periodically expires idle sessions until the state is dropped.
pub fn spawn_expiry(state: &Arc<AppState>) -> tokio::task::JoinHandle<()> {
    let weak = Arc::downgrade(state);
    let period = (state.config.idle_timeout / 4).clamp(Duration::from_millis(10), Duration::from_secs(60));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let Some(state) = weak.upgrade() else { break };
            let n = state.expire_idle().await;
            if n > 0 {
                tracing::info!(expired = n, "expired idle sessions");
            }
        }
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_state).delete(delete_session))
        .route("/sessions/{id}/examples", post(add_example))
        .route("/sessions/{id}/suggest", get(suggest))
        .route("/rule-spaces", get(rule_spaces))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSpace {
    #[serde(default = "custom_name")]
    pub name: String,
    pub target: String,
    #[serde(default)]
    pub distractors: Vec<String>,
}

fn custom_name() -> String {
    "custom".to_string()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub rule_id: Option<String>,
    pub custom_space: Option<CustomSpace>,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default)]
    pub eta: f64,
    /// Teaching target for suggestions; must be one of the space's hypotheses.
    pub target: Option<String>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Serialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub rule_space: String,
    pub hypotheses: Vec<String>,
    pub priors: Vec<f64>,
    pub params: Params,
    pub target: Option<String>,
}

fn build_space(req: &CreateSession, dataset: &Dataset) -> Result<(RuleSpace, Vec<pedagogy_core::Corpus>), ServiceError> {
    match (&req.rule_id, &req.custom_space) {
        (Some(id), None) => {
            let space = dataset
                .rule_space(id)
                .ok_or_else(|| ServiceError::UnknownRule(id.clone()))?;
            Ok((space.clone(), dataset.corpora_for_space(id).cloned().collect()))
        }
        (None, Some(custom)) => {
            let parse = |p: &str| {
                p.parse::<pedagogy_core::Regex>()
                    .map_err(|e| ServiceError::ParseError(format!("`{p}`: {e}")))
            };
            let target = parse(&custom.target)?;
            let distractors = custom.distractors.iter().map(|p| parse(p)).collect::<Result<Vec<_>, _>>()?;
            let space = RuleSpace::new(&custom.name, target, distractors)
                .map_err(|e| ServiceError::InvalidParams(e.to_string()))?;
            Ok((space, Vec::new()))
        }
        _ => Err(ServiceError::InvalidParams(
            "give exactly one of rule_id and custom_space".into(),
        )),
    }
}

fn summary(s: &Session) -> SessionSummary {
    SessionSummary {
        session_id: s.id.clone(),
        rule_space: s.space.name().to_string(),
        hypotheses: s.space.hypotheses().map(|h| h.to_string()).collect(),
        priors: pedagogy_core::learners::prior(&s.space).probs().to_vec(),
        params: s.params,
        target: s.target.map(|i| s.space.hypothesis(i).expect("validated").to_string()),
    }
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> Result<(StatusCode, Json<SessionSummary>), ServiceError> {
    let params = Params::new(req.alpha, req.beta, req.eta)?;
    let (space, pool) = build_space(&req, &state.dataset)?;
    let target = match &req.target {
        None => None,
        Some(p) => {
            let r: pedagogy_core::Regex = p
                .parse()
                .map_err(|e| ServiceError::ParseError(format!("`{p}`: {e}")))?;
            Some(space.index_of(&r).ok_or_else(|| {
                ServiceError::InvalidParams(format!("target `{r}` is not a hypothesis of `{}`", space.name()))
            })?)
        }
    };
    let alphabet = space_alphabet(&state.dataset, &space);
    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = Session::new(id.clone(), space, target, params, pool, alphabet);
    let out = summary(&session);
    state
        .sessions
        .write()
        .await
        .insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(out)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddExample {
    pub text: String,
    pub label: String,
}

#[derive(Debug, Serialize)]
pub struct ExampleResponse {
    pub l0: Vec<f64>,
    pub l1: Vec<f64>,
    pub fallback: bool,
    pub example: LabeledExample,
}

async fn add_example(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<AddExample>,
) -> Result<Json<ExampleResponse>, ServiceError> {
    let label: Label = req
        .label
        .parse()
        .map_err(|_| ServiceError::InvalidParams(format!("label must be pos or neg, got `{}`", req.label)))?;
    let session = state.session(&id).await?;
    let mut s = session.lock().await;
    s.last_used = std::time::Instant::now();
    let example = s.add_example(req.text, label)?;
    if let Some(log) = &state.log {
        let line = corpus_to_line(&s.corpus().expect("nonempty"));
        let mut f = log.lock().map_err(|_| ServiceError::Internal("log lock poisoned".into()))?;
        writeln!(f, "{line}").map_err(|e| ServiceError::Internal(e.to_string()))?;
    }
    Ok(Json(ExampleResponse {
        l0: s.posteriors.l0.clone(),
        l1: s.posteriors.l1.clone(),
        fallback: s.posteriors.fallback,
        example,
    }))
}

#[derive(Debug, Serialize)]
pub struct SessionState {
    #[serde(flatten)]
    pub summary: SessionSummary,
    pub corpus: Vec<LabeledExample>,
    pub l0: Vec<f64>,
    pub l1: Vec<f64>,
    pub fallback: bool,
    pub pool_size: usize,
    /// `Q` per hypothesis.
    pub errors: Vec<usize>,
    /// Positions grouped by edit distance (threshold 2).
    pub clusters: Vec<Vec<usize>>,
    pub created_at: u64,
    pub updated_at: u64,
}

async fn get_state(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionState>, ServiceError> {
    let session = state.session(&id).await?;
    let mut s = session.lock().await;
    s.last_used = std::time::Instant::now();
    Ok(Json(SessionState {
        summary: summary(&s),
        corpus: s.examples.clone(),
        l0: s.posteriors.l0.clone(),
        l1: s.posteriors.l1.clone(),
        fallback: s.posteriors.fallback,
        pool_size: s.posteriors.pool_size,
        errors: s.error_counts(),
        clusters: s.clusters(),
        created_at: s.created_at,
        updated_at: s.updated_at,
    }))
}

#[derive(Debug, Deserialize)]
pub struct SuggestQuery {
    #[serde(default = "default_n")]
    pub n: usize,
    pub max_len: Option<usize>,
    pub alphabet: Option<String>,
}

fn default_n() -> usize {
    5
}

#[derive(Debug, Serialize)]
pub struct SuggestResponse {
    pub suggestions: Vec<Suggestion>,
}

/// Longest candidate length accepted from a query, to bound enumeration.
const MAX_SUGGEST_LEN: usize = 6;

async fn suggest(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<SuggestQuery>,
) -> Result<Json<SuggestResponse>, ServiceError> {
    let max_len = q.max_len.unwrap_or(state.config.suggest_max_len);
    if max_len > MAX_SUGGEST_LEN {
        return Err(ServiceError::InvalidParams(format!("max_len must be at most {MAX_SUGGEST_LEN}")));
    }
    let alphabet = match &q.alphabet {
        Some(chars) => {
            pedagogy_core::corpus::validate_text(chars).map_err(|e| ServiceError::InvalidString(e.to_string()))?;
            Some(Alphabet::new(chars.chars()).map_err(|e| ServiceError::InvalidParams(e.to_string()))?)
        }
        None => None,
    };
    let session = state.session(&id).await?;
    let mut s = session.lock().await;
    s.last_used = std::time::Instant::now();
    let suggestions = s.suggest(q.n, alphabet.as_ref(), max_len)?;
    Ok(Json(SuggestResponse { suggestions }))
}

async fn delete_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode, ServiceError> {
    match state.sessions.write().await.remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ServiceError::UnknownSession(id)),
    }
}

#[derive(Debug, Serialize)]
pub struct RuleSpaceView {
    pub name: String,
    pub hypotheses: Vec<String>,
}

async fn rule_spaces(State(state): State<Arc<AppState>>) -> Json<Vec<RuleSpaceView>> {
    Json(
        state
            .dataset
            .rule_spaces()
            .values()
            .map(|s| RuleSpaceView {
                name: s.name().to_string(),
                hypotheses: s.hypotheses().map(|h| h.to_string()).collect(),
            })
            .collect(),
    )
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: std::net::SocketAddr, dataset: Dataset, config: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::new(dataset, config)?;
    let _expiry = spawn_expiry(&state);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state)).await
}
