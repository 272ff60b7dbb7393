//! HTTP/JSON API over a workspace. Audio is served by resource id.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hed_core::corpus::write_wav;
use hed_core::hed::{EDEdit, HedError, HierarchicalED};
use hed_core::ttscore::{AcousticModel, SpeakerTable};
use log::{info, warn};
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tokio::sync::{Mutex, RwLock};

use crate::error::ServiceError;
use crate::pipeline::synthesize_hed;
use crate::session::SessionState;
use crate::workspace::{Extractors, Workspace};

pub struct AppState {
    pub workspace: Workspace,
    pub extractors: Option<Extractors>,
    pub tts: Option<AcousticModel>,
    speakers: SpeakerTable,
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionState>>>>,
    next_session: AtomicU64,
    session_dir: PathBuf,
    audio_dir: PathBuf,
}

impl AppState {
    /// Loads whatever checkpoints exist and restores persisted sessions.
    pub fn open(workspace: Workspace) -> Result<Self, ServiceError> {
        let extractors = match workspace.load_extractors() {
            Ok(x) => Some(x),
            Err(e) => {
                warn!("extractors not loaded: {e}");
                None
            }
        };
        let tts = match workspace.load_tts() {
            Ok(m) => Some(m),
            Err(e) => {
                warn!("acoustic model not loaded: {e}");
                None
            }
        };
        Self::with_models(workspace, extractors, tts)
    }

    pub fn with_models(
        workspace: Workspace,
        extractors: Option<Extractors>,
        tts: Option<AcousticModel>,
    ) -> Result<Self, ServiceError> {
        let speakers = match &tts {
            Some(m) => workspace.speakers(m.config.d_s)?,
            None => SpeakerTable::default(),
        };
        let session_dir = workspace.ensure_dir("sessions")?;
        let audio_dir = workspace.ensure_dir("audio")?;
        let mut sessions = HashMap::new();
        let mut max_id = 0;
        let mut logs: Vec<PathBuf> = std::fs::read_dir(&session_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        logs.sort();
        for log in logs {
            let s = SessionState::restore(&log)?;
            if let Some(n) = s
                .session_id
                .strip_prefix('s')
                .and_then(|n| n.parse::<u64>().ok())
            {
                max_id = max_id.max(n);
            }
            sessions.insert(s.session_id.clone(), Arc::new(Mutex::new(s)));
        }
        if !sessions.is_empty() {
            info!("restored {} sessions", sessions.len());
        }
        Ok(Self {
            workspace,
            extractors,
            tts,
            speakers,
            sessions: RwLock::new(sessions),
            next_session: AtomicU64::new(max_id + 1),
            session_dir,
            audio_dir,
        })
    }

    async fn session(&self, id: &str) -> Result<Arc<Mutex<SessionState>>, ApiError> {
        self.sessions.read().await.get(id).cloned().ok_or_else(|| {
            ServiceError::NotFound {
                kind: "session",
                id: id.to_string(),
            }
            .into()
        })
    }
}

pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: String, field: Option<&str>) -> Self {
        Self {
            status,
            body: json!({ "error": { "kind": kind, "message": message, "field": field } }),
        }
    }
}

fn hed_field(e: &HedError) -> Option<&'static str> {
    match e {
        HedError::InvalidValue(_) => Some("value"),
        HedError::IndexOutOfRange { .. } => Some("target"),
        _ => None,
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let (status, field) = match &e {
            ServiceError::NotFound { .. } => (StatusCode::NOT_FOUND, None),
            ServiceError::Precondition(_) => (StatusCode::CONFLICT, None),
            ServiceError::Invalid(_) => (StatusCode::BAD_REQUEST, None),
            ServiceError::Hed(h) => (StatusCode::UNPROCESSABLE_ENTITY, hed_field(h)),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, None),
        };
        ApiError::new(status, e.kind(), e.to_string(), field)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn hed_value(hed: &HierarchicalED) -> Value {
    serde_json::from_str(&hed.to_json()).expect("HED JSON is valid")
}

fn json_text(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], text).into_response()
}

/// The field named in a serde error message, if any.
fn serde_field(msg: &str) -> Option<String> {
    for marker in ["missing field `", "unknown field `"] {
        if let Some(rest) = msg.split(marker).nth(1) {
            return rest.split('`').next().map(str::to_string);
        }
    }
    None
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    let bytes: &[u8] = if body.is_empty() { b"{}" } else { body };
    serde_json::from_slice(bytes).map_err(|e| {
        let msg = e.to_string();
        let field = serde_field(&msg);
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_payload",
            msg,
            field.as_deref(),
        )
    })
}

async fn health(State(st): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "extractors_loaded": st.extractors.is_some(),
        "tts_loaded": st.tts.is_some(),
        "utterances": st.workspace.index.len(),
        "sessions": st.sessions.read().await.len(),
    }))
}

async fn utterances(State(st): State<Arc<AppState>>) -> Json<Value> {
    let list: Vec<Value> = st
        .workspace
        .index
        .iter()
        .map(|r| {
            json!({
                "id": r.id,
                "speaker_id": r.speaker_id,
                "emotion": r.emotion_label.name(),
                "text": r.text,
                "duration_secs": r.duration_secs(),
            })
        })
        .collect();
    Json(Value::Array(list))
}

async fn alignment(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(json_text(st.workspace.track(&id)?.to_json()))
}

fn utterance_hed(st: &AppState, id: &str) -> Result<HierarchicalED, ServiceError> {
    st.workspace.track(id)?;
    st.workspace.hed(st.extractors.as_ref(), id)
}

async fn get_hed(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let st2 = st.clone();
    let hed = tokio::task::spawn_blocking(move || utterance_hed(&st2, &id))
        .await
        .map_err(|e| ServiceError::Invalid(e.to_string()))??;
    Ok(json_text(hed.to_json()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    utterance_id: String,
}

fn session_json(s: &SessionState) -> Value {
    json!({
        "session_id": s.session_id,
        "utterance_id": s.utterance_id,
        "history_len": s.history.len(),
        "last_audio": s.last_audio,
        "hed": hed_value(&s.current),
    })
}

async fn create_session(
    State(st): State<Arc<AppState>>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: CreateSession = parse_body(&body)?;
    let st2 = st.clone();
    let uid = req.utterance_id.clone();
    let hed = tokio::task::spawn_blocking(move || utterance_hed(&st2, &uid))
        .await
        .map_err(|e| ServiceError::Invalid(e.to_string()))??;
    let id = format!("s{:06}", st.next_session.fetch_add(1, Ordering::SeqCst));
    let s = SessionState::create(&st.session_dir, &id, hed)?;
    let body = session_json(&s);
    st.sessions
        .write()
        .await
        .insert(id, Arc::new(Mutex::new(s)));
    Ok((StatusCode::CREATED, Json(body)))
}

async fn get_session(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let s = st.session(&id).await?;
    let s = s.lock().await;
    Ok(Json(session_json(&s)))
}

async fn edit_session(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let s = st.session(&id).await?;
    let edit: EDEdit = parse_body(&body)?;
    if edit.emotion.intensity_index().is_none() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "hed",
            format!("{} has no intensity column", edit.emotion),
            Some("emotion"),
        ));
    }
    let mut s = s.lock().await;
    s.edit(edit)?;
    Ok(Json(session_json(&s)))
}

async fn undo_session(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let s = st.session(&id).await?;
    let mut s = s.lock().await;
    if s.undo()?.is_none() {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "nothing_to_undo",
            "edit history is empty".into(),
            None,
        ));
    }
    Ok(Json(session_json(&s)))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct SynthesizeBody {
    seed: Option<u64>,
    n_ode_steps: Option<usize>,
}

fn render(
    st: &AppState,
    hed: &HierarchicalED,
    seed: u64,
    steps: Option<usize>,
) -> Result<String, ServiceError> {
    let model = st
        .tts
        .as_ref()
        .ok_or_else(|| ServiceError::Precondition("acoustic model is not loaded".into()))?;
    let speaker = st
        .speakers
        .embeddings
        .get(&hed.utterance_id)
        .ok_or_else(|| ServiceError::NotFound {
            kind: "speaker embedding",
            id: hed.utterance_id.clone(),
        })?;
    let steps = steps.unwrap_or(model.config.ode_steps);
    let out = synthesize_hed(
        model,
        &hed.phone_symbols,
        &hed.to_matrix(),
        speaker,
        seed,
        steps,
    )?;
    let tmp = tempfile_in(&st.audio_dir)?;
    write_wav(&tmp, &out.waveform)?;
    let bytes = std::fs::read(&tmp)?;
    let id = hex::encode(&Sha256::digest(&bytes)[..12]);
    std::fs::rename(&tmp, st.audio_dir.join(format!("{id}.wav")))?;
    Ok(id)
}

fn tempfile_in(dir: &std::path::Path) -> Result<PathBuf, ServiceError> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::SeqCst);
    Ok(dir.join(format!(".tmp-{}-{n}.wav", std::process::id())))
}

async fn synthesize_session(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let s = st.session(&id).await?;
    let req: SynthesizeBody = parse_body(&body)?;
    if st.tts.is_none() {
        return Err(ServiceError::Precondition("acoustic model is not loaded".into()).into());
    }
    let hed = s.lock().await.current.clone();
    let seed = req.seed.unwrap_or(st.workspace.config.seed);
    let st2 = st.clone();
    let audio_id = tokio::task::spawn_blocking(move || render(&st2, &hed, seed, req.n_ode_steps))
        .await
        .map_err(|e| ServiceError::Invalid(e.to_string()))??;
    s.lock().await.record_synthesis(&audio_id)?;
    Ok(Json(json!({
        "audio_id": audio_id,
        "url": format!("/audio/{audio_id}"),
        "seed": seed,
    })))
}

async fn audio(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let not_found = || ServiceError::NotFound {
        kind: "audio",
        id: id.clone(),
    };
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(not_found().into());
    }
    let path = st.audio_dir.join(format!("{id}.wav"));
    let bytes = std::fs::read(&path).map_err(|_| not_found())?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response())
}

async fn fallback() -> ApiError {
    ApiError::new(
        StatusCode::NOT_FOUND,
        "not_found",
        "no such endpoint".into(),
        None,
    )
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/utterances", get(utterances))
        .route("/utterances/:id/alignment", get(alignment))
        .route("/utterances/:id/hed", get(get_hed))
        .route("/sessions", post(create_session))
        .route("/sessions/:id", get(get_session))
        .route("/sessions/:id/edit", post(edit_session))
        .route("/sessions/:id/undo", post(undo_session))
        .route("/sessions/:id/synthesize", post(synthesize_session))
        .route("/audio/:id", get(audio))
        .fallback(fallback)
        .with_state(state)
}

pub async fn serve(state: AppState, addr: &str) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await?;
    Ok(())
}
