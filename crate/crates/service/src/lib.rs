//! REST service that administers the curated forced-choice test to a listener.
//!
//! Routes:
//!
//! | method | path | body / result |
//! |---|---|---|
//! | POST | `/api/sessions` | `{n_items, snr_db?, hl_sim?, seed?}` -> `{session_id, n_items}` |
//! | GET | `/api/sessions/{id}` | session summary |
//! | GET | `/api/sessions/{id}/trials/{n}` | `{trial, total, option_a, option_b}` |
//! | GET | `/api/sessions/{id}/trials/{n}/audio` | `audio/wav` stimulus |
//! | POST | `/api/sessions/{id}/trials/{n}/response` | `{chosen, latency_ms?}` -> `{next_trial}` or `{result}` |

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hearsim_core::confusion::round1;
use hearsim_core::corpus::{load_recordings, read_manifest};
use hearsim_core::curation::{read_battery, CandidatePair};
use hearsim_core::diagnostics::{classify_human, read_item_diagnostics, ItemDiagnostics};
use hearsim_core::dsp::{
    design_hl_filter, prepare_stimulus, wav_bytes, AudioBuffer, Audiogram, FirFilter, MixSpec,
    CANONICAL_SAMPLE_RATE, DEFAULT_LEVEL_DBFS, DEFAULT_NUM_TAPS,
};
use hearsim_core::seed;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("battery is empty")]
    EmptyBattery,
    #[error("no recording for battery word {0:?}")]
    MissingRecording(String),
    #[error("diagnostics hold no rows for the battery at {0} dB SNR")]
    NoReference(f64),
    #[error("{0}")]
    Core(#[from] hearsim_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

/// Mean NH and HL percent correct per SNR.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReferenceMeans {
    by_snr: Vec<(f64, f64, f64)>,
}

impl ReferenceMeans {
    /// Averages item diagnostics restricted to battery pairs, per SNR.
    pub fn from_diagnostics(items: &[ItemDiagnostics], battery: &[CandidatePair]) -> Self {
        let in_battery = |d: &ItemDiagnostics| {
            battery
                .iter()
                .any(|p| p.target == d.target && p.distractor == d.distractor)
        };
        let mut acc: BTreeMap<u64, (f64, f64, f64, usize)> = BTreeMap::new();
        for d in items.iter().filter(|d| in_battery(d)) {
            let e = acc
                .entry(d.snr_db.to_bits())
                .or_insert((d.snr_db, 0.0, 0.0, 0));
            e.1 += d.nh_correct_pct;
            e.2 += d.hl_correct_pct;
            e.3 += 1;
        }
        let mut by_snr: Vec<_> = acc
            .into_values()
            .map(|(s, nh, hl, n)| (s, nh / n as f64, hl / n as f64))
            .collect();
        by_snr.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { by_snr }
    }

    pub fn fixed(snr_db: f64, nh_mean: f64, hl_mean: f64) -> Self {
        Self {
            by_snr: vec![(snr_db, nh_mean, hl_mean)],
        }
    }

    /// `(nh_mean, hl_mean)` at `snr_db`.
    pub fn at(&self, snr_db: f64) -> Option<(f64, f64)> {
        self.by_snr
            .iter()
            .find(|(s, _, _)| (s - snr_db).abs() < 1e-9)
            .map(|&(_, nh, hl)| (nh, hl))
    }

    pub fn snrs(&self) -> Vec<f64> {
        self.by_snr.iter().map(|r| r.0).collect()
    }
}

pub struct ServiceConfig {
    pub battery: Vec<CandidatePair>,
    pub recordings: BTreeMap<String, AudioBuffer<f64>>,
    pub reference: ReferenceMeans,
    pub default_snr: f64,
    /// Where `sessions.jsonl`, `responses.jsonl` and `audio_requests.jsonl` go.
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

impl ServiceConfig {
    /// Loads the battery CSV, the item-diagnostics CSV and the recordings named by a
    /// `word,wav_path` corpus manifest.
    pub fn load(
        battery: &Path,
        diagnostics: &Path,
        corpus: &Path,
        default_snr: f64,
        output_dir: Option<PathBuf>,
        seed: u64,
    ) -> Result<Self, StartupError> {
        let battery = read_battery(battery)?;
        let items = read_item_diagnostics(diagnostics)?;
        let entries = read_manifest(corpus)?;
        let wanted: Vec<_> = entries
            .into_iter()
            .filter(|e| battery.iter().any(|p| p.target == e.word))
            .collect();
        let recordings = load_recordings(&wanted)?;
        let reference = ReferenceMeans::from_diagnostics(&items, &battery);
        Ok(Self {
            battery,
            recordings,
            reference,
            default_snr,
            output_dir,
            seed,
        })
    }
}

struct JsonlLog {
    file: Mutex<File>,
}

impl JsonlLog {
    fn open(path: &Path) -> Result<Self, StartupError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| StartupError::Io {
                context: format!("opening {}", path.display()),
                source: e,
            })?;
        Ok(Self {
            file: Mutex::new(file),
        })
    }

    fn append(&self, value: &serde_json::Value) {
        let mut f = self.file.lock().expect("log lock");
        if let Err(e) = writeln!(f, "{value}").and_then(|_| f.flush()) {
            tracing::error!("persisting event failed: {e}");
        }
    }
}

struct Logs {
    sessions: JsonlLog,
    responses: JsonlLog,
    audio: JsonlLog,
}

#[derive(Debug, Clone, Serialize)]
struct Answer {
    chosen: String,
    correct: bool,
    latency_ms: Option<u64>,
}

struct Session {
    id: String,
    seed: u64,
    items: Vec<usize>,
    /// `true` puts the distractor first.
    swapped: Vec<bool>,
    answers: Vec<Option<Answer>>,
    replays: Vec<u32>,
    snr_db: f64,
    hl_sim: Option<Audiogram>,
    filter: Option<Arc<FirFilter<f64>>>,
    created_at_ms: u128,
}

impl Session {
    fn finished(&self) -> bool {
        self.answers.iter().all(Option::is_some)
    }

    fn options(&self, battery: &[CandidatePair], n: usize) -> (String, String) {
        let item = &battery[self.items[n]];
        if self.swapped[n] {
            (item.distractor.clone(), item.target.clone())
        } else {
            (item.target.clone(), item.distractor.clone())
        }
    }
}

pub struct AppState {
    battery: Vec<CandidatePair>,
    recordings: BTreeMap<String, AudioBuffer<f64>>,
    reference: ReferenceMeans,
    default_snr: f64,
    seed: u64,
    counter: AtomicU64,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    filters: Mutex<HashMap<String, Arc<FirFilter<f64>>>>,
    logs: Option<Logs>,
}

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Result<Self, StartupError> {
        if cfg.battery.is_empty() {
            return Err(StartupError::EmptyBattery);
        }
        for p in &cfg.battery {
            if !cfg.recordings.contains_key(&p.target) {
                return Err(StartupError::MissingRecording(p.target.clone()));
            }
        }
        if cfg.reference.at(cfg.default_snr).is_none() {
            return Err(StartupError::NoReference(cfg.default_snr));
        }
        let logs = match &cfg.output_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| StartupError::Io {
                    context: format!("creating {}", dir.display()),
                    source: e,
                })?;
                Some(Logs {
                    sessions: JsonlLog::open(&dir.join("sessions.jsonl"))?,
                    responses: JsonlLog::open(&dir.join("responses.jsonl"))?,
                    audio: JsonlLog::open(&dir.join("audio_requests.jsonl"))?,
                })
            }
            None => None,
        };
        Ok(Self {
            battery: cfg.battery,
            recordings: cfg.recordings,
            reference: cfg.reference,
            default_snr: cfg.default_snr,
            seed: cfg.seed,
            counter: AtomicU64::new(0),
            sessions: Mutex::new(HashMap::new()),
            filters: Mutex::new(HashMap::new()),
            logs,
        })
    }

    fn filter_for(&self, audiogram: &Audiogram) -> Result<Arc<FirFilter<f64>>, ApiError> {
        let key = serde_json::to_string(audiogram).unwrap_or_default();
        let mut cache = self.filters.lock().expect("filter cache lock");
        if let Some(f) = cache.get(&key) {
            return Ok(f.clone());
        }
        let f = Arc::new(
            design_hl_filter(audiogram, CANONICAL_SAMPLE_RATE, DEFAULT_NUM_TAPS)
                .map_err(|e| ApiError::unprocessable(e.to_string()))?,
        );
        cache.insert(key, f.clone());
        Ok(f)
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .lock()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session {id}")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
    fn not_found(m: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, m)
    }
    fn unprocessable(m: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, m)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum HlSim {
    Named(String),
    Profile(Audiogram),
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub n_items: usize,
    pub snr_db: Option<f64>,
    pub hl_sim: Option<HlSim>,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
pub struct ResponseBody {
    pub chosen: String,
    pub latency_ms: Option<u64>,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> ApiResult<impl IntoResponse> {
    let total = app.battery.len();
    if req.n_items == 0 || req.n_items > total {
        return Err(ApiError::unprocessable(format!(
            "n_items must be between 1 and {total}, got {}",
            req.n_items
        )));
    }
    let snr_db = req.snr_db.unwrap_or(app.default_snr);
    if app.reference.at(snr_db).is_none() {
        return Err(ApiError::unprocessable(format!(
            "no reference means at {snr_db} dB SNR; available: {:?}",
            app.reference.snrs()
        )));
    }
    let hl_sim = match req.hl_sim {
        None => None,
        Some(HlSim::Named(name)) => Some(
            Audiogram::builtin(&name)
                .ok_or_else(|| ApiError::unprocessable(format!("unknown profile {name:?}")))?,
        ),
        Some(HlSim::Profile(a)) => Some(a),
    };
    let filter = hl_sim.as_ref().map(|a| app.filter_for(a)).transpose()?;

    let counter = app.counter.fetch_add(1, Ordering::SeqCst);
    let session_seed = req
        .seed
        .unwrap_or_else(|| seed::derive(app.seed, &[counter]));
    let mut rng = seed::rng(session_seed);
    let items = sample(&mut rng, total, req.n_items).into_vec();
    let swapped = (0..req.n_items).map(|_| rng.gen_bool(0.5)).collect();
    let id = format!(
        "{counter}-{:08x}",
        seed::splitmix64(session_seed ^ counter) as u32
    );
    let session = Session {
        id: id.clone(),
        seed: session_seed,
        items,
        swapped,
        answers: vec![None; req.n_items],
        replays: vec![0; req.n_items],
        snr_db,
        hl_sim,
        filter,
        created_at_ms: now_ms(),
    };
    if let Some(logs) = &app.logs {
        logs.sessions.append(&json!({
            "session_id": session.id,
            "seed": session.seed,
            "snr_db": session.snr_db,
            "hl_sim": session.hl_sim,
            "items": session.items.iter().map(|&i| {
                let p = &app.battery[i];
                json!({"index": i, "target": p.target, "distractor": p.distractor})
            }).collect::<Vec<_>>(),
            "created_at_ms": session.created_at_ms as u64,
        }));
    }
    app.sessions
        .lock()
        .expect("session map lock")
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    Ok((
        StatusCode::CREATED,
        Json(json!({ "session_id": id, "n_items": req.n_items })),
    ))
}

async fn get_session(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<serde_json::Value>> {
    let s = app.session(&id)?;
    let s = s.lock().expect("session lock");
    Ok(Json(json!({
        "session_id": s.id,
        "n_items": s.items.len(),
        "answered": s.answers.iter().filter(|a| a.is_some()).count(),
        "finished": s.finished(),
        "snr_db": s.snr_db,
        "hl_sim": s.hl_sim.as_ref().map(|a| a.name().to_string()),
    })))
}

fn check_trial(s: &Session, n: usize) -> ApiResult<()> {
    if n >= s.items.len() {
        return Err(ApiError::not_found(format!(
            "session {} has {} trials",
            s.id,
            s.items.len()
        )));
    }
    Ok(())
}

async fn get_trial(
    State(app): State<Arc<AppState>>,
    UrlPath((id, n)): UrlPath<(String, usize)>,
) -> ApiResult<Json<serde_json::Value>> {
    let s = app.session(&id)?;
    let s = s.lock().expect("session lock");
    check_trial(&s, n)?;
    if s.finished() {
        return Err(ApiError::new(StatusCode::GONE, "session is finished"));
    }
    let (a, b) = s.options(&app.battery, n);
    Ok(Json(json!({
        "trial": n,
        "total": s.items.len(),
        "option_a": a,
        "option_b": b,
        "answered": s.answers[n].is_some(),
    })))
}

async fn get_audio(
    State(app): State<Arc<AppState>>,
    UrlPath((id, n)): UrlPath<(String, usize)>,
) -> ApiResult<Response> {
    let s = app.session(&id)?;
    let (word, mix, noise_seed, filter, replay) = {
        let mut s = s.lock().expect("session lock");
        check_trial(&s, n)?;
        s.replays[n] += 1;
        (
            app.battery[s.items[n]].target.clone(),
            MixSpec::at_snr(s.snr_db),
            seed::derive(s.seed, &[n as u64]),
            s.filter.clone(),
            s.replays[n],
        )
    };
    let speech = &app.recordings[&word];
    let stimulus = prepare_stimulus(
        speech,
        &mix,
        DEFAULT_LEVEL_DBFS,
        noise_seed,
        filter.as_deref(),
    )
    .and_then(|a| wav_bytes(&a))
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    if let Some(logs) = &app.logs {
        logs.audio.append(&json!({
            "session_id": id,
            "trial": n,
            "request": replay,
            "at_ms": now_ms() as u64,
        }));
    }
    Ok(([(header::CONTENT_TYPE, "audio/wav")], stimulus).into_response())
}

async fn post_response(
    State(app): State<Arc<AppState>>,
    UrlPath((id, n)): UrlPath<(String, usize)>,
    Json(body): Json<ResponseBody>,
) -> ApiResult<Json<serde_json::Value>> {
    let s = app.session(&id)?;
    let mut s = s.lock().expect("session lock");
    check_trial(&s, n)?;
    if s.answers[n].is_some() {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("trial {n} already answered"),
        ));
    }
    let (a, b) = s.options(&app.battery, n);
    let chosen = body.chosen.trim().to_lowercase();
    if chosen != a && chosen != b {
        return Err(ApiError::unprocessable(format!(
            "{:?} is not one of {a:?}, {b:?}",
            body.chosen
        )));
    }
    let correct = chosen == app.battery[s.items[n]].target;
    if let Some(logs) = &app.logs {
        logs.responses.append(&json!({
            "session_id": s.id,
            "trial": n,
            "item": s.items[n],
            "chosen": chosen,
            "correct": correct,
            "latency_ms": body.latency_ms,
            "replays": s.replays[n],
        }));
    }
    s.answers[n] = Some(Answer {
        chosen,
        correct,
        latency_ms: body.latency_ms,
    });

    if !s.finished() {
        let next = (n + 1..s.items.len())
            .chain(0..n)
            .find(|&i| s.answers[i].is_none());
        return Ok(Json(json!({ "next_trial": next })));
    }
    let n_correct = s.answers.iter().flatten().filter(|a| a.correct).count();
    let score = round1(100.0 * n_correct as f64 / s.items.len() as f64);
    let (nh_mean, hl_mean) = app.reference.at(s.snr_db).expect("checked at creation");
    let category = classify_human(score, nh_mean, hl_mean)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let result = json!({
        "score_pct": score,
        "correct": n_correct,
        "n_items": s.items.len(),
        "nh_mean": nh_mean,
        "hl_mean": hl_mean,
        "category": category.name(),
    });
    if let Some(logs) = &app.logs {
        logs.responses
            .append(&json!({ "session_id": s.id, "result": result }));
    }
    Ok(Json(json!({ "result": result })))
}

async fn health() -> &'static str {
    "ok"
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/:id", get(get_session))
        .route("/api/sessions/:id/trials/:n", get(get_trial))
        .route("/api/sessions/:id/trials/:n/audio", get(get_audio))
        .route("/api/sessions/:id/trials/:n/response", post(post_response))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves until interrupted.
pub async fn serve(state: AppState, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
