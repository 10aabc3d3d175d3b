//! HTTP and WebSocket front end for live cooperation sessions.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | `POST` | `/session` | optional session config | `{id, k, replan_period_s}` |
//! | `POST` | `/session/{id}/points` | `{points: [{t, x}]}` | `{n_points, replan_due}` |
//! | `POST` | `/session/{id}/obstacles` | `[{center, radius_m}]` | `{n_obstacles}` |
//! | `GET` | `/session/{id}/state` | | session state |
//! | `DELETE` | `/session/{id}` | | 204 |
//! | `GET` | `/session/{id}/ws` | | WebSocket |
//!
//! The socket pushes `{type:"state", p, path, joints, clearance_mm, seq}`
//! after every re-plan and accepts `{type:"points", points:[{t, x}]}`.
//! Plans run on blocking worker threads against a snapshot of the buffer,
//! so point ingestion never waits for them.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use flowcoop::planner::{Obstacle, Planner};
use flowcoop::session::{Session, SessionConfig, SessionState};
use flowcoop::trajectory::PreprocessConfig;
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast;

const CLOSED: &str = r#"{"type":"closed"}"#;

/// Shared server state: one trained planner and the open sessions.
pub struct AppState {
    planner: Arc<Planner>,
    preprocess: PreprocessConfig,
    defaults: SessionConfig,
    sessions: Mutex<HashMap<String, Arc<SessionHandle>>>,
}

impl AppState {
    pub fn new(planner: Planner, preprocess: PreprocessConfig, defaults: SessionConfig) -> Arc<Self> {
        Arc::new(AppState {
            planner: Arc::new(planner),
            preprocess,
            defaults,
            sessions: Mutex::new(HashMap::new()),
        })
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("sessions lock").len()
    }

    fn get(&self, id: &str) -> Option<Arc<SessionHandle>> {
        self.sessions.lock().expect("sessions lock").get(id).cloned()
    }
}

struct SessionHandle {
    session: Mutex<Session>,
    tx: broadcast::Sender<Arc<str>>,
    planning: AtomicBool,
}

impl SessionHandle {
    /// Starts a plan if one is due and none is running. The running task
    /// keeps re-planning while plans stay due.
    fn schedule(self: &Arc<Self>) {
        if self.planning.swap(true, Ordering::AcqRel) {
            return;
        }
        let Some(first) = self.next_job() else {
            return;
        };
        let handle = Arc::clone(self);
        tokio::spawn(async move {
            let mut job = first;
            loop {
                match tokio::task::spawn_blocking(move || job.run()).await {
                    Ok(Ok(plan)) => {
                        let msg: Arc<str> = plan.message().to_string().into();
                        let installed = handle.session.lock().expect("session lock").publish(plan);
                        if installed {
                            let _ = handle.tx.send(msg);
                        }
                    }
                    Ok(Err(e)) => {
                        log::warn!("plan failed: {e}");
                        let msg = json!({"type": "error", "error": e.to_string()}).to_string();
                        let _ = handle.tx.send(msg.into());
                    }
                    Err(e) => log::error!("plan task panicked: {e}"),
                }
                match handle.next_job() {
                    Some(next) => job = next,
                    None => break,
                }
            }
        });
    }

    /// Snapshot of the buffer if a plan is due; otherwise clears the
    /// in-flight flag while still holding the session lock.
    fn next_job(&self) -> Option<flowcoop::session::PlanJob> {
        let mut s = self.session.lock().expect("session lock");
        if s.replan_due() {
            if let Some(job) = s.snapshot() {
                return Some(job);
            }
        }
        self.planning.store(false, Ordering::Release);
        None
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/session", post(open_session))
        .route("/session/{id}", axum::routing::delete(close_session))
        .route("/session/{id}/points", post(push_points))
        .route("/session/{id}/obstacles", post(set_obstacles))
        .route("/session/{id}/state", get(get_state))
        .route("/session/{id}/ws", get(socket))
        .with_state(state)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

fn error(status: StatusCode, msg: impl ToString) -> Response {
    (status, Json(json!({"error": msg.to_string()}))).into_response()
}

fn not_found(id: &str) -> Response {
    error(StatusCode::NOT_FOUND, format!("no session {id}"))
}

#[derive(Serialize, Deserialize)]
pub struct Opened {
    pub id: String,
    pub k: usize,
    pub replan_period_s: f64,
}

async fn open_session(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let config = if body.iter().all(u8::is_ascii_whitespace) {
        state.defaults.clone()
    } else {
        match serde_json::from_slice::<SessionConfig>(&body) {
            Ok(c) => c,
            Err(e) => return error(StatusCode::BAD_REQUEST, format!("bad session config: {e}")),
        }
    };
    let session = match Session::open(Arc::clone(&state.planner), state.preprocess.clone(), config) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e),
    };
    let id = uuid::Uuid::new_v4().simple().to_string();
    let reply = Opened {
        id: id.clone(),
        k: session.k(),
        replan_period_s: session.config().replan_period_s,
    };
    let (tx, _) = broadcast::channel(64);
    let handle = Arc::new(SessionHandle {
        session: Mutex::new(session),
        tx,
        planning: AtomicBool::new(false),
    });
    state.sessions.lock().expect("sessions lock").insert(id, handle);
    (StatusCode::CREATED, Json(reply)).into_response()
}

async fn close_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match state.sessions.lock().expect("sessions lock").remove(&id) {
        Some(h) => {
            let _ = h.tx.send(CLOSED.into());
            StatusCode::NO_CONTENT.into_response()
        }
        None => not_found(&id),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Point {
    pub t: f64,
    pub x: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Points {
    pub points: Vec<Point>,
}

fn ingest(handle: &Arc<SessionHandle>, points: Vec<Point>) -> Result<serde_json::Value, String> {
    let batch: Vec<(f64, Vec<f64>)> = points.into_iter().map(|p| (p.t, p.x)).collect();
    let ack = handle
        .session
        .lock()
        .expect("session lock")
        .push_points(&batch)
        .map_err(|e| e.to_string())?;
    if ack.replan_due {
        handle.schedule();
    }
    Ok(json!({"n_points": ack.n_points, "replan_due": ack.replan_due}))
}

async fn push_points(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Response {
    let Some(handle) = state.get(&id) else {
        return not_found(&id);
    };
    let points: Points = match serde_json::from_slice(&body) {
        Ok(p) => p,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("bad points payload: {e}")),
    };
    match ingest(&handle, points.points) {
        Ok(v) => Json(v).into_response(),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e),
    }
}

async fn set_obstacles(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Response {
    let Some(handle) = state.get(&id) else {
        return not_found(&id);
    };
    let obstacles: Vec<Obstacle> = match serde_json::from_slice(&body) {
        Ok(o) => o,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("bad obstacles payload: {e}")),
    };
    let n = obstacles.len();
    let result = handle.session.lock().expect("session lock").set_obstacles(obstacles);
    match result {
        Ok(()) => Json(json!({"n_obstacles": n})).into_response(),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e),
    }
}

async fn get_state(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let Some(handle) = state.get(&id) else {
        return not_found(&id);
    };
    let result: Result<SessionState, String> = tokio::task::spawn_blocking(move || {
        handle
            .session
            .lock()
            .expect("session lock")
            .state()
            .map_err(|e| e.to_string())
    })
    .await
    .unwrap_or_else(|e| Err(e.to_string()));
    match result {
        Ok(s) => Json(s).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn socket(State(state): State<Arc<AppState>>, Path(id): Path<String>, ws: WebSocketUpgrade) -> Response {
    let Some(handle) = state.get(&id) else {
        return not_found(&id);
    };
    ws.on_upgrade(move |socket| run_socket(socket, handle))
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Incoming {
    Points { points: Vec<Point> },
}

async fn run_socket(socket: WebSocket, handle: Arc<SessionHandle>) {
    let mut rx = handle.tx.subscribe();
    let (mut sink, mut stream) = socket.split();
    let latest = handle.session.lock().expect("session lock").latest_plan();
    if let Some(plan) = latest {
        if sink.send(Message::Text(plan.message().to_string().into())).await.is_err() {
            return;
        }
    }
    loop {
        tokio::select! {
            msg = rx.recv() => match msg {
                Ok(text) => {
                    if sink.send(Message::Text(text.to_string().into())).await.is_err() || &*text == CLOSED {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => log::debug!("socket skipped {n} messages"),
                Err(broadcast::error::RecvError::Closed) => break,
            },
            incoming = stream.next() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    let reply = match serde_json::from_str::<Incoming>(&text) {
                        Ok(Incoming::Points { points }) => match ingest(&handle, points) {
                            Ok(mut v) => {
                                v["type"] = json!("ack");
                                v
                            }
                            Err(e) => json!({"type": "error", "error": e}),
                        },
                        Err(e) => json!({"type": "error", "error": format!("bad message: {e}")}),
                    };
                    if sink.send(Message::Text(reply.to_string().into())).await.is_err() {
                        break;
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
}
