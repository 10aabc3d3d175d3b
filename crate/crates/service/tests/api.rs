use std::sync::{Arc, OnceLock};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use flowcoop::datagen::{default_modes, generate};
use flowcoop::pipeline::{train, PipelineConfig, TrainedModel};
use flowcoop::session::SessionConfig;
use flowcoop::trajectory::{preprocess_with, Dataset};
use flowcoop_service::{router, AppState};
use futures::{SinkExt, StreamExt};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;
use tower::ServiceExt;

fn data() -> &'static Dataset {
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| generate(&default_modes(), 10.0, 7).unwrap())
}

fn model() -> &'static TrainedModel {
    static MODEL: OnceLock<TrainedModel> = OnceLock::new();
    MODEL.get_or_init(|| train(data(), &PipelineConfig::default(), 7).unwrap())
}

fn app(period: f64) -> (Arc<AppState>, Router) {
    let m = model();
    let defaults = SessionConfig {
        replan_period_s: period,
        ..SessionConfig::default()
    };
    let state = AppState::new(m.planner().unwrap(), m.config.preprocess.clone(), defaults);
    (Arc::clone(&state), router(state))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

fn points(demo: usize, range: std::ops::Range<usize>) -> Value {
    let raw = &data().demos[demo].human;
    let pts: Vec<Value> = range.map(|i| json!({"t": raw.t[i], "x": raw.x[i]})).collect();
    json!({ "points": pts })
}

async fn open(app: &Router) -> String {
    let (status, body) = call(app, Method::POST, "/session", None).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["k"], 5);
    body["id"].as_str().unwrap().to_string()
}

async fn wait_ready(app: &Router, id: &str, n_points: usize) -> Value {
    for _ in 0..200 {
        let (status, state) = call(app, Method::GET, &format!("/session/{id}/state"), None).await;
        assert_eq!(status, StatusCode::OK);
        if state["status"] == "ready" && state["plan"]["n_points"] == n_points {
            return state;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("session {id} never reached a plan over {n_points} points");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn session_lifecycle() {
    let (state, app) = app(100.0);
    let (status, body) = call(&app, Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, "ok");
    let id = open(&app).await;
    assert_eq!(state.session_count(), 1);

    let (_, st) = call(&app, Method::GET, &format!("/session/{id}/state"), None).await;
    assert_eq!(st["status"], "warming_up");
    assert_eq!(st["n_points"], 0);
    assert!(st["p"].is_null());

    let (status, ack) = call(&app, Method::POST, &format!("/session/{id}/points"), Some(points(0, 0..1))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["replan_due"], false);
    let (_, ack) = call(&app, Method::POST, &format!("/session/{id}/points"), Some(points(0, 1..20))).await;
    assert_eq!(ack["n_points"], 20);
    assert_eq!(ack["replan_due"], true);

    let st = wait_ready(&app, &id, 20).await;
    assert_eq!(st["plan"]["path"].as_array().unwrap().len(), 50);
    assert_eq!(st["plan"]["joints"][0].as_array().unwrap().len(), 7);
    let p: Vec<f64> = serde_json::from_value(st["p"].clone()).unwrap();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let (status, _) = call(&app, Method::DELETE, &format!("/session/{id}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    assert_eq!(state.session_count(), 0);
    let (status, _) = call(&app, Method::GET, &format!("/session/{id}/state"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn rejects_bad_requests() {
    let (_, app) = app(2.0);
    for (method, uri) in [
        (Method::GET, "/session/nope/state"),
        (Method::DELETE, "/session/nope"),
        (Method::POST, "/session/nope/points"),
    ] {
        let (status, body) = call(&app, method, uri, Some(points(0, 0..2))).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        assert!(body["error"].is_string());
    }
    let id = open(&app).await;
    let uri = format!("/session/{id}/points");
    call(&app, Method::POST, &uri, Some(points(0, 5..8))).await;
    let (status, body) = call(&app, Method::POST, &uri, Some(points(0, 0..2))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("does not follow"));
    let (status, _) = call(&app, Method::POST, &uri, Some(json!({"points": [{"t": 9.0, "x": [1.0]}]}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, Method::POST, &uri, Some(json!({"pts": []}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (_, st) = call(&app, Method::GET, &format!("/session/{id}/state"), None).await;
    assert_eq!(st["n_points"], 3);

    let obstacles = format!("/session/{id}/obstacles");
    let (status, _) = call(&app, Method::POST, &obstacles, Some(json!([{"center": [0.4, 0.0, 0.4], "radius_m": -1.0}]))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, body) = call(&app, Method::POST, &obstacles, Some(json!([{"center": [0.4, 0.0, 0.4], "radius_m": 0.05}]))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["n_obstacles"], 1);

    let (status, _) = call(&app, Method::POST, "/session", Some(json!({"replan_period_s": -1.0}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn replayed_demo_matches_batch_descriptor() {
    let (_, app) = app(2.0);
    let id = open(&app).await;
    let demo = 45;
    let n = data().demos[demo].human.len();
    for start in (0..n).step_by(10) {
        let batch = points(demo, start..(start + 10).min(n));
        let (status, _) = call(&app, Method::POST, &format!("/session/{id}/points"), Some(batch)).await;
        assert_eq!(status, StatusCode::OK);
    }
    let (_, st) = call(&app, Method::GET, &format!("/session/{id}/state"), None).await;
    let streamed: Vec<f64> = serde_json::from_value(st["p"].clone()).unwrap();
    let m = model();
    let traj = preprocess_with(&data().demos[demo].human, &m.config.preprocess).unwrap().trajectory;
    let batch = m.bank.describe(&traj).unwrap().p;
    let diff = streamed.iter().zip(&batch).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-9, "diff {diff}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn websocket_pushes_plans() {
    let (_, app) = app(1.0);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let server = app.clone();
    tokio::spawn(async move { axum::serve(listener, server).await.unwrap() });

    let id = open(&app).await;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/session/{id}/ws"))
        .await
        .unwrap();
    let raw = &data().demos[12].human;
    let pts: Vec<Value> = (0..raw.len()).map(|i| json!({"t": raw.t[i], "x": raw.x[i]})).collect();
    ws.send(Message::Text(json!({"type": "points", "points": pts}).to_string().into()))
        .await
        .unwrap();
    ws.send(Message::Text("{\"type\":\"bogus\"}".into())).await.unwrap();

    let (mut acked, mut errored, mut state) = (false, false, None);
    while state.is_none() || !acked || !errored {
        let msg = tokio::time::timeout(Duration::from_secs(20), ws.next())
            .await
            .expect("socket timed out")
            .unwrap()
            .unwrap();
        let Message::Text(text) = msg else { continue };
        let v: Value = serde_json::from_str(&text).unwrap();
        match v["type"].as_str().unwrap() {
            "ack" => {
                assert_eq!(v["n_points"], raw.len());
                acked = true;
            }
            "error" => errored = true,
            "state" => state = Some(v),
            other => panic!("unexpected message {other}"),
        }
    }
    let state = state.unwrap();
    for key in ["p", "path", "joints", "clearance_mm", "seq"] {
        assert!(state.get(key).is_some(), "missing {key}");
    }
    assert_eq!(state["path"].as_array().unwrap().len(), 50);
    assert!(state["clearance_mm"].is_null());

    let (status, _) = call(&app, Method::DELETE, &format!("/session/{id}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    // the socket sees the close notice
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(20), ws.next()).await.unwrap();
        match msg {
            Some(Ok(Message::Text(t))) if t.contains("closed") => break,
            Some(Ok(_)) => continue,
            other => panic!("socket ended without a close notice: {other:?}"),
        }
    }
}
