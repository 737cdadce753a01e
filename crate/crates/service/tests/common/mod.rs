#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use riskscope_core::router::{ChatClient, ChatRequest, ClientError};
use riskscope_service::{router, AppState, Engine, EventLog, ServiceConfig};
use serde_json::Value;
use tower::ServiceExt;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn config(log_dir: &Path) -> ServiceConfig {
    let mut cfg = ServiceConfig::load(data_dir().join("service.json")).expect("bundled config");
    cfg.log_dir = log_dir.to_path_buf();
    cfg
}

pub fn state(log_dir: &Path, client: Option<Arc<dyn ChatClient>>) -> AppState {
    let cfg = config(log_dir);
    let engine = Engine::load(&cfg).expect("bundled artifacts load");
    AppState::new(engine, EventLog::new(&cfg.log_dir), client)
}

/// Replies with the serialized request body and records every call.
#[derive(Default)]
pub struct EchoClient {
    pub calls: AtomicUsize,
    pub bodies: Mutex<Vec<Value>>,
}

impl ChatClient for EchoClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let body = request.to_body("mock");
        self.bodies.lock().unwrap().push(body.clone());
        Ok(body.to_string())
    }
}

pub struct FailingClient(pub ClientError);

impl ChatClient for FailingClient {
    fn complete(&self, _: &ChatRequest) -> Result<String, ClientError> {
        Err(self.0.clone())
    }
}

pub struct Response {
    pub status: StatusCode,
    pub bytes: Vec<u8>,
}

impl Response {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).expect("json body")
    }
}

pub async fn call(state: &AppState, method: &str, uri: &str, body: Option<Value>) -> Response {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = router(state.clone()).oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Response { status, bytes }
}

pub async fn new_session(state: &AppState, patient: Option<u64>) -> String {
    let body = patient.map(|p| serde_json::json!({ "patient_id": p }));
    let r = call(state, "POST", "/sessions", body).await;
    assert_eq!(r.status, StatusCode::CREATED);
    r.json()["session_id"].as_str().unwrap().to_string()
}

pub async fn chat(state: &AppState, sid: &str, body: Value) -> Value {
    let r = call(state, "POST", &format!("/sessions/{sid}/chat"), Some(body)).await;
    assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.bytes));
    r.json()
}

/// First patient the bundled model predicts as class 1.
pub fn at_risk_patient(state: &AppState) -> u64 {
    use riskscope_core::ProbabilityModel;
    let e = &state.engine;
    e.dataset
        .records()
        .iter()
        .find(|r| e.model.predict_class(&r.values) == 1)
        .map(|r| r.id)
        .expect("an at-risk patient")
}
