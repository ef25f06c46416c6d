//! Remote provider against a local stand-in for an OpenAI-style API.

mod common;

use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use base64::Engine;
use common::{fixture, kay, source, Case1};
use cultiverse::gateway::{ConversationThread, Gateway, GatewayError, ProviderConfig, RemoteProvider, Scope};
use cultiverse_core::prompt::{build_image_prompt, build_qa_prompt};
use cultiverse_core::{PromptEnvelope, QaQuestion};
use serde_json::{json, Value};

const PNG: &[u8] = b"\x89PNG\r\n\x1a\nfake";

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Ok,
    Fail,
    Slow,
}

/// Authorization header and body of each request received.
type Seen = Arc<Mutex<Vec<(Option<String>, Value)>>>;

#[derive(Clone)]
struct Fake {
    mode: Mode,
    seen: Seen,
}

impl Fake {
    fn record(&self, headers: &HeaderMap, body: &Value) {
        let auth = headers.get("authorization").and_then(|v| v.to_str().ok()).map(String::from);
        self.seen.lock().unwrap().push((auth, body.clone()));
    }

    async fn gate(&self) -> Result<(), (StatusCode, String)> {
        match self.mode {
            Mode::Ok => Ok(()),
            Mode::Fail => Err((StatusCode::INTERNAL_SERVER_ERROR, "upstream exploded".into())),
            Mode::Slow => {
                tokio::time::sleep(Duration::from_secs(5)).await;
                Ok(())
            }
        }
    }
}

async fn chat(State(f): State<Fake>, headers: HeaderMap, Json(body): Json<Value>) -> Result<Json<Value>, (StatusCode, String)> {
    f.record(&headers, &body);
    f.gate().await?;
    let n = body["messages"].as_array().map_or(0, Vec::len);
    Ok(Json(json!({ "choices": [{ "message": { "role": "assistant", "content": format!("reply to {n} messages") } }] })))
}

async fn images(State(f): State<Fake>, headers: HeaderMap, Json(body): Json<Value>) -> Result<Json<Value>, (StatusCode, String)> {
    f.record(&headers, &body);
    f.gate().await?;
    let data = base64::engine::general_purpose::STANDARD.encode(PNG);
    Ok(Json(json!({ "data": [{ "b64_json": data }] })))
}

async fn start(mode: Mode) -> (String, Fake) {
    let fake = Fake { mode, seen: Arc::default() };
    let app = Router::new()
        .route("/v1/chat/completions", post(chat))
        .route("/v1/images/generations", post(images))
        .with_state(fake.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}/v1/", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (base, fake)
}

fn gateway(base: &str, timeout: Duration, artifacts: &std::path::Path) -> Gateway {
    let provider = RemoteProvider::new(base, "test-chat", "test-image", Some("secret".into()), timeout).unwrap();
    Gateway::new(Arc::new(provider), artifacts).with_retries(1).with_timeout(timeout)
}

fn qa(question: QaQuestion) -> PromptEnvelope {
    let ds = fixture();
    build_qa_prompt(&kay(), &source(&ds, Case1::BEE_MONKEY), &question).unwrap()
}

#[tokio::test]
async fn chat_sends_the_whole_thread() {
    let (base, fake) = start(Mode::Ok).await;
    let dir = tempfile::tempdir().unwrap();
    let gw = gateway(&base, Duration::from_secs(5), dir.path());
    let mut thread = ConversationThread::new("s0001-source_exploration", Scope::SourceExploration);

    let first = gw.chat(&mut thread, &qa(QaQuestion::Preset(1))).await.unwrap();
    assert_eq!(first, "reply to 2 messages");
    let second = gw.chat(&mut thread, &qa(QaQuestion::Free(Case1::QA_FOLLOW_UP.into()))).await.unwrap();
    assert_eq!(second, "reply to 4 messages");
    assert_eq!(thread.turns.len(), 2);

    let seen = fake.seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    for (auth, body) in seen.iter() {
        assert_eq!(auth.as_deref(), Some("Bearer secret"));
        assert_eq!(body["model"], "test-chat");
    }
    let roles: Vec<&str> = seen[1].1["messages"].as_array().unwrap().iter().map(|m| m["role"].as_str().unwrap()).collect();
    assert_eq!(roles, ["system", "user", "assistant", "user"]);
    assert_eq!(seen[1].1["messages"][2]["content"], first);
}

#[tokio::test]
async fn images_are_decoded_and_stored() {
    let (base, fake) = start(Mode::Ok).await;
    let dir = tempfile::tempdir().unwrap();
    let gw = gateway(&base, Duration::from_secs(5), dir.path());
    let ds = fixture();
    let envelope = build_image_prompt(&kay(), &source(&ds, Case1::BEE_MONKEY), Case1::IMAGE_SOURCE_TASK).unwrap();
    let result = gw.generate_image(&envelope).await.unwrap();
    assert!(result.image_ref.ends_with(".png"), "{}", result.image_ref);
    assert_eq!(std::fs::read(dir.path().join(&result.image_ref)).unwrap(), PNG);
    let seen = fake.seen.lock().unwrap();
    assert_eq!(seen[0].1["model"], "test-image");
    assert_eq!(seen[0].1["response_format"], "b64_json");
}

#[tokio::test]
async fn http_errors_are_refusals_and_not_retried() {
    let (base, fake) = start(Mode::Fail).await;
    let dir = tempfile::tempdir().unwrap();
    let gw = gateway(&base, Duration::from_secs(5), dir.path());
    let mut thread = ConversationThread::new("t", Scope::SourceExploration);
    let err = gw.chat(&mut thread, &qa(QaQuestion::Preset(1))).await.unwrap_err();
    assert!(matches!(&err, GatewayError::ProviderRefused(m) if m.contains("500") && m.contains("upstream exploded")), "{err}");
    assert_eq!(fake.seen.lock().unwrap().len(), 1);
    assert!(thread.turns.is_empty());
}

#[tokio::test]
async fn slow_provider_times_out_after_retries() {
    let (base, fake) = start(Mode::Slow).await;
    let dir = tempfile::tempdir().unwrap();
    let gw = gateway(&base, Duration::from_millis(200), dir.path());
    let mut thread = ConversationThread::new("t", Scope::SourceExploration);
    let err = gw.chat(&mut thread, &qa(QaQuestion::Preset(1))).await.unwrap_err();
    assert!(matches!(err, GatewayError::ProviderTimeout { attempts: 2 }), "{err}");
    assert_eq!(fake.seen.lock().unwrap().len(), 2);
    assert!(thread.turns.is_empty());
}

#[tokio::test]
async fn config_builds_a_remote_gateway() {
    let (base, fake) = start(Mode::Ok).await;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("provider.json");
    let config = json!({ "kind": "mock", "script": "missing.json", "max_retries": 0 });
    std::fs::write(&path, config.to_string()).unwrap();
    let mut cfg = ProviderConfig::load(&path).unwrap();
    let env = |k: &str| match k {
        "CULTIVERSE_LLM_KIND" => Some("remote".to_string()),
        "CULTIVERSE_LLM_ENDPOINT" => Some(base.clone()),
        _ => None,
    };
    cfg.apply_env(env).unwrap();
    let gw = Gateway::from_config(&cfg, dir.path()).unwrap();
    let mut thread = ConversationThread::new("t", Scope::SourceExploration);
    gw.chat(&mut thread, &qa(QaQuestion::Preset(2))).await.unwrap();
    assert_eq!(fake.seen.lock().unwrap()[0].0, None);

    cfg.credential_var = Some("CULTIVERSE_TEST_UNSET_CREDENTIAL".into());
    let err = Gateway::from_config(&cfg, dir.path()).err().expect("unset credential is rejected");
    assert!(err.to_string().contains("CULTIVERSE_TEST_UNSET_CREDENTIAL"), "{err}");
}
