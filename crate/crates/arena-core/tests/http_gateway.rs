//! Exercises the chat-completions transport against a local stub server:
//! happy path, retry-on-429, server errors, timeouts, malformed bodies, and
//! unreachable endpoints.

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::HeaderMap;
use axum::response::IntoResponse;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use arena_core::gateway::{Backend, BackendDescriptor, BackendKind, GatewayError, GenerationRequest};

fn chat_reply(text: &str) -> Value {
    json!({"choices": [{"message": {"content": text}}]})
}

async fn serve(app: Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    format!("http://{addr}")
}

fn http_descriptor(endpoint: String) -> BackendDescriptor {
    BackendDescriptor {
        kind: BackendKind::HttpChat,
        endpoint: Some(endpoint),
        max_retries: 3,
        backoff_base_ms: 1,
        ..BackendDescriptor::echo("remote-model")
    }
}

fn request() -> GenerationRequest {
    GenerationRequest::text_only("t1", "system prompt", "user prompt")
}

#[tokio::test]
async fn extracts_text_from_a_successful_completion() {
    let app = Router::new().route(
        "/v1/chat/completions",
        post(|Json(body): Json<Value>| async move {
            assert_eq!(body["model"], "remote-model");
            assert_eq!(body["messages"][0]["role"], "system");
            assert_eq!(body["messages"][1]["content"][0]["text"], "user prompt");
            Json(chat_reply("the video shows a parade"))
        }),
    );
    let base = serve(app).await;
    let backend = Backend::new(http_descriptor(format!("{base}/v1/chat/completions"))).unwrap();

    let response = backend.generate(&request()).await.unwrap();
    assert_eq!(response.text, "the video shows a parade");
    assert_eq!(response.retry_count, 0);
}

#[tokio::test]
async fn rate_limits_retry_until_the_server_relents() {
    let hits = Arc::new(AtomicU32::new(0));
    let app = Router::new()
        .route(
            "/chat",
            post(|State(hits): State<Arc<AtomicU32>>| async move {
                if hits.fetch_add(1, Ordering::SeqCst) < 2 {
                    (axum::http::StatusCode::TOO_MANY_REQUESTS, "slow down").into_response()
                } else {
                    Json(chat_reply("finally")).into_response()
                }
            }),
        )
        .with_state(hits.clone());
    let base = serve(app).await;
    let backend = Backend::new(http_descriptor(format!("{base}/chat"))).unwrap();

    let response = backend.generate(&request()).await.unwrap();
    assert_eq!(response.text, "finally");
    assert_eq!(response.retry_count, 2);
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn persistent_rate_limiting_exhausts_retries() {
    let app = Router::new().route(
        "/chat",
        post(|| async { (axum::http::StatusCode::TOO_MANY_REQUESTS, "no") }),
    );
    let base = serve(app).await;
    let backend = Backend::new(http_descriptor(format!("{base}/chat"))).unwrap();

    match backend.generate(&request()).await {
        Err(GatewayError::RateLimited { retries, .. }) => assert_eq!(retries, 3),
        other => panic!("expected rate-limit exhaustion, got {other:?}"),
    }
}

#[tokio::test]
async fn server_errors_retry_then_surface_as_unavailable() {
    let hits = Arc::new(AtomicU32::new(0));
    let app = Router::new()
        .route(
            "/chat",
            post(|State(hits): State<Arc<AtomicU32>>| async move {
                hits.fetch_add(1, Ordering::SeqCst);
                (axum::http::StatusCode::INTERNAL_SERVER_ERROR, "boom")
            }),
        )
        .with_state(hits.clone());
    let base = serve(app).await;
    let backend = Backend::new(http_descriptor(format!("{base}/chat"))).unwrap();

    match backend.generate(&request()).await {
        Err(GatewayError::BackendUnavailable { detail, .. }) => {
            assert!(detail.contains("500"), "{detail}");
        }
        other => panic!("expected unavailable, got {other:?}"),
    }
    assert_eq!(hits.load(Ordering::SeqCst), 4, "initial try plus three retries");
}

#[tokio::test]
async fn client_errors_fail_immediately_without_retry() {
    let hits = Arc::new(AtomicU32::new(0));
    let app = Router::new()
        .route(
            "/chat",
            post(|State(hits): State<Arc<AtomicU32>>| async move {
                hits.fetch_add(1, Ordering::SeqCst);
                (axum::http::StatusCode::BAD_REQUEST, "bad payload")
            }),
        )
        .with_state(hits.clone());
    let base = serve(app).await;
    let backend = Backend::new(http_descriptor(format!("{base}/chat"))).unwrap();

    assert!(matches!(
        backend.generate(&request()).await,
        Err(GatewayError::BackendUnavailable { .. })
    ));
    assert_eq!(hits.load(Ordering::SeqCst), 1, "4xx must not retry");
}

#[tokio::test]
async fn malformed_bodies_fail_without_retry() {
    let app = Router::new().route("/chat", post(|| async { Json(json!({"choices": []})) }));
    let base = serve(app).await;
    let backend = Backend::new(http_descriptor(format!("{base}/chat"))).unwrap();

    match backend.generate(&request()).await {
        Err(GatewayError::MalformedResponse { detail, .. }) => {
            assert!(detail.contains("choices"), "{detail}");
        }
        other => panic!("expected malformed response, got {other:?}"),
    }
}

#[tokio::test]
async fn slow_servers_time_out() {
    let app = Router::new().route(
        "/chat",
        post(|| async {
            tokio::time::sleep(Duration::from_secs(5)).await;
            Json(chat_reply("too late"))
        }),
    );
    let base = serve(app).await;
    let descriptor = BackendDescriptor {
        timeout_s: 1,
        max_retries: 0,
        ..http_descriptor(format!("{base}/chat"))
    };
    let backend = Backend::new(descriptor).unwrap();

    assert!(matches!(
        backend.generate(&request()).await,
        Err(GatewayError::Timeout { .. })
    ));
}

#[tokio::test]
async fn unreachable_endpoints_surface_as_unavailable() {
    let descriptor = BackendDescriptor {
        max_retries: 1,
        ..http_descriptor("http://127.0.0.1:9/chat".into())
    };
    let backend = Backend::new(descriptor).unwrap();

    assert!(matches!(
        backend.generate(&request()).await,
        Err(GatewayError::BackendUnavailable { .. })
    ));
}

#[tokio::test]
async fn bearer_token_rides_along_when_the_env_var_is_set() {
    std::env::set_var("ARENA_TEST_STUB_KEY", "sk-stub-123");
    let app = Router::new().route(
        "/chat",
        post(|headers: HeaderMap| async move {
            let auth = headers
                .get("authorization")
                .and_then(|v| v.to_str().ok())
                .unwrap_or("")
                .to_string();
            Json(chat_reply(&auth))
        }),
    );
    let base = serve(app).await;
    let descriptor = BackendDescriptor {
        api_key_env: Some("ARENA_TEST_STUB_KEY".into()),
        ..http_descriptor(format!("{base}/chat"))
    };
    let backend = Backend::new(descriptor).unwrap();

    let response = backend.generate(&request()).await.unwrap();
    assert_eq!(response.text, "Bearer sk-stub-123");
}
