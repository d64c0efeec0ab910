//! OpenAI-compatible client against a scripted local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use k2rag::provider::{Capability, GenerationRequest, OpenAiClient, ProviderError, RetryPolicy};
use k2rag::{Embedder, Generator, Summarizer};

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    authorization: Option<String>,
    body: serde_json::Value,
}

/// Serves the scripted `(status, body)` responses in order, one per
/// connection, and records each request.
struct FakeServer {
    base_url: String,
    seen: Arc<Mutex<Vec<Seen>>>,
}

impl FakeServer {
    fn start(script: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}/v1", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        thread::spawn(move || {
            for (status, body) in script {
                let Ok((stream, _)) = listener.accept() else { return };
                log.lock().unwrap().push(serve(stream, status, &body));
            }
        });
        FakeServer { base_url, seen }
    }

    fn seen(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, status: u16, body: &str) -> Seen {
    let mut reader = BufReader::new(stream);
    let mut request_line = String::new();
    reader.read_line(&mut request_line).unwrap();
    let path = request_line.split_whitespace().nth(1).unwrap_or_default().to_owned();
    let mut length = 0;
    let mut authorization = None;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        let (name, value) = line.split_once(':').unwrap();
        match name.to_ascii_lowercase().as_str() {
            "content-length" => length = value.trim().parse().unwrap(),
            "authorization" => authorization = Some(value.trim().to_owned()),
            _ => {}
        }
    }
    let mut raw = vec![0; length];
    reader.read_exact(&mut raw).unwrap();
    let reply = format!(
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    reader.get_mut().write_all(reply.as_bytes()).unwrap();
    Seen {
        path,
        authorization,
        body: serde_json::from_slice(&raw).unwrap_or(serde_json::Value::Null),
    }
}

fn completion(text: &str) -> (u16, String) {
    (200, serde_json::json!({ "choices": [{ "text": text }] }).to_string())
}

fn client(base_url: &str, capability: Capability, retries: u32) -> OpenAiClient {
    OpenAiClient::new(
        base_url,
        "test-model",
        capability,
        Duration::from_secs(5),
        RetryPolicy::no_delay(retries),
        Some("secret".into()),
    )
    .unwrap()
}

#[test]
fn completion_request_shape_and_trimmed_text() {
    let server = FakeServer::start(vec![completion("  Paris \n")]);
    let llm = client(&server.base_url, Capability::Generate, 0);
    let req = GenerationRequest {
        max_tokens: 32,
        ..GenerationRequest::new("Capital of France?")
    };
    assert_eq!(llm.generate(&req).unwrap(), "Paris");

    let seen = server.seen();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].path, "/v1/completions");
    assert_eq!(seen[0].authorization.as_deref(), Some("Bearer secret"));
    assert_eq!(seen[0].body["model"], "test-model");
    assert_eq!(seen[0].body["prompt"], "Capital of France?");
    assert_eq!(seen[0].body["max_tokens"], 32);
    assert_eq!(seen[0].body["temperature"], 0.0);
}

#[test]
fn chat_style_choice_is_accepted() {
    let body = serde_json::json!({ "choices": [{ "message": { "content": "Rome" } }] }).to_string();
    let server = FakeServer::start(vec![(200, body)]);
    let llm = client(&server.base_url, Capability::Generate, 0);
    assert_eq!(llm.generate(&GenerationRequest::new("q")).unwrap(), "Rome");
}

#[test]
fn server_error_is_retried_then_succeeds() {
    let server = FakeServer::start(vec![(500, "{}".into()), (429, "slow down".into()), completion("ok")]);
    let llm = client(&server.base_url, Capability::Generate, 2);
    assert_eq!(llm.generate(&GenerationRequest::new("q")).unwrap(), "ok");
    assert_eq!(server.seen().len(), 3);
}

#[test]
fn persistent_server_error_exhausts_retries() {
    let server = FakeServer::start(vec![(503, "down".into()); 3]);
    let llm = client(&server.base_url, Capability::Generate, 2);
    match llm.generate(&GenerationRequest::new("q")) {
        Err(ProviderError::Exhausted { attempts, last }) => {
            assert_eq!(attempts, 3);
            assert!(matches!(*last, ProviderError::Http { status: 503, .. }));
        }
        other => panic!("expected exhaustion, got {other:?}"),
    }
    assert_eq!(server.seen().len(), 3);
}

#[test]
fn client_error_is_not_retried() {
    let server = FakeServer::start(vec![(400, "bad request".into()), completion("never")]);
    let llm = client(&server.base_url, Capability::Generate, 2);
    let err = llm.generate(&GenerationRequest::new("q")).unwrap_err();
    assert!(matches!(err, ProviderError::Http { status: 400, ref body } if body == "bad request"));
    assert_eq!(server.seen().len(), 1);
}

#[test]
fn unreachable_endpoint_fails_after_retries() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let llm = client(&format!("http://127.0.0.1:{port}/v1"), Capability::Generate, 1);
    match llm.generate(&GenerationRequest::new("q")) {
        Err(ProviderError::Exhausted { attempts: 2, last }) => {
            assert!(matches!(*last, ProviderError::Transport(_)));
        }
        other => panic!("expected transport exhaustion, got {other:?}"),
    }
}

#[test]
fn capability_mismatch_makes_no_request() {
    let server = FakeServer::start(vec![completion("unused")]);
    let embedder = client(&server.base_url, Capability::Embed, 0);
    let err = embedder.generate(&GenerationRequest::new("q")).unwrap_err();
    assert!(matches!(
        err,
        ProviderError::Capability {
            expected: Capability::Generate,
            actual: Capability::Embed
        }
    ));
    assert!(Summarizer::summarize(&embedder, "text").is_err());
    assert!(server.seen().is_empty());
}

#[test]
fn embeddings_round_trip() {
    let body = serde_json::json!({ "data": [{ "embedding": [0.5, -1.0, 2.0] }] }).to_string();
    let server = FakeServer::start(vec![(200, body)]);
    let embedder = client(&server.base_url, Capability::Embed, 0);
    assert_eq!(embedder.embedder_id(), "openai:test-model");
    assert_eq!(embedder.embed("hello").unwrap(), vec![0.5, -1.0, 2.0]);
    let seen = server.seen();
    assert_eq!(seen[0].path, "/v1/embeddings");
    assert_eq!(seen[0].body["input"], "hello");
}

#[test]
fn malformed_and_empty_responses_are_decode_errors() {
    let server = FakeServer::start(vec![(200, "not json".into()), completion("   ")]);
    let llm = client(&server.base_url, Capability::Generate, 2);
    assert!(matches!(
        llm.generate(&GenerationRequest::new("q")),
        Err(ProviderError::Decode(_))
    ));
    assert!(matches!(
        llm.generate(&GenerationRequest::new("q")),
        Err(ProviderError::Decode(_))
    ));
}

#[test]
fn empty_inputs_are_rejected_locally() {
    let server = FakeServer::start(vec![]);
    let llm = client(&server.base_url, Capability::Generate, 0);
    assert!(matches!(
        llm.generate(&GenerationRequest::new("  ")),
        Err(ProviderError::Rejected(_))
    ));
    let embedder = client(&server.base_url, Capability::Embed, 0);
    assert!(matches!(embedder.embed(""), Err(ProviderError::Rejected(_))));
}
