//! Remote backends against a throwaway local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use whistle::backends::{
    complete_chat, BackendError, ChatBackend, ChatRequest, Embedder, ImagePayload, RemoteBackend,
    RemoteEmbedder, RemoteSettings, RetryPolicy,
};

#[derive(Debug, Clone)]
struct Seen {
    headers: Vec<(String, String)>,
    body: Value,
}

impl Seen {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Serves `replies` in order, one connection each, and records requests.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            loop {
                line.clear();
                reader.read_line(&mut line).unwrap();
                let l = line.trim_end();
                if l.is_empty() {
                    break;
                }
                let (k, v) = l.split_once(':').unwrap();
                headers.push((k.trim().to_string(), v.trim().to_string()));
            }
            let len: usize = headers
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
                .map(|(_, v)| v.parse().unwrap())
                .unwrap_or(0);
            let mut raw = vec![0; len];
            reader.read_exact(&mut raw).unwrap();
            log.lock().unwrap().push(Seen {
                headers,
                body: serde_json::from_slice(&raw).unwrap_or(Value::Null),
            });
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    (url, seen)
}

fn ok_body(text: &str) -> String {
    json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 12, "completion_tokens": 3}
    })
    .to_string()
}

fn settings(url: &str) -> RemoteSettings {
    let mut s = RemoteSettings::new(url, "test-model");
    s.timeout = Duration::from_secs(5);
    s.retry = RetryPolicy {
        max_retries: 2,
        base_delay: Duration::from_millis(5),
        max_delay: Duration::from_millis(20),
    };
    s
}

fn request() -> ChatRequest {
    ChatRequest::new("rule", "q0001/rule", "You are a referee.", "Decide.")
}

#[test]
fn successful_call_returns_text_and_usage() {
    let (url, seen) = serve(vec![(200, ok_body("Prediction: O2"))]);
    let backend = RemoteBackend::new("gpt", settings(&url)).unwrap();
    let resp = complete_chat(&backend, &request()).unwrap();
    assert_eq!(resp.text, "Prediction: O2");
    assert_eq!(resp.backend_id, "gpt");
    assert_eq!(resp.token_usage.unwrap().completion_tokens, 3);
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].body["model"], "test-model");
    let messages = seen[0].body["messages"].as_array().unwrap();
    assert_eq!(messages[0]["role"], "system");
    assert_eq!(messages[0]["content"], "You are a referee.");
    assert_eq!(messages[1]["role"], "user");
}

#[test]
fn transient_errors_are_retried() {
    let (url, seen) = serve(vec![
        (503, "busy".into()),
        (429, "slow down".into()),
        (200, ok_body("done")),
    ]);
    let backend = RemoteBackend::new("gpt", settings(&url)).unwrap();
    assert_eq!(complete_chat(&backend, &request()).unwrap().text, "done");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn retries_are_bounded() {
    let (url, seen) = serve(vec![(500, "a".into()), (500, "b".into()), (500, "c".into()), (200, ok_body("late"))]);
    let backend = RemoteBackend::new("gpt", settings(&url)).unwrap();
    let err = complete_chat(&backend, &request()).unwrap_err();
    assert!(matches!(err, BackendError::Transport { .. } | BackendError::Http { .. }), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn auth_failure_is_not_retried() {
    let (url, seen) = serve(vec![(401, "bad key".into()), (200, ok_body("never"))]);
    std::env::set_var("WHISTLE_TEST_KEY_401", "sk-test");
    let mut s = settings(&url);
    s.auth_env_var = Some("WHISTLE_TEST_KEY_401".into());
    let backend = RemoteBackend::new("gpt", s).unwrap();
    let err = complete_chat(&backend, &request()).unwrap_err();
    assert!(matches!(err, BackendError::Auth { status: 401, .. }), "{err:?}");
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].header("authorization"), Some("Bearer sk-test"));
}

#[test]
fn missing_key_variable_is_a_config_error() {
    let mut s = settings("http://127.0.0.1:9/none");
    s.auth_env_var = Some("WHISTLE_TEST_KEY_UNSET_XYZ".into());
    let backend = RemoteBackend::new("gpt", s).unwrap();
    let err = complete_chat(&backend, &request()).unwrap_err();
    assert!(err.to_string().contains("WHISTLE_TEST_KEY_UNSET_XYZ"), "{err}");
}

#[test]
fn images_need_a_vision_backend() {
    let frame = ImagePayload::new("image/png", vec![1, 2, 3]);
    let req = request().with_attachments(vec![frame]);
    let blind = RemoteBackend::new("text-only", settings("http://127.0.0.1:9/none")).unwrap();
    assert!(matches!(
        complete_chat(&blind, &req).unwrap_err(),
        BackendError::Capability { attachments: 1, .. }
    ));

    let (url, seen) = serve(vec![(200, ok_body("{}"))]);
    let mut s = settings(&url);
    s.vision = true;
    let vision = RemoteBackend::new("vision", s).unwrap();
    assert!(vision.supports_vision());
    complete_chat(&vision, &req).unwrap();
    let body = seen.lock().unwrap()[0].body.to_string();
    assert!(body.contains("data:image/png;base64,AQID"), "{body}");
}

#[test]
fn undecodable_reply_is_reported() {
    let (url, _) = serve(vec![(200, r#"{"choices": []}"#.into())]);
    let backend = RemoteBackend::new("gpt", settings(&url)).unwrap();
    assert!(matches!(
        complete_chat(&backend, &request()).unwrap_err(),
        BackendError::Decode { .. }
    ));
}

#[test]
fn remote_embedder_checks_dimension() {
    let (url, seen) = serve(vec![
        (200, json!({"data": [{"embedding": [0.5, 0.25, 1.0]}]}).to_string()),
        (200, json!({"data": [{"embedding": [0.5]}]}).to_string()),
    ]);
    let emb = RemoteEmbedder::new("emb", settings(&url), 3).unwrap();
    assert_eq!(emb.dim(), 3);
    assert_eq!(emb.fingerprint(), "remote:test-model:dim=3");
    assert_eq!(emb.embed("a penalty").unwrap(), vec![0.5, 0.25, 1.0]);
    assert_eq!(seen.lock().unwrap()[0].body["input"], "a penalty");
    assert!(whistle::backends::embed_text(&emb, "short").is_err());
}
