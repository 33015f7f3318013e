use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use afa_cli::http::{completion_text, HttpClient};
use afa_core::extraction::{ChatClient, ChatError, ChatRequest, InferenceSettings, Stage};
use serde_json::{json, Value};

struct Seen {
    headers: Vec<(String, String)>,
    body: Value,
}

/// Serves one canned response and reports what the client sent.
fn serve_once(status: &str, extra_headers: &str, body: &str) -> (String, mpsc::Receiver<Seen>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let response = format!(
        "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n{extra_headers}\r\n{body}",
        body.len()
    );
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let mut headers = Vec::new();
        loop {
            line.clear();
            reader.read_line(&mut line).unwrap();
            let l = line.trim_end();
            if l.is_empty() {
                break;
            }
            let (k, v) = l.split_once(':').unwrap();
            headers.push((k.trim().to_lowercase(), v.trim().to_string()));
        }
        let len: usize = headers
            .iter()
            .find(|(k, _)| k == "content-length")
            .map_or(0, |(_, v)| v.parse().unwrap());
        let mut buf = vec![0; len];
        reader.read_exact(&mut buf).unwrap();
        let mut stream = stream;
        stream.write_all(response.as_bytes()).unwrap();
        let _ = tx.send(Seen {
            headers,
            body: serde_json::from_slice(&buf).unwrap_or(Value::Null),
        });
    });
    (url, rx)
}

fn request() -> ChatRequest {
    ChatRequest {
        article_id: "a".into(),
        stage: Stage::Frame,
        attempt: 0,
        system: "You are an annotator.".into(),
        user: "Article text".into(),
        settings: InferenceSettings::for_stage(Stage::Frame),
    }
}

fn client(url: &str, token: Option<&str>) -> HttpClient {
    HttpClient::new("test-model", url, token.map(String::from), Duration::from_secs(5))
}

#[test]
fn sends_bearer_token_and_parses_reply() {
    let reply = json!({"choices": [{"message": {"role": "assistant", "content": "{\"primary_frame\": \"risk_resilience\"}"}}]});
    let (url, rx) = serve_once("200 OK", "", &reply.to_string());
    let text = client(&url, Some("s3cret")).complete(&request()).unwrap();
    assert_eq!(text, "{\"primary_frame\": \"risk_resilience\"}");
    let seen = rx.recv_timeout(Duration::from_secs(5)).unwrap();
    assert!(seen.headers.contains(&("authorization".into(), "Bearer s3cret".into())));
    assert_eq!(seen.body["model"], "test-model");
    assert_eq!(seen.body["messages"][0]["role"], "system");
    assert_eq!(seen.body["messages"][1]["content"], "Article text");
    assert_eq!(seen.body["temperature"], json!(request().settings.temperature));
}

#[test]
fn omits_authorization_without_token() {
    let reply = json!({"choices": [{"message": {"content": "ok"}}]});
    let (url, rx) = serve_once("200 OK", "", &reply.to_string());
    client(&url, None).complete(&request()).unwrap();
    let seen = rx.recv_timeout(Duration::from_secs(5)).unwrap();
    assert!(seen.headers.iter().all(|(k, _)| k != "authorization"));
}

#[test]
fn rate_limit_carries_retry_after() {
    let (url, _rx) = serve_once("429 Too Many Requests", "retry-after: 2\r\n", "{}");
    let err = client(&url, None).complete(&request()).unwrap_err();
    assert_eq!(err, ChatError::RateLimited { retry_after_ms: Some(2000) });
}

#[test]
fn server_errors_are_transport_and_client_errors_fatal() {
    let (url, _rx) = serve_once("503 Service Unavailable", "", "{}");
    assert!(matches!(client(&url, None).complete(&request()), Err(ChatError::Transport(_))));
    let (url, _rx) = serve_once("401 Unauthorized", "", "{\"error\": \"bad key\"}");
    match client(&url, None).complete(&request()) {
        Err(ChatError::Fatal(m)) => assert!(m.contains("401") && m.contains("bad key"), "{m}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn reply_without_content_is_transport_error() {
    let (url, _rx) = serve_once("200 OK", "", "{\"choices\": []}");
    assert!(matches!(client(&url, None).complete(&request()), Err(ChatError::Transport(_))));
    assert_eq!(completion_text(&json!({"choices": [{"message": {"content": "x"}}]})), Some("x"));
}

#[test]
fn refused_connection_is_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}/v1/chat/completions");
    assert!(matches!(client(&url, None).complete(&request()), Err(ChatError::Transport(_))));
}
