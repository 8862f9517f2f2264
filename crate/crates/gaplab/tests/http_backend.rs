//! HTTP backend tests against a scripted in-process server: retries, auth,
//! logprob handling, malformed payloads, and journal replay.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use gaplab::backend::{BackendError, CompletionRequest, HttpBackend, HttpModel, Journal};
use gaplab::config::{BackendConfig, TaskConfig, VerifyConfig};
use gaplab::templates::build_task;
use gaplab_core::types::{Generation, Gold, PromptInstance, SamplingConfig, TaskSpec};
use gaplab_core::Mechanism;

/// Scripted one-connection-per-response server. Requests beyond the script
/// are refused because the listener drops when the script runs out.
struct Server {
    url: String,
    hits: Arc<AtomicUsize>,
    requests: Arc<Mutex<Vec<String>>>,
}

fn serve(script: Vec<(u16, String)>) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind test listener");
    let url = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let requests = Arc::new(Mutex::new(Vec::new()));
    let (hits_w, requests_w) = (Arc::clone(&hits), Arc::clone(&requests));
    thread::spawn(move || {
        for (status, body) in script {
            let Ok((mut stream, _)) = listener.accept() else { return };
            let request = read_request(&mut stream);
            hits_w.fetch_add(1, Ordering::SeqCst);
            requests_w.lock().unwrap().push(request);
            let reason = match status {
                200 => "OK",
                401 => "Unauthorized",
                429 => "Too Many Requests",
                _ => "Error",
            };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    Server { url, hits, requests }
}

/// Reads one HTTP/1.1 request (headers plus content-length body) and returns
/// the body text.
fn read_request(stream: &mut TcpStream) -> String {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        let n = stream.read(&mut chunk).expect("read request");
        assert!(n > 0, "connection closed mid-request");
        buf.extend_from_slice(&chunk[..n]);
        if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
            break pos + 4;
        }
    };
    let headers = String::from_utf8_lossy(&buf[..header_end]).to_lowercase();
    let content_length: usize = headers
        .lines()
        .find_map(|l| l.strip_prefix("content-length:"))
        .expect("content-length header")
        .trim()
        .parse()
        .expect("content-length value");
    while buf.len() < header_end + content_length {
        let n = stream.read(&mut chunk).expect("read body");
        assert!(n > 0, "connection closed mid-body");
        buf.extend_from_slice(&chunk[..n]);
    }
    String::from_utf8_lossy(&buf[header_end..header_end + content_length]).into_owned()
}

fn backend_config(url: &str) -> BackendConfig {
    toml::from_str(&format!(
        r#"
        kind = "http"
        model = "test-model"
        url = "{url}"
        api_key_env = "GAPLAB_TEST_UNSET_KEY"
        max_retries = 2
        timeout_secs = 10
    "#
    ))
    .expect("backend config")
}

fn math_task() -> TaskSpec {
    let cfg: TaskConfig = toml::from_str(
        r#"
        kind = "math"
        name = "math-test"
    "#,
    )
    .unwrap();
    build_task(&cfg, Vec::new()).unwrap()
}

fn math_prompt() -> PromptInstance {
    PromptInstance {
        prompt_id: "q1".into(),
        question: "What is 3+4?".into(),
        gold: Gold::Answer("7".into()),
    }
}

fn plain_request() -> CompletionRequest {
    CompletionRequest {
        prompt: "2+2=".into(),
        n: 1,
        max_tokens: 16,
        temperature: 0.7,
        top_p: 0.9,
        seed: 5,
        top_logprobs: None,
        stop: Vec::new(),
    }
}

#[test]
fn completions_round_trip_and_sort_by_index() {
    let body = serde_json::json!({
        "choices": [
            {"index": 2, "text": " The answer is 9."},
            {"index": 0, "text": " The answer is 7."},
            {"index": 1, "text": "no answer phrase here"},
        ]
    });
    let server = serve(vec![(200, body.to_string())]);
    let backend = HttpBackend::new(&backend_config(&server.url), None).unwrap();
    let model = HttpModel::new(backend, "test-model".into(), SamplingConfig::default());

    let task = math_task();
    let sampling = SamplingConfig {
        n_generations: 3,
        seed: 1,
        ..SamplingConfig::default()
    };
    let gens = model.generate(&task, &math_prompt(), &sampling).unwrap();

    assert_eq!(gens.len(), 3);
    assert_eq!(gens[0].text, " The answer is 7.");
    assert_eq!(gens[0].parsed_answer.as_deref(), Some("7"));
    assert_eq!(gens[0].utility, 1.0);
    assert_eq!(gens[1].parsed_answer, None);
    assert_eq!(gens[1].utility, 0.0);
    assert_eq!(gens[2].parsed_answer.as_deref(), Some("9"));
    assert_eq!(gens[2].utility, 0.0);

    let requests = server.requests.lock().unwrap();
    let sent: serde_json::Value = serde_json::from_str(&requests[0]).unwrap();
    assert_eq!(sent["n"], 3);
    assert_eq!(sent["model"], "test-model");
    assert_eq!(sent["stop"][0], "\n\n");
    assert!(sent["prompt"].as_str().unwrap().contains("What is 3+4?"));
}

#[test]
fn transient_failures_retry_until_success() {
    let ok = serde_json::json!({"choices": [{"text": "hi"}]});
    let server = serve(vec![
        (500, "{\"error\": \"boom\"}".into()),
        (429, "{\"error\": \"slow down\"}".into()),
        (200, ok.to_string()),
    ]);
    let backend = HttpBackend::new(&backend_config(&server.url), None)
        .unwrap()
        .with_backoff_ms(1);
    let completions = backend.complete(&plain_request()).unwrap();
    assert_eq!(completions[0].text, "hi");
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn retry_budget_exhaustion_reports_the_last_status() {
    let server = serve(vec![
        (500, "{}".into()),
        (500, "{}".into()),
        (500, "{}".into()),
    ]);
    let backend = HttpBackend::new(&backend_config(&server.url), None)
        .unwrap()
        .with_backoff_ms(1);
    let err = backend.complete(&plain_request()).unwrap_err();
    assert!(matches!(err, BackendError::Status { status: 500, attempts: 3, .. }), "{err}");
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn auth_rejection_is_permanent() {
    let server = serve(vec![(401, "{\"error\": \"who are you\"}".into())]);
    let backend = HttpBackend::new(&backend_config(&server.url), None)
        .unwrap()
        .with_backoff_ms(1);
    let err = backend.complete(&plain_request()).unwrap_err();
    assert!(matches!(err, BackendError::Auth { status: 401 }), "{err}");
    assert_eq!(server.hits.load(Ordering::SeqCst), 1, "auth failures must not retry");
    assert_eq!(gaplab::Error::from(err).exit_code(), 3);
}

#[test]
fn malformed_payloads_are_not_retried() {
    let server = serve(vec![(200, "{\"unexpected\": true}".into())]);
    let backend = HttpBackend::new(&backend_config(&server.url), None)
        .unwrap()
        .with_backoff_ms(1);
    let err = backend.complete(&plain_request()).unwrap_err();
    assert!(matches!(err, BackendError::Malformed(_)), "{err}");
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn mc_verification_reads_first_token_logprobs() {
    let body = serde_json::json!({
        "choices": [{
            "text": " Correct",
            "logprobs": {"top_logprobs": [
                {" Correct": 0.6f64.ln(), " Incorrect": 0.2f64.ln()},
            ]},
        }]
    });
    let server = serve(vec![(200, body.to_string())]);
    let backend = HttpBackend::new(&backend_config(&server.url), None).unwrap();
    let model = HttpModel::new(backend, "test-model".into(), SamplingConfig::default());

    let task = math_task();
    let generation = Generation {
        prompt_id: "q1".into(),
        gen_index: 0,
        text: "The answer is 7.".into(),
        parsed_answer: Some("7".into()),
        utility: 1.0,
        sampling: SamplingConfig::default(),
    };
    let record = model
        .verify(&task, &math_prompt(), &generation, Mechanism::Mc, &VerifyConfig::default(), 0)
        .unwrap();
    assert!(record.parse_ok);
    // 0.6 / (0.6 + 0.2) after the round trip through logprobs.
    assert!((record.proxy_utility - 0.75).abs() < 1e-9, "{}", record.proxy_utility);

    let requests = server.requests.lock().unwrap();
    let sent: serde_json::Value = serde_json::from_str(&requests[0]).unwrap();
    assert_eq!(sent["logprobs"], 20);
    assert_eq!(sent["max_tokens"], 1);
}

#[test]
fn missing_logprobs_is_a_capability_error() {
    let body = serde_json::json!({"choices": [{"text": " Correct"}]});
    let server = serve(vec![(200, body.to_string())]);
    let backend = HttpBackend::new(&backend_config(&server.url), None).unwrap();
    let model = HttpModel::new(backend, "test-model".into(), SamplingConfig::default());

    let generation = Generation {
        prompt_id: "q1".into(),
        gen_index: 0,
        text: "The answer is 7.".into(),
        parsed_answer: Some("7".into()),
        utility: 1.0,
        sampling: SamplingConfig::default(),
    };
    let err = model
        .verify(&math_task(), &math_prompt(), &generation, Mechanism::Mc, &VerifyConfig::default(), 0)
        .unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("logprobs"), "{err}");
}

#[test]
fn journal_replays_identical_requests_without_network_calls() {
    let dir = tempfile::tempdir().unwrap();
    let journal_path = dir.path().join("requests.jsonl");
    let ok = serde_json::json!({"choices": [{"text": "cached"}]});
    // The script holds exactly one response; a second network call would
    // see a dead listener and fail.
    let server = serve(vec![(200, ok.to_string())]);

    let backend = HttpBackend::new(
        &backend_config(&server.url),
        Some(Journal::open(&journal_path).unwrap()),
    )
    .unwrap();
    let first = backend.complete(&plain_request()).unwrap();
    assert_eq!(first[0].text, "cached");
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);
    drop(backend);

    let backend = HttpBackend::new(
        &backend_config(&server.url),
        Some(Journal::open(&journal_path).unwrap()),
    )
    .unwrap()
    .with_backoff_ms(1);
    let second = backend.complete(&plain_request()).unwrap();
    assert_eq!(second, first);
    assert_eq!(server.hits.load(Ordering::SeqCst), 1, "replay must not re-send");

    // A different request misses the journal and needs the (gone) server.
    let mut other = plain_request();
    other.seed = 6;
    assert!(backend.complete(&other).is_err());
}
