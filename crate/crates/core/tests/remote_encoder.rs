use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use reclink::encoding::{
    build_encoder, EncodePairRequest, EncodeSingleRequest, Encoder, EncoderConfig, EncodingError,
    HealthResponse, RemoteEncoder,
};
use serde_json::{json, Value};

const DIM: usize = 4;

#[derive(Debug, Clone)]
struct Seen {
    method: String,
    path: String,
    content_type: Option<String>,
    body: String,
}

type Handler = dyn Fn(&Seen) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server: one request per connection, replies with
/// `Connection: close`. Records every request it sees.
struct FakeService {
    url: String,
    seen: Arc<Mutex<Vec<Seen>>>,
}

impl FakeService {
    fn start(handler: impl Fn(&Seen) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&seen);
        let handler: Arc<Handler> = Arc::new(handler);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
                    continue;
                }
                let mut parts = request_line.split_whitespace();
                let method = parts.next().unwrap_or_default().to_string();
                let path = parts.next().unwrap_or_default().to_string();
                let mut content_length = 0;
                let mut content_type = None;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        match k.to_ascii_lowercase().as_str() {
                            "content-length" => content_length = v.trim().parse().unwrap(),
                            "content-type" => content_type = Some(v.trim().to_string()),
                            _ => {}
                        }
                    }
                }
                let mut body = vec![0; content_length];
                reader.read_exact(&mut body).unwrap();
                let request = Seen {
                    method,
                    path,
                    content_type,
                    body: String::from_utf8(body).unwrap(),
                };
                let (status, reply) = handler(&request);
                log.lock().unwrap().push(request);
                let response = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                    reply.len()
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        Self { url, seen }
    }

    fn requests(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}

fn config(url: &str) -> EncoderConfig {
    EncoderConfig {
        max_tokens: 16,
        per_record_budget: 6,
        retries: 2,
        timeout_secs: 5,
        ..EncoderConfig::remote(url, DIM)
    }
}

fn rows(n: usize, base: f64) -> Vec<Vec<f64>> {
    (0..n).map(|i| vec![base + i as f64; DIM]).collect()
}

fn well_behaved(req: &Seen) -> (u16, String) {
    let body = match req.path.as_str() {
        "/v1/health" => json!({"status": "ok", "model_id": "m-1", "dim": DIM}),
        "/v1/encode-pair" => {
            let r: EncodePairRequest = serde_json::from_str(&req.body).unwrap();
            json!({
                "dim": DIM,
                "cls": [0.1, 0.2, 0.3, 0.4],
                "tokens_a": rows(r.text_a.split_whitespace().count(), 1.0),
                "tokens_b": rows(r.text_b.split_whitespace().count(), 10.0),
                "truncated_a": false,
                "truncated_b": true,
                "model_id": "m-1",
            })
        }
        "/v1/encode-single" => {
            let r: EncodeSingleRequest = serde_json::from_str(&req.body).unwrap();
            json!({
                "dim": DIM,
                "summary": [1.0, 0.0, 0.0, 0.0],
                "tokens": rows(r.text.split_whitespace().count(), 0.5),
                "model_id": "m-1",
            })
        }
        _ => return (404, "{\"error\":\"not found\"}".into()),
    };
    (200, body.to_string())
}

#[test]
fn health_reports_model_and_dimension() {
    let svc = FakeService::start(well_behaved);
    let enc = RemoteEncoder::new(config(&svc.url)).unwrap();
    let health = enc.health().unwrap();
    assert_eq!(
        health,
        HealthResponse {
            status: "ok".into(),
            model_id: "m-1".into(),
            dim: DIM
        }
    );
    let fp = enc.fingerprint();
    assert_eq!(fp.model_id, "m-1");
    assert_eq!(fp.dim, DIM);
    let reqs = svc.requests();
    assert_eq!(reqs.len(), 1, "fingerprint reuses the model id learned from health");
    assert_eq!(reqs[0].method, "GET");
    assert_eq!(reqs[0].path, "/v1/health");
}

#[test]
fn encode_pair_sends_both_texts_and_parses_matrices() {
    let svc = FakeService::start(well_behaved);
    let enc = build_encoder(&config(&svc.url)).unwrap();
    let out = enc.encode_pair_text("pump trips high", "pump reset").unwrap();
    assert_eq!(out.cls_vector.to_vec(), vec![0.1, 0.2, 0.3, 0.4]);
    assert_eq!(out.tokens_a.dim(), (3, DIM));
    assert_eq!(out.tokens_b.dim(), (2, DIM));
    assert_eq!(out.tokens_a[[2, 0]], 3.0);
    assert_eq!(out.tokens_b[[1, 3]], 11.0);
    assert!(!out.truncated_a && out.truncated_b);

    let reqs = svc.requests();
    assert_eq!(reqs[0].method, "POST");
    assert_eq!(reqs[0].path, "/v1/encode-pair");
    assert!(reqs[0].content_type.as_deref().unwrap().starts_with("application/json"));
    let sent: Value = serde_json::from_str(&reqs[0].body).unwrap();
    assert_eq!(
        sent,
        json!({"text_a": "pump trips high", "text_b": "pump reset", "max_tokens": 16})
    );
}

#[test]
fn encode_single_parses_summary_and_tokens() {
    let svc = FakeService::start(well_behaved);
    let enc = RemoteEncoder::new(config(&svc.url)).unwrap();
    let out = enc.encode_single_text("valve leak").unwrap();
    assert_eq!(out.summary_vector.to_vec(), vec![1.0, 0.0, 0.0, 0.0]);
    assert_eq!(out.tokens.dim(), (2, DIM));
    let sent: Value = serde_json::from_str(&svc.requests()[0].body).unwrap();
    assert_eq!(sent, json!({"text": "valve leak", "max_tokens": 16}));
    assert_eq!(svc.requests()[0].path, "/v1/encode-single");
}

#[test]
fn empty_text_is_rejected_before_any_request() {
    let svc = FakeService::start(well_behaved);
    let enc = RemoteEncoder::new(config(&svc.url)).unwrap();
    assert!(matches!(enc.encode_single_text("  \t"), Err(EncodingError::EmptyText)));
    assert!(matches!(enc.encode_pair_text("a", ""), Err(EncodingError::EmptyText)));
    assert!(svc.requests().is_empty());
}

#[test]
fn overload_is_retried_then_succeeds() {
    let calls = Arc::new(Mutex::new(0));
    let counter = Arc::clone(&calls);
    let svc = FakeService::start(move |req| {
        let mut n = counter.lock().unwrap();
        *n += 1;
        if *n <= 2 {
            (503, "{\"error\":\"busy\"}".into())
        } else {
            well_behaved(req)
        }
    });
    let enc = RemoteEncoder::new(config(&svc.url)).unwrap();
    let out = enc.encode_single_text("valve leak").unwrap();
    assert_eq!(out.tokens.nrows(), 2);
    assert_eq!(svc.requests().len(), 3);
}

#[test]
fn overload_beyond_retry_budget_surfaces_as_retryable() {
    let svc = FakeService::start(|_| (503, "{\"error\":\"busy\"}".into()));
    let enc = RemoteEncoder::new(config(&svc.url)).unwrap();
    let err = enc.encode_single_text("valve leak").unwrap_err();
    assert!(matches!(err, EncodingError::Service { status: 503, .. }), "{err}");
    assert!(err.is_retryable());
    assert_eq!(svc.requests().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let svc = FakeService::start(|_| (400, "{\"error\":\"bad request\"}".into()));
    let enc = RemoteEncoder::new(config(&svc.url)).unwrap();
    let err = enc.encode_pair_text("a", "b").unwrap_err();
    match &err {
        EncodingError::Service { status, message } => {
            assert_eq!(*status, 400);
            assert!(message.contains("bad request"));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(!err.is_retryable());
    assert_eq!(svc.requests().len(), 1);
}

#[test]
fn dimension_mismatch_is_detected() {
    let svc = FakeService::start(|_| {
        (200, json!({"status": "ok", "model_id": "m", "dim": DIM + 1}).to_string())
    });
    let enc = RemoteEncoder::new(config(&svc.url)).unwrap();
    assert!(matches!(
        enc.health(),
        Err(EncodingError::DimensionMismatch { expected: DIM, got: 5 })
    ));

    let svc = FakeService::start(|_| {
        let body = json!({"dim": DIM, "summary": [1.0, 2.0], "tokens": rows(1, 0.0), "model_id": "m"});
        (200, body.to_string())
    });
    let enc = RemoteEncoder::new(config(&svc.url)).unwrap();
    assert!(matches!(
        enc.encode_single_text("x"),
        Err(EncodingError::DimensionMismatch { got: 2, .. })
    ));
}

#[test]
fn malformed_responses_are_protocol_errors() {
    let svc = FakeService::start(|_| (200, "not json".into()));
    let enc = RemoteEncoder::new(config(&svc.url)).unwrap();
    assert!(matches!(enc.encode_single_text("x"), Err(EncodingError::Protocol(_))));

    // more token rows than the per-record budget allows
    let svc = FakeService::start(|_| {
        let body = json!({"dim": DIM, "summary": vec![0.0; DIM], "tokens": rows(7, 0.0), "model_id": "m"});
        (200, body.to_string())
    });
    let enc = RemoteEncoder::new(config(&svc.url)).unwrap();
    assert!(matches!(enc.encode_single_text("x"), Err(EncodingError::Protocol(_))));

    let svc = FakeService::start(|_| {
        let body = json!({"dim": DIM, "summary": vec![0.0; DIM], "tokens": [], "model_id": "m"});
        (200, body.to_string())
    });
    let enc = RemoteEncoder::new(config(&svc.url)).unwrap();
    assert!(matches!(enc.encode_single_text("x"), Err(EncodingError::Protocol(_))));
}

#[test]
fn model_change_mid_run_is_an_error() {
    let calls = Arc::new(Mutex::new(0));
    let counter = Arc::clone(&calls);
    let svc = FakeService::start(move |_| {
        let mut n = counter.lock().unwrap();
        *n += 1;
        let id = if *n == 1 { "m-1" } else { "m-2" };
        let body = json!({"dim": DIM, "summary": vec![0.0; DIM], "tokens": rows(1, 0.0), "model_id": id});
        (200, body.to_string())
    });
    let enc = RemoteEncoder::new(config(&svc.url)).unwrap();
    enc.encode_single_text("x").unwrap();
    assert!(matches!(enc.encode_single_text("x"), Err(EncodingError::Protocol(_))));
}

#[test]
fn unreachable_service_is_retryable() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let enc = RemoteEncoder::new(EncoderConfig {
        retries: 0,
        ..config(&url)
    })
    .unwrap();
    let err = enc.health().unwrap_err();
    assert!(matches!(err, EncodingError::Unreachable { .. }), "{err}");
    assert!(err.is_retryable());
}

#[test]
fn remote_config_requires_url() {
    let cfg = EncoderConfig {
        remote_url: None,
        ..config("http://127.0.0.1:1")
    };
    assert!(matches!(RemoteEncoder::new(cfg), Err(EncodingError::Config(_))));
}
