use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::time::Duration;

use ctlab_core::gateway::{HttpResponse, ScriptedTransport, Transport};
use ctlab_core::negation::{
    AssertionBackend, AssertionClient, AssertionLabel, NegationError, ProviderKind, RulesProvider,
};
use serde_json::{json, Value};

const NOTE: &str = "The patient recovered during the night and now denies any shortness of breath.";

fn span(needle: &str) -> (usize, usize) {
    let b = NOTE.find(needle).unwrap();
    let s = NOTE[..b].chars().count();
    (s, s + needle.chars().count())
}

fn reply(body: Value) -> HttpResponse {
    HttpResponse { status: 200, body: body.to_string() }
}

struct Down;

impl Transport for Down {
    fn post_json(&self, _: &str, _: Option<&str>, _: &str) -> Result<HttpResponse, String> {
        Err("connection refused".into())
    }
}

#[test]
fn request_shape_and_labels() {
    let t = Arc::new(ScriptedTransport::new(|_| {
        reply(json!({"labels": [{"label": "present", "confidence": 0.9}, {"label": "absent", "confidence": 0.97}]}))
    }));
    let client = AssertionClient::new("http://svc.invalid/", t.clone());
    assert_eq!(client.url(), "http://svc.invalid/assert");
    let spans = [span("patient"), span("shortness of breath")];
    let got = client.classify(NOTE, &spans).unwrap();
    assert_eq!(got[0].label, AssertionLabel::Present);
    assert_eq!(got[1].label, AssertionLabel::Absent);
    assert_eq!(got[1].confidence, 0.97);
    let req = &t.requests()[0];
    assert_eq!(req["text"], NOTE);
    assert_eq!(req["entities"], json!([[spans[0].0, spans[0].1], [spans[1].0, spans[1].1]]));
}

#[test]
fn protocol_errors_are_distinguished() {
    let count = AssertionClient::new(
        "http://svc.invalid",
        Arc::new(ScriptedTransport::new(|_| reply(json!({"labels": [{"label": "absent", "confidence": 1.0}]})))),
    );
    assert!(matches!(
        count.classify(NOTE, &[span("patient"), span("night")]),
        Err(NegationError::LabelCount { expected: 2, got: 1 })
    ));
    let garbled = AssertionClient::new(
        "http://svc.invalid",
        Arc::new(ScriptedTransport::new(|_| HttpResponse { status: 200, body: "<html>".into() })),
    );
    assert!(matches!(garbled.classify(NOTE, &[span("night")]), Err(NegationError::Protocol(_))));
    let unknown = AssertionClient::new(
        "http://svc.invalid",
        Arc::new(ScriptedTransport::new(|_| reply(json!({"labels": [{"label": "maybe", "confidence": 1.0}]})))),
    );
    assert!(matches!(unknown.classify(NOTE, &[span("night")]), Err(NegationError::Protocol(_))));
    let status = AssertionClient::new(
        "http://svc.invalid",
        Arc::new(ScriptedTransport::new(|_| HttpResponse { status: 503, body: "loading".into() })),
    );
    assert!(matches!(status.classify(NOTE, &[span("night")]), Err(NegationError::Remote(_))));
}

#[test]
fn fallback_only_on_unreachable_service() {
    let spans = [span("shortness of breath")];
    let strict = AssertionBackend::Remote {
        client: AssertionClient::new("http://down.invalid", Arc::new(Down)),
        fallback: None,
    };
    assert!(matches!(strict.classify(NOTE, &spans), Err(NegationError::Remote(_))));

    let lenient = AssertionBackend::Remote {
        client: AssertionClient::new("http://down.invalid", Arc::new(Down)),
        fallback: Some(RulesProvider::default()),
    };
    let c = lenient.classify(NOTE, &spans).unwrap();
    assert_eq!(c.provider, ProviderKind::RulesFallback);
    assert!(c.degraded);
    assert_eq!(c.assertions[0].label, AssertionLabel::Absent);

    // A reachable service answering nonsense is a protocol fault, not an outage.
    let broken = AssertionBackend::Remote {
        client: AssertionClient::new(
            "http://svc.invalid",
            Arc::new(ScriptedTransport::new(|_| reply(json!({"labels": []})))),
        ),
        fallback: Some(RulesProvider::default()),
    };
    assert!(matches!(broken.classify(NOTE, &spans), Err(NegationError::LabelCount { .. })));

    let rules = AssertionBackend::Rules(RulesProvider::default()).classify(NOTE, &spans).unwrap();
    assert_eq!((rules.provider, rules.degraded), (ProviderKind::Rules, false));
}

#[test]
fn invalid_spans_fail_before_any_request() {
    let t = Arc::new(ScriptedTransport::new(|_| reply(json!({"labels": []}))));
    let backend =
        AssertionBackend::Remote { client: AssertionClient::new("http://svc.invalid", t.clone()), fallback: None };
    assert!(matches!(backend.classify("short", &[(0, 99)]), Err(NegationError::InvalidSpan { .. })));
    assert!(t.requests().is_empty());
}

/// Serves one HTTP request, returning the request line and body it saw.
fn serve_once(listener: TcpListener, response_body: String) -> std::thread::JoinHandle<(String, String)> {
    std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut request_line = String::new();
        reader.read_line(&mut request_line).unwrap();
        let mut len = 0usize;
        loop {
            let mut h = String::new();
            reader.read_line(&mut h).unwrap();
            if h.trim().is_empty() {
                break;
            }
            if let Some((k, v)) = h.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    len = v.trim().parse().unwrap();
                }
            }
        }
        let mut body = vec![0u8; len];
        reader.read_exact(&mut body).unwrap();
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
            response_body.len(),
            response_body
        )
        .unwrap();
        (request_line.trim().to_string(), String::from_utf8(body).unwrap())
    })
}

#[test]
fn real_http_round_trip() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let server = serve_once(listener, json!({"labels": [{"label": "absent", "confidence": 0.88}]}).to_string());
    let client = AssertionClient::http(&base, Duration::from_secs(10));
    let got = client.classify(NOTE, &[span("shortness of breath")]).unwrap();
    assert_eq!(got[0].label, AssertionLabel::Absent);
    let (line, body) = server.join().unwrap();
    assert_eq!(line, "POST /assert HTTP/1.1");
    let sent: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(sent["entities"][0], json!([span("shortness of breath").0, span("shortness of breath").1]));
}
