mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use base64::Engine as _;
use handcontact::mllm_client::{
    build_client, compute_cost, encode_image, format_usd, Backend, BackendConfig, BackendKind, ClientError, Corruption,
    Dialect, LiveBackend, LiveConfig, MllmClient, MllmRequest, OracleBackend, PricingTable, ReplayBackend,
    TranscriptRecord, TransportRetry, Usage,
};
use handcontact::mllm_client::{Message, RequestTag, Role};
use handcontact::prompt_engine::Stage;
use image::RgbImage;
use proptest::prelude::*;
use serde_json::{json, Value};

struct Captured {
    headers: Vec<(String, String)>,
    body: Value,
}

impl Captured {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

/// Serves the canned `(status, body)` replies, one connection each, and
/// reports every request it saw.
fn serve(replies: Vec<(u16, String)>) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, reply) in replies {
            let (stream, _) = listener.accept().unwrap();
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
            let len: usize = headers.iter().find(|(k, _)| k.eq_ignore_ascii_case("content-length")).unwrap().1.parse().unwrap();
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            tx.send(Captured { headers, body: serde_json::from_slice(&body).unwrap() }).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
        }
    });
    (url, rx)
}

fn request(images: usize) -> MllmRequest {
    let img = encode_image(&RgbImage::from_pixel(8, 8, image::Rgb([200, 10, 10]))).unwrap();
    MllmRequest {
        model: "gpt-5.5".into(),
        messages: vec![
            Message { role: Role::System, text: "be terse".into() },
            Message { role: Role::User, text: "which parts touch?".into() },
        ],
        images: vec![img; images],
        max_output_tokens: 256,
        temperature: 0.0,
        tag: RequestTag { sample_id: "s0".into(), stage: Stage::Part, attempt: 1, parts: vec![] },
    }
}

fn live(url: String, dialect: Dialect) -> LiveBackend {
    LiveBackend::new(LiveConfig { endpoint: url, dialect, api_key: "sk-test".into(), timeout: Duration::from_secs(10) })
}

#[test]
fn openai_dialect_round_trip() {
    let reply = json!({
        "choices": [{"message": {"role": "assistant", "content": "{\"contact_parts\":[]}"}}],
        "usage": {"prompt_tokens": 1200, "completion_tokens": 9},
    });
    let (url, seen) = serve(vec![(200, reply.to_string())]);
    let resp = live(url, Dialect::Openai).send(&request(2)).unwrap();
    assert_eq!(resp.text, "{\"contact_parts\":[]}");
    assert_eq!(resp.usage, Usage { input_tokens: 1200, output_tokens: 9 });

    let got = seen.recv().unwrap();
    assert_eq!(got.header("authorization"), Some("Bearer sk-test"));
    assert_eq!(got.body["model"], "gpt-5.5");
    let user = &got.body["messages"][1]["content"];
    assert_eq!(user.as_array().unwrap().len(), 3);
    assert!(user[0]["image_url"]["url"].as_str().unwrap().starts_with("data:image/jpeg;base64,"));
    assert_eq!(user[2]["text"], "which parts touch?");
    assert_eq!(got.body["messages"][0]["content"][0]["text"], "be terse");
}

#[test]
fn anthropic_dialect_round_trip() {
    let reply = json!({
        "content": [{"type": "text", "text": "hello "}, {"type": "tool_use"}, {"type": "text", "text": "hand"}],
        "usage": {"input_tokens": 50, "output_tokens": 4},
    });
    let (url, seen) = serve(vec![(200, reply.to_string())]);
    let resp = live(url, Dialect::Anthropic).send(&request(1)).unwrap();
    assert_eq!(resp.text, "hello hand");
    assert_eq!(resp.usage.output_tokens, 4);

    let got = seen.recv().unwrap();
    assert_eq!(got.header("x-api-key"), Some("sk-test"));
    assert!(got.header("authorization").is_none());
    assert_eq!(got.body["system"], "be terse");
    let messages = got.body["messages"].as_array().unwrap();
    assert_eq!(messages.len(), 1);
    let image = &messages[0]["content"][0];
    assert_eq!(image["type"], "image");
    let data = base64::engine::general_purpose::STANDARD.decode(image["source"]["data"].as_str().unwrap()).unwrap();
    assert_eq!(&data[..2], &[0xFF, 0xD8]);
}

#[test]
fn http_status_classes() {
    let (url, _seen) = serve(vec![(401, "{\"error\":\"bad key\"}".into())]);
    assert!(matches!(live(url, Dialect::Openai).send(&request(0)), Err(ClientError::Auth(_))));

    let (url, _seen) = serve(vec![(200, "{\"choices\":[]}".into())]);
    assert!(matches!(live(url, Dialect::Openai).send(&request(0)), Err(ClientError::BackendFormat(_))));

    let (url, _seen) = serve(vec![(400, "nope".into())]);
    assert!(matches!(
        live(url, Dialect::Openai).send(&request(0)),
        Err(ClientError::Transport { retryable: false, .. })
    ));
}

#[test]
fn client_retries_only_retryable_transport_errors() {
    let ok = json!({"choices": [{"message": {"content": "fine"}}], "usage": {"prompt_tokens": 1, "completion_tokens": 2}});
    let (url, seen) = serve(vec![(503, "busy".into()), (429, "slow".into()), (200, ok.to_string())]);
    let client = MllmClient::new(Box::new(live(url, Dialect::Openai)), "gpt-5.5", PricingTable::default())
        .with_retry(TransportRetry { attempts: 3, backoff_ms: 1 });
    assert_eq!(client.send(&request(0)).unwrap().text, "fine");
    assert_eq!(seen.iter().count(), 3);

    let (url, seen) = serve(vec![(503, "busy".into()), (503, "busy".into())]);
    let client = MllmClient::new(Box::new(live(url, Dialect::Openai)), "gpt-5.5", PricingTable::default())
        .with_retry(TransportRetry { attempts: 2, backoff_ms: 1 });
    assert!(matches!(client.send(&request(0)), Err(ClientError::Transport { retryable: true, .. })));
    assert_eq!(seen.iter().count(), 2);

    let (url, seen) = serve(vec![(401, "no".into())]);
    let client = MllmClient::new(Box::new(live(url, Dialect::Openai)), "gpt-5.5", PricingTable::default())
        .with_retry(TransportRetry { attempts: 5, backoff_ms: 1 });
    assert!(matches!(client.send(&request(0)), Err(ClientError::Auth(_))));
    assert_eq!(seen.iter().count(), 1);
}

#[test]
fn unreachable_endpoint_is_a_retryable_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let backend = live(format!("http://127.0.0.1:{port}/"), Dialect::Openai);
    assert!(matches!(backend.send(&request(0)), Err(ClientError::Transport { retryable: true, .. })));
}

#[test]
fn replay_reproduces_an_oracle_session() {
    let world = common::World::new(4, 3);
    let seg = std::sync::Arc::new(world.seg.clone());
    let corruption = Corruption { flip_probability: 0.1, part_omission_probability: 0.3, injections: vec![] };
    let oracle = OracleBackend::new(seg, world.truth(), corruption, 5).unwrap();
    let manifest = handcontact::prompt_engine::emit_grid_manifest(&world.seg, world.seg.part_names()).unwrap();
    let mut records = Vec::new();
    let mut requests = Vec::new();
    for s in &world.samples {
        for (stage, parts) in [(Stage::Freeform, vec![]), (Stage::Part, vec![]), (Stage::Dense, manifest.entries.iter().map(|e| e.part_name.clone()).collect())] {
            let mut req = request(1);
            req.tag = RequestTag { sample_id: s.id.clone(), stage, attempt: 1, parts };
            let resp = oracle.send(&req).unwrap();
            records.push(TranscriptRecord::new(&req, &resp));
            requests.push((req, resp));
        }
    }
    let jsonl: String = records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    let replay = ReplayBackend::parse(&jsonl).unwrap();
    assert_eq!(replay.len(), requests.len());
    for (req, resp) in &requests {
        assert_eq!(&replay.send(req).unwrap(), resp);
    }
    let again: String = requests
        .iter()
        .map(|(req, _)| serde_json::to_string(&TranscriptRecord::new(req, &replay.send(req).unwrap())).unwrap() + "\n")
        .collect();
    assert_eq!(again, jsonl);
}

#[test]
fn config_parsing_and_client_building() {
    let cfg = BackendConfig::parse(r#"{"kind": "oracle"}"#).unwrap();
    assert_eq!(cfg, BackendConfig::oracle());
    assert_eq!(cfg.hash(), BackendConfig::oracle().hash());
    assert!(matches!(build_client(&cfg, None), Err(ClientError::Config(_))));

    for bad in [
        r#"{"kind": "live"}"#,
        r#"{"kind": "replay"}"#,
        r#"{"kind": "oracle", "colour": 1}"#,
        r#"{"kind": "oracle", "pricing": {"gpt-5.5": {"usd_per_1m_output_tokens": -1}}}"#,
        r#"{"kind": "oracle", "corruption": {"flip_probability": 1.5}}"#,
    ] {
        assert!(matches!(BackendConfig::parse(bad), Err(ClientError::Config(_))), "{bad}");
    }

    let live = BackendConfig::parse(
        r#"{"kind": "live", "endpoint": "http://127.0.0.1:9/", "api_key_env": "HANDCONTACT_TEST_KEY_THAT_IS_UNSET"}"#,
    )
    .unwrap();
    assert!(matches!(build_client(&live, None), Err(ClientError::Auth(_))));

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.jsonl"), "").unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"kind": "replay", "transcript": "t.jsonl"}"#).unwrap();
    let replay = BackendConfig::load(dir.path().join("cfg.json")).unwrap();
    assert_eq!(replay.kind, BackendKind::Replay);
    assert_eq!(replay.transcript.as_deref(), Some(dir.path().join("t.jsonl").as_path()));
    assert_eq!(build_client(&replay, None).unwrap().backend_name(), "replay");
}

#[test]
fn pricing_examples() {
    let p = PricingTable::default();
    let out = |n| Usage { input_tokens: 999_999, output_tokens: n };
    assert_eq!(format_usd(compute_cost(out(0), "gpt-5.5", &p).unwrap()), "$0.000");
    assert_eq!(format_usd(compute_cost(out(3588), "gpt-5.5", &p).unwrap()), "$0.108");
    assert_eq!(format_usd(compute_cost(out(1567), "gpt-5.4", &p).unwrap()), "$0.024");
    assert!(matches!(compute_cost(out(1), "gpt-4", &p), Err(ClientError::UnknownModel(_))));
}

#[test]
fn image_encoding() {
    let img = RgbImage::from_fn(16, 12, |x, y| image::Rgb([x as u8 * 10, y as u8 * 10, 128]));
    let a = encode_image(&img).unwrap();
    assert_eq!(a, encode_image(&img).unwrap());
    assert_eq!(a.media_type, "image/jpeg");
    let bytes = base64::engine::general_purpose::STANDARD.decode(&a.base64).unwrap();
    let decoded = image::load_from_memory(&bytes).unwrap();
    assert_eq!((decoded.width(), decoded.height()), (16, 12));
    assert!(matches!(encode_image(&RgbImage::new(0, 0)), Err(ClientError::Encode(_))));
}

proptest! {
    #[test]
    fn cost_is_linear_in_output_tokens(a in 0u64..10_000_000, b in 0u64..10_000_000, input in any::<u32>()) {
        let p = PricingTable::default();
        let cost = |n| compute_cost(Usage { input_tokens: input as u64, output_tokens: n }, "gpt-5.5", &p).unwrap();
        prop_assert!((cost(a + b) - cost(a) - cost(b)).abs() < 1e-9);
        prop_assert!((cost(a) - a as f64 * 30.0 / 1e6).abs() < 1e-9);
    }
}
