mod common;

use std::collections::BTreeMap;
use std::time::Duration;

use common::{MockServer, Reply};
use zhcurate::http::RetryPolicy;
use zhcurate::lm::remote::RemoteProvider;
use zhcurate::lm::{GenParams, ModelProvider, TokenLogProbs};
use zhcurate::safety::scorer::RemoteScorer;
use zhcurate::safety::{score_toxicity, ToxicityScorer};
use zhcurate::Error;

fn policy(max_attempts: u32) -> RetryPolicy {
    RetryPolicy {
        max_attempts,
        backoff: Duration::from_millis(1),
        timeout: Duration::from_secs(5),
    }
}

fn server(routes: &[(&str, Vec<Reply>)]) -> MockServer {
    MockServer::start(routes.iter().map(|(p, r)| (p.to_string(), r.clone())).collect::<BTreeMap<_, _>>())
}

#[test]
fn generate_retries_server_errors() {
    let s = server(&[(
        "/v1/generate",
        vec![Reply::status(503), Reply::status(429), Reply::ok(r#"{"text":"你好"}"#)],
    )]);
    let p = RemoteProvider::new(&s.url, policy(3));
    let out = p.generate_once("台北", &GenParams::default()).unwrap();
    assert_eq!(out, "你好");
    assert_eq!(s.paths().len(), 3);
    let (_, body) = s.requests.lock().unwrap()[0].clone();
    let body: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(body["prompt"], "台北");
    assert_eq!(body["max_new_tokens"], 32);
}

#[test]
fn retries_are_bounded() {
    let s = server(&[("/v1/generate", vec![Reply::status(500)])]);
    let p = RemoteProvider::new(&s.url, policy(4));
    match p.generate_once("x", &GenParams::default()) {
        Err(Error::Provider { attempts, message }) => {
            assert_eq!(attempts, 4);
            assert!(message.contains("500"), "{message}");
        }
        other => panic!("expected provider error, got {other:?}"),
    }
    assert_eq!(s.paths().len(), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let s = server(&[("/v1/logprobs", vec![Reply::status(400)])]);
    let p = RemoteProvider::new(&s.url, policy(5));
    let err = p.token_logprobs(&["a".into()]).unwrap_err();
    assert!(matches!(err, Error::Provider { attempts: 1, .. }), "{err:?}");
    assert_eq!(s.paths().len(), 1);
}

#[test]
fn logprob_length_is_checked() {
    let s = server(&[("/v1/logprobs", vec![Reply::ok(r#"{"logprobs":[-1.0]}"#)])]);
    let p = RemoteProvider::new(&s.url, policy(1));
    assert!(p.token_logprobs(&["a".into(), "b".into()]).is_err());
    assert_eq!(p.token_logprobs(&["a".into()]).unwrap(), vec![-1.0]);
}

#[test]
fn next_token_probabilities_validated() {
    let s = server(&[(
        "/v1/next_token",
        vec![
            Reply::ok(r#"{"tokens":["是","否"],"probs":[0.7,0.2]}"#),
            Reply::ok(r#"{"tokens":["是"],"probs":[1.5]}"#),
        ],
    )]);
    let p = RemoteProvider::new(&s.url, policy(1));
    let d = p.next_token_distribution("問", Some(2)).unwrap();
    assert_eq!(d, vec![("是".to_string(), 0.7), ("否".to_string(), 0.2)]);
    assert!(p.next_token_distribution("問", None).is_err());
}

#[test]
fn unreachable_server_fails_after_retries() {
    let addr = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let p = RemoteProvider::new(&format!("http://{addr}"), policy(2));
    assert!(matches!(
        p.generate_once("x", &GenParams::default()),
        Err(Error::Provider { attempts: 2, .. })
    ));
}

#[test]
fn scorer_accepts_score_alias() {
    let s = server(&[
        ("/score", vec![Reply::status(502), Reply::ok(r#"{"score":0.25}"#)]),
        ("/score_batch", vec![Reply::ok(r#"{"toxicity":[0.1,0.2]}"#), Reply::ok(r#"{"scores":[0.3]}"#)]),
    ]);
    let sc = RemoteScorer::new(&s.url, policy(2), Duration::ZERO, 2);
    assert_eq!(score_toxicity(&sc, "很好").unwrap(), 0.25);
    let texts: Vec<String> = ["甲", "乙", "丙"].iter().map(|t| t.to_string()).collect();
    assert_eq!(sc.score_batch(&texts).unwrap(), vec![0.1, 0.2, 0.3]);
    let batches = s.paths().iter().filter(|p| *p == "/score_batch").count();
    assert_eq!(batches, 2);
}

#[test]
fn scorer_rejects_out_of_range() {
    let s = server(&[("/score", vec![Reply::ok(r#"{"toxicity":1.2}"#)])]);
    let sc = RemoteScorer::new(&s.url, policy(1), Duration::ZERO, 8);
    assert!(matches!(sc.score("字"), Err(Error::Scorer { .. })));
}

#[test]
fn scorer_spaces_requests() {
    let s = server(&[("/score", vec![Reply::ok(r#"{"toxicity":0.0}"#)])]);
    let sc = RemoteScorer::new(&s.url, policy(1), Duration::from_millis(50), 8);
    let t = std::time::Instant::now();
    for _ in 0..3 {
        sc.score("字").unwrap();
    }
    assert!(t.elapsed() >= Duration::from_millis(100));
}
