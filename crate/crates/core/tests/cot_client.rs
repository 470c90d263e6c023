use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use sdr_cir::cot::{CotClient, CotError, CotRequest, DescriptionCache, Endpoint, ReferenceImage, RetryPolicy};
use sdr_cir::testing::{chat_response, staged_answer, MockChatServer};

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        max_attempts: 5,
        base_delay: Duration::from_millis(5),
        factor: 2.0,
    }
}

fn client(server: &MockChatServer, cache: Arc<DescriptionCache>) -> CotClient {
    CotClient::new(Endpoint::new(server.base_url(), Some("sk-test".into())), cache).with_retry(fast_retry())
}

fn request(text: &str) -> CotRequest {
    CotRequest::new(
        ReferenceImage::new(vec![0xff, 0xd8, 0xff, 1, 2, 3], "image/jpeg"),
        text,
        "gpt-4o",
    )
}

#[test]
fn staged_answer_is_parsed_and_request_is_well_formed() {
    let server = MockChatServer::always(&staged_answer("a red dress with long sleeves"));
    let c = client(&server, Arc::new(DescriptionCache::in_memory()));
    let d = c.generate("q1", &request("make it red")).unwrap();
    assert_eq!(d.description, "a red dress with long sleeves");
    assert_eq!(d.stages.len(), 4);
    assert_eq!(d.call_count, 1);
    assert_eq!(d.query_id, "q1");

    let reqs = server.requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].method, "POST");
    assert_eq!(reqs[0].path, "/v1/chat/completions");
    assert_eq!(reqs[0].authorization.as_deref(), Some("Bearer sk-test"));
    let body: serde_json::Value = serde_json::from_str(&reqs[0].body).unwrap();
    assert_eq!(body["model"], "gpt-4o");
    assert_eq!(body["temperature"], 0.0);
    let parts = body["messages"][0]["content"].as_array().unwrap();
    assert!(parts[0]["text"]
        .as_str()
        .unwrap()
        .ends_with("Modification text: make it red"));
    assert!(parts[1]["image_url"]["url"]
        .as_str()
        .unwrap()
        .starts_with("data:image/jpeg;base64,"));
}

#[test]
fn fenced_json_is_unwrapped() {
    let fenced = format!("Here you go:\n```json\n{}\n```\n", staged_answer("two dogs on a beach"));
    let server = MockChatServer::always(&fenced);
    let c = client(&server, Arc::new(DescriptionCache::in_memory()));
    assert_eq!(
        c.generate("q", &request("x")).unwrap().description,
        "two dogs on a beach"
    );
}

#[test]
fn prose_only_is_malformed_and_not_cached() {
    let server = MockChatServer::always("The target image shows a cat on a sofa.");
    let cache = Arc::new(DescriptionCache::in_memory());
    let c = client(&server, cache.clone());
    assert!(matches!(
        c.generate("q", &request("x")),
        Err(CotError::MalformedResponse(_))
    ));
    assert_eq!(server.hits(), 1);
    assert!(cache.is_empty());
}

#[test]
fn rate_limit_then_success_takes_two_calls() {
    let ok = chat_response(&staged_answer("ok"));
    let server = MockChatServer::start(move |n, _| {
        if n == 0 {
            (429, "slow down".into())
        } else {
            (200, ok.clone())
        }
    });
    let c = client(&server, Arc::new(DescriptionCache::in_memory()));
    let d = c.generate("q", &request("x")).unwrap();
    assert_eq!(d.call_count, 2);
    assert_eq!(server.hits(), 2);
    assert_eq!(c.http_calls(), 2);
}

#[test]
fn server_errors_are_retried_client_errors_are_not() {
    let ok = chat_response(&staged_answer("ok"));
    let server = MockChatServer::start(move |n, _| if n < 2 { (503, "busy".into()) } else { (200, ok.clone()) });
    let c = client(&server, Arc::new(DescriptionCache::in_memory()));
    assert_eq!(c.generate("q", &request("x")).unwrap().call_count, 3);

    let server = MockChatServer::start(|_, _| (400, "bad request".into()));
    let c = client(&server, Arc::new(DescriptionCache::in_memory()));
    let err = c.generate("q", &request("x")).unwrap_err();
    assert!(matches!(err, CotError::HttpError { status: Some(400), .. }));
    assert_eq!(server.hits(), 1);
}

#[test]
fn persistent_rate_limit_gives_up_after_max_attempts() {
    let server = MockChatServer::start(|_, _| (429, "no".into()));
    let c = client(&server, Arc::new(DescriptionCache::in_memory()));
    let err = c.generate("q", &request("x")).unwrap_err();
    assert!(matches!(err, CotError::RateLimited { attempts: 5 }));
    assert_eq!(server.hits(), 5);
}

#[test]
fn backoff_is_exponential() {
    let p = RetryPolicy::default();
    let waits: Vec<u64> = (1..=4).map(|a| p.delay_after(a).as_secs()).collect();
    assert_eq!(waits, [1, 2, 4, 8]);
    assert_eq!(p.max_attempts, 5);
}

#[test]
fn cache_hit_makes_no_calls() {
    let server = MockChatServer::always(&staged_answer("a blue car"));
    let c = client(&server, Arc::new(DescriptionCache::in_memory()));
    let req = request("make it blue");
    assert_eq!(c.generate("q", &req).unwrap().call_count, 1);

    let mut fastest = Duration::MAX;
    for _ in 0..5 {
        let t = Instant::now();
        let d = c.generate("q", &req).unwrap();
        fastest = fastest.min(t.elapsed());
        assert_eq!(d.call_count, 0);
        assert!(d.is_cache_hit());
        assert_eq!(d.description, "a blue car");
    }
    assert_eq!(server.hits(), 1);
    assert!(fastest < Duration::from_millis(5), "{fastest:?}");

    // A different text or model is a different request.
    c.generate("q", &request("make it green")).unwrap();
    assert_eq!(server.hits(), 2);
}

#[test]
fn cache_file_survives_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let server = MockChatServer::always(&staged_answer("a cat on a mat"));
    {
        let c = client(&server, Arc::new(DescriptionCache::open(&path).unwrap()));
        c.generate("q1", &request("add a mat")).unwrap();
    }
    let c = client(&server, Arc::new(DescriptionCache::open(&path).unwrap()));
    let d = c.generate("q1", &request("add a mat")).unwrap();
    assert_eq!(d.call_count, 0);
    assert_eq!(d.description, "a cat on a mat");
    assert_eq!(server.hits(), 1);
}

#[test]
fn missing_key_only_matters_on_a_miss() {
    let server = MockChatServer::always(&staged_answer("x"));
    let cache = Arc::new(DescriptionCache::in_memory());
    client(&server, cache.clone()).generate("q", &request("a")).unwrap();

    let keyless = CotClient::new(Endpoint::new(server.base_url(), None), cache);
    assert_eq!(keyless.generate("q", &request("a")).unwrap().call_count, 0);
    assert!(matches!(
        keyless.generate("q", &request("b")),
        Err(CotError::MissingApiKey)
    ));
    assert_eq!(server.hits(), 1);
}

#[test]
fn concurrency_gate_bounds_in_flight_requests() {
    let live = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let ok = chat_response(&staged_answer("ok"));
    let server = {
        let (live, peak) = (live.clone(), peak.clone());
        MockChatServer::start(move |_, _| {
            let now = live.fetch_add(1, Ordering::SeqCst) + 1;
            peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(40));
            live.fetch_sub(1, Ordering::SeqCst);
            (200, ok.clone())
        })
    };
    let c = Arc::new(client(&server, Arc::new(DescriptionCache::in_memory())).with_concurrency(2));
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let c = c.clone();
            std::thread::spawn(move || c.generate(&format!("q{i}"), &request(&format!("change {i}"))).unwrap())
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(server.hits(), 8);
    assert!(c.gate().peak() <= 2);
    assert!(peak.load(Ordering::SeqCst) <= 2);
}
