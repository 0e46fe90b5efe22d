//! Wire-protocol behavior of the mock server, exercised through the real
//! HTTP client.

mod common;

use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use bevhd::codec::{decode, TokenVocab, WaypointTokens};
use bevhd::planner::{serve_mock, MockPolicy, PlanOutput, Planner, RemotePlanner};
use bevhd::scene::ground_truth_trajectory;
use bevhd::scenario_gen::standard_suite;

fn raw_request(addr: &std::net::SocketAddr, method: &str, path: &str, body: &str) -> String {
    let mut stream = TcpStream::connect(addr).expect("connect to mock");
    stream
        .set_read_timeout(Some(Duration::from_secs(5)))
        .unwrap();
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    response
}

fn wire_body(horizon: usize) -> String {
    serde_json::json!({
        "version": 1,
        "image_ppm_base64": "",
        "prompt": "p",
        "horizon_steps": horizon,
        "vocab": {"bins_per_axis": 400, "range_m": 50.0},
    })
    .to_string()
}

#[test]
fn fixed_tokens_are_echoed() {
    let server = serve_mock(
        MockPolicy::FixedTokens(vec![1, 2, 3, 4, 5, 6]),
        "127.0.0.1:0",
    )
    .unwrap();
    let response = raw_request(&server.addr(), "POST", "/v1/plan", &wire_body(6));
    assert!(response.starts_with("HTTP/1.1 200"));
    let body = response.split("\r\n\r\n").nth(1).unwrap();
    let v: serde_json::Value = serde_json::from_str(body).unwrap();
    assert_eq!(v["version"], 1);
    assert_eq!(v["tokens"], serde_json::json!([1, 2, 3, 4, 5, 6]));
    assert_eq!(v["metadata"], "mock");
    assert!(v.get("waypoints").is_none() || v["waypoints"].is_null());
}

#[test]
fn malformed_request_gets_400() {
    let server = serve_mock(MockPolicy::ConstantVelocity, "127.0.0.1:0").unwrap();
    let response = raw_request(&server.addr(), "POST", "/v1/plan", "{not json");
    assert!(response.starts_with("HTTP/1.1 400"), "{response}");
    let body = response.split("\r\n\r\n").nth(1).unwrap();
    let v: serde_json::Value = serde_json::from_str(body).unwrap();
    assert!(v["error"].as_str().unwrap().contains("malformed"));
}

#[test]
fn unknown_endpoint_gets_404() {
    let server = serve_mock(MockPolicy::ConstantVelocity, "127.0.0.1:0").unwrap();
    let response = raw_request(&server.addr(), "POST", "/v2/other", &wire_body(6));
    assert!(response.starts_with("HTTP/1.1 404"), "{response}");
    let response = raw_request(&server.addr(), "GET", "/v1/plan", "");
    assert!(response.starts_with("HTTP/1.1 404"), "{response}");
}

#[test]
fn wrong_version_gets_400() {
    let server = serve_mock(MockPolicy::ConstantVelocity, "127.0.0.1:0").unwrap();
    let body = wire_body(6).replace("\"version\":1", "\"version\":9");
    let response = raw_request(&server.addr(), "POST", "/v1/plan", &body);
    assert!(response.starts_with("HTTP/1.1 400"), "{response}");
}

#[test]
fn echo_oracle_reproduces_ground_truth() {
    let scenarios = standard_suite(0);
    let server = serve_mock(MockPolicy::EchoOracle(scenarios.clone()), "127.0.0.1:0").unwrap();
    let planner = RemotePlanner::new(server.endpoint(), Duration::from_secs(5), 1);

    let s = &scenarios[1]; // turn_left: curved ground truth
    let grid = bevhd::grid::GridSpec::default();
    let vocab = TokenVocab::default();
    let fm = bevhd::grid::synth_feature_map(&grid, &s.frames[10], &s.map, 4, 0).unwrap();
    let image = bevhd::overlay::compose_bev_hd(
        &bevhd::viz::visualize(&fm).unwrap(),
        &s.map,
        &s.frames[10].ego,
        &grid,
        &bevhd::overlay::RenderStyle::default(),
    );
    let ctx = bevhd::planner::PlanContext {
        scenario: s,
        frame_index: 10,
        image: &image,
        grid: &grid,
        vocab: &vocab,
        horizon_steps: 6,
    };
    let output = planner.plan(&ctx).unwrap();
    let tokens = match output {
        PlanOutput::Tokens(t) => t,
        other => panic!("mock answers tokens, got {other:?}"),
    };
    let got = decode(&tokens, &vocab).unwrap();
    let gt = ground_truth_trajectory(s, 10, 6).unwrap();
    let half_bin = vocab.bin_width() / 2.0;
    for (a, b) in got.waypoints.iter().zip(&gt.waypoints) {
        assert!((a[0] - b[0]).abs() <= half_bin + 1e-12);
        assert!((a[1] - b[1]).abs() <= half_bin + 1e-12);
    }
}

#[test]
fn missing_meta_is_a_request_error() {
    // The echo policy needs request meta; a metaless client gets a 4xx that
    // the client surfaces as RemoteStatus (no retries burned).
    let server = serve_mock(MockPolicy::EchoOracle(standard_suite(0)), "127.0.0.1:0").unwrap();
    let response = raw_request(&server.addr(), "POST", "/v1/plan", &wire_body(6));
    assert!(response.starts_with("HTTP/1.1 400"), "{response}");
    assert!(response.contains("meta"));
}

#[test]
fn client_validates_token_count_against_request() {
    // Fixed policy answers 3 tokens; a 6-step request must be rejected
    // client-side as malformed.
    let server = serve_mock(MockPolicy::FixedTokens(vec![1, 2, 3]), "127.0.0.1:0").unwrap();
    let planner = RemotePlanner::new(server.endpoint(), Duration::from_secs(5), 0);
    let scenarios = standard_suite(0);
    let s = &scenarios[0];
    let grid = bevhd::grid::GridSpec::default();
    let vocab = TokenVocab::default();
    let image = bevhd::viz::RgbImage::filled(4, 4, [0, 0, 0]);
    let ctx = bevhd::planner::PlanContext {
        scenario: s,
        frame_index: 0,
        image: &image,
        grid: &grid,
        vocab: &vocab,
        horizon_steps: 6,
    };
    let err = planner.plan(&ctx).unwrap_err();
    assert!(matches!(err, bevhd::Error::MalformedResponse(_)), "{err:?}");

    // And tokens outside the vocabulary are rejected with the offending index.
    let tokens = WaypointTokens::new(vec![0, 0, 0, 0, 0, 160_000]);
    let err = decode(&tokens, &vocab).unwrap_err();
    assert!(matches!(err, bevhd::Error::TokenOutOfVocab { index: 5, .. }));
}
