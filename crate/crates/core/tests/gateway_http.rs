mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use leotwin::engine::{Engine, SlotArtifacts};
use leotwin::gateway::{http::router, load_bundled, parse_scenario, LoadedScenario, RunManager};
use leotwin::topology::LinkKind;
use serde_json::{json, Value};
use tower::ServiceExt;

const SMALL: &str = r#"
schema_version = 1
name = "small"
seed = 3
slot_duration_s = 1.0
duration_s = 20.0

[shell]
plane_count = 72
sats_per_plane = 18
altitude_km = 550.0
inclination_deg = 53.2

[[ground_stations]]
id = "shanghai"
name = "Shanghai"
latitude_deg = 31.2304
longitude_deg = 121.4737

[[ground_stations]]
id = "sao-paulo"
name = "Sao Paulo"
latitude_deg = -23.5505
longitude_deg = -46.6333

[[workload]]
kind = "ping"
src = "shanghai"
dst = "sao-paulo"
start_s = 0.5
interval_s = 1.0
count = 20
"#;

fn app(dir: Option<std::path::PathBuf>) -> Router {
    router(Arc::new(RunManager::new(dir)))
}

async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    body: impl Into<String>,
) -> (StatusCode, String) {
    let body = body.into();
    let kind = if body.starts_with('{') {
        "application/json"
    } else {
        "text/plain"
    };
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", kind)
        .body(Body::from(body))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn call_json(
    app: &Router,
    method: &str,
    uri: &str,
    body: impl Into<String>,
) -> (StatusCode, Value) {
    let (s, text) = call(app, method, uri, body).await;
    (
        s,
        serde_json::from_str(&text).unwrap_or(Value::String(text)),
    )
}

async fn wait_for(app: &Router, id: &str, state: &str) -> Value {
    for _ in 0..3000 {
        let (_, v) = call_json(app, "GET", &format!("/runs/{id}"), "").await;
        if v["state"] == state {
            return v;
        }
        assert_ne!(v["state"], "failed", "{v}");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("run {id} never reached {state}");
}

async fn start(app: &Router, query: &str, body: &str) -> String {
    let (s, v) = call_json(app, "POST", &format!("/runs{query}"), body).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["state"], "pending");
    v["run_id"].as_str().unwrap().to_string()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn lists_bundled_scenarios() {
    let app = app(None);
    let (s, v) = call_json(&app, "GET", "/scenarios", "").await;
    assert_eq!(s, StatusCode::OK);
    let names: Vec<&str> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x["name"].as_str().unwrap())
        .collect();
    for n in [
        "kuiper-relay-stable",
        "kuiper-relay-alternating",
        "starlink-isl-failures",
        "starlink-ping",
    ] {
        assert!(names.contains(&n), "{names:?}");
    }
    let flow = v
        .as_array()
        .unwrap()
        .iter()
        .find(|x| x["name"] == "kuiper-relay-stable")
        .unwrap();
    assert_eq!(flow["ground_stations"].as_array().unwrap().len(), 20);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bundled_run_matches_library_output() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Some(dir.path().to_path_buf()));
    let id = start(&app, "?bundled=kuiper-relay-stable", "").await;
    let done = wait_for(&app, &id, "done").await;
    assert_eq!(done["completed_slots"], 200);
    assert_eq!(done["total_slots"], 200);

    let (s, v) = call_json(&app, "GET", &format!("/runs/{id}/metrics/flow"), "").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v.as_array().unwrap().len(), 200);
    let (_, again) = call_json(&app, "GET", &format!("/runs/{id}/metrics/flow"), "").await;
    assert_eq!(v, again);
    let (_, tail) = call_json(
        &app,
        "GET",
        &format!("/runs/{id}/metrics/flow?from=190"),
        "",
    )
    .await;
    assert_eq!(tail.as_array().unwrap()[..], v.as_array().unwrap()[190..]);
    let (_, window) = call_json(
        &app,
        "GET",
        &format!("/runs/{id}/metrics/topology?from=10&to=15"),
        "",
    )
    .await;
    assert_eq!(window.as_array().unwrap().len(), 5);
    assert_eq!(window[0]["slot_index"], 10);
    let (_, empty) = call_json(&app, "GET", &format!("/runs/{id}/metrics/rtt?from=500"), "").await;
    assert_eq!(empty, json!([]));
    let (s, _) = call_json(&app, "GET", &format!("/runs/{id}/metrics/bogus"), "").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let persisted =
        std::fs::read_to_string(dir.path().join("runs").join(&id).join("metrics.jsonl")).unwrap();
    let reference = Engine::new(
        load_bundled("kuiper-relay-stable")
            .unwrap()
            .engine_setup(None)
            .unwrap(),
    )
    .unwrap()
    .run()
    .unwrap()
    .log
    .to_jsonl();
    assert_eq!(persisted, reference);
    let status: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("runs").join(&id).join("status.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(status["state"], "done");

    let (s, v) = call_json(
        &app,
        "POST",
        &format!("/runs/{id}/ping"),
        r#"{"src":"london","dst":"shanghai"}"#,
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT, "{v}");
}

fn parse_events(body: &str) -> Vec<Value> {
    body.lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn event_stream_has_no_gaps() {
    let app = app(None);
    let id = start(&app, "?pace=0.05", SMALL).await;
    // subscribe while the run is still going
    let (s, body) = call(&app, "GET", &format!("/runs/{id}/events"), "").await;
    assert_eq!(s, StatusCode::OK);
    let events = parse_events(&body);
    let (last, records) = events.split_last().unwrap();
    assert_eq!(last["event"], "end");
    assert_eq!(last["status"]["state"], "done");
    for (i, e) in records.iter().enumerate() {
        assert_eq!(e["event"], "record");
        assert_eq!(e["seq"], i);
    }
    let total = records.len();
    let (_, tail) = call(
        &app,
        "GET",
        &format!("/runs/{id}/events?from={}", total - 3),
        "",
    )
    .await;
    let tail = parse_events(&tail);
    assert_eq!(tail.len(), 4);
    assert_eq!(tail[..3], records[total - 3..]);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn rejects_bad_input() {
    let app = app(None);
    let (s, v) = call_json(
        &app,
        "POST",
        "/runs",
        SMALL.replace("duration_s = 20.0", "duration_s = 20.0\nbogus = 1"),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
    assert_eq!(v["line"], 7);

    let dup = SMALL.replace("id = \"sao-paulo\"", "id = \"shanghai\"");
    let (s, v) = call_json(&app, "POST", "/runs", dup).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    assert!(
        v["issues"]
            .as_array()
            .unwrap()
            .iter()
            .any(|i| i["field"] == "ground_stations[1].id"),
        "{v}"
    );

    let (s, _) = call_json(&app, "POST", "/runs", "").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call_json(&app, "POST", "/runs?bundled=nope", "").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call_json(&app, "POST", "/runs?bundled=kuiper-relay-stable&pace=-1", "").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call_json(&app, "GET", "/runs/01ARZ3NDEKTSV4RRFFQ69G5FAV", "").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call_json(&app, "GET", "/runs/01ARZ3NDEKTSV4RRFFQ69G5FAV/events", "").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = call_json(&app, "GET", "/runs", "").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, json!([]));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn live_ping_and_injection() {
    let app = app(None);
    let id = start(&app, "?pace=0.25", SMALL).await;
    let running = wait_for(&app, &id, "running").await;
    assert_eq!(running["total_slots"], 20);

    let (s, v) = call_json(
        &app,
        "POST",
        &format!("/runs/{id}/ping"),
        r#"{"src":"shanghai","dst":"sao-paulo"}"#,
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["outcome"], "reply", "{v}");
    let rtt = v["rtt_s"].as_f64().unwrap();
    let theoretical = v["theoretical_rtt_s"].as_f64().unwrap();
    let floor = 2.0 * common::great_circle_km(31.2304, 121.4737, -23.5505, -46.6333) / 299_792.458;
    assert!(
        rtt >= theoretical && theoretical >= floor,
        "{rtt} {theoretical} {floor}"
    );

    let (s, v) = call_json(
        &app,
        "POST",
        &format!("/runs/{id}/ping"),
        r#"{"src":"shanghai","dst":"shanghai"}"#,
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert!((v["rtt_s"].as_f64().unwrap() - 600e-6).abs() < 1e-15, "{v}");

    let (s, _) = call_json(
        &app,
        "POST",
        &format!("/runs/{id}/ping"),
        r#"{"src":"shanghai","dst":"atlantis"}"#,
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    // cut every ISL from slot 15 on
    let scenario = parse_scenario(SMALL).unwrap();
    let loaded = LoadedScenario {
        hash: scenario.canonical_hash(),
        scenario,
        base_dir: ".".into(),
    };
    let engine = Engine::new(loaded.engine_setup(None).unwrap()).unwrap();
    let cut: Vec<SlotArtifacts> = (15..20)
        .map(|k| SlotArtifacts {
            snapshot: engine
                .slot_artifacts(k)
                .unwrap()
                .snapshot
                .with_failed(|l| l.kind == LinkKind::Isl),
            next_hops: None,
        })
        .collect();
    let (s, v) = call_json(
        &app,
        "POST",
        &format!("/runs/{id}/inject"),
        serde_json::to_string(&json!({ "slots": cut })).unwrap(),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["accepted"], json!([15, 16, 17, 18, 19]));

    let past = SlotArtifacts {
        snapshot: engine.slot_artifacts(0).unwrap().snapshot,
        next_hops: None,
    };
    let (s, _) = call_json(
        &app,
        "POST",
        &format!("/runs/{id}/inject"),
        serde_json::to_string(&json!({ "slots": [past] })).unwrap(),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    wait_for(&app, &id, "done").await;
    let (_, rtt) = call_json(&app, "GET", &format!("/runs/{id}/metrics/rtt"), "").await;
    let rtt = rtt.as_array().unwrap();
    let replies: Vec<f64> = rtt
        .iter()
        .filter(|r| r["record"] == "rtt_sample")
        .map(|r| r["launch_t_s"].as_f64().unwrap())
        .collect();
    let lost: Vec<f64> = rtt
        .iter()
        .filter(|r| r["record"] == "ping_timeout")
        .map(|r| r["launch_t_s"].as_f64().unwrap())
        .collect();
    assert!(replies.iter().all(|&t| t < 15.0), "{replies:?}");
    assert_eq!(lost, vec![15.5, 16.5, 17.5, 18.5, 19.5]);
}
