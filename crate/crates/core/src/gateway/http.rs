//! HTTP API.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/scenarios` | bundled scenarios |
//! | POST | `/runs` | start a run; TOML body or `?bundled=<name>`, optional `seed`, `pace` |
//! | GET | `/runs` | all runs |
//! | GET | `/runs/{id}` | run status |
//! | GET | `/runs/{id}/metrics/{kind}` | records of one stream, `?from=&to=` positions |
//! | POST | `/runs/{id}/ping` | `{"src", "dst"}` probe at the next slot boundary |
//! | POST | `/runs/{id}/inject` | `{"slots": [SlotArtifacts]}` for future slots |
//! | GET | `/runs/{id}/events` | newline-delimited [`StreamEvent`]s, `?from=` cursor |

use std::convert::Infallible;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{GatewayError, Run, RunManager, RunOptions, ScenarioError, StreamEvent};
use crate::engine::{EngineError, SlotArtifacts, StreamKind};

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        let msg = self.to_string();
        let (code, body) = match &self {
            GatewayError::UnknownRun(_) => (StatusCode::NOT_FOUND, json!({ "error": msg })),
            GatewayError::Scenario(ScenarioError::Parse {
                line,
                column,
                message,
            }) => (
                StatusCode::BAD_REQUEST,
                json!({ "error": msg, "line": line, "column": column, "message": message }),
            ),
            GatewayError::Scenario(ScenarioError::Semantic(issues)) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "error": msg, "issues": issues }),
            ),
            GatewayError::Scenario(ScenarioError::UnknownBundled(_)) => {
                (StatusCode::NOT_FOUND, json!({ "error": msg }))
            }
            GatewayError::Scenario(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, json!({ "error": msg }))
            }
            GatewayError::BadRequest(_) => (StatusCode::BAD_REQUEST, json!({ "error": msg })),
            GatewayError::NotRunning { state, .. } => (
                StatusCode::CONFLICT,
                json!({ "error": msg, "state": state }),
            ),
            GatewayError::Engine(e) => match e {
                EngineError::UnknownStation(_) => {
                    (StatusCode::BAD_REQUEST, json!({ "error": msg }))
                }
                EngineError::NotActive => (StatusCode::CONFLICT, json!({ "error": msg })),
                EngineError::MalformedArtifacts(_) | EngineError::InvalidWorkload(_) => {
                    (StatusCode::UNPROCESSABLE_ENTITY, json!({ "error": msg }))
                }
                _ => (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": msg })),
            },
            GatewayError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": msg })),
        };
        (code, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, GatewayError>;

/// A full Starlink-sized snapshot is about 1 MB of JSON.
const INJECT_BODY_LIMIT: usize = 256 << 20;

pub fn router(manager: Arc<RunManager>) -> Router {
    Router::new()
        .route("/scenarios", get(list_scenarios))
        .route("/runs", post(start_run).get(list_runs))
        .route("/runs/{id}", get(run_status))
        .route("/runs/{id}/metrics/{kind}", get(fetch_metrics))
        .route("/runs/{id}/ping", post(ping))
        .route(
            "/runs/{id}/inject",
            post(inject).layer(DefaultBodyLimit::max(INJECT_BODY_LIMIT)),
        )
        .route("/runs/{id}/events", get(events))
        .with_state(manager)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub description: String,
    pub hash: String,
    pub slot_duration_s: f64,
    pub duration_s: f64,
    pub ground_stations: Vec<String>,
}

async fn list_scenarios() -> ApiResult<Json<Vec<ScenarioSummary>>> {
    let mut out = Vec::new();
    for name in super::bundled_names() {
        let l = super::load_bundled(name)?;
        out.push(ScenarioSummary {
            name: name.to_string(),
            description: l.scenario.description.clone(),
            hash: l.hash,
            slot_duration_s: l.scenario.slot_duration_s,
            duration_s: l.scenario.duration_s,
            ground_stations: l
                .scenario
                .ground_stations
                .iter()
                .map(|g| g.id.clone())
                .collect(),
        });
    }
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
struct StartQuery {
    bundled: Option<String>,
    seed: Option<u64>,
    pace: Option<f64>,
}

async fn start_run(
    State(m): State<Arc<RunManager>>,
    Query(q): Query<StartQuery>,
    body: String,
) -> ApiResult<impl IntoResponse> {
    let loaded = match &q.bundled {
        Some(name) => super::load_bundled(name)?,
        None => {
            if body.trim().is_empty() {
                return Err(GatewayError::BadRequest(
                    "send a scenario as the request body or name one with ?bundled=".into(),
                ));
            }
            let scenario = super::parse_scenario(&body)?;
            super::LoadedScenario {
                hash: scenario.canonical_hash(),
                scenario,
                base_dir: ".".into(),
            }
        }
    };
    let status = m.start(
        loaded,
        RunOptions {
            seed: q.seed,
            pace_wall_per_sim_s: q.pace,
        },
    )?;
    Ok((StatusCode::CREATED, Json(status)))
}

async fn list_runs(State(m): State<Arc<RunManager>>) -> impl IntoResponse {
    Json(m.list())
}

async fn run_status(
    State(m): State<Arc<RunManager>>,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(m.get(&id)?.status()))
}

#[derive(Debug, Deserialize)]
struct RangeQuery {
    from: Option<usize>,
    to: Option<usize>,
}

async fn fetch_metrics(
    State(m): State<Arc<RunManager>>,
    Path((id, kind)): Path<(String, String)>,
    Query(q): Query<RangeQuery>,
) -> ApiResult<impl IntoResponse> {
    let run = m.get(&id)?;
    let kind: StreamKind = kind.parse().map_err(GatewayError::BadRequest)?;
    Ok(Json(run.fetch(kind, q.from.unwrap_or(0), q.to)))
}

#[derive(Debug, Deserialize)]
struct PingBody {
    src: String,
    dst: String,
}

async fn ping(
    State(m): State<Arc<RunManager>>,
    Path(id): Path<String>,
    Json(b): Json<PingBody>,
) -> ApiResult<impl IntoResponse> {
    let run = m.get(&id)?;
    Ok(Json(run.ping(&b.src, &b.dst).await?))
}

#[derive(Debug, Deserialize)]
struct InjectBody {
    slots: Vec<SlotArtifacts>,
}

async fn inject(
    State(m): State<Arc<RunManager>>,
    Path(id): Path<String>,
    Json(b): Json<InjectBody>,
) -> ApiResult<impl IntoResponse> {
    let run = m.get(&id)?;
    let accepted = run.inject(b.slots).await?;
    Ok(Json(json!({ "accepted": accepted })))
}

#[derive(Debug, Deserialize)]
struct CursorQuery {
    from: Option<usize>,
}

struct Cursor {
    run: Arc<Run>,
    next: usize,
    rx: tokio::sync::watch::Receiver<u64>,
    ended: bool,
}

async fn events(
    State(m): State<Arc<RunManager>>,
    Path(id): Path<String>,
    Query(q): Query<CursorQuery>,
) -> ApiResult<impl IntoResponse> {
    let run = m.get(&id)?;
    let cursor = Cursor {
        rx: run.subscribe(),
        run,
        next: q.from.unwrap_or(0),
        ended: false,
    };
    let stream = futures::stream::unfold(cursor, |mut c| async move {
        loop {
            if c.ended {
                return None;
            }
            c.rx.borrow_and_update();
            // status is read before records so nothing appended in between is missed
            let status = c.run.status();
            let (events, seen) = c.run.events_since(c.next);
            if !events.is_empty() {
                c.next = seen;
                let mut buf = String::new();
                for e in &events {
                    buf.push_str(&serde_json::to_string(e).expect("events serialise"));
                    buf.push('\n');
                }
                return Some((Ok::<_, Infallible>(Bytes::from(buf)), c));
            }
            if status.state.is_terminal() {
                c.ended = true;
                let mut line =
                    serde_json::to_string(&StreamEvent::End { status }).expect("events serialise");
                line.push('\n');
                return Some((Ok(Bytes::from(line)), c));
            }
            if c.rx.changed().await.is_err() {
                c.ended = true;
            }
        }
    });
    Ok((
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        Body::from_stream(stream),
    ))
}
