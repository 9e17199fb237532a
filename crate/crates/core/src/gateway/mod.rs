//! Control plane: scenario ingestion, run orchestration, metrics persistence
//! and the HTTP API.

pub mod http;
pub mod scenario;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::mpsc::Sender;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{oneshot, watch};

pub use scenario::{
    bundled_names, bundled_text, load_bundled, load_scenario, parse_scenario, resolve_scenario,
    Issue, LoadedScenario, Scenario, ScenarioError,
};

use crate::engine::{
    metrics::record_line, Engine, EngineCommand, EngineError, MetricRecord, PingOutcome,
    RunObserver, SlotArtifacts, StreamKind,
};
use crate::time::slot_count;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("unknown run `{0}`")]
    UnknownRun(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{0}")]
    BadRequest(String),
    #[error("run `{id}` is {state:?}, not running")]
    NotRunning { id: String, state: RunState },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunState {
    Pending,
    Running,
    Done,
    Failed,
}

impl RunState {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunState::Done | RunState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub run_id: String,
    pub scenario_name: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub state: RunState,
    pub completed_slots: usize,
    pub total_slots: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One line of a run's event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum StreamEvent {
    Record {
        seq: usize,
        slot_index: usize,
        record: MetricRecord,
    },
    End {
        status: RunStatus,
    },
}

pub struct Run {
    pub id: String,
    status: RwLock<RunStatus>,
    /// Records with the slot that was current when each was produced.
    records: RwLock<Vec<(usize, MetricRecord)>>,
    changed: watch::Sender<u64>,
    commands: Mutex<Option<Sender<EngineCommand>>>,
}

impl Run {
    pub fn status(&self) -> RunStatus {
        self.status.read().unwrap().clone()
    }

    fn update(&self, f: impl FnOnce(&mut RunStatus)) {
        {
            let mut s = self.status.write().unwrap();
            let before = s.state;
            f(&mut s);
            assert!(s.state >= before, "run state moved backwards");
        }
        self.changed.send_modify(|v| *v += 1);
    }

    pub fn record_count(&self) -> usize {
        self.records.read().unwrap().len()
    }

    /// Records of `kind`, positions `from..to` within that stream.
    pub fn fetch(&self, kind: StreamKind, from: usize, to: Option<usize>) -> Vec<MetricRecord> {
        let recs = self.records.read().unwrap();
        let take = to.map_or(usize::MAX, |t| t.saturating_sub(from));
        recs.iter()
            .map(|(_, r)| r)
            .filter(|r| kind.matches(r))
            .skip(from)
            .take(take)
            .cloned()
            .collect()
    }

    /// Stream events from record position `from` onward, and the number of
    /// records seen.
    pub fn events_since(&self, from: usize) -> (Vec<StreamEvent>, usize) {
        let recs = self.records.read().unwrap();
        let events = recs
            .iter()
            .enumerate()
            .skip(from)
            .map(|(seq, (slot, r))| StreamEvent::Record {
                seq,
                slot_index: *slot,
                record: r.clone(),
            })
            .collect();
        (events, recs.len())
    }

    pub fn subscribe(&self) -> watch::Receiver<u64> {
        self.changed.subscribe()
    }

    fn sender(&self) -> Result<Sender<EngineCommand>, GatewayError> {
        let status = self.status();
        if status.state != RunState::Running {
            return Err(GatewayError::NotRunning {
                id: self.id.clone(),
                state: status.state,
            });
        }
        self.commands
            .lock()
            .unwrap()
            .clone()
            .ok_or(GatewayError::NotRunning {
                id: self.id.clone(),
                state: status.state,
            })
    }

    /// Sends a probe at the engine's next slot boundary and waits for it.
    pub async fn ping(&self, src: &str, dst: &str) -> Result<PingOutcome, GatewayError> {
        let tx = self.sender()?;
        let (reply_tx, reply_rx) = oneshot::channel();
        let cmd = EngineCommand::Ping {
            src: src.into(),
            dst: dst.into(),
            reply: Box::new(move |r| {
                let _ = reply_tx.send(r);
            }),
        };
        tx.send(cmd).map_err(|_| EngineError::NotActive)?;
        Ok(reply_rx.await.map_err(|_| EngineError::NotActive)??)
    }

    pub async fn inject(&self, artifacts: Vec<SlotArtifacts>) -> Result<Vec<usize>, GatewayError> {
        let tx = self.sender()?;
        let (reply_tx, reply_rx) = oneshot::channel();
        let cmd = EngineCommand::Inject {
            artifacts,
            reply: Box::new(move |r| {
                let _ = reply_tx.send(r);
            }),
        };
        tx.send(cmd).map_err(|_| EngineError::NotActive)?;
        Ok(reply_rx.await.map_err(|_| EngineError::NotActive)??)
    }
}

struct RunSink {
    run: Arc<Run>,
    file: Option<BufWriter<File>>,
    slot: usize,
    io_error: Option<std::io::Error>,
}

impl RunObserver for RunSink {
    fn on_record(&mut self, record: &MetricRecord) {
        if let Some(f) = &mut self.file {
            if let Err(e) = writeln!(f, "{}", record_line(record)) {
                self.io_error.get_or_insert(e);
            }
        }
        self.run
            .records
            .write()
            .unwrap()
            .push((self.slot, record.clone()));
        self.run.changed.send_modify(|v| *v += 1);
    }

    fn on_slot(&mut self, slot_index: usize, _slot_count: usize) {
        self.slot = slot_index;
        self.run.update(|s| s.completed_slots = slot_index);
    }
}

/// Hosts independent runs; each owns its engine on a dedicated thread.
pub struct RunManager {
    runs: RwLock<BTreeMap<String, Arc<Run>>>,
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub pace_wall_per_sim_s: Option<f64>,
}

impl RunManager {
    /// With `out_dir`, each run persists to `out_dir/runs/<id>/`.
    pub fn new(out_dir: Option<PathBuf>) -> Self {
        Self {
            runs: RwLock::new(BTreeMap::new()),
            out_dir,
        }
    }

    pub fn get(&self, id: &str) -> Result<Arc<Run>, GatewayError> {
        self.runs
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| GatewayError::UnknownRun(id.into()))
    }

    pub fn list(&self) -> Vec<RunStatus> {
        self.runs
            .read()
            .unwrap()
            .values()
            .map(|r| r.status())
            .collect()
    }

    /// Registers the run and starts it in the background. The scenario has
    /// already been validated; slot preparation happens while `Pending`.
    pub fn start(
        &self,
        loaded: LoadedScenario,
        opts: RunOptions,
    ) -> Result<RunStatus, GatewayError> {
        if let Some(p) = opts.pace_wall_per_sim_s {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(GatewayError::BadRequest(format!(
                    "pace must be nonnegative, got {p}"
                )));
            }
        }
        let id = ulid::Ulid::new().to_string();
        let sc = &loaded.scenario;
        let status = RunStatus {
            run_id: id.clone(),
            scenario_name: sc.name.clone(),
            scenario_hash: loaded.hash.clone(),
            seed: loaded.seed(opts.seed),
            state: RunState::Pending,
            completed_slots: 0,
            total_slots: slot_count(sc.duration_s, sc.slot_duration_s),
            error: None,
        };
        let run = Arc::new(Run {
            id: id.clone(),
            status: RwLock::new(status.clone()),
            records: RwLock::new(Vec::new()),
            changed: watch::channel(0).0,
            commands: Mutex::new(None),
        });
        let dir = self.out_dir.as_ref().map(|d| d.join("runs").join(&id));
        self.runs.write().unwrap().insert(id.clone(), run.clone());
        std::thread::Builder::new()
            .name(format!("run-{id}"))
            .spawn(move || execute(run, loaded, opts, dir))?;
        Ok(status)
    }
}

fn execute(run: Arc<Run>, loaded: LoadedScenario, opts: RunOptions, dir: Option<PathBuf>) {
    let result = (|| -> Result<(), GatewayError> {
        let file = match &dir {
            Some(d) => {
                fs::create_dir_all(d)?;
                fs::write(
                    d.join("scenario.json"),
                    serde_json::to_vec_pretty(&loaded.scenario).unwrap(),
                )?;
                Some(BufWriter::new(File::create(d.join("metrics.jsonl"))?))
            }
            None => None,
        };
        let mut setup = loaded.engine_setup(opts.seed)?;
        if let Some(p) = opts.pace_wall_per_sim_s {
            setup.config.pace_wall_per_sim_s = p;
        }
        let (tx, rx) = std::sync::mpsc::channel();
        let engine = Engine::new(setup)?.with_commands(rx);
        *run.commands.lock().unwrap() = Some(tx);
        run.update(|s| s.state = RunState::Running);
        let mut sink = RunSink {
            run: run.clone(),
            file,
            slot: 0,
            io_error: None,
        };
        let out = engine.run_observed(&mut sink);
        *run.commands.lock().unwrap() = None;
        out?;
        if let Some(f) = &mut sink.file {
            f.flush()?;
        }
        if let Some(e) = sink.io_error {
            return Err(e.into());
        }
        Ok(())
    })();
    *run.commands.lock().unwrap() = None;
    run.update(|s| match &result {
        Ok(()) => {
            s.state = RunState::Done;
            s.completed_slots = s.total_slots;
        }
        Err(e) => {
            s.state = RunState::Failed;
            s.error = Some(e.to_string());
        }
    });
    if let Some(d) = dir {
        let _ = fs::create_dir_all(&d);
        let _ = fs::write(
            d.join("status.json"),
            serde_json::to_vec_pretty(&run.status()).unwrap(),
        );
    }
}
