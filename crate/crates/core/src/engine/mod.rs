//! Deterministic slotted event engine.
//!
//! A run replays one topology snapshot and path table per slot and carries
//! ping probes and AIMD flows across them. Everything happens on a single
//! logical clock driven by an [`EventQueue`]; slot artifacts may be computed
//! in parallel ahead of time without affecting the output.

pub mod flow;
pub mod metrics;
pub mod queue;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::mpsc::{Receiver, RecvTimeoutError, TryRecvError};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use flow::{mean_and_cv, Aimd, FlowModel, PathView};
pub use metrics::{
    FlowRateSample, MetricRecord, MetricsLog, PathRecordOut, PingOutcome, PingTimeout, RttSample,
    RunHeader, StreamKind, TimeoutReason, TopologyRecord,
};
pub use queue::{Event, EventKind, EventQueue};

use crate::constellation::{Constellation, GroundStation};
use crate::pathcomp::{PathAlgorithm, PathRecord, PathTable};
use crate::phy::{capacity_schedule, CapacityOverride, CapacitySchedule, PhyError, RadioParams};
use crate::time::{slot_of, slot_start};
use crate::topology::{
    LinkKind, NodeId, TopologyBuilder, TopologyConfig, TopologyError, TopologySnapshot,
};

pub const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("unknown ground station `{0}`")]
    UnknownStation(String),
    #[error("run is not active")]
    NotActive,
    #[error("malformed slot artifacts: {0}")]
    MalformedArtifacts(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error("invalid workload: {}", .0.join("; "))]
    InvalidWorkload(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessingModel {
    /// Added at every node that forwards a packet.
    pub per_hop_processing_s: f64,
    /// Added at each endpoint for each send and each receive.
    pub endpoint_overhead_s: f64,
}

impl Default for ProcessingModel {
    fn default() -> Self {
        Self {
            per_hop_processing_s: 200e-6,
            endpoint_overhead_s: 300e-6,
        }
    }
}

impl ProcessingModel {
    pub fn zero() -> Self {
        Self {
            per_hop_processing_s: 0.0,
            endpoint_overhead_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub processing: ProcessingModel,
    pub flow_model: FlowModel,
    pub ping_timeout_s: f64,
    /// Wall-clock seconds per simulated second; 0 runs as fast as possible.
    pub pace_wall_per_sim_s: f64,
    /// Slots prepared together on the thread pool.
    pub precompute_batch: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            processing: ProcessingModel::default(),
            flow_model: FlowModel::default(),
            ping_timeout_s: 2.0,
            pace_wall_per_sim_s: 0.0,
            precompute_batch: 32,
        }
    }
}

/// A workload item, addressed by ground station id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Directive {
    Ping {
        src: String,
        dst: String,
        #[serde(default)]
        start_s: f64,
        #[serde(default = "one_second")]
        interval_s: f64,
        #[serde(default = "one_count")]
        count: u32,
    },
    Flow {
        src: String,
        dst: String,
        #[serde(default)]
        start_s: f64,
        end_s: f64,
    },
}

fn one_second() -> f64 {
    1.0
}

fn one_count() -> u32 {
    1
}

/// Everything needed to build the per-slot graphs of a scenario.
#[derive(Debug, Clone)]
pub struct SlotPlan {
    pub constellation: Constellation,
    pub stations: Vec<GroundStation>,
    pub schedule: CapacitySchedule,
    pub topology: TopologyConfig,
}

impl SlotPlan {
    /// Computes the capacity schedule and applies `capacity_override` to it.
    pub fn new(
        constellation: Constellation,
        stations: Vec<GroundStation>,
        radio: &RadioParams,
        slot_duration_s: f64,
        duration_s: f64,
        topology: TopologyConfig,
        capacity_override: &CapacityOverride,
    ) -> Result<Self, EngineError> {
        let mut schedule = capacity_schedule(
            &constellation,
            &stations,
            radio,
            slot_duration_s,
            duration_s,
            topology.elevation_mask_deg,
        )?;
        schedule.apply_override(capacity_override);
        Ok(Self {
            constellation,
            stations,
            schedule,
            topology,
        })
    }

    pub fn builder(&self) -> TopologyBuilder<'_> {
        TopologyBuilder::new(
            &self.constellation,
            &self.stations,
            &self.schedule,
            self.topology,
        )
    }
}

/// Where slot snapshots come from.
#[derive(Debug, Clone)]
pub enum SlotSource {
    Plan(Box<SlotPlan>),
    /// Fixed snapshots, one per slot, all sharing nodes and station ids.
    Series {
        slot_duration_s: f64,
        snapshots: Vec<TopologySnapshot>,
    },
}

impl SlotSource {
    pub fn slot_duration_s(&self) -> f64 {
        match self {
            SlotSource::Plan(p) => p.schedule.slot_duration_s,
            SlotSource::Series {
                slot_duration_s, ..
            } => *slot_duration_s,
        }
    }

    pub fn slot_count(&self) -> usize {
        match self {
            SlotSource::Plan(p) => p.schedule.slot_count(),
            SlotSource::Series { snapshots, .. } => snapshots.len(),
        }
    }

    pub fn duration_s(&self) -> f64 {
        match self {
            SlotSource::Plan(p) => p.schedule.duration_s,
            SlotSource::Series {
                slot_duration_s,
                snapshots,
            } => slot_start(snapshots.len(), *slot_duration_s),
        }
    }

    pub fn satellite_count(&self) -> u32 {
        match self {
            SlotSource::Plan(p) => p.constellation.len() as u32,
            SlotSource::Series { snapshots, .. } => {
                snapshots.first().map_or(0, |s| s.satellite_count)
            }
        }
    }

    pub fn station_ids(&self) -> Vec<String> {
        match self {
            SlotSource::Plan(p) => p.stations.iter().map(|s| s.id.clone()).collect(),
            SlotSource::Series { snapshots, .. } => snapshots
                .first()
                .map(|s| s.station_ids.clone())
                .unwrap_or_default(),
        }
    }

    fn validate(&self) -> Result<(), EngineError> {
        if let SlotSource::Series {
            slot_duration_s,
            snapshots,
        } = self
        {
            if !(*slot_duration_s > 0.0) || snapshots.is_empty() {
                return Err(EngineError::MalformedArtifacts(
                    "a snapshot series needs a positive slot duration and at least one snapshot"
                        .into(),
                ));
            }
            let first = &snapshots[0];
            for (k, s) in snapshots.iter().enumerate() {
                if s.slot_index != k
                    || s.satellite_count != first.satellite_count
                    || s.station_ids != first.station_ids
                {
                    return Err(EngineError::MalformedArtifacts(format!(
                        "snapshot {k} does not match the series layout"
                    )));
                }
            }
        }
        Ok(())
    }

    fn snapshot(&self, k: usize) -> Result<TopologySnapshot, EngineError> {
        match self {
            SlotSource::Plan(p) => Ok(p.builder().slot(k)?),
            SlotSource::Series { snapshots, .. } => Ok(snapshots[k].clone()),
        }
    }
}

/// A forwarding entry given by name in injected artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NextHopEntry {
    pub node: String,
    pub dst: String,
    pub next: String,
}

/// Replacement graph (and optionally forwarding table) for one future slot.
/// Capacities travel on the snapshot's links. Without `next_hops` the run's
/// own algorithm computes the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotArtifacts {
    pub snapshot: TopologySnapshot,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_hops: Option<Vec<NextHopEntry>>,
}

pub type Reply<T> = Box<dyn FnOnce(Result<T, EngineError>) + Send>;

/// Interactive requests, applied at the next slot boundary.
pub enum EngineCommand {
    Ping {
        src: String,
        dst: String,
        reply: Reply<PingOutcome>,
    },
    Inject {
        artifacts: Vec<SlotArtifacts>,
        reply: Reply<Vec<usize>>,
    },
}

impl std::fmt::Debug for EngineCommand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EngineCommand::Ping { src, dst, .. } => write!(f, "Ping({src} -> {dst})"),
            EngineCommand::Inject { artifacts, .. } => {
                write!(f, "Inject({} slots)", artifacts.len())
            }
        }
    }
}

/// Receives records as they are produced.
pub trait RunObserver {
    fn on_record(&mut self, _record: &MetricRecord) {}

    /// Called when slot `slot_index` becomes current.
    fn on_slot(&mut self, _slot_index: usize, _slot_count: usize) {}
}

impl RunObserver for () {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwndPoint {
    pub t_s: f64,
    pub cwnd_segments: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleneckPoint {
    pub t_s: f64,
    pub capacity_bit_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowStats {
    pub src: String,
    pub dst: String,
    pub samples: Vec<FlowRateSample>,
    pub cwnd_trace: Vec<CwndPoint>,
    pub bottleneck_trace: Vec<BottleneckPoint>,
    pub offered_bits: f64,
    pub delivered_bits: f64,
    /// Integral of the bottleneck capacity over the flow's lifetime.
    pub capacity_bits: f64,
}

impl FlowStats {
    pub fn rates_from(&self, t_s: f64) -> Vec<f64> {
        self.samples
            .iter()
            .filter(|s| s.t_s >= t_s)
            .map(|s| s.send_rate_bit_s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub log: MetricsLog,
    pub flows: Vec<FlowStats>,
}

pub struct EngineSetup {
    pub scenario_name: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub source: SlotSource,
    pub algorithm: Arc<dyn PathAlgorithm>,
    pub config: EngineConfig,
    pub workload: Vec<Directive>,
}

#[derive(Debug, Clone)]
struct ActiveSlot {
    snapshot: TopologySnapshot,
    table: PathTable,
}

pub struct Engine {
    header: RunHeader,
    source: SlotSource,
    algorithm: Arc<dyn PathAlgorithm>,
    config: EngineConfig,
    workload: Vec<Directive>,
    station_ids: Vec<String>,
    satellite_count: u32,
    injected: BTreeMap<usize, ActiveSlot>,
    commands: Option<Receiver<EngineCommand>>,
}

impl Engine {
    /// Validates the setup; every workload problem is reported at once.
    pub fn new(setup: EngineSetup) -> Result<Self, EngineError> {
        setup.source.validate()?;
        let station_ids = setup.source.station_ids();
        let duration = setup.source.duration_s();
        let mut problems = Vec::new();
        let cfg = &setup.config;
        for (name, v) in [
            (
                "processing.per_hop_processing_s",
                cfg.processing.per_hop_processing_s,
            ),
            (
                "processing.endpoint_overhead_s",
                cfg.processing.endpoint_overhead_s,
            ),
            ("pace_wall_per_sim_s", cfg.pace_wall_per_sim_s),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                problems.push(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if !(cfg.ping_timeout_s > 0.0 && cfg.ping_timeout_s.is_finite()) {
            problems.push(format!(
                "ping_timeout_s must be positive, got {}",
                cfg.ping_timeout_s
            ));
        }
        if let Err(e) = cfg.flow_model.validate() {
            problems.push(format!("flow_model: {e}"));
        }
        for (i, d) in setup.workload.iter().enumerate() {
            let (src, dst) = match d {
                Directive::Ping { src, dst, .. } | Directive::Flow { src, dst, .. } => (src, dst),
            };
            for s in [src, dst] {
                if !station_ids.contains(s) {
                    problems.push(format!("workload[{i}]: unknown ground station `{s}`"));
                }
            }
            match *d {
                Directive::Ping {
                    start_s,
                    interval_s,
                    count,
                    ..
                } => {
                    if !(start_s >= 0.0 && start_s < duration) {
                        problems.push(format!(
                            "workload[{i}]: start_s {start_s} outside [0, {duration})"
                        ));
                    }
                    if !(interval_s > 0.0) {
                        problems.push(format!("workload[{i}]: interval_s must be positive"));
                    }
                    if count == 0 {
                        problems.push(format!("workload[{i}]: count must be at least 1"));
                    }
                }
                Directive::Flow { start_s, end_s, .. } => {
                    if !(start_s >= 0.0 && start_s < end_s && end_s <= duration) {
                        problems.push(format!(
                            "workload[{i}]: flow needs 0 <= start_s < end_s <= {duration}, got [{start_s}, {end_s}]"
                        ));
                    }
                }
            }
        }
        if !problems.is_empty() {
            return Err(EngineError::InvalidWorkload(problems));
        }
        let header = RunHeader {
            scenario_name: setup.scenario_name,
            scenario_hash: setup.scenario_hash,
            seed: setup.seed,
            algorithm: setup.algorithm.name().to_string(),
            slot_duration_s: setup.source.slot_duration_s(),
            slot_count: setup.source.slot_count(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            schema_version: METRICS_SCHEMA_VERSION,
        };
        Ok(Self {
            header,
            satellite_count: setup.source.satellite_count(),
            source: setup.source,
            algorithm: setup.algorithm,
            config: setup.config,
            workload: setup.workload,
            station_ids,
            injected: BTreeMap::new(),
            commands: None,
        })
    }

    pub fn header(&self) -> &RunHeader {
        &self.header
    }

    pub fn slot_count(&self) -> usize {
        self.header.slot_count
    }

    pub fn with_commands(mut self, commands: Receiver<EngineCommand>) -> Self {
        self.commands = Some(commands);
        self
    }

    /// Queues artifacts for slots that have not started yet. Returns the
    /// slot indices accepted.
    pub fn inject(&mut self, artifacts: Vec<SlotArtifacts>) -> Result<Vec<usize>, EngineError> {
        self.inject_after(artifacts, None)
    }

    fn inject_after(
        &mut self,
        artifacts: Vec<SlotArtifacts>,
        current: Option<usize>,
    ) -> Result<Vec<usize>, EngineError> {
        let resolved = artifacts
            .into_iter()
            .map(|a| self.resolve(a, current))
            .collect::<Result<Vec<_>, _>>()?;
        let mut slots = Vec::new();
        for s in resolved {
            slots.push(s.snapshot.slot_index);
            self.injected.insert(s.snapshot.slot_index, s);
        }
        Ok(slots)
    }

    fn resolve(&self, a: SlotArtifacts, current: Option<usize>) -> Result<ActiveSlot, EngineError> {
        let bad = |m: String| EngineError::MalformedArtifacts(m);
        let snap = a.snapshot;
        let k = snap.slot_index;
        if k >= self.slot_count() || current.is_some_and(|c| k <= c) {
            return Err(bad(format!("slot {k} is not a future slot of this run")));
        }
        let expect_t = slot_start(k, self.header.slot_duration_s);
        if (snap.t_s - expect_t).abs() > 1e-9 * expect_t.max(1.0) {
            return Err(bad(format!(
                "slot {k} must start at {expect_t} s, got {}",
                snap.t_s
            )));
        }
        if snap.satellite_count != self.satellite_count || snap.station_ids != self.station_ids {
            return Err(bad(format!("slot {k} does not have this run's nodes")));
        }
        let table = match a.next_hops {
            None => PathTable::compute(self.algorithm.as_ref(), &snap, &station_nodes(&snap)),
            Some(entries) => {
                let lookup = |name: &str| {
                    snap.node_by_name(name)
                        .ok_or_else(|| bad(format!("unknown node `{name}`")))
                };
                let mut map = BTreeMap::new();
                for e in &entries {
                    map.insert((lookup(&e.node)?, lookup(&e.dst)?), lookup(&e.next)?);
                }
                PathTable {
                    slot_index: k,
                    algorithm_name: "injected".into(),
                    entries: map,
                }
            }
        };
        Ok(ActiveSlot {
            snapshot: snap,
            table,
        })
    }

    /// Artifacts the run would use for slot `k` absent any injection.
    pub fn slot_artifacts(&self, k: usize) -> Result<SlotArtifacts, EngineError> {
        if k >= self.slot_count() {
            return Err(TopologyError::BeyondHorizon {
                t_s: slot_start(k, self.header.slot_duration_s),
                horizon_s: self.source.duration_s(),
            }
            .into());
        }
        Ok(SlotArtifacts {
            snapshot: self.source.snapshot(k)?,
            next_hops: None,
        })
    }

    fn prepare(&self, ks: std::ops::Range<usize>) -> Result<Vec<(usize, ActiveSlot)>, EngineError> {
        let alg = self.algorithm.as_ref();
        let build = |k: usize, snapshot: TopologySnapshot| {
            let table = PathTable::compute(alg, &snapshot, &station_nodes(&snapshot));
            (k, ActiveSlot { snapshot, table })
        };
        match &self.source {
            SlotSource::Plan(p) => {
                let builder = p.builder();
                ks.into_par_iter()
                    .map(|k| Ok(build(k, builder.slot(k)?)))
                    .collect()
            }
            SlotSource::Series { snapshots, .. } => ks
                .into_par_iter()
                .map(|k| Ok(build(k, snapshots[k].clone())))
                .collect(),
        }
    }

    pub fn run(self) -> Result<RunOutput, EngineError> {
        self.run_observed(&mut ())
    }

    pub fn run_observed(self, observer: &mut dyn RunObserver) -> Result<RunOutput, EngineError> {
        Runtime::new(self, observer, false).execute()
    }

    /// One probe launched at `t_s`, without running the rest of the workload.
    pub fn ping(&self, src: &str, dst: &str, t_s: f64) -> Result<PingOutcome, EngineError> {
        let duration = self.source.duration_s();
        if !(t_s >= 0.0 && t_s < duration) {
            return Err(TopologyError::BeyondHorizon {
                t_s,
                horizon_s: duration,
            }
            .into());
        }
        let engine = Engine {
            header: self.header.clone(),
            source: self.source.clone(),
            algorithm: self.algorithm.clone(),
            config: self.config,
            workload: vec![Directive::Ping {
                src: src.into(),
                dst: dst.into(),
                start_s: t_s,
                interval_s: 1.0,
                count: 1,
            }],
            station_ids: self.station_ids.clone(),
            satellite_count: self.satellite_count,
            injected: self.injected.clone(),
            commands: None,
        };
        for s in [src, dst] {
            if !engine.station_ids.iter().any(|x| x == s) {
                return Err(EngineError::UnknownStation(s.into()));
            }
        }
        let out = Runtime::new(engine, &mut (), true).execute()?;
        out.log
            .records
            .into_iter()
            .find_map(|r| match r {
                MetricRecord::RttSample(s) => Some(PingOutcome::Reply(s)),
                MetricRecord::PingTimeout(t) => Some(PingOutcome::Timeout(t)),
                _ => None,
            })
            .ok_or(EngineError::NotActive)
    }
}

fn station_nodes(snapshot: &TopologySnapshot) -> Vec<NodeId> {
    snapshot.station_nodes().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Leg {
    Out,
    Back,
}

struct Probe {
    src: NodeId,
    dst: NodeId,
    launch_t: f64,
    leg: Leg,
    at: NodeId,
    visited: BTreeSet<NodeId>,
    path_out: Vec<NodeId>,
    propagation_s: f64,
    reply: Option<Reply<PingOutcome>>,
    logged: bool,
}

struct FlowRun {
    src: NodeId,
    dst: NodeId,
    end_t: f64,
    aimd: Aimd,
    started: bool,
    done: bool,
    rate: f64,
    capacity: f64,
    last_t: f64,
    slot_bits: f64,
    slot_active_s: f64,
    round_sent: f64,
    round_overflow: f64,
    stats: FlowStats,
}

struct Runtime<'o> {
    engine: Engine,
    observer: &'o mut dyn RunObserver,
    /// Single-probe mode: no topology or path records, stop once idle.
    probe_only: bool,
    queue: EventQueue,
    current: Option<(usize, ActiveSlot)>,
    prepared: BTreeMap<usize, ActiveSlot>,
    probes: Vec<Probe>,
    flows: Vec<FlowRun>,
    pairs: Vec<(NodeId, NodeId)>,
    log: Vec<MetricRecord>,
    pending_commands: Vec<EngineCommand>,
    wall_start: Instant,
}

impl<'o> Runtime<'o> {
    fn new(engine: Engine, observer: &'o mut dyn RunObserver, probe_only: bool) -> Self {
        Self {
            engine,
            observer,
            probe_only,
            queue: EventQueue::default(),
            current: None,
            prepared: BTreeMap::new(),
            probes: Vec::new(),
            flows: Vec::new(),
            pairs: Vec::new(),
            log: Vec::new(),
            pending_commands: Vec::new(),
            wall_start: Instant::now(),
        }
    }

    fn node(&self, station: &str) -> Option<NodeId> {
        let i = self.engine.station_ids.iter().position(|s| s == station)?;
        Some(NodeId(self.engine.satellite_count + i as u32))
    }

    fn name(&self, n: NodeId) -> String {
        if n.0 < self.engine.satellite_count {
            crate::constellation::SatId(n.0).to_string()
        } else {
            self.engine.station_ids[(n.0 - self.engine.satellite_count) as usize].clone()
        }
    }

    fn emit(&mut self, rec: MetricRecord) {
        self.observer.on_record(&rec);
        self.log.push(rec);
    }

    fn slot(&self) -> &ActiveSlot {
        &self
            .current
            .as_ref()
            .expect("slot 0 precedes every other event")
            .1
    }

    fn execute(mut self) -> Result<RunOutput, EngineError> {
        let header = MetricRecord::Header(self.engine.header.clone());
        self.emit(header);
        let dt = self.engine.header.slot_duration_s;
        let slots = self.engine.slot_count();
        let first_needed = if self.probe_only {
            self.first_launch_slot()
        } else {
            0
        };
        for k in first_needed..slots {
            self.queue
                .push(slot_start(k, dt), EventKind::SlotBoundary { slot: k });
        }
        self.schedule_workload();

        while let Some(ev) = self.queue.pop() {
            if self.probe_only && self.idle() {
                break;
            }
            match ev.kind {
                EventKind::SlotBoundary { slot } => self.on_boundary(slot, ev.t_s)?,
                EventKind::ProbeLaunch { probe } => self.on_launch(probe, ev.t_s),
                EventKind::PacketArrive { probe } => self.on_hop(probe, ev.t_s),
                EventKind::FlowTick { flow } => self.on_flow_tick(flow, ev.t_s),
            }
        }
        self.reject_leftover_commands();
        let flows = self.flows.into_iter().map(|f| f.stats).collect();
        Ok(RunOutput {
            log: MetricsLog { records: self.log },
            flows,
        })
    }

    fn first_launch_slot(&self) -> usize {
        let dt = self.engine.header.slot_duration_s;
        self.engine
            .workload
            .iter()
            .map(|d| match d {
                Directive::Ping { start_s, .. } | Directive::Flow { start_s, .. } => {
                    slot_of(*start_s, dt)
                }
            })
            .min()
            .unwrap_or(0)
            .min(self.engine.slot_count() - 1)
    }

    fn idle(&self) -> bool {
        self.probes.iter().all(|p| p.logged)
            && self.flows.iter().all(|f| f.done)
            && !self.probes.is_empty()
    }

    fn schedule_workload(&mut self) {
        let workload = self.engine.workload.clone();
        for d in &workload {
            match d {
                Directive::Ping {
                    src,
                    dst,
                    start_s,
                    interval_s,
                    count,
                } => {
                    let (s, t) = (self.node(src).unwrap(), self.node(dst).unwrap());
                    self.note_pair(s, t);
                    for i in 0..*count {
                        let at = start_s + i as f64 * interval_s;
                        if at >= self.engine.source.duration_s() {
                            break;
                        }
                        let id = self.new_probe(s, t, at, None);
                        self.queue.push(at, EventKind::ProbeLaunch { probe: id });
                    }
                }
                Directive::Flow {
                    src,
                    dst,
                    start_s,
                    end_s,
                } => {
                    let (s, t) = (self.node(src).unwrap(), self.node(dst).unwrap());
                    self.note_pair(s, t);
                    let id = self.flows.len();
                    self.flows.push(FlowRun {
                        src: s,
                        dst: t,
                        end_t: *end_s,
                        aimd: Aimd::new(self.engine.config.flow_model),
                        started: false,
                        done: false,
                        rate: 0.0,
                        capacity: 0.0,
                        last_t: *start_s,
                        slot_bits: 0.0,
                        slot_active_s: 0.0,
                        round_sent: 0.0,
                        round_overflow: 0.0,
                        stats: FlowStats {
                            src: src.clone(),
                            dst: dst.clone(),
                            samples: Vec::new(),
                            cwnd_trace: Vec::new(),
                            bottleneck_trace: Vec::new(),
                            offered_bits: 0.0,
                            delivered_bits: 0.0,
                            capacity_bits: 0.0,
                        },
                    });
                    self.queue.push(*start_s, EventKind::FlowTick { flow: id });
                }
            }
        }
    }

    fn note_pair(&mut self, s: NodeId, t: NodeId) {
        if s != t && !self.pairs.contains(&(s, t)) {
            self.pairs.push((s, t));
        }
    }

    fn new_probe(
        &mut self,
        src: NodeId,
        dst: NodeId,
        t: f64,
        reply: Option<Reply<PingOutcome>>,
    ) -> usize {
        self.probes.push(Probe {
            src,
            dst,
            launch_t: t,
            leg: Leg::Out,
            at: src,
            visited: BTreeSet::from([src]),
            path_out: vec![src],
            propagation_s: 0.0,
            reply,
            logged: false,
        });
        self.probes.len() - 1
    }

    // ---- slots ----

    fn take_slot(&mut self, k: usize) -> Result<ActiveSlot, EngineError> {
        if let Some(s) = self.engine.injected.remove(&k) {
            return Ok(s);
        }
        if !self.prepared.contains_key(&k) {
            let end =
                (k + self.engine.config.precompute_batch.max(1)).min(self.engine.slot_count());
            for (i, s) in self.engine.prepare(k..end)? {
                self.prepared.insert(i, s);
            }
        }
        Ok(self.prepared.remove(&k).expect("prepared above"))
    }

    fn on_boundary(&mut self, k: usize, t: f64) -> Result<(), EngineError> {
        self.pace(t);
        let slot = self.take_slot(k)?;
        // flows settle the closing slot before the graph changes
        for i in 0..self.flows.len() {
            if self.flows[i].started && !self.flows[i].done {
                self.accrue(i, t);
                self.close_flow_slot(i);
            }
        }
        self.current = Some((k, slot));
        self.observer.on_slot(k, self.engine.slot_count());
        if !self.probe_only {
            self.emit_slot_records(k, t);
        }
        for i in 0..self.flows.len() {
            if self.flows[i].started && !self.flows[i].done {
                let (c, _) = self.path_view(self.flows[i].src, self.flows[i].dst);
                let f = &mut self.flows[i];
                f.capacity = c;
                f.rate = f.rate.min(c);
                f.stats.bottleneck_trace.push(BottleneckPoint {
                    t_s: t,
                    capacity_bit_s: c,
                });
            }
        }
        self.drain_commands(k, t);
        Ok(())
    }

    fn emit_slot_records(&mut self, k: usize, t: f64) {
        let snap = &self.slot().snapshot;
        let isl = snap
            .links
            .iter()
            .filter(|l| l.kind == LinkKind::Isl)
            .count();
        let rec = TopologyRecord {
            slot_index: k,
            t_s: t,
            node_count: snap.node_count(),
            isl_count: isl,
            gsl_count: snap.links.len() - isl,
            failed_links: snap.failed_count(),
        };
        self.emit(MetricRecord::Topology(rec));
        let pairs = self.pairs.clone();
        for (s, d) in pairs {
            let slot = self.slot();
            let Some(rec) = slot
                .table
                .path(s, d)
                .and_then(|hops| PathRecord::from_hops(&slot.snapshot, hops))
            else {
                continue;
            };
            let out = PathRecordOut {
                slot_index: k,
                src: self.name(s),
                dst: self.name(d),
                hops: rec.hops.iter().map(|&n| self.name(n)).collect(),
                total_distance_km: rec.total_distance_km,
                theoretical_rtt_s: rec.theoretical_rtt_s,
            };
            self.emit(MetricRecord::PathRecord(out));
        }
    }

    fn pace(&mut self, t: f64) {
        let pace = self.engine.config.pace_wall_per_sim_s;
        if pace <= 0.0 {
            return;
        }
        let deadline = self.wall_start + Duration::from_secs_f64(t * pace);
        loop {
            let now = Instant::now();
            if now >= deadline {
                return;
            }
            match &self.engine.commands {
                Some(rx) => match rx.recv_timeout(deadline - now) {
                    Ok(cmd) => self.pending_commands.push(cmd),
                    Err(RecvTimeoutError::Timeout) => return,
                    Err(RecvTimeoutError::Disconnected) => {
                        self.engine.commands = None;
                    }
                },
                None => {
                    std::thread::sleep(deadline - now);
                    return;
                }
            }
        }
    }

    fn drain_commands(&mut self, k: usize, t: f64) {
        let mut cmds = std::mem::take(&mut self.pending_commands);
        if let Some(rx) = &self.engine.commands {
            loop {
                match rx.try_recv() {
                    Ok(c) => cmds.push(c),
                    Err(TryRecvError::Empty) => break,
                    Err(TryRecvError::Disconnected) => {
                        self.engine.commands = None;
                        break;
                    }
                }
            }
        }
        for cmd in cmds {
            match cmd {
                EngineCommand::Ping { src, dst, reply } => {
                    let (Some(s), Some(d)) = (self.node(&src), self.node(&dst)) else {
                        let missing = if self.node(&src).is_none() { src } else { dst };
                        reply(Err(EngineError::UnknownStation(missing)));
                        continue;
                    };
                    let id = self.new_probe(s, d, t, Some(reply));
                    self.queue.push(t, EventKind::ProbeLaunch { probe: id });
                }
                EngineCommand::Inject { artifacts, reply } => {
                    reply(self.engine.inject_after(artifacts, Some(k)));
                }
            }
        }
    }

    fn reject_leftover_commands(&mut self) {
        let mut cmds = std::mem::take(&mut self.pending_commands);
        if let Some(rx) = self.engine.commands.take() {
            cmds.extend(rx.try_iter());
        }
        for cmd in cmds {
            match cmd {
                EngineCommand::Ping { reply, .. } => reply(Err(EngineError::NotActive)),
                EngineCommand::Inject { reply, .. } => reply(Err(EngineError::NotActive)),
            }
        }
    }

    // ---- probes ----

    fn on_launch(&mut self, id: usize, t: f64) {
        let e = self.engine.config.processing.endpoint_overhead_s;
        let p = &self.probes[id];
        if p.src == p.dst {
            let sample = RttSample {
                launch_t_s: t,
                src: self.name(p.src),
                dst: self.name(p.dst),
                rtt_s: 2.0 * e,
                hop_count: 0,
                path: vec![self.name(p.src)],
                theoretical_rtt_s: 0.0,
            };
            self.finish_probe(id, PingOutcome::Reply(sample));
            return;
        }
        self.queue
            .push(t + e, EventKind::PacketArrive { probe: id });
    }

    /// The probe is ready to leave its current node at `t`.
    fn on_hop(&mut self, id: usize, t: f64) {
        let cfg = self.engine.config;
        let e = cfg.processing.endpoint_overhead_s;
        let (at, target, launch) = {
            let p = &self.probes[id];
            let target = if p.leg == Leg::Out { p.dst } else { p.src };
            (p.at, target, p.launch_t)
        };
        if t - launch > cfg.ping_timeout_s {
            return self.time_out(id, TimeoutReason::TimeLimit);
        }
        let slot = self.slot();
        let link = slot
            .table
            .next_hop(at, target)
            .and_then(|nx| slot.snapshot.link_between(at, nx).map(|l| (nx, l)))
            .filter(|(_, l)| !l.failed)
            .map(|(nx, l)| (nx, l.delay_s));
        let Some((next, delay)) = link else {
            return self.time_out(id, TimeoutReason::NoRoute);
        };
        let p = &mut self.probes[id];
        if !p.visited.insert(next) {
            return self.time_out(id, TimeoutReason::Loop);
        }
        p.propagation_s += delay;
        p.at = next;
        if p.leg == Leg::Out {
            p.path_out.push(next);
        }
        let arrival = t + delay;
        if next != target {
            self.queue.push(
                arrival + cfg.processing.per_hop_processing_s,
                EventKind::PacketArrive { probe: id },
            );
        } else if p.leg == Leg::Out {
            p.leg = Leg::Back;
            p.visited = BTreeSet::from([next]);
            self.queue
                .push(arrival + 2.0 * e, EventKind::PacketArrive { probe: id });
        } else {
            let rtt = arrival + e - launch;
            if rtt > cfg.ping_timeout_s {
                return self.time_out(id, TimeoutReason::TimeLimit);
            }
            let p = &self.probes[id];
            let sample = RttSample {
                launch_t_s: launch,
                src: self.name(p.src),
                dst: self.name(p.dst),
                rtt_s: rtt,
                hop_count: p.path_out.len() - 1,
                path: p.path_out.iter().map(|&n| self.name(n)).collect(),
                theoretical_rtt_s: p.propagation_s,
            };
            self.finish_probe(id, PingOutcome::Reply(sample));
        }
    }

    fn time_out(&mut self, id: usize, reason: TimeoutReason) {
        let p = &self.probes[id];
        let t = PingTimeout {
            launch_t_s: p.launch_t,
            src: self.name(p.src),
            dst: self.name(p.dst),
            timeout_at_s: p.launch_t + self.engine.config.ping_timeout_s,
            reason,
        };
        self.finish_probe(id, PingOutcome::Timeout(t));
    }

    fn finish_probe(&mut self, id: usize, outcome: PingOutcome) {
        let p = &mut self.probes[id];
        p.logged = true;
        match p.reply.take() {
            // interactive probes answer their caller and stay out of the log,
            // so replaying the scenario reproduces the same streams
            Some(reply) => reply(Ok(outcome)),
            None => {
                let rec = match outcome {
                    PingOutcome::Reply(s) => MetricRecord::RttSample(s),
                    PingOutcome::Timeout(t) => MetricRecord::PingTimeout(t),
                };
                self.emit(rec);
            }
        }
    }

    // ---- flows ----

    /// Bottleneck capacity and round-trip time of the current path; no path
    /// means zero capacity.
    fn path_view(&self, src: NodeId, dst: NodeId) -> (f64, f64) {
        let proc_ = self.engine.config.processing;
        let slot = self.slot();
        let Some(hops) = slot.table.path(src, dst) else {
            return (0.0, self.engine.config.ping_timeout_s);
        };
        let mut c = f64::INFINITY;
        let mut d = 0.0;
        for w in hops.windows(2) {
            match slot.snapshot.link_between(w[0], w[1]) {
                Some(l) if !l.failed => {
                    c = c.min(l.capacity_bit_s);
                    d += l.delay_s;
                }
                _ => return (0.0, self.engine.config.ping_timeout_s),
            }
        }
        let forwarding = hops.len().saturating_sub(2) as f64;
        let rtt = 2.0 * d
            + 2.0 * forwarding * proc_.per_hop_processing_s
            + 4.0 * proc_.endpoint_overhead_s;
        (c, rtt)
    }

    fn accrue(&mut self, i: usize, t: f64) {
        let f = &mut self.flows[i];
        let dt = t - f.last_t;
        if dt > 0.0 {
            let bits = f.rate * dt;
            f.slot_bits += bits;
            f.slot_active_s += dt;
            f.round_sent += bits;
            f.stats.offered_bits += bits;
            f.stats.delivered_bits += bits;
            f.stats.capacity_bits += f.capacity * dt;
            f.last_t = t;
        }
    }

    fn close_flow_slot(&mut self, i: usize) {
        let Some((k, _)) = self.current.as_ref().map(|(k, s)| (*k, s)) else {
            return;
        };
        let dt = self.engine.header.slot_duration_s;
        let (src, dst) = (
            self.flows[i].stats.src.clone(),
            self.flows[i].stats.dst.clone(),
        );
        let f = &mut self.flows[i];
        if f.slot_active_s <= 0.0 {
            return;
        }
        let sample = FlowRateSample {
            slot_index: k,
            t_s: slot_start(k, dt),
            src,
            dst,
            send_rate_bit_s: f.slot_bits / f.slot_active_s,
            cwnd_segments: f.aimd.cwnd_segments(),
            bottleneck_bit_s: f.capacity,
        };
        f.slot_bits = 0.0;
        f.slot_active_s = 0.0;
        f.stats.samples.push(sample.clone());
        self.emit(MetricRecord::FlowRateSample(sample));
    }

    fn on_flow_tick(&mut self, i: usize, t: f64) {
        if self.flows[i].done {
            return;
        }
        if !self.flows[i].started {
            let (c, _) = self.path_view(self.flows[i].src, self.flows[i].dst);
            let f = &mut self.flows[i];
            f.started = true;
            f.last_t = t;
            f.capacity = c;
            f.stats.bottleneck_trace.push(BottleneckPoint {
                t_s: t,
                capacity_bit_s: c,
            });
        }
        self.accrue(i, t);
        {
            // overflow of the round just finished is lost, up to what it sent
            let f = &mut self.flows[i];
            f.stats.delivered_bits -= f.round_overflow.min(f.round_sent);
            f.round_sent = 0.0;
            f.round_overflow = 0.0;
        }
        if t >= self.flows[i].end_t {
            self.close_flow_slot(i);
            self.flows[i].done = true;
            return;
        }
        let (c, rtt) = self.path_view(self.flows[i].src, self.flows[i].dst);
        let f = &mut self.flows[i];
        f.capacity = c;
        let round = f.aimd.round(PathView {
            capacity_bit_s: c,
            rtt_s: rtt,
        });
        f.rate = round.rate_bit_s;
        f.round_overflow = round.overflow_bits;
        f.stats.cwnd_trace.push(CwndPoint {
            t_s: t,
            cwnd_segments: f.aimd.cwnd_segments(),
        });
        let next = (t + round.duration_s).min(f.end_t);
        self.queue.push(next, EventKind::FlowTick { flow: i });
    }
}
