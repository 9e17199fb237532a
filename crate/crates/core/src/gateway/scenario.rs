//! Scenario files: TOML with a fixed schema version and no unknown fields.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::constellation::{
    import_tle, synthesize_walker, Constellation, ConstellationError, GroundStation, ShellSpec,
};
use crate::engine::{Directive, EngineConfig, EngineError, EngineSetup, SlotPlan, SlotSource};
use crate::pathcomp::AlgorithmRegistry;
use crate::phy::{CapacityOverride, PhyError, RadioParams};
use crate::topology::{FailurePlan, FailureScope, RelayMode, TopologyConfig};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureSection {
    #[serde(default)]
    pub rate: f64,
    /// Defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub scope: FailureScope,
}

fn default_algorithm() -> String {
    crate::pathcomp::CENTRALIZED.to_string()
}

fn default_isl_capacity() -> f64 {
    10e9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    pub slot_duration_s: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub relay_mode: RelayMode,
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
    #[serde(default = "default_isl_capacity")]
    pub isl_capacity_bit_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shell: Option<ShellSpec>,
    /// Relative paths resolve against the scenario file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tle_path: Option<PathBuf>,
    pub ground_stations: Vec<GroundStation>,
    #[serde(default)]
    pub radio: RadioParams,
    #[serde(default)]
    pub gsl_capacity: CapacityOverride,
    #[serde(default)]
    pub failure: FailureSection,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub workload: Vec<Directive>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {}", join_issues(.0))]
    Semantic(Vec<Issue>),
    #[error("unknown bundled scenario `{0}`")]
    UnknownBundled(String),
    #[error("TLE source: {0}")]
    Tle(#[from] crate::constellation::TleError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn join_issues(issues: &[Issue]) -> String {
    issues
        .iter()
        .map(Issue::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// A parsed, validated scenario with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub hash: String,
    /// Directory used to resolve relative paths.
    pub base_dir: PathBuf,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before
        .rfind('\n')
        .map_or(before.len(), |i| before.len() - i - 1)
        + 1;
    (line, column)
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ScenarioError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let issues = scenario.issues();
    if issues.is_empty() {
        Ok(scenario)
    } else {
        Err(ScenarioError::Semantic(issues))
    }
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let scenario = parse_scenario(&text)?;
    Ok(LoadedScenario {
        hash: scenario.canonical_hash(),
        scenario,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

/// Accepts a file path or `bundled:<name>`.
pub fn resolve_scenario(spec: &str) -> Result<LoadedScenario, ScenarioError> {
    match spec.strip_prefix("bundled:") {
        Some(name) => load_bundled(name),
        None => load_scenario(Path::new(spec)),
    }
}

const BUNDLED: &[(&str, &str)] = &[
    (
        "kuiper-relay-stable",
        include_str!("../../scenarios/kuiper-relay-stable.toml"),
    ),
    (
        "kuiper-relay-alternating",
        include_str!("../../scenarios/kuiper-relay-alternating.toml"),
    ),
    (
        "starlink-isl-failures",
        include_str!("../../scenarios/starlink-isl-failures.toml"),
    ),
    (
        "starlink-ping",
        include_str!("../../scenarios/starlink-ping.toml"),
    ),
];

pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

pub fn bundled_text(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn load_bundled(name: &str) -> Result<LoadedScenario, ScenarioError> {
    let text = bundled_text(name).ok_or_else(|| ScenarioError::UnknownBundled(name.into()))?;
    let scenario = parse_scenario(text)?;
    Ok(LoadedScenario {
        hash: scenario.canonical_hash(),
        scenario,
        base_dir: PathBuf::from("."),
    })
}

fn field_issue(prefix: &str, e: impl fmt::Display, field: &str) -> Issue {
    Issue {
        field: format!("{prefix}.{field}"),
        message: e.to_string(),
    }
}

impl Scenario {
    /// SHA-256 over the normalised JSON form, so formatting and comments in
    /// the source file do not change it.
    pub fn canonical_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("scenario serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Every semantic problem, each tagged with the field path it concerns.
    pub fn issues(&self) -> Vec<Issue> {
        let mut out = Vec::new();
        let mut bad = |field: &str, message: String| {
            out.push(Issue {
                field: field.to_string(),
                message,
            })
        };
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            bad(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCENARIO_SCHEMA_VERSION})",
                    self.schema_version
                ),
            );
        }
        if self.name.trim().is_empty() {
            bad("name", "must not be empty".into());
        }
        for (f, v) in [
            ("slot_duration_s", self.slot_duration_s),
            ("duration_s", self.duration_s),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bad(f, format!("must be positive, got {v}"));
            }
        }
        if !(self.isl_capacity_bit_s >= 0.0 && self.isl_capacity_bit_s.is_finite()) {
            bad("isl_capacity_bit_s", "must be nonnegative".into());
        }
        match (&self.shell, &self.tle_path) {
            (Some(_), Some(_)) => bad(
                "shell",
                "give either `shell` or `tle_path`, not both".into(),
            ),
            (None, None) => bad("shell", "one of `shell` or `tle_path` is required".into()),
            (Some(shell), None) => {
                if let Err(ConstellationError::InvalidShell { field, reason }) = shell.validate() {
                    bad(&format!("shell.{field}"), reason);
                }
            }
            (None, Some(_)) => {}
        }
        if self.ground_stations.is_empty() {
            bad("ground_stations", "at least one station is required".into());
        }
        let mut ids = BTreeSet::new();
        for (i, gs) in self.ground_stations.iter().enumerate() {
            if gs.id.trim().is_empty() {
                bad(
                    &format!("ground_stations[{i}].id"),
                    "must not be empty".into(),
                );
            } else if !ids.insert(gs.id.as_str()) {
                bad(
                    &format!("ground_stations[{i}].id"),
                    format!("duplicate station id `{}`", gs.id),
                );
            }
            if gs.id.starts_with("sat-") {
                bad(
                    &format!("ground_stations[{i}].id"),
                    "the `sat-` prefix is reserved".into(),
                );
            }
            if let Err(ConstellationError::InvalidStation { field, reason, .. }) = gs.validate() {
                bad(&format!("ground_stations[{i}].{field}"), reason);
            }
        }
        match self.radio.validate() {
            Err(PhyError::InvalidParameter { field, reason }) => {
                bad(&format!("radio.{field}"), reason)
            }
            Err(e) => bad("radio", e.to_string()),
            Ok(()) => {}
        }
        match self.gsl_capacity {
            CapacityOverride::Phy => {}
            CapacityOverride::Constant { bit_s } => {
                if !(bit_s >= 0.0 && bit_s.is_finite()) {
                    bad("gsl_capacity.bit_s", "must be nonnegative".into());
                }
            }
            CapacityOverride::Alternating {
                low_bit_s,
                high_bit_s,
                period_slots,
            } => {
                for (f, v) in [("low_bit_s", low_bit_s), ("high_bit_s", high_bit_s)] {
                    if !(v >= 0.0 && v.is_finite()) {
                        bad(&format!("gsl_capacity.{f}"), "must be nonnegative".into());
                    }
                }
                if period_slots == 0 {
                    bad("gsl_capacity.period_slots", "must be at least 1".into());
                }
            }
        }
        if !(0.0..=1.0).contains(&self.failure.rate) {
            bad(
                "failure.rate",
                format!("must lie in [0, 1], got {}", self.failure.rate),
            );
        }
        if AlgorithmRegistry::with_defaults()
            .get(&self.algorithm)
            .is_err()
        {
            bad(
                "algorithm",
                format!(
                    "unknown path algorithm `{}` (known: {})",
                    self.algorithm,
                    AlgorithmRegistry::with_defaults().names().join(", ")
                ),
            );
        }
        let e = &self.engine;
        for (f, v) in [
            (
                "engine.processing.per_hop_processing_s",
                e.processing.per_hop_processing_s,
            ),
            (
                "engine.processing.endpoint_overhead_s",
                e.processing.endpoint_overhead_s,
            ),
            ("engine.pace_wall_per_sim_s", e.pace_wall_per_sim_s),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                bad(f, "must be nonnegative".into());
            }
        }
        if !(e.ping_timeout_s > 0.0) {
            bad("engine.ping_timeout_s", "must be positive".into());
        }
        if let Err(m) = e.flow_model.validate() {
            bad("engine.flow_model", m);
        }
        for (i, d) in self.workload.iter().enumerate() {
            let (src, dst, start) = match d {
                Directive::Ping {
                    src, dst, start_s, ..
                }
                | Directive::Flow {
                    src, dst, start_s, ..
                } => (src, dst, *start_s),
            };
            for (f, s) in [("src", src), ("dst", dst)] {
                if !ids.contains(s.as_str()) {
                    bad(
                        &format!("workload[{i}].{f}"),
                        format!("unknown ground station `{s}`"),
                    );
                }
            }
            if !(start >= 0.0 && start < self.duration_s) {
                bad(
                    &format!("workload[{i}].start_s"),
                    format!("must lie in [0, {})", self.duration_s),
                );
            }
            match *d {
                Directive::Ping {
                    interval_s, count, ..
                } => {
                    if !(interval_s > 0.0) {
                        bad(
                            &format!("workload[{i}].interval_s"),
                            "must be positive".into(),
                        );
                    }
                    if count == 0 {
                        bad(&format!("workload[{i}].count"), "must be at least 1".into());
                    }
                }
                Directive::Flow { start_s, end_s, .. } => {
                    if !(end_s > start_s && end_s <= self.duration_s) {
                        bad(
                            &format!("workload[{i}].end_s"),
                            format!("must lie in ({start_s}, {}]", self.duration_s),
                        );
                    }
                }
            }
        }
        out
    }

    pub fn constellation(&self, base_dir: &Path) -> Result<Constellation, ScenarioError> {
        if let Some(shell) = &self.shell {
            return synthesize_walker(shell)
                .map_err(|e| ScenarioError::Semantic(vec![field_issue("shell", &e, "spec")]));
        }
        let path = base_dir.join(
            self.tle_path
                .as_ref()
                .expect("validated: shell or TLE present"),
        );
        let text =
            std::fs::read_to_string(&path).map_err(|source| ScenarioError::Io { path, source })?;
        Ok(import_tle(&text)?)
    }

    pub fn topology_config(&self, seed: u64) -> TopologyConfig {
        TopologyConfig {
            isl_capacity_bit_s: self.isl_capacity_bit_s,
            elevation_mask_deg: self.radio.elevation_mask_deg,
            failure_plan: FailurePlan {
                failure_rate: self.failure.rate,
                seed: self.failure.seed.unwrap_or(seed),
                scope: self.failure.scope,
            },
            relay_mode: self.relay_mode,
        }
    }

    /// Propagates the constellation and computes every slot's capacities.
    pub fn plan(&self, base_dir: &Path, seed: u64) -> Result<SlotPlan, ScenarioError> {
        Ok(SlotPlan::new(
            self.constellation(base_dir)?,
            self.ground_stations.clone(),
            &self.radio,
            self.slot_duration_s,
            self.duration_s,
            self.topology_config(seed),
            &self.gsl_capacity,
        )?)
    }
}

impl LoadedScenario {
    pub fn seed(&self, seed_override: Option<u64>) -> u64 {
        seed_override.unwrap_or(self.scenario.seed)
    }

    /// Everything the engine needs, with `seed_override` replacing the
    /// scenario seed when given.
    pub fn engine_setup(&self, seed_override: Option<u64>) -> Result<EngineSetup, ScenarioError> {
        let seed = self.seed(seed_override);
        let s = &self.scenario;
        let algorithm = AlgorithmRegistry::with_defaults()
            .get(&s.algorithm)
            .map_err(|e| {
                ScenarioError::Semantic(vec![Issue {
                    field: "algorithm".into(),
                    message: e.to_string(),
                }])
            })?;
        Ok(EngineSetup {
            scenario_name: s.name.clone(),
            scenario_hash: self.hash.clone(),
            seed,
            source: SlotSource::Plan(Box::new(s.plan(&self.base_dir, seed)?)),
            algorithm,
            config: s.engine,
            workload: s.workload.clone(),
        })
    }
}
