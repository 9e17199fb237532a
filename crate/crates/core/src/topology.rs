//! Per-slot network graphs: +Grid inter-satellite links, elevation-gated
//! ground links, propagation delays, capacities and persistent failures.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constellation::{
    elevation_from_positions, ground_ecef, propagate, Constellation, GroundStation, SatId,
    SPEED_OF_LIGHT_KM_S,
};
use crate::phy::{CapacitySchedule, GsIndex};
use crate::time::{slot_count, slot_of, slot_start};

/// GSL ids live above this base so they never collide with ISL indices.
const GSL_ID_BASE: u64 = 1 << 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("t = {t_s} s lies beyond the schedule horizon of {horizon_s} s")]
    BeyondHorizon { t_s: f64, horizon_s: f64 },
    #[error("malformed snapshot: {0}")]
    Malformed(String),
}

/// Graph node. Satellites occupy `0..satellite_count`, ground stations follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkId(pub u64);

impl LinkId {
    pub fn gsl(sat: SatId, gs: GsIndex) -> Self {
        LinkId(GSL_ID_BASE + ((sat.0 as u64) << 16) + gs.0 as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LinkKind {
    Isl,
    Gsl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub link_id: LinkId,
    pub endpoint_a: NodeId,
    pub endpoint_b: NodeId,
    pub kind: LinkKind,
    pub distance_km: f64,
    pub delay_s: f64,
    pub capacity_bit_s: f64,
    pub failed: bool,
}

impl Link {
    pub fn new(
        link_id: LinkId,
        a: NodeId,
        b: NodeId,
        kind: LinkKind,
        distance_km: f64,
        capacity_bit_s: f64,
    ) -> Self {
        Self {
            link_id,
            endpoint_a: a,
            endpoint_b: b,
            kind,
            distance_km,
            delay_s: distance_km / SPEED_OF_LIGHT_KM_S,
            capacity_bit_s,
            failed: false,
        }
    }

    pub fn other(&self, n: NodeId) -> NodeId {
        if self.endpoint_a == n {
            self.endpoint_b
        } else {
            self.endpoint_a
        }
    }
}

/// Whether ground stations may forward traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelayMode {
    /// Bent-pipe: no ISLs; stations relay between satellites.
    GroundRelay,
    /// ISLs carry traffic; stations are endpoints only.
    #[default]
    Isl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureScope {
    #[default]
    IslOnly,
    AllLinks,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailurePlan {
    #[serde(rename = "rate")]
    pub failure_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scope: FailureScope,
}

impl FailurePlan {
    pub fn none() -> Self {
        Self::default()
    }

    /// Failure draw for one link: a uniform variate from a ChaCha stream keyed
    /// by `(seed, link_id)`, so the decision is stable across slots.
    pub fn is_failed(&self, link_id: LinkId, kind: LinkKind) -> bool {
        if kind == LinkKind::Gsl && self.scope == FailureScope::IslOnly {
            return false;
        }
        if self.failure_rate <= 0.0 {
            return false;
        }
        if self.failure_rate >= 1.0 {
            return true;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(link_id.0);
        rng.random::<f64>() < self.failure_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub isl_capacity_bit_s: f64,
    pub elevation_mask_deg: f64,
    pub failure_plan: FailurePlan,
    pub relay_mode: RelayMode,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            isl_capacity_bit_s: 10e9,
            elevation_mask_deg: 25.0,
            failure_plan: FailurePlan::none(),
            relay_mode: RelayMode::Isl,
        }
    }
}

/// Wire form of a snapshot; adjacency is rebuilt and invariants checked on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SnapshotRepr {
    slot_index: usize,
    t_s: f64,
    satellite_count: u32,
    station_ids: Vec<String>,
    positions_km: Vec<Vector3<f64>>,
    ground_transit: bool,
    links: Vec<Link>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SnapshotRepr", into = "SnapshotRepr")]
pub struct TopologySnapshot {
    pub slot_index: usize,
    pub t_s: f64,
    pub satellite_count: u32,
    pub station_ids: Vec<String>,
    /// Earth-fixed node positions, indexed by `NodeId`.
    pub positions_km: Vec<Vector3<f64>>,
    /// Ground stations may forward traffic (ground-relay mode).
    pub ground_transit: bool,
    pub links: Vec<Link>,
    adjacency: Vec<Vec<(NodeId, usize)>>,
}

impl TryFrom<SnapshotRepr> for TopologySnapshot {
    type Error = TopologyError;

    fn try_from(r: SnapshotRepr) -> Result<Self, Self::Error> {
        TopologySnapshot::new(
            r.slot_index,
            r.t_s,
            r.satellite_count,
            r.station_ids,
            r.positions_km,
            r.ground_transit,
            r.links,
        )
    }
}

impl From<TopologySnapshot> for SnapshotRepr {
    fn from(s: TopologySnapshot) -> Self {
        SnapshotRepr {
            slot_index: s.slot_index,
            t_s: s.t_s,
            satellite_count: s.satellite_count,
            station_ids: s.station_ids,
            positions_km: s.positions_km,
            ground_transit: s.ground_transit,
            links: s.links,
        }
    }
}

impl TopologySnapshot {
    /// Assembles a snapshot and checks its structural invariants.
    pub fn new(
        slot_index: usize,
        t_s: f64,
        satellite_count: u32,
        station_ids: Vec<String>,
        positions_km: Vec<Vector3<f64>>,
        ground_transit: bool,
        links: Vec<Link>,
    ) -> Result<Self, TopologyError> {
        let n = satellite_count as usize + station_ids.len();
        if positions_km.len() != n {
            return Err(TopologyError::Malformed(format!(
                "{} positions for {n} nodes",
                positions_km.len()
            )));
        }
        let mut adjacency = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        let mut ids = BTreeSet::new();
        for (i, l) in links.iter().enumerate() {
            let (a, b) = (l.endpoint_a, l.endpoint_b);
            if a == b {
                return Err(TopologyError::Malformed(format!(
                    "link {} is a self-loop",
                    l.link_id.0
                )));
            }
            if a.0 as usize >= n || b.0 as usize >= n {
                return Err(TopologyError::Malformed(format!(
                    "link {} has unknown endpoint",
                    l.link_id.0
                )));
            }
            let sats = (a.0 < satellite_count) as u8 + (b.0 < satellite_count) as u8;
            let ok = match l.kind {
                LinkKind::Isl => sats == 2,
                LinkKind::Gsl => sats == 1,
            };
            if !ok {
                return Err(TopologyError::Malformed(format!(
                    "link {} endpoints do not match kind {:?}",
                    l.link_id.0, l.kind
                )));
            }
            if !seen.insert((a.min(b), a.max(b))) || !ids.insert(l.link_id) {
                return Err(TopologyError::Malformed(format!(
                    "duplicate link {}",
                    l.link_id.0
                )));
            }
            if !(l.capacity_bit_s >= 0.0) || !(l.distance_km > 0.0) {
                return Err(TopologyError::Malformed(format!(
                    "link {} has invalid distance or capacity",
                    l.link_id.0
                )));
            }
            let expect = l.distance_km / SPEED_OF_LIGHT_KM_S;
            if (l.delay_s - expect).abs() > 1e-12 * expect {
                return Err(TopologyError::Malformed(format!(
                    "link {} delay inconsistent with distance",
                    l.link_id.0
                )));
            }
            adjacency[a.0 as usize].push((b, i));
            adjacency[b.0 as usize].push((a, i));
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|&(nb, i)| (nb, links[i].link_id));
        }
        Ok(Self {
            slot_index,
            t_s,
            satellite_count,
            station_ids,
            positions_km,
            ground_transit,
            links,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.positions_km.len()
    }

    pub fn is_satellite(&self, n: NodeId) -> bool {
        n.0 < self.satellite_count
    }

    pub fn station_node(&self, gs: GsIndex) -> NodeId {
        NodeId(self.satellite_count + gs.0)
    }

    pub fn station_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.station_ids.len() as u32).map(|g| NodeId(self.satellite_count + g))
    }

    /// Whether traffic may pass through `n` on its way elsewhere.
    pub fn can_transit(&self, n: NodeId) -> bool {
        self.is_satellite(n) || self.ground_transit
    }

    pub fn node_name(&self, n: NodeId) -> String {
        if self.is_satellite(n) {
            SatId(n.0).to_string()
        } else {
            self.station_ids[(n.0 - self.satellite_count) as usize].clone()
        }
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        if let Some(i) = self.station_ids.iter().position(|s| s == name) {
            return Some(NodeId(self.satellite_count + i as u32));
        }
        let sat: u32 = name.strip_prefix("sat-")?.parse().ok()?;
        (sat < self.satellite_count).then_some(NodeId(sat))
    }

    pub fn position(&self, n: NodeId) -> &Vector3<f64> {
        &self.positions_km[n.0 as usize]
    }

    /// Neighbours of `n` with the index of the connecting link, ordered by
    /// neighbour id then link id. Includes failed links.
    pub fn neighbors(&self, n: NodeId) -> &[(NodeId, usize)] {
        &self.adjacency[n.0 as usize]
    }

    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<&Link> {
        self.neighbors(a)
            .iter()
            .find(|&&(nb, _)| nb == b)
            .map(|&(_, i)| &self.links[i])
    }

    /// Returns a copy with every link of `kind` marked failed.
    pub fn with_failed(&self, pred: impl Fn(&Link) -> bool) -> Self {
        let mut s = self.clone();
        for l in &mut s.links {
            if pred(l) {
                l.failed = true;
            }
        }
        s
    }

    pub fn failed_count(&self) -> usize {
        self.links.iter().filter(|l| l.failed).count()
    }
}

/// +Grid wiring: each satellite links to its intra-plane successor and to the
/// satellite with the same slot in the next plane, with wrap-around. Pairs are
/// listed once, in generation order.
pub fn grid_isls(constellation: &Constellation) -> Vec<(SatId, SatId)> {
    let planes = constellation.planes();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut push = |a: SatId, b: SatId| {
        if a != b && seen.insert((a.min(b), a.max(b))) {
            out.push((a, b));
        }
    };
    let plane_count = planes.len();
    for (p, plane) in planes.iter().enumerate() {
        let n = plane.len();
        for (s, &sat) in plane.iter().enumerate() {
            if n >= 2 {
                push(sat, plane[(s + 1) % n]);
            }
            if plane_count >= 2 {
                if let Some(&other) = planes[(p + 1) % plane_count].get(s) {
                    push(sat, other);
                }
            }
        }
    }
    out
}

/// Reusable builder holding everything that does not change between slots.
#[derive(Debug, Clone)]
pub struct TopologyBuilder<'a> {
    constellation: &'a Constellation,
    stations: &'a [GroundStation],
    schedule: &'a CapacitySchedule,
    config: TopologyConfig,
    isls: Vec<(SatId, SatId)>,
    station_positions: Vec<Vector3<f64>>,
}

impl<'a> TopologyBuilder<'a> {
    pub fn new(
        constellation: &'a Constellation,
        stations: &'a [GroundStation],
        schedule: &'a CapacitySchedule,
        config: TopologyConfig,
    ) -> Self {
        let isls = match config.relay_mode {
            RelayMode::Isl => grid_isls(constellation),
            RelayMode::GroundRelay => Vec::new(),
        };
        Self {
            constellation,
            stations,
            schedule,
            config,
            isls,
            station_positions: stations.iter().map(ground_ecef).collect(),
        }
    }

    pub fn slot_count(&self) -> usize {
        self.schedule.slot_count()
    }

    /// Snapshot at the start of slot `k`.
    pub fn slot(&self, k: usize) -> Result<TopologySnapshot, TopologyError> {
        self.at(slot_start(k, self.schedule.slot_duration_s))
    }

    pub fn at(&self, t_s: f64) -> Result<TopologySnapshot, TopologyError> {
        let horizon_s = self.schedule.horizon_s();
        if !(t_s >= 0.0 && t_s < horizon_s) {
            return Err(TopologyError::BeyondHorizon { t_s, horizon_s });
        }
        let slot_index = slot_of(t_s, self.schedule.slot_duration_s);
        let n_sat = self.constellation.len() as u32;
        let mut positions: Vec<Vector3<f64>> = propagate(self.constellation, t_s)
            .into_iter()
            .map(|s| s.position_ecef_km)
            .collect();
        positions.extend(self.station_positions.iter().copied());
        let fp = &self.config.failure_plan;

        let mut links = Vec::with_capacity(self.isls.len() + 16);
        for (i, &(a, b)) in self.isls.iter().enumerate() {
            let id = LinkId(i as u64);
            let d = (positions[a.0 as usize] - positions[b.0 as usize]).norm();
            let mut l = Link::new(
                id,
                NodeId(a.0),
                NodeId(b.0),
                LinkKind::Isl,
                d,
                self.config.isl_capacity_bit_s,
            );
            l.failed = fp.is_failed(id, LinkKind::Isl);
            links.push(l);
        }
        for (&(sat, gs), cap) in &self.schedule.slots[slot_index] {
            let sat_pos = &positions[sat.0 as usize];
            let gs_pos = &self.station_positions[gs.0 as usize];
            if elevation_from_positions(sat_pos, gs_pos) < self.config.elevation_mask_deg {
                continue;
            }
            let id = LinkId::gsl(sat, gs);
            let node = NodeId(n_sat + gs.0);
            let mut l = Link::new(
                id,
                NodeId(sat.0),
                node,
                LinkKind::Gsl,
                (sat_pos - gs_pos).norm(),
                cap.capacity_bit_s,
            );
            l.failed = fp.is_failed(id, LinkKind::Gsl);
            links.push(l);
        }
        TopologySnapshot::new(
            slot_index,
            t_s,
            n_sat,
            self.stations.iter().map(|s| s.id.clone()).collect(),
            positions,
            self.config.relay_mode == RelayMode::GroundRelay,
            links,
        )
    }
}

/// Network graph at `t_s`.
pub fn build_snapshot(
    t_s: f64,
    constellation: &Constellation,
    stations: &[GroundStation],
    schedule: &CapacitySchedule,
    config: TopologyConfig,
) -> Result<TopologySnapshot, TopologyError> {
    TopologyBuilder::new(constellation, stations, schedule, config).at(t_s)
}

/// One snapshot per slot boundary of the schedule, built in parallel.
pub fn snapshot_series(
    constellation: &Constellation,
    stations: &[GroundStation],
    schedule: &CapacitySchedule,
    config: TopologyConfig,
) -> Result<Vec<TopologySnapshot>, TopologyError> {
    let builder = TopologyBuilder::new(constellation, stations, schedule, config);
    debug_assert_eq!(
        builder.slot_count(),
        slot_count(schedule.duration_s, schedule.slot_duration_s)
    );
    (0..builder.slot_count())
        .into_par_iter()
        .map(|k| builder.slot(k))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub slot_index: usize,
    pub link_id: u64,
    pub kind: LinkKind,
    pub endpoints: [String; 2],
    pub distance_km: f64,
    pub delay_s: f64,
    pub capacity_bit_s: f64,
    pub failed: bool,
}

/// Line-delimited JSON, one record per link.
pub fn write_snapshot_records(snapshot: &TopologySnapshot, out: &mut String) {
    for l in &snapshot.links {
        let rec = LinkRecord {
            slot_index: snapshot.slot_index,
            link_id: l.link_id.0,
            kind: l.kind,
            endpoints: [
                snapshot.node_name(l.endpoint_a),
                snapshot.node_name(l.endpoint_b),
            ],
            distance_km: l.distance_km,
            delay_s: l.delay_s,
            capacity_bit_s: l.capacity_bit_s,
            failed: l.failed,
        };
        let _ = writeln!(
            out,
            "{}",
            serde_json::to_string(&rec).expect("link record serialises")
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{synthesize_walker, ShellSpec};

    fn shell(planes: u32, per: u32) -> Constellation {
        synthesize_walker(&ShellSpec {
            plane_count: planes,
            sats_per_plane: per,
            altitude_km: 550.0,
            inclination_deg: 53.2,
            phasing_offset: 0.0,
        })
        .unwrap()
    }

    #[test]
    fn ring_and_degenerate_grids() {
        assert_eq!(grid_isls(&shell(1, 4)).len(), 4);
        assert_eq!(grid_isls(&shell(1, 2)).len(), 1);
        assert!(grid_isls(&shell(1, 1)).is_empty());
        // two planes: each satellite has one cross-plane partner
        assert_eq!(grid_isls(&shell(2, 3)).len(), 6 + 3);
    }

    #[test]
    fn grid_pairs_unique() {
        let isls = grid_isls(&shell(6, 5));
        let set: BTreeSet<_> = isls.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        assert_eq!(set.len(), isls.len());
        assert_eq!(isls.len(), 60);
    }

    #[test]
    fn failure_extremes() {
        let all = FailurePlan {
            failure_rate: 1.0,
            seed: 3,
            scope: FailureScope::IslOnly,
        };
        assert!(all.is_failed(LinkId(5), LinkKind::Isl));
        assert!(!all.is_failed(LinkId(5), LinkKind::Gsl));
        assert!(!FailurePlan::none().is_failed(LinkId(5), LinkKind::Isl));
        let everything = FailurePlan {
            scope: FailureScope::AllLinks,
            ..all
        };
        assert!(everything.is_failed(LinkId(5), LinkKind::Gsl));
    }

    #[test]
    fn malformed_snapshots_rejected() {
        let pos = vec![
            Vector3::new(7000.0, 0.0, 0.0),
            Vector3::new(0.0, 7000.0, 0.0),
            Vector3::new(6371.0, 0.0, 0.0),
        ];
        let isl = Link::new(LinkId(0), NodeId(0), NodeId(1), LinkKind::Isl, 9899.5, 1e9);
        let ok = TopologySnapshot::new(
            0,
            0.0,
            2,
            vec!["g".into()],
            pos.clone(),
            false,
            vec![isl.clone()],
        );
        assert!(ok.is_ok());
        let dup = TopologySnapshot::new(
            0,
            0.0,
            2,
            vec!["g".into()],
            pos.clone(),
            false,
            vec![isl.clone(), {
                let mut l = isl.clone();
                l.link_id = LinkId(1);
                l
            }],
        );
        assert!(matches!(dup, Err(TopologyError::Malformed(_))));
        let wrong_kind = Link::new(LinkId(2), NodeId(0), NodeId(2), LinkKind::Isl, 629.0, 1e9);
        assert!(TopologySnapshot::new(
            0,
            0.0,
            2,
            vec!["g".into()],
            pos.clone(),
            false,
            vec![wrong_kind]
        )
        .is_err());
        let mut bad_delay = isl;
        bad_delay.delay_s *= 1.01;
        assert!(
            TopologySnapshot::new(0, 0.0, 2, vec!["g".into()], pos, false, vec![bad_delay])
                .is_err()
        );
    }

    #[test]
    fn snapshot_serde_round_trip() {
        let c = shell(4, 4);
        let stations = vec![GroundStation {
            id: "g".into(),
            name: "G".into(),
            latitude_deg: 10.0,
            longitude_deg: 0.0,
            altitude_km: 0.0,
        }];
        let sched =
            crate::phy::capacity_schedule(&c, &stations, &Default::default(), 1.0, 2.0, 0.0)
                .unwrap();
        let s = build_snapshot(0.0, &c, &stations, &sched, TopologyConfig::default()).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: TopologySnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.neighbors(NodeId(0)), s.neighbors(NodeId(0)));
        assert!(matches!(
            build_snapshot(2.0, &c, &stations, &sched, TopologyConfig::default()),
            Err(TopologyError::BeyondHorizon { .. })
        ));
    }
}
