//! Pluggable path computation over topology snapshots.
//!
//! An algorithm maps a snapshot and a destination to one forwarding decision
//! per node ([`NextHops`]). Decisions made independently by each node may
//! disagree with one another; [`PathTable`] keeps only the entries whose
//! forwarding chain actually reaches the destination, while [`route`] walks
//! raw decisions and reports loops.

mod centralized;
mod state_aware;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{NodeId, TopologySnapshot};

pub use centralized::{shortest_delays, ShortestDelay};
pub use state_aware::{state_aware_next_hop, LocalState, StateAware};

/// Next hop chosen by each node toward one destination.
pub type NextHops = BTreeMap<NodeId, NodeId>;

pub trait PathAlgorithm: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Forwarding decision of every node that has one toward `dst`.
    fn decide(&self, snapshot: &TopologySnapshot, dst: NodeId) -> NextHops;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoRouteReason {
    /// Forwarding stopped at a node with no usable next hop.
    Disconnected,
    /// Forwarding revisited a node.
    Loop,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouteError {
    #[error("source and destination are the same node")]
    SameEndpoints,
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("no route ({reason:?}) after {hops_taken} hops")]
    NoRoute {
        reason: NoRouteReason,
        hops_taken: usize,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error("path algorithm `{0}` is already registered")]
    Duplicate(String),
    #[error("unknown path algorithm `{0}`")]
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathTable {
    pub slot_index: usize,
    pub algorithm_name: String,
    pub entries: BTreeMap<(NodeId, NodeId), NodeId>,
}

impl PathTable {
    /// Runs `algorithm` for each destination and keeps the entries whose
    /// forwarding chain reaches the destination over live links without
    /// revisiting a node.
    pub fn compute(
        algorithm: &dyn PathAlgorithm,
        snapshot: &TopologySnapshot,
        destinations: &[NodeId],
    ) -> Self {
        let mut entries = BTreeMap::new();
        for &dst in destinations {
            let hops = algorithm.decide(snapshot, dst);
            for node in reaching_nodes(snapshot, &hops, dst) {
                entries.insert((node, dst), hops[&node]);
            }
        }
        Self {
            slot_index: snapshot.slot_index,
            algorithm_name: algorithm.name().to_string(),
            entries,
        }
    }

    pub fn next_hop(&self, node: NodeId, dst: NodeId) -> Option<NodeId> {
        self.entries.get(&(node, dst)).copied()
    }

    /// Follows the table from `src`; `None` when `src` has no entry.
    pub fn path(&self, src: NodeId, dst: NodeId) -> Option<Vec<NodeId>> {
        let mut path = vec![src];
        let mut at = src;
        while at != dst {
            at = self.next_hop(at, dst)?;
            path.push(at);
            if path.len() > self.entries.len() + 1 {
                return None;
            }
        }
        Some(path)
    }
}

fn live_step(snapshot: &TopologySnapshot, from: NodeId, to: NodeId) -> bool {
    snapshot.link_between(from, to).is_some_and(|l| !l.failed)
}

/// Nodes whose decision chain terminates at `dst`.
fn reaching_nodes(snapshot: &TopologySnapshot, hops: &NextHops, dst: NodeId) -> Vec<NodeId> {
    // 0 unknown, 1 in progress, 2 reaches, 3 fails
    let mut state: BTreeMap<NodeId, u8> = BTreeMap::new();
    state.insert(dst, 2);
    for &start in hops.keys() {
        let mut chain = Vec::new();
        let mut at = start;
        let verdict = loop {
            match state.get(&at).copied().unwrap_or(0) {
                2 => break 2,
                1 | 3 => break 3,
                _ => {}
            }
            state.insert(at, 1);
            chain.push(at);
            match hops.get(&at) {
                Some(&nx)
                    if live_step(snapshot, at, nx) && (nx == dst || snapshot.can_transit(nx)) =>
                {
                    at = nx
                }
                _ => break 3,
            }
        };
        for n in chain {
            state.insert(n, verdict);
        }
    }
    hops.keys()
        .copied()
        .filter(|n| state.get(n) == Some(&2))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub slot_index: usize,
    pub src: NodeId,
    pub dst: NodeId,
    pub hops: Vec<NodeId>,
    pub total_distance_km: f64,
    pub theoretical_rtt_s: f64,
}

impl PathRecord {
    /// Builds the record for an explicit node sequence; `None` if any step is
    /// not a live link.
    pub fn from_hops(snapshot: &TopologySnapshot, hops: Vec<NodeId>) -> Option<Self> {
        let mut distance = 0.0;
        let mut delay = 0.0;
        for w in hops.windows(2) {
            let l = snapshot.link_between(w[0], w[1])?;
            if l.failed {
                return None;
            }
            distance += l.distance_km;
            delay += l.delay_s;
        }
        Some(Self {
            slot_index: snapshot.slot_index,
            src: *hops.first()?,
            dst: *hops.last()?,
            hops,
            total_distance_km: distance,
            theoretical_rtt_s: 2.0 * delay,
        })
    }

    pub fn hop_count(&self) -> usize {
        self.hops.len().saturating_sub(1)
    }

    /// Nodes strictly between source and destination.
    pub fn forwarding_nodes(&self) -> usize {
        self.hops.len().saturating_sub(2)
    }
}

/// Hop-by-hop application of `algorithm` from `src` to `dst`. Fails with
/// [`NoRouteReason::Loop`] as soon as a node is visited twice.
pub fn route(
    snapshot: &TopologySnapshot,
    src: NodeId,
    dst: NodeId,
    algorithm: &dyn PathAlgorithm,
) -> Result<PathRecord, RouteError> {
    if src == dst {
        return Err(RouteError::SameEndpoints);
    }
    for n in [src, dst] {
        if n.0 as usize >= snapshot.node_count() {
            return Err(RouteError::UnknownNode(format!("node {}", n.0)));
        }
    }
    let decisions = algorithm.decide(snapshot, dst);
    let mut visited = BTreeSet::from([src]);
    let mut hops = vec![src];
    let mut at = src;
    while at != dst {
        let no_route = |reason| RouteError::NoRoute {
            reason,
            hops_taken: hops.len() - 1,
        };
        let next = match decisions.get(&at) {
            Some(&n) if live_step(snapshot, at, n) && (n == dst || snapshot.can_transit(n)) => n,
            _ => return Err(no_route(NoRouteReason::Disconnected)),
        };
        if !visited.insert(next) {
            return Err(no_route(NoRouteReason::Loop));
        }
        hops.push(next);
        at = next;
    }
    Ok(PathRecord::from_hops(snapshot, hops).expect("walk only follows live links"))
}

/// Name-addressable path algorithms.
#[derive(Debug, Clone, Default)]
pub struct AlgorithmRegistry {
    algorithms: BTreeMap<String, Arc<dyn PathAlgorithm>>,
}

pub const CENTRALIZED: &str = "centralized";
pub const STATE_AWARE: &str = "state-aware";

impl AlgorithmRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding the centralized baseline and the 1-hop state-aware
    /// algorithm.
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register(CENTRALIZED, Arc::new(ShortestDelay))
            .expect("fresh registry");
        r.register(STATE_AWARE, Arc::new(StateAware::new(1)))
            .expect("fresh registry");
        r
    }

    pub fn register(
        &mut self,
        name: &str,
        implementation: Arc<dyn PathAlgorithm>,
    ) -> Result<(), RegistryError> {
        if self.algorithms.contains_key(name) {
            return Err(RegistryError::Duplicate(name.to_string()));
        }
        self.algorithms.insert(name.to_string(), implementation);
        Ok(())
    }

    /// Looks up a registered algorithm. `state-aware-k<N>` resolves to the
    /// state-aware algorithm with an `N`-hop horizon even when unregistered.
    pub fn get(&self, name: &str) -> Result<Arc<dyn PathAlgorithm>, RegistryError> {
        if let Some(a) = self.algorithms.get(name) {
            return Ok(a.clone());
        }
        name.strip_prefix(STATE_AWARE)
            .and_then(|s| s.strip_prefix("-k"))
            .and_then(|k| k.parse::<u32>().ok())
            .filter(|&k| k >= 1)
            .map(|k| Arc::new(StateAware::new(k)) as Arc<dyn PathAlgorithm>)
            .ok_or_else(|| RegistryError::Unknown(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.algorithms.keys().map(String::as_str).collect()
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use nalgebra::Vector3;

    use crate::constellation::SPEED_OF_LIGHT_KM_S as SPEED_C;
    use crate::topology::{Link, LinkId, LinkKind, NodeId, TopologySnapshot};

    /// Satellite-only snapshot from `(a, b, delay_s)` edges; positions on the
    /// equator spaced by node id.
    pub fn graph(n: u32, edges: &[(u32, u32, f64)]) -> TopologySnapshot {
        let positions = (0..n)
            .map(|i| {
                let lon = i as f64 * 0.01;
                Vector3::new(7000.0 * lon.cos(), 7000.0 * lon.sin(), 0.0)
            })
            .collect();
        let links = edges
            .iter()
            .enumerate()
            .map(|(i, &(a, b, d))| {
                Link::new(
                    LinkId(i as u64),
                    NodeId(a),
                    NodeId(b),
                    LinkKind::Isl,
                    d * SPEED_C,
                    1e9,
                )
            })
            .collect();
        TopologySnapshot::new(0, 0.0, n, vec![], positions, false, links).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::graph;
    use super::*;

    #[test]
    fn two_nodes() {
        let g = graph(2, &[(0, 1, 0.01)]);
        let r = route(&g, NodeId(0), NodeId(1), &ShortestDelay).unwrap();
        assert_eq!(r.hops, vec![NodeId(0), NodeId(1)]);
        assert!((r.theoretical_rtt_s - 0.02).abs() < 1e-15);
        let t = PathTable::compute(&ShortestDelay, &g, &[NodeId(1)]);
        assert_eq!(t.next_hop(NodeId(0), NodeId(1)), Some(NodeId(1)));
    }

    #[test]
    fn triangle_prefers_two_hops() {
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)]);
        let r = route(&g, NodeId(0), NodeId(2), &ShortestDelay).unwrap();
        assert_eq!(r.hops, vec![NodeId(0), NodeId(1), NodeId(2)]);
        assert!((r.theoretical_rtt_s - 4.0).abs() < 1e-9);
    }

    #[test]
    fn same_endpoints_rejected() {
        let g = graph(2, &[(0, 1, 0.01)]);
        assert_eq!(
            route(&g, NodeId(1), NodeId(1), &ShortestDelay),
            Err(RouteError::SameEndpoints)
        );
        assert!(matches!(
            route(&g, NodeId(0), NodeId(9), &ShortestDelay),
            Err(RouteError::UnknownNode(_))
        ));
    }

    #[test]
    fn disconnected_and_loop_distinguished() {
        #[derive(Debug)]
        struct PingPong;
        impl PathAlgorithm for PingPong {
            fn name(&self) -> &str {
                "ping-pong"
            }
            fn decide(&self, _: &TopologySnapshot, _: NodeId) -> NextHops {
                NextHops::from([(NodeId(0), NodeId(1)), (NodeId(1), NodeId(0))])
            }
        }
        let g = graph(3, &[(0, 1, 0.01), (1, 2, 0.01)]);
        assert!(matches!(
            route(&g, NodeId(0), NodeId(2), &PingPong),
            Err(RouteError::NoRoute {
                reason: NoRouteReason::Loop,
                hops_taken: 1
            })
        ));
        let cut = graph(3, &[(0, 1, 0.01)]);
        assert!(matches!(
            route(&cut, NodeId(0), NodeId(2), &ShortestDelay),
            Err(RouteError::NoRoute {
                reason: NoRouteReason::Disconnected,
                ..
            })
        ));
        // the looping chain is pruned from the table
        assert!(PathTable::compute(&PingPong, &g, &[NodeId(2)])
            .entries
            .is_empty());
    }

    #[test]
    fn registry() {
        let mut r = AlgorithmRegistry::with_defaults();
        assert_eq!(r.names(), vec![CENTRALIZED, STATE_AWARE]);
        assert_eq!(
            r.register(CENTRALIZED, Arc::new(ShortestDelay)),
            Err(RegistryError::Duplicate(CENTRALIZED.into()))
        );
        r.register("state-aware-k2", Arc::new(StateAware::new(2)))
            .unwrap();
        assert!(r.names().contains(&"state-aware-k2"));
        assert!(matches!(r.get("nope"), Err(RegistryError::Unknown(_))));
    }
}
