//! Distributed forwarding from local link-state exchange.
//!
//! Every node learns the liveness and delay of the links within `k` hops of
//! itself and picks a next hop on its own. When the destination lies inside
//! that ball the node forwards along the shortest known path; otherwise it
//! hands the packet to the live neighbour geographically closest to the
//! destination.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::Vector3;

use super::{NextHops, PathAlgorithm};
use crate::constellation::great_circle_km;
use crate::topology::{LinkId, NodeId, TopologySnapshot};

#[derive(Debug, Clone, PartialEq)]
pub struct KnownLink {
    pub link_id: LinkId,
    pub endpoints: (NodeId, NodeId),
    pub alive: bool,
    pub delay_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnownNode {
    pub position_km: Vector3<f64>,
    pub can_transit: bool,
}

/// What one node knows about its surroundings.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalState {
    pub node_id: NodeId,
    pub horizon_hops: u32,
    pub links: Vec<KnownLink>,
    pub nodes: BTreeMap<NodeId, KnownNode>,
}

impl LocalState {
    /// Collects every link incident to a node fewer than `horizon_hops` hops
    /// away. State travels over any link, live or not, but only through nodes
    /// that forward traffic.
    pub fn observe(snapshot: &TopologySnapshot, node: NodeId, horizon_hops: u32) -> Self {
        assert!(horizon_hops >= 1, "horizon must be at least one hop");
        let mut depth = BTreeMap::from([(node, 0u32)]);
        let mut queue = VecDeque::from([node]);
        let mut link_ids = BTreeSet::new();
        while let Some(u) = queue.pop_front() {
            let du = depth[&u];
            if du >= horizon_hops || (u != node && !snapshot.can_transit(u)) {
                continue;
            }
            for &(v, li) in snapshot.neighbors(u) {
                link_ids.insert(li);
                if let std::collections::btree_map::Entry::Vacant(e) = depth.entry(v) {
                    e.insert(du + 1);
                    queue.push_back(v);
                }
            }
        }
        let links = link_ids
            .into_iter()
            .map(|li| {
                let l = &snapshot.links[li];
                KnownLink {
                    link_id: l.link_id,
                    endpoints: (l.endpoint_a, l.endpoint_b),
                    alive: !l.failed,
                    delay_s: l.delay_s,
                }
            })
            .collect();
        let nodes = depth
            .keys()
            .map(|&n| {
                (
                    n,
                    KnownNode {
                        position_km: *snapshot.position(n),
                        can_transit: snapshot.can_transit(n),
                    },
                )
            })
            .collect();
        Self {
            node_id: node,
            horizon_hops,
            links,
            nodes,
        }
    }

    fn eligible(&self, n: NodeId, dst: NodeId) -> bool {
        n == dst || self.nodes.get(&n).is_some_and(|k| k.can_transit)
    }

    /// Live neighbours of this node that may carry traffic toward `dst`,
    /// with the delay of the connecting link.
    fn live_neighbors(&self, dst: NodeId) -> Vec<(NodeId, f64)> {
        let me = self.node_id;
        let mut out: Vec<(NodeId, f64)> = self
            .links
            .iter()
            .filter(|l| l.alive && (l.endpoints.0 == me || l.endpoints.1 == me))
            .map(|l| {
                let other = if l.endpoints.0 == me {
                    l.endpoints.1
                } else {
                    l.endpoints.0
                };
                (other, l.delay_s)
            })
            .filter(|&(n, _)| self.eligible(n, dst))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        out
    }

    /// Delay from each known node to `dst` over known live links.
    fn known_delays_to(&self, dst: NodeId) -> BTreeMap<NodeId, f64> {
        let mut adj: BTreeMap<NodeId, Vec<(NodeId, f64)>> = BTreeMap::new();
        for l in self.links.iter().filter(|l| l.alive) {
            adj.entry(l.endpoints.0)
                .or_default()
                .push((l.endpoints.1, l.delay_s));
            adj.entry(l.endpoints.1)
                .or_default()
                .push((l.endpoints.0, l.delay_s));
        }
        let mut dist: BTreeMap<NodeId, f64> = BTreeMap::from([(dst, 0.0)]);
        let mut done = BTreeSet::new();
        while let Some((&u, &du)) = dist
            .iter()
            .filter(|(n, _)| !done.contains(*n))
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(b.0)))
        {
            done.insert(u);
            if u != dst && !self.eligible(u, dst) {
                continue;
            }
            for &(v, w) in adj.get(&u).map(Vec::as_slice).unwrap_or_default() {
                let nd = du + w;
                if dist.get(&v).is_none_or(|&cur| nd < cur) {
                    dist.insert(v, nd);
                }
            }
        }
        dist
    }
}

/// Next hop chosen by `state.node_id` toward `dst`, or `None` when every
/// usable neighbour link has failed.
pub fn state_aware_next_hop(
    state: &LocalState,
    dst: NodeId,
    dst_position: &Vector3<f64>,
) -> Option<NodeId> {
    let neighbors = state.live_neighbors(dst);
    if neighbors.is_empty() {
        return None;
    }
    if state.nodes.contains_key(&dst) {
        let dist = state.known_delays_to(dst);
        let best = neighbors
            .iter()
            .filter_map(|&(n, w)| dist.get(&n).map(|d| (n, w + d)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        if let Some((n, _)) = best {
            return Some(n);
        }
    }
    neighbors
        .iter()
        .map(|&(n, _)| {
            (
                n,
                great_circle_km(&state.nodes[&n].position_km, dst_position),
            )
        })
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(n, _)| n)
}

/// Per-node forwarding from `horizon_hops`-hop local state.
#[derive(Debug, Clone)]
pub struct StateAware {
    pub horizon_hops: u32,
    name: String,
}

impl StateAware {
    pub fn new(horizon_hops: u32) -> Self {
        let name = if horizon_hops == 1 {
            super::STATE_AWARE.to_string()
        } else {
            format!("{}-k{horizon_hops}", super::STATE_AWARE)
        };
        Self { horizon_hops, name }
    }
}

impl PathAlgorithm for StateAware {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(&self, snapshot: &TopologySnapshot, dst: NodeId) -> NextHops {
        let dst_pos = *snapshot.position(dst);
        (0..snapshot.node_count() as u32)
            .map(NodeId)
            .filter(|&n| n != dst)
            .filter_map(|n| {
                let state = LocalState::observe(snapshot, n, self.horizon_hops);
                state_aware_next_hop(&state, dst, &dst_pos).map(|h| (n, h))
            })
            .collect()
    }
}
