use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::{NextHops, PathAlgorithm};
use crate::topology::{LinkId, NodeId, TopologySnapshot};

/// Delay-weighted shortest paths computed with global knowledge of the
/// snapshot; failed links are excluded.
#[derive(Debug, Clone, Copy, Default)]
pub struct ShortestDelay;

impl PathAlgorithm for ShortestDelay {
    fn name(&self) -> &str {
        super::CENTRALIZED
    }

    fn decide(&self, snapshot: &TopologySnapshot, dst: NodeId) -> NextHops {
        let tree = shortest_delays(snapshot, dst);
        tree.next
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.map(|(hop, _)| (NodeId(i as u32), hop)))
            .collect()
    }
}

/// Shortest-delay tree toward one destination.
#[derive(Debug, Clone)]
pub struct ShortestDelays {
    pub dst: NodeId,
    /// One-way delay to `dst`, infinite when unreachable.
    pub delay_s: Vec<f64>,
    /// Next hop and link toward `dst`.
    pub next: Vec<Option<(NodeId, LinkId)>>,
}

#[derive(PartialEq)]
struct Entry(f64, NodeId);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra from `dst` over live links. Ground stations that may not transit
/// are reached but never expanded. Among equal-delay alternatives the next
/// hop with the smaller node id, then the smaller link id, wins.
pub fn shortest_delays(snapshot: &TopologySnapshot, dst: NodeId) -> ShortestDelays {
    let n = snapshot.node_count();
    let mut delay = vec![f64::INFINITY; n];
    let mut next: Vec<Option<(NodeId, LinkId)>> = vec![None; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    delay[dst.0 as usize] = 0.0;
    heap.push(Reverse(Entry(0.0, dst)));
    while let Some(Reverse(Entry(d, u))) = heap.pop() {
        let ui = u.0 as usize;
        if settled[ui] || d > delay[ui] {
            continue;
        }
        settled[ui] = true;
        if u != dst && !snapshot.can_transit(u) {
            continue;
        }
        for &(v, li) in snapshot.neighbors(u) {
            let link = &snapshot.links[li];
            let vi = v.0 as usize;
            if link.failed || settled[vi] {
                continue;
            }
            let nd = d + link.delay_s;
            let candidate = (u, link.link_id);
            let better =
                nd < delay[vi] || (nd == delay[vi] && next[vi].is_none_or(|cur| candidate < cur));
            if better {
                delay[vi] = nd;
                next[vi] = Some(candidate);
                heap.push(Reverse(Entry(nd, v)));
            }
        }
    }
    ShortestDelays {
        dst,
        delay_s: delay,
        next,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathcomp::testutil::graph;

    #[test]
    fn tie_break_prefers_smaller_neighbour() {
        // two equal paths 0-1-3 and 0-2-3
        let g = graph(4, &[(0, 2, 1.0), (2, 3, 1.0), (0, 1, 1.0), (1, 3, 1.0)]);
        let hops = ShortestDelay.decide(&g, NodeId(3));
        assert_eq!(hops[&NodeId(0)], NodeId(1));
    }

    #[test]
    fn failed_links_skipped() {
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)])
            .with_failed(|l| l.link_id == LinkId(1));
        let t = shortest_delays(&g, NodeId(2));
        assert_eq!(t.next[0], Some((NodeId(2), LinkId(2))));
        assert!((t.delay_s[1] - 4.0).abs() < 1e-9);
    }
}
