//! Network graphs and deterministic shortest-path routing.
//!
//! Topologies are undirected, unit-cost and connected. Routing replaces a
//! dynamic routing protocol with static shortest paths; among equal-cost
//! candidates the lexicographically smallest node-id sequence is chosen,
//! so every (source, destination) pair maps to exactly one stable route.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node index within a topology. Valid ids are `0..node_count`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for NodeId {
    fn from(id: u32) -> Self {
        NodeId(id)
    }
}

/// An undirected unit-cost graph. Immutable after construction; the
/// constructors reject self-loops, duplicate edges, out-of-range node ids
/// and disconnected graphs.
#[derive(Debug, Clone)]
pub struct Topology {
    node_count: u32,
    edges: BTreeSet<(u32, u32)>,
    /// Neighbor lists sorted ascending; lexicographic route selection
    /// walks these in order.
    adjacency: Vec<Vec<u32>>,
}

/// A loop-free path whose consecutive hops are adjacent in the topology.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub hops: Vec<NodeId>,
}

impl Route {
    pub fn source(&self) -> NodeId {
        self.hops[0]
    }

    pub fn destination(&self) -> NodeId {
        *self.hops.last().expect("route has at least two hops")
    }

    /// Number of edges traversed.
    pub fn hop_count(&self) -> usize {
        self.hops.len() - 1
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.hops.contains(&node)
    }
}

/// Line graph of `n` nodes: edges `(i, i+1)` for `0 <= i < n-1`.
pub fn make_line(n: u32) -> Result<Topology> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "line topology needs at least 2 nodes, got {n}"
        )));
    }
    let edges = (0..n - 1).map(|i| (i, i + 1)).collect();
    Topology::from_validated_edges(n, edges)
}

/// Manhattan grid of `width * height` nodes. The node id of cell (r, c)
/// is `r * width + c`; edges connect horizontal and vertical neighbors,
/// without wraparound.
pub fn make_manhattan(width: u32, height: u32) -> Result<Topology> {
    if width < 2 || height < 2 {
        return Err(Error::InvalidParameter(format!(
            "manhattan topology needs width and height >= 2, got {width}x{height}"
        )));
    }
    let mut edges = BTreeSet::new();
    for r in 0..height {
        for c in 0..width {
            let id = r * width + c;
            if c + 1 < width {
                edges.insert((id, id + 1));
            }
            if r + 1 < height {
                edges.insert((id, id + width));
            }
        }
    }
    Topology::from_validated_edges(width * height, edges)
}

impl Topology {
    /// Builds a topology from an explicit edge list, validating node-id
    /// range, self-loops, duplicates and connectivity.
    pub fn from_edges(node_count: u32, edge_list: &[(u32, u32)]) -> Result<Self> {
        if node_count < 2 {
            return Err(Error::InvalidParameter(format!(
                "topology needs at least 2 nodes, got {node_count}"
            )));
        }
        let mut edges = BTreeSet::new();
        for &(a, b) in edge_list {
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop on node {a}")));
            }
            if a >= node_count || b >= node_count {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a}, {b}) references a node outside 0..{node_count}"
                )));
            }
            let key = (a.min(b), a.max(b));
            if !edges.insert(key) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate edge ({}, {})",
                    key.0, key.1
                )));
            }
        }
        Self::from_validated_edges(node_count, edges)
    }

    fn from_validated_edges(node_count: u32, edges: BTreeSet<(u32, u32)>) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); node_count as usize];
        for &(a, b) in &edges {
            adjacency[a as usize].push(b);
            adjacency[b as usize].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let topo = Topology {
            node_count,
            edges,
            adjacency,
        };
        if !topo.is_connected() {
            return Err(Error::InvalidParameter(
                "topology is not connected".to_string(),
            ));
        }
        Ok(topo)
    }

    pub fn node_count(&self) -> u32 {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains_node(&self, node: NodeId) -> bool {
        node.0 < self.node_count
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.node_count).map(NodeId)
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.edges.contains(&(a.0.min(b.0), a.0.max(b.0)))
    }

    fn is_connected(&self) -> bool {
        !self.bfs_distances(NodeId(0)).contains(&u32::MAX)
    }

    fn check_node(&self, node: NodeId) -> Result<()> {
        if self.contains_node(node) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "node {node} outside 0..{}",
                self.node_count
            )))
        }
    }

    /// BFS hop distances from `from` to every node. Unreachable nodes
    /// (impossible on a validated topology) are `u32::MAX`.
    pub fn bfs_distances(&self, from: NodeId) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.node_count as usize];
        dist[from.index()] = 0;
        let mut queue = VecDeque::from([from.0]);
        while let Some(cur) = queue.pop_front() {
            let d = dist[cur as usize];
            for &next in &self.adjacency[cur as usize] {
                if dist[next as usize] == u32::MAX {
                    dist[next as usize] = d + 1;
                    queue.push_back(next);
                }
            }
        }
        dist
    }

    /// Minimal hop-count route from `src` to `dst`. Among equal-cost
    /// routes the lexicographically smallest node-id sequence wins: the
    /// walk greedily takes the smallest neighbor that still lies on some
    /// shortest path, which is exactly the lexicographic minimum because
    /// feasibility depends only on the current node.
    pub fn shortest_path(&self, src: NodeId, dst: NodeId) -> Result<Route> {
        self.check_node(src)?;
        self.check_node(dst)?;
        if src == dst {
            return Err(Error::InvalidParameter(format!(
                "route source and destination are both {src}"
            )));
        }
        let dist_to_dst = self.bfs_distances(dst);
        if dist_to_dst[src.index()] == u32::MAX {
            return Err(Error::Internal(format!("{dst} unreachable from {src}")));
        }
        let mut hops = vec![src];
        let mut cur = src.0;
        while cur != dst.0 {
            let remaining = dist_to_dst[cur as usize];
            let next = self.adjacency[cur as usize]
                .iter()
                .copied()
                .find(|&n| dist_to_dst[n as usize] + 1 == remaining)
                .ok_or_else(|| Error::Internal("no descending neighbor on BFS tree".into()))?;
            hops.push(NodeId(next));
            cur = next;
        }
        Ok(Route { hops })
    }

    /// Length in edges of the shortest path between `a` and `b`;
    /// zero when `a == b`.
    pub fn hop_distance(&self, a: NodeId, b: NodeId) -> Result<u32> {
        self.check_node(a)?;
        self.check_node(b)?;
        Ok(self.bfs_distances(a)[b.index()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_construction() {
        let t = make_line(50).unwrap();
        assert_eq!(t.node_count(), 50);
        assert_eq!(t.edge_count(), 49);

        let t = make_line(2).unwrap();
        assert_eq!(t.edge_count(), 1);
        assert!(t.has_edge(NodeId(0), NodeId(1)));

        let t = make_line(5).unwrap();
        for i in 0..4 {
            assert!(t.has_edge(NodeId(i), NodeId(i + 1)));
        }
        assert_eq!(t.edge_count(), 4);

        assert!(matches!(make_line(1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn manhattan_construction() {
        let t = make_manhattan(6, 6).unwrap();
        assert_eq!(t.node_count(), 36);
        assert_eq!(t.edge_count(), 60);

        let t = make_manhattan(2, 2).unwrap();
        assert_eq!(t.node_count(), 4);
        assert_eq!(t.edge_count(), 4);

        let t = make_manhattan(3, 2).unwrap();
        assert_eq!(t.node_count(), 6);
        assert_eq!(t.edge_count(), 7);

        assert!(matches!(
            make_manhattan(1, 6),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn line_route_is_ascending() {
        let t = make_line(50).unwrap();
        let r = t.shortest_path(NodeId(0), NodeId(49)).unwrap();
        assert_eq!(r.hops.len(), 50);
        assert_eq!(
            r.hops,
            (0..50).map(NodeId).collect::<Vec<_>>(),
            "unique line path is the ascending sequence"
        );
    }

    #[test]
    fn manhattan_corner_route() {
        let t = make_manhattan(6, 6).unwrap();
        let r = t.shortest_path(NodeId(0), NodeId(35)).unwrap();
        assert_eq!(r.hops.len(), 11);
        assert_eq!(r.hop_count(), 10);
    }

    /// Independent oracle: enumerate every shortest path by depth-first
    /// walk over the BFS distance field and take the lexicographic
    /// minimum, then compare with the routing implementation.
    fn lex_min_shortest_path_bruteforce(t: &Topology, src: NodeId, dst: NodeId) -> Vec<u32> {
        let dist = t.bfs_distances(dst);
        let mut best: Option<Vec<u32>> = None;
        let mut stack = vec![vec![src.0]];
        while let Some(path) = stack.pop() {
            let cur = *path.last().unwrap();
            if cur == dst.0 {
                match &best {
                    Some(b) if *b <= path => {}
                    _ => best = Some(path),
                }
                continue;
            }
            for n in 0..t.node_count() {
                if t.has_edge(NodeId(cur), NodeId(n)) && dist[n as usize] + 1 == dist[cur as usize]
                {
                    let mut next = path.clone();
                    next.push(n);
                    stack.push(next);
                }
            }
        }
        best.expect("connected")
    }

    #[test]
    fn lexicographic_tie_break() {
        let t = make_manhattan(6, 6).unwrap();
        // Both (0,1,7) and (0,6,7) are 2-edge paths; the lexicographic
        // rule picks (0,1,7).
        let oracle = lex_min_shortest_path_bruteforce(&t, NodeId(0), NodeId(7));
        assert_eq!(oracle, vec![0, 1, 7]);
        let r = t.shortest_path(NodeId(0), NodeId(7)).unwrap();
        assert_eq!(r.hops, vec![NodeId(0), NodeId(1), NodeId(7)]);

        // Spot-check the greedy walk against the brute-force oracle on
        // every pair of a small grid.
        let small = make_manhattan(3, 3).unwrap();
        for a in 0..9 {
            for b in 0..9 {
                if a == b {
                    continue;
                }
                let got = small.shortest_path(NodeId(a), NodeId(b)).unwrap();
                let want = lex_min_shortest_path_bruteforce(&small, NodeId(a), NodeId(b));
                assert_eq!(
                    got.hops.iter().map(|n| n.0).collect::<Vec<_>>(),
                    want,
                    "pair {a}->{b}"
                );
            }
        }
    }

    #[test]
    fn hop_distances() {
        let line = make_line(50).unwrap();
        assert_eq!(line.hop_distance(NodeId(0), NodeId(49)).unwrap(), 49);
        assert_eq!(line.hop_distance(NodeId(7), NodeId(7)).unwrap(), 0);

        let grid = make_manhattan(6, 6).unwrap();
        assert_eq!(grid.hop_distance(NodeId(0), NodeId(35)).unwrap(), 10);
    }

    #[test]
    fn route_matches_hop_distance() {
        let grid = make_manhattan(4, 5).unwrap();
        for a in 0..20 {
            for b in 0..20 {
                if a == b {
                    continue;
                }
                let r = grid.shortest_path(NodeId(a), NodeId(b)).unwrap();
                let d = grid.hop_distance(NodeId(a), NodeId(b)).unwrap();
                assert_eq!(r.hops.len(), d as usize + 1);
                // consecutive hops adjacent, no repeats
                for w in r.hops.windows(2) {
                    assert!(grid.has_edge(w[0], w[1]));
                }
                let set: BTreeSet<_> = r.hops.iter().collect();
                assert_eq!(set.len(), r.hops.len());
            }
        }
    }

    #[test]
    fn from_edges_validation() {
        assert!(matches!(
            Topology::from_edges(3, &[(0, 0), (1, 2)]),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            Topology::from_edges(3, &[(0, 1), (1, 0), (1, 2)]),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            Topology::from_edges(3, &[(0, 1), (1, 5)]),
            Err(Error::InvalidParameter(_))
        ));
        // disconnected
        assert!(matches!(
            Topology::from_edges(4, &[(0, 1), (2, 3)]),
            Err(Error::InvalidParameter(_))
        ));
        // valid ring
        let t = Topology::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        assert_eq!(t.edge_count(), 4);
    }
}
