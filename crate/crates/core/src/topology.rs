//! Node deployment, neighbourhoods, forwarding candidate sets, void carving,
//! hop-delay estimates and node-disjoint source-to-sink paths.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CandidateEntry, Millis, NodeId};

pub const DEFAULT_COMM_RADIUS: f64 = 1.5;
pub const DEFAULT_MAX_TX_DISTANCE: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    UniformGrid,
    Random,
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("a deployment needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("region must have positive width and height, got ({0}, {1})")]
    InvalidRegion(f64, f64),
    #[error("communication radius {comm} must be positive and not exceed the maximum transmission distance {max_tx}")]
    InvalidRadius { comm: f64, max_tx: f64 },
    #[error("node {0} lies outside the deployment region")]
    OutsideRegion(NodeId),
}

/// A static deployment. Node ids index `positions`; carved nodes leave a
/// `None` hole so surviving ids never change.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    positions: Vec<Option<Point>>,
    region: (f64, f64),
    comm_radius: f64,
    max_tx_distance: f64,
    source: NodeId,
    sink: NodeId,
}

impl Topology {
    pub fn from_positions(
        points: Vec<Point>,
        region: (f64, f64),
        comm_radius: f64,
        max_tx_distance: f64,
        source: NodeId,
        sink: NodeId,
    ) -> Result<Self, TopologyError> {
        if points.len() < 2 {
            return Err(TopologyError::TooFewNodes(points.len()));
        }
        if !(region.0 > 0.0 && region.1 > 0.0) {
            return Err(TopologyError::InvalidRegion(region.0, region.1));
        }
        if !(comm_radius > 0.0 && comm_radius <= max_tx_distance) {
            return Err(TopologyError::InvalidRadius { comm: comm_radius, max_tx: max_tx_distance });
        }
        for (i, p) in points.iter().enumerate() {
            if p.x < 0.0 || p.y < 0.0 || p.x > region.0 || p.y > region.1 {
                return Err(TopologyError::OutsideRegion(NodeId(i as u32)));
            }
        }
        for id in [source, sink] {
            if id.index() >= points.len() {
                return Err(TopologyError::UnknownNode(id));
            }
        }
        Ok(Self {
            positions: points.into_iter().map(Some).collect(),
            region,
            comm_radius,
            max_tx_distance,
            source,
            sink,
        })
    }

    /// Replaces the radio ranges, keeping positions and endpoints.
    pub fn with_radio(mut self, comm_radius: f64, max_tx_distance: f64) -> Result<Self, TopologyError> {
        if !(comm_radius > 0.0 && comm_radius <= max_tx_distance) {
            return Err(TopologyError::InvalidRadius { comm: comm_radius, max_tx: max_tx_distance });
        }
        self.comm_radius = comm_radius;
        self.max_tx_distance = max_tx_distance;
        Ok(self)
    }

    pub fn with_endpoints(mut self, source: NodeId, sink: NodeId) -> Result<Self, TopologyError> {
        for id in [source, sink] {
            if !self.contains(id) {
                return Err(TopologyError::UnknownNode(id));
            }
        }
        self.source = source;
        self.sink = sink;
        Ok(self)
    }

    pub fn source(&self) -> NodeId {
        self.source
    }

    pub fn sink(&self) -> NodeId {
        self.sink
    }

    pub fn region(&self) -> (f64, f64) {
        self.region
    }

    pub fn comm_radius(&self) -> f64 {
        self.comm_radius
    }

    pub fn max_tx_distance(&self) -> f64 {
        self.max_tx_distance
    }

    /// Size of the id space, including carved holes.
    pub fn id_capacity(&self) -> usize {
        self.positions.len()
    }

    /// Number of nodes still deployed.
    pub fn len(&self) -> usize {
        self.positions.iter().filter(|p| p.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, id: NodeId) -> bool {
        matches!(self.positions.get(id.index()), Some(Some(_)))
    }

    pub fn position(&self, id: NodeId) -> Option<Point> {
        self.positions.get(id.index()).copied().flatten()
    }

    fn pos(&self, id: NodeId) -> Point {
        self.position(id).expect("node present in topology")
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.positions
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|_| NodeId(i as u32)))
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        self.pos(a).dist(&self.pos(b))
    }

    pub fn distance_to_sink(&self, id: NodeId) -> f64 {
        self.distance(id, self.sink)
    }

    /// Geographic progress towards the sink when moving from `from` to `to`.
    pub fn progress(&self, from: NodeId, to: NodeId) -> f64 {
        self.distance_to_sink(from) - self.distance_to_sink(to)
    }

    pub fn is_neighbor(&self, a: NodeId, b: NodeId) -> bool {
        a != b && self.distance(a, b) <= self.comm_radius
    }

    pub fn neighbors(&self, id: NodeId) -> Vec<NodeId> {
        if !self.contains(id) {
            return Vec::new();
        }
        self.node_ids().filter(|&j| self.is_neighbor(id, j)).collect()
    }

    /// Neighbour lists for the whole id space (empty for carved ids).
    pub fn neighbor_lists(&self) -> Vec<Vec<NodeId>> {
        let ids: Vec<NodeId> = self.node_ids().collect();
        let mut lists = vec![Vec::new(); self.positions.len()];
        for (k, &a) in ids.iter().enumerate() {
            let pa = self.pos(a);
            for &b in &ids[k + 1..] {
                if pa.dist(&self.pos(b)) <= self.comm_radius {
                    lists[a.index()].push(b);
                    lists[b.index()].push(a);
                }
            }
        }
        lists
    }

    /// Neighbours strictly closer to the sink, sorted by id.
    pub fn forward_neighbors(&self, id: NodeId) -> Vec<NodeId> {
        let own = self.distance_to_sink(id);
        self.node_ids()
            .filter(|&j| self.is_neighbor(id, j) && self.distance_to_sink(j) < own)
            .collect()
    }

    /// Nodes within the maximum transmission distance that make positive
    /// progress towards the sink. Always a superset of the FCS.
    pub fn jump_candidates(&self, id: NodeId) -> Vec<NodeId> {
        let own = self.distance_to_sink(id);
        let p = self.pos(id);
        self.node_ids()
            .filter(|&j| {
                j != id && p.dist(&self.pos(j)) <= self.max_tx_distance && self.distance_to_sink(j) < own
            })
            .collect()
    }
}

/// Deploys `count` nodes with the default radio ranges. Source and sink are
/// the nodes nearest to the origin and to the far corner.
pub fn deploy(
    count: usize,
    region: (f64, f64),
    distribution: Distribution,
    rng_seed: u64,
) -> Result<Topology, TopologyError> {
    if count < 2 {
        return Err(TopologyError::TooFewNodes(count));
    }
    if !(region.0 > 0.0 && region.1 > 0.0) {
        return Err(TopologyError::InvalidRegion(region.0, region.1));
    }
    let points = match distribution {
        Distribution::UniformGrid => {
            let side = (count as f64).sqrt().ceil() as usize;
            let side = side.max(2);
            let dx = region.0 / (side - 1) as f64;
            let dy = region.1 / (side - 1) as f64;
            (0..count)
                .map(|k| Point::new((k % side) as f64 * dx, (k / side) as f64 * dy))
                .collect::<Vec<_>>()
        }
        Distribution::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            (0..count)
                .map(|_| Point::new(rng.random_range(0.0..=region.0), rng.random_range(0.0..=region.1)))
                .collect()
        }
    };
    let nearest = |target: Point, skip: Option<usize>| {
        points
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .min_by(|(i, a), (j, b)| a.dist(&target).total_cmp(&b.dist(&target)).then(i.cmp(j)))
            .map(|(i, _)| i)
            .expect("at least two points")
    };
    let source = nearest(Point::new(0.0, 0.0), None);
    let sink = nearest(Point::new(region.0, region.1), Some(source));
    Topology::from_positions(
        points,
        region,
        DEFAULT_COMM_RADIUS,
        DEFAULT_MAX_TX_DISTANCE,
        NodeId(source as u32),
        NodeId(sink as u32),
    )
}

/// Forwarding candidate set of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Fcs {
    pub owner: NodeId,
    pub members: Vec<CandidateEntry>,
}

impl Fcs {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn ids(&self) -> Vec<NodeId> {
        self.members.iter().map(|e| e.candidate).collect()
    }
}

pub fn build_fcs(topo: &Topology, node: NodeId) -> Result<Fcs, TopologyError> {
    if !topo.contains(node) {
        return Err(TopologyError::UnknownNode(node));
    }
    let ids = topo.forward_neighbors(node);
    let p = if ids.is_empty() { 0.0 } else { 1.0 / ids.len() as f64 };
    let members = ids
        .into_iter()
        .map(|id| CandidateEntry { jump_p: p, ..CandidateEntry::new(id) })
        .collect();
    Ok(Fcs { owner: node, members })
}

/// Removes every node strictly inside the disc, except the source and sink.
pub fn carve_void(topo: &Topology, center: Point, radius: f64) -> Topology {
    let mut out = topo.clone();
    for (i, slot) in out.positions.iter_mut().enumerate() {
        let id = NodeId(i as u32);
        if id == topo.source || id == topo.sink {
            continue;
        }
        if let Some(p) = slot {
            if p.dist(&center) < radius {
                *slot = None;
            }
        }
    }
    out
}

/// Hop distance from every node to the sink over the neighbour graph
/// (`None` when disconnected or carved).
pub fn hop_counts_to_sink(topo: &Topology) -> Vec<Option<u32>> {
    hop_counts_with(topo, &topo.neighbor_lists())
}

pub fn hop_counts_with(topo: &Topology, neighbors: &[Vec<NodeId>]) -> Vec<Option<u32>> {
    let mut hops = vec![None; topo.id_capacity()];
    let sink = topo.sink();
    hops[sink.index()] = Some(0);
    let mut queue = VecDeque::from([sink]);
    while let Some(u) = queue.pop_front() {
        let h = hops[u.index()].unwrap();
        for &v in &neighbors[u.index()] {
            if hops[v.index()].is_none() {
                hops[v.index()] = Some(h + 1);
                queue.push_back(v);
            }
        }
    }
    hops
}

/// Estimated transmission time from `from` to the sink with a uniform per-hop
/// delay. Uniform edge weights make breadth-first order equal to Dijkstra's.
/// Returns `f64::INFINITY` when the sink is unreachable.
pub fn shortest_delay(topo: &Topology, from: NodeId, mean_hop_delay: Millis) -> Millis {
    if !topo.contains(from) {
        return f64::INFINITY;
    }
    match hop_counts_to_sink(topo)[from.index()] {
        Some(h) => f64::from(h) * mean_hop_delay,
        None => f64::INFINITY,
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PathSet {
    pub paths: Vec<Vec<NodeId>>,
    pub delays: Vec<Millis>,
    pub chosen: Vec<usize>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn chosen_paths(&self) -> impl Iterator<Item = &[NodeId]> {
        self.chosen.iter().map(|&i| self.paths[i].as_slice())
    }

    /// Paths kept in reserve.
    pub fn alternatives(&self) -> impl Iterator<Item = &[NodeId]> {
        (0..self.paths.len())
            .filter(|i| !self.chosen.contains(i))
            .map(|i| self.paths[i].as_slice())
    }
}

struct FlowEdge {
    to: usize,
    cap: u32,
    rev: usize,
}

struct FlowGraph {
    adj: Vec<Vec<FlowEdge>>,
}

impl FlowGraph {
    fn new(n: usize) -> Self {
        Self { adj: (0..n).map(|_| Vec::new()).collect() }
    }

    fn add_edge(&mut self, a: usize, b: usize, cap: u32) {
        let ra = self.adj[b].len();
        let rb = self.adj[a].len();
        self.adj[a].push(FlowEdge { to: b, cap, rev: ra });
        self.adj[b].push(FlowEdge { to: a, cap: 0, rev: rb });
    }

    /// One breadth-first augmenting path of one unit; false when none exists.
    fn augment(&mut self, s: usize, t: usize) -> bool {
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; self.adj.len()];
        let mut seen = vec![false; self.adj.len()];
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            if u == t {
                break;
            }
            for (ei, e) in self.adj[u].iter().enumerate() {
                if e.cap > 0 && !seen[e.to] {
                    seen[e.to] = true;
                    prev[e.to] = Some((u, ei));
                    queue.push_back(e.to);
                }
            }
        }
        if !seen[t] {
            return false;
        }
        let mut v = t;
        while let Some((u, ei)) = prev[v] {
            let rev = self.adj[u][ei].rev;
            self.adj[u][ei].cap -= 1;
            self.adj[v][rev].cap += 1;
            v = u;
        }
        true
    }
}

/// Up to `m` source-to-sink paths sharing no interior node.
///
/// Nodes are split into in/out halves joined by a unit-capacity arc, and
/// unit flow is pushed along breadth-first augmenting paths, so the first
/// path is a shortest one and the count reaches the node-disjoint maximum
/// whenever `m` allows it.
pub fn disjoint_paths(topo: &Topology, m: usize, mean_hop_delay: Millis) -> PathSet {
    let n = topo.id_capacity();
    let (s, t) = (topo.source(), topo.sink());
    let inn = |v: usize| 2 * v;
    let out = |v: usize| 2 * v + 1;
    let mut g = FlowGraph::new(2 * n);
    let neighbors = topo.neighbor_lists();
    for v in topo.node_ids() {
        let cap = if v == s || v == t { m as u32 } else { 1 };
        g.add_edge(inn(v.index()), out(v.index()), cap);
        for &w in &neighbors[v.index()] {
            g.add_edge(out(v.index()), inn(w.index()), 1);
        }
    }
    let mut flow = 0;
    while flow < m && g.augment(out(s.index()), inn(t.index())) {
        flow += 1;
    }

    // Decompose: an arc carries flow when its residual capacity dropped to zero
    // on an original unit arc between distinct nodes.
    let mut used: Vec<Vec<bool>> = g.adj.iter().map(|es| vec![false; es.len()]).collect();
    let mut paths = Vec::with_capacity(flow);
    for _ in 0..flow {
        let mut path = vec![s];
        let mut v = s.index();
        while v != t.index() {
            let u = out(v);
            let next = g.adj[u].iter().enumerate().find(|(ei, e)| {
                e.to % 2 == 0 && e.to / 2 != v && !used[u][*ei] && e.cap == 0 && g.adj[e.to][e.rev].cap > 0
            });
            let Some((ei, e)) = next else { break };
            used[u][ei] = true;
            v = e.to / 2;
            path.push(NodeId(v as u32));
        }
        if v == t.index() {
            paths.push(path);
        }
    }
    paths.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    let delays = paths.iter().map(|p| (p.len() - 1) as f64 * mean_hop_delay).collect();
    PathSet { paths, delays, chosen: Vec::new() }
}

/// Marks the `k` lowest-delay paths as chosen, breaking ties by the
/// lexicographic node sequence.
pub fn select_k(pathset: &PathSet, k: usize) -> PathSet {
    let mut order: Vec<usize> = (0..pathset.paths.len()).collect();
    order.sort_by(|&a, &b| {
        pathset.delays[a]
            .total_cmp(&pathset.delays[b])
            .then_with(|| pathset.paths[a].cmp(&pathset.paths[b]))
    });
    order.truncate(k);
    order.sort_unstable();
    PathSet { chosen: order, ..pathset.clone() }
}
