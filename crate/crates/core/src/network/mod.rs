//! Road and rail networks, fixed path sets and the affine OD travel-time model.

mod affine;
mod ue;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

pub use affine::{link_mode_flows, AffineTTModel, LinkFlows};
pub use ue::{solve_user_equilibrium, UeOptions, UeSolution};

use crate::error::{Error, Result};

/// BPR volume-delay function `t0 * (1 + alpha * (flow / capacity)^beta)`.
pub fn bpr_time(flow: f64, capacity: f64, t0: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(capacity > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "BPR capacity must be > 0, got {capacity}"
        )));
    }
    if !(flow >= 0.0) {
        return Err(Error::InvalidArgument(format!("BPR flow must be >= 0, got {flow}")));
    }
    Ok(bpr_unchecked(flow, capacity, t0, alpha, beta))
}

#[inline]
pub(crate) fn bpr_unchecked(flow: f64, capacity: f64, t0: f64, alpha: f64, beta: f64) -> f64 {
    t0 * (1.0 + alpha * (flow / capacity).powf(beta))
}

/// Derivative of the BPR function with respect to flow.
#[inline]
pub(crate) fn bpr_derivative(flow: f64, capacity: f64, t0: f64, alpha: f64, beta: f64) -> f64 {
    if flow <= 0.0 {
        return if beta == 1.0 { t0 * alpha / capacity } else { 0.0 };
    }
    t0 * alpha * beta * (flow / capacity).powf(beta - 1.0) / capacity
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoadLink {
    pub from: usize,
    pub to: usize,
    /// veh/h
    pub capacity: f64,
    /// km
    pub length: f64,
    /// min
    pub free_flow_time: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Directed road network. Node ids are the external ids from the data files.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadNetwork {
    pub links: Vec<RoadLink>,
    graph: Graph,
}

impl RoadNetwork {
    pub fn new(links: Vec<RoadLink>) -> Result<Self> {
        for (i, l) in links.iter().enumerate() {
            if !(l.capacity > 0.0) || !(l.free_flow_time > 0.0) || !(l.length >= 0.0) {
                return Err(Error::Scenario(format!(
                    "road link {} ({}->{}) needs capacity > 0, free-flow time > 0, length >= 0",
                    i, l.from, l.to
                )));
            }
        }
        let graph = Graph::new(links.iter().map(|l| (l.from, l.to)));
        Ok(Self { links, graph })
    }

    pub fn node_count(&self) -> usize {
        self.graph.nodes.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.graph.nodes.iter().copied()
    }

    pub fn has_node(&self, id: usize) -> bool {
        self.graph.index.contains_key(&id)
    }

    pub fn free_flow_times(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.free_flow_time).collect()
    }

    pub fn capacities(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.capacity).collect()
    }

    /// Link travel times under the given flows.
    pub fn link_times(&self, flows: &[f64]) -> Vec<f64> {
        self.links
            .iter()
            .zip(flows)
            .map(|(l, &x)| bpr_unchecked(x, l.capacity, l.free_flow_time, l.alpha, l.beta))
            .collect()
    }

    pub(crate) fn graph(&self) -> &Graph {
        &self.graph
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RailLink {
    pub line: u32,
    pub from: usize,
    pub to: usize,
    /// km
    pub length: f64,
}

/// Rail network made of fixed lines. Every directed link belongs to one line.
#[derive(Clone, Debug, PartialEq)]
pub struct RailNetwork {
    pub links: Vec<RailLink>,
    graph: Graph,
}

impl RailNetwork {
    pub fn new(links: Vec<RailLink>) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for l in &links {
            if let Some(other) = seen.insert((l.from, l.to), l.line) {
                return Err(Error::Scenario(format!(
                    "rail link {}->{} appears on lines {} and {}",
                    l.from, l.to, other, l.line
                )));
            }
            if !(l.length > 0.0) {
                return Err(Error::Scenario(format!(
                    "rail link {}->{} needs a positive length",
                    l.from, l.to
                )));
            }
        }
        let graph = Graph::new(links.iter().map(|l| (l.from, l.to)));
        Ok(Self { links, graph })
    }

    pub fn node_count(&self) -> usize {
        self.graph.nodes.len()
    }

    pub fn has_node(&self, id: usize) -> bool {
        self.graph.index.contains_key(&id)
    }

    pub fn line_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.links.iter().map(|l| l.line).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Mean one-direction line length (km): half the summed link length of
    /// each line, averaged over lines.
    pub fn mean_line_length(&self) -> f64 {
        let ids = self.line_ids();
        if ids.is_empty() {
            return 0.0;
        }
        let total: f64 = self.links.iter().map(|l| l.length).sum();
        total / 2.0 / ids.len() as f64
    }

    /// Free-flow link times (min) at the given commercial speed (km/h).
    pub fn free_flow_times(&self, speed_kmh: f64) -> Vec<f64> {
        self.links.iter().map(|l| 60.0 * l.length / speed_kmh).collect()
    }

    pub(crate) fn graph(&self) -> &Graph {
        &self.graph
    }
}

/// One OD pair with its demand (pax/h).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdPair {
    pub origin: usize,
    pub destination: usize,
    pub demand: f64,
}

pub type ODMatrix = Vec<OdPair>;

/// A path as a sequence of link indices.
pub type Path = Vec<usize>;

#[derive(Clone, Debug, PartialEq)]
pub struct OdPaths {
    /// Paths with their share of the OD flow; shares sum to 1.
    pub paths: Vec<(Path, f64)>,
}

/// Fixed path sets, one entry per OD pair (aligned with the OD list).
/// `None` marks an OD pair the mode does not serve.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSet {
    pub per_od: Vec<Option<OdPaths>>,
}

impl PathSet {
    /// Share-weighted path length per OD (km); 0 for unserved pairs.
    pub fn od_lengths(&self, link_lengths: &[f64]) -> Vec<f64> {
        self.per_od
            .iter()
            .map(|od| {
                od.as_ref().map_or(0.0, |od| {
                    od.paths
                        .iter()
                        .map(|(p, s)| s * p.iter().map(|&l| link_lengths[l]).sum::<f64>())
                        .sum()
                })
            })
            .collect()
    }

    pub fn serves(&self, od: usize) -> bool {
        self.per_od[od].is_some()
    }
}

/// Compact adjacency structure over external node ids.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Graph {
    nodes: Vec<usize>,
    index: BTreeMap<usize, usize>,
    /// outgoing (link index, head node index) per node index
    out: Vec<Vec<(usize, usize)>>,
}

impl Graph {
    fn new(arcs: impl Iterator<Item = (usize, usize)>) -> Self {
        let arcs: Vec<(usize, usize)> = arcs.collect();
        let mut index = BTreeMap::new();
        for &(a, b) in &arcs {
            index.entry(a).or_insert(0);
            index.entry(b).or_insert(0);
        }
        let nodes: Vec<usize> = index.keys().copied().collect();
        for (i, id) in nodes.iter().enumerate() {
            index.insert(*id, i);
        }
        let mut out = vec![Vec::new(); nodes.len()];
        for (link, &(a, b)) in arcs.iter().enumerate() {
            out[index[&a]].push((link, index[&b]));
        }
        Self { nodes, index, out }
    }

    /// Shortest-path tree from `origin` under the given link costs.
    /// Returns, per node index, the predecessor link, and the distance.
    pub(crate) fn shortest_tree(&self, origin: usize, costs: &[f64]) -> (Vec<Option<usize>>, Vec<f64>) {
        let n = self.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![None; n];
        let Some(&s) = self.index.get(&origin) else {
            return (pred, dist);
        };
        let mut heap = BinaryHeap::new();
        dist[s] = 0.0;
        heap.push(HeapEntry { cost: 0.0, node: s });
        while let Some(HeapEntry { cost, node }) = heap.pop() {
            if cost > dist[node] {
                continue;
            }
            for &(link, head) in &self.out[node] {
                let nd = cost + costs[link];
                // strict improvement keeps ties on the first-found path
                if nd < dist[head] {
                    dist[head] = nd;
                    pred[head] = Some(link);
                    heap.push(HeapEntry { cost: nd, node: head });
                }
            }
        }
        (pred, dist)
    }

    /// Extract the link sequence to `destination` from a shortest-path tree.
    pub(crate) fn trace(
        &self,
        pred: &[Option<usize>],
        tails: &[usize],
        origin: usize,
        destination: usize,
    ) -> Option<Path> {
        let &o = self.index.get(&origin)?;
        let &d = self.index.get(&destination)?;
        let mut path = Vec::new();
        let mut node = d;
        while node != o {
            let link = pred[node]?;
            path.push(link);
            node = tails[link];
            if path.len() > pred.len() {
                return None;
            }
        }
        path.reverse();
        Some(path)
    }

    pub(crate) fn node_index(&self, id: usize) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Tail node index of each link.
    pub(crate) fn tails(&self) -> Vec<usize> {
        let mut tails = vec![0; self.out.iter().map(Vec::len).sum()];
        for (node, arcs) in self.out.iter().enumerate() {
            for &(link, _) in arcs {
                tails[link] = node;
            }
        }
        tails
    }
}

#[derive(Clone, Copy, Debug)]
struct HeapEntry {
    cost: f64,
    node: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost, node index as tie-break for determinism
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Fixed rail routing: the unique shortest line-constrained path per OD by
/// free-flow time. OD pairs with an endpoint off the rail network get `None`.
pub fn rail_path_set(rail: &RailNetwork, od: &[OdPair], speed_kmh: f64) -> PathSet {
    let costs = rail.free_flow_times(speed_kmh);
    let tails = rail.graph().tails();
    let mut trees: BTreeMap<usize, Vec<Option<usize>>> = BTreeMap::new();
    let per_od = od
        .iter()
        .map(|p| {
            if !rail.has_node(p.origin) || !rail.has_node(p.destination) {
                return None;
            }
            let pred = trees
                .entry(p.origin)
                .or_insert_with(|| rail.graph().shortest_tree(p.origin, &costs).0);
            rail.graph()
                .trace(pred, &tails, p.origin, p.destination)
                .map(|path| OdPaths {
                    paths: vec![(path, 1.0)],
                })
        })
        .collect();
    PathSet { per_od }
}
