use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

/// Edge weights: anything forming a commutative ring with integer constants.
pub trait Gain: Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + From<i32> {}

impl<T> Gain for T where T: Clone + Add<Output = T> + Sub<Output = T> + Mul<Output = T> + From<i32> {}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge<W> {
    pub from: usize,
    pub to: usize,
    pub weight: W,
}

/// Directed graph with at most one edge per ordered node pair.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalFlowGraph<W> {
    labels: Vec<String>,
    edges: Vec<Edge<W>>,
    out: Vec<Vec<usize>>,
}

/// A simple cycle: nodes in traversal order starting from its smallest node.
#[derive(Clone, Debug, PartialEq)]
pub struct Loop<W> {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
    pub gain: W,
}

/// A simple path from source to sink.
#[derive(Clone, Debug, PartialEq)]
pub struct Path<W> {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
    pub gain: W,
}

/// Mason's formula split into its expansions; the transfer is their ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct MasonExpansion<W> {
    pub loops: Vec<Loop<W>>,
    pub paths: Vec<Path<W>>,
    /// `Δ_k` for each path.
    pub cofactors: Vec<W>,
    /// `Σ P_k Δ_k`
    pub numerator: W,
    /// `Δ`
    pub denominator: W,
}

impl MasonExpansion<f64> {
    pub fn transfer(&self) -> f64 {
        self.numerator / self.denominator
    }
}

fn node_mask(nodes: &[usize]) -> u64 {
    nodes.iter().fold(0u64, |m, &n| m | (1u64 << n))
}

impl<W: Gain> SignalFlowGraph<W> {
    pub fn new<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        if labels.len() > 64 {
            return Err(Error::InvalidArgument("signal-flow graphs are limited to 64 nodes".into()));
        }
        Ok(Self {
            labels: labels.iter().map(|l| l.as_ref().to_string()).collect(),
            edges: Vec::new(),
            out: vec![Vec::new(); labels.len()],
        })
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, node: usize) -> &str {
        &self.labels[node]
    }

    pub fn node(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn edges(&self) -> &[Edge<W>] {
        &self.edges
    }

    pub fn edge_between(&self, from: usize, to: usize) -> Option<usize> {
        self.out.get(from)?.iter().copied().find(|&e| self.edges[e].to == to)
    }

    /// Add `from -> to`; returns the edge index.
    pub fn add_edge(&mut self, from: usize, to: usize, weight: W) -> Result<usize> {
        let n = self.node_count();
        if from >= n || to >= n {
            return Err(Error::InvalidArgument(format!("edge {from}->{to} outside {n} nodes")));
        }
        if self.edge_between(from, to).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate edge {from}->{to}")));
        }
        self.edges.push(Edge { from, to, weight });
        self.out[from].push(self.edges.len() - 1);
        Ok(self.edges.len() - 1)
    }

    fn product(&self, edges: &[usize]) -> W {
        edges
            .iter()
            .fold(W::from(1), |acc, &e| acc * self.edges[e].weight.clone())
    }

    fn edges_along(&self, nodes: &[usize], closed: bool) -> Vec<usize> {
        let mut ids: Vec<usize> = nodes
            .windows(2)
            .map(|w| self.edge_between(w[0], w[1]).expect("consecutive nodes are joined"))
            .collect();
        if closed {
            let (last, first) = (*nodes.last().unwrap(), nodes[0]);
            ids.push(self.edge_between(last, first).expect("cycle closes"));
        }
        ids
    }

    /// All simple cycles (Johnson's algorithm), ordered by smallest node and
    /// then by discovery.
    pub fn simple_cycles(&self) -> Vec<Loop<W>> {
        let n = self.node_count();
        let mut found = Vec::new();
        for s in 0..n {
            let component = self.component_of(s);
            if component == 0 {
                continue;
            }
            let mut search = JohnsonSearch {
                graph: self,
                start: s,
                allowed: component,
                blocked: 0,
                blocked_by: vec![0; n],
                stack: Vec::new(),
                found: &mut found,
            };
            search.circuit(s);
        }
        found
            .into_iter()
            .map(|nodes: Vec<usize>| {
                let edges = self.edges_along(&nodes, true);
                let gain = self.product(&edges);
                Loop { nodes, edges, gain }
            })
            .collect()
    }

    /// Nodes `>= s` in the strongly connected component of `s` within the
    /// subgraph induced by `{s, s+1, ...}`; empty unless `s` lies on a cycle.
    fn component_of(&self, s: usize) -> u64 {
        let n = self.node_count();
        let within = |v: usize| v >= s;
        let reach = |reverse: bool| -> u64 {
            let mut seen = 1u64 << s;
            let mut todo = vec![s];
            while let Some(v) = todo.pop() {
                for e in &self.edges {
                    let (a, b) = if reverse { (e.to, e.from) } else { (e.from, e.to) };
                    if a == v && within(b) && seen & (1 << b) == 0 {
                        seen |= 1 << b;
                        todo.push(b);
                    }
                }
            }
            seen
        };
        let component = reach(false) & reach(true);
        let self_loop = self.edge_between(s, s).is_some();
        if component == 1u64 << s && !self_loop || n == 0 {
            0
        } else {
            component
        }
    }

    /// All simple paths from `source` to `sink`, depth first.
    pub fn simple_paths(&self, source: usize, sink: usize) -> Vec<Path<W>> {
        let mut found = Vec::new();
        let mut stack = vec![source];
        self.extend_paths(sink, 1u64 << source, &mut stack, &mut found);
        found
            .into_iter()
            .map(|nodes: Vec<usize>| {
                let edges = self.edges_along(&nodes, false);
                let gain = self.product(&edges);
                Path { nodes, edges, gain }
            })
            .collect()
    }

    fn extend_paths(&self, sink: usize, visited: u64, stack: &mut Vec<usize>, found: &mut Vec<Vec<usize>>) {
        let v = *stack.last().unwrap();
        if v == sink {
            found.push(stack.clone());
            return;
        }
        for &e in &self.out[v] {
            let w = self.edges[e].to;
            if visited & (1 << w) == 0 {
                stack.push(w);
                self.extend_paths(sink, visited | (1 << w), stack, found);
                stack.pop();
            }
        }
    }

    /// Mason's gain formula from `source` to `sink`. Loops touch when they
    /// share a node.
    pub fn mason(&self, source: usize, sink: usize) -> MasonExpansion<W> {
        let loops = self.simple_cycles();
        let paths = self.simple_paths(source, sink);
        let masks: Vec<u64> = loops.iter().map(|l| node_mask(&l.nodes)).collect();
        let denominator = determinant(&loops, &masks, 0);
        let cofactors: Vec<W> = paths
            .iter()
            .map(|p| determinant(&loops, &masks, node_mask(&p.nodes)))
            .collect();
        let numerator = paths
            .iter()
            .zip(&cofactors)
            .fold(W::from(0), |acc, (p, d)| acc + p.gain.clone() * d.clone());
        MasonExpansion {
            loops,
            paths,
            cofactors,
            numerator,
            denominator,
        }
    }
}

/// Graph determinant over the loops not touching `excluded`:
/// `1 - Σ L_i + Σ L_i L_j - ...` over sets of mutually disjoint loops.
fn determinant<W: Gain>(loops: &[Loop<W>], masks: &[u64], excluded: u64) -> W {
    fn expand<W: Gain>(loops: &[Loop<W>], masks: &[u64], from: usize, used: u64, product: W, sign: i32, acc: &mut W) {
        for i in from..loops.len() {
            if masks[i] & used != 0 {
                continue;
            }
            let term = product.clone() * loops[i].gain.clone();
            let next = -sign;
            *acc = acc.clone() + W::from(next) * term.clone();
            expand(loops, masks, i + 1, used | masks[i], term, next, acc);
        }
    }
    let mut acc = W::from(1);
    expand(loops, masks, 0, excluded, W::from(1), 1, &mut acc);
    acc
}

struct JohnsonSearch<'a, W> {
    graph: &'a SignalFlowGraph<W>,
    start: usize,
    allowed: u64,
    blocked: u64,
    blocked_by: Vec<u64>,
    stack: Vec<usize>,
    found: &'a mut Vec<Vec<usize>>,
}

impl<W> JohnsonSearch<'_, W> {
    fn circuit(&mut self, v: usize) -> bool {
        let mut closed = false;
        self.stack.push(v);
        self.blocked |= 1 << v;
        let graph = self.graph;
        for &e in &graph.out[v] {
            let w = graph.edges[e].to;
            if self.allowed & (1 << w) == 0 {
                continue;
            }
            if w == self.start {
                self.found.push(self.stack.clone());
                closed = true;
            } else if self.blocked & (1 << w) == 0 && self.circuit(w) {
                closed = true;
            }
        }
        if closed {
            self.unblock(v);
        } else {
            for &e in &graph.out[v] {
                let w = graph.edges[e].to;
                if self.allowed & (1 << w) != 0 {
                    self.blocked_by[w] |= 1 << v;
                }
            }
        }
        self.stack.pop();
        closed
    }

    fn unblock(&mut self, v: usize) {
        self.blocked &= !(1 << v);
        let mut pending = std::mem::take(&mut self.blocked_by[v]);
        while pending != 0 {
            let w = pending.trailing_zeros() as usize;
            pending &= pending - 1;
            if self.blocked & (1 << w) != 0 {
                self.unblock(w);
            }
        }
    }
}

/// Transfer from `source` to `sink` by solving `x = Wᵀ x + e_source`.
pub fn linear_transfer(graph: &SignalFlowGraph<f64>, source: usize, sink: usize) -> Result<f64> {
    let n = graph.node_count();
    let mut a = nalgebra::DMatrix::<f64>::identity(n, n);
    for e in graph.edges() {
        a[(e.to, e.from)] -= e.weight;
    }
    let mut b = nalgebra::DVector::<f64>::zeros(n);
    b[source] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidArgument("signal-flow system is singular".into()))?;
    Ok(x[sink])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, density: f64, scale: f64) -> SignalFlowGraph<f64> {
        let labels: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
        let mut g = SignalFlowGraph::new(&labels).unwrap();
        for a in 0..n {
            for b in 0..n {
                if rng.random::<f64>() < density {
                    g.add_edge(a, b, scale * (rng.random::<f64>() * 2.0 - 1.0)).unwrap();
                }
            }
        }
        g
    }

    fn has_edge(g: &SignalFlowGraph<f64>, a: usize, b: usize) -> bool {
        g.edge_between(a, b).is_some()
    }

    /// Every sequence of distinct nodes whose first node is its minimum and
    /// whose consecutive pairs (closing pair included) are edges.
    fn brute_cycles(g: &SignalFlowGraph<f64>) -> Vec<Vec<usize>> {
        fn grow(g: &SignalFlowGraph<f64>, seq: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            let (first, last) = (seq[0], *seq.last().unwrap());
            if has_edge(g, last, first) {
                out.push(seq.clone());
            }
            for w in first + 1..g.node_count() {
                if !seq.contains(&w) && has_edge(g, last, w) {
                    seq.push(w);
                    grow(g, seq, out);
                    seq.pop();
                }
            }
        }
        let mut out = Vec::new();
        for s in 0..g.node_count() {
            grow(g, &mut vec![s], &mut out);
        }
        out
    }

    /// Every permutation of every node subset, filtered to valid paths.
    fn brute_paths(g: &SignalFlowGraph<f64>, source: usize, sink: usize) -> Vec<Vec<usize>> {
        fn perms(rest: &[usize], seq: &mut Vec<usize>, sink: usize, out: &mut Vec<Vec<usize>>) {
            let mut candidate = seq.clone();
            candidate.push(sink);
            out.push(candidate);
            for (i, &v) in rest.iter().enumerate() {
                let mut remaining = rest.to_vec();
                remaining.remove(i);
                seq.push(v);
                perms(&remaining, seq, sink, out);
                seq.pop();
            }
        }
        let inner: Vec<usize> = (0..g.node_count()).filter(|&v| v != source && v != sink).collect();
        let mut all = Vec::new();
        if source == sink {
            return vec![vec![source]];
        }
        perms(&inner, &mut vec![source], sink, &mut all);
        all.into_iter()
            .filter(|p| p.windows(2).all(|w| has_edge(g, w[0], w[1])))
            .collect()
    }

    fn canonical_rotation(c: &[usize]) -> Vec<usize> {
        let i = c.iter().enumerate().min_by_key(|(_, v)| **v).unwrap().0;
        c[i..].iter().chain(&c[..i]).copied().collect()
    }

    #[test]
    fn single_loop_single_path_is_textbook() {
        // a -> b (p), b -> b via c (l1 * l2), b -> d (q)
        let mut g = SignalFlowGraph::new(&["a", "b", "c", "d"]).unwrap();
        g.add_edge(0, 1, 2.0).unwrap();
        g.add_edge(1, 2, 0.5).unwrap();
        g.add_edge(2, 1, 0.6).unwrap();
        g.add_edge(1, 3, 3.0).unwrap();
        let m = g.mason(0, 3);
        assert_eq!(m.loops.len(), 1);
        assert_eq!(m.paths.len(), 1);
        let expected = 6.0 / (1.0 - 0.3);
        assert!((m.transfer() - expected).abs() < 1e-12);
    }

    #[test]
    fn self_loops_are_cycles() {
        let mut g = SignalFlowGraph::new(&["a", "b"]).unwrap();
        g.add_edge(0, 0, 0.5).unwrap();
        g.add_edge(0, 1, 1.0).unwrap();
        let loops = g.simple_cycles();
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].nodes, vec![0]);
        assert!((g.mason(0, 1).transfer() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unreachable_sink_has_no_paths() {
        let mut g = SignalFlowGraph::new(&["a", "b", "c"]).unwrap();
        g.add_edge(0, 1, 1.0).unwrap();
        g.add_edge(2, 1, 1.0).unwrap();
        assert!(g.simple_paths(0, 2).is_empty());
        assert_eq!(g.mason(0, 2).numerator, 0.0);
    }

    #[test]
    fn duplicate_and_out_of_range_edges_are_rejected() {
        let mut g = SignalFlowGraph::new(&["a", "b"]).unwrap();
        g.add_edge(0, 1, 1.0).unwrap();
        assert!(g.add_edge(0, 1, 2.0).is_err());
        assert!(g.add_edge(0, 2, 1.0).is_err());
    }

    #[test]
    fn cycles_match_brute_force_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..200 {
            let n = 2 + trial % 7;
            let g = random_graph(&mut rng, n, 0.35, 1.0);
            let mut fast: Vec<Vec<usize>> = g.simple_cycles().into_iter().map(|l| canonical_rotation(&l.nodes)).collect();
            let mut brute = brute_cycles(&g);
            fast.sort();
            brute.sort();
            assert_eq!(fast, brute, "trial {trial}");
        }
    }

    #[test]
    fn paths_match_brute_force_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..200 {
            let n = 2 + trial % 7;
            let g = random_graph(&mut rng, n, 0.4, 1.0);
            let (s, t) = (0, n - 1);
            let mut fast: Vec<Vec<usize>> = g.simple_paths(s, t).into_iter().map(|p| p.nodes).collect();
            let mut brute = brute_paths(&g, s, t);
            fast.sort();
            brute.sort();
            assert_eq!(fast, brute, "trial {trial}");
        }
    }

    #[test]
    fn paths_match_brute_force_on_random_dags() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let n = 3 + rng.random_range(0..6);
            let labels: Vec<String> = (0..n).map(|i| i.to_string()).collect();
            let mut g = SignalFlowGraph::new(&labels).unwrap();
            for a in 0..n {
                for b in a + 1..n {
                    if rng.random::<f64>() < 0.5 {
                        g.add_edge(a, b, 1.0).unwrap();
                    }
                }
            }
            assert!(g.simple_cycles().is_empty());
            let mut fast: Vec<_> = g.simple_paths(0, n - 1).into_iter().map(|p| p.nodes).collect();
            let mut brute = brute_paths(&g, 0, n - 1);
            fast.sort();
            brute.sort();
            assert_eq!(fast, brute);
        }
    }

    #[test]
    fn mason_matches_linear_solve_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..300 {
            let n = 2 + rng.random_range(0..7);
            // small gains keep I - W well conditioned
            let g = random_graph(&mut rng, n, 0.4, 0.4);
            let m = g.mason(0, n - 1);
            let direct = linear_transfer(&g, 0, n - 1).unwrap();
            let t = m.transfer();
            assert!((t - direct).abs() <= 1e-9 * direct.abs().max(1.0), "{t} vs {direct}");
        }
    }

    proptest! {
        #[test]
        fn loop_gain_is_edge_product(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_graph(&mut rng, 6, 0.4, 2.0);
            for l in g.simple_cycles() {
                let p: f64 = l.edges.iter().map(|&e| g.edges()[e].weight).product();
                prop_assert_eq!(p, l.gain);
                prop_assert_eq!(l.edges.len(), l.nodes.len());
            }
        }
    }
}
