//! The aggregate seven-node graph of the SAV/emissions feedback structure.

use super::graph::{Gain, MasonExpansion, SignalFlowGraph};
use super::poly::{Poly, SYMBOLS};

pub const SAV_STOCK: usize = 0;
pub const SAV_WAIT: usize = 1;
pub const SAV_DEMAND: usize = 2;
pub const HV_DEMAND: usize = 3;
pub const ROAD_CAPACITY: usize = 4;
pub const TRAVEL_TIME: usize = 5;
pub const EMISSIONS: usize = 6;

pub const NODE_LABELS: [&str; 7] = [
    "SAV stock",
    "SAV wait",
    "SAV demand",
    "HV demand",
    "road capacity",
    "road travel time",
    "emissions",
];

/// Gain indices in use; `k10` has no edge.
pub const GAIN_INDICES: [usize; 11] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 11, 12];

/// `(from, to, gain index, sign)` for every edge.
pub const EDGES: [(usize, usize, usize, i32); 12] = [
    (SAV_STOCK, SAV_WAIT, 1, -1),
    (SAV_WAIT, SAV_DEMAND, 2, -1),
    (SAV_DEMAND, SAV_WAIT, 3, 1),
    (SAV_DEMAND, TRAVEL_TIME, 4, 1),
    (HV_DEMAND, TRAVEL_TIME, 4, 1),
    (TRAVEL_TIME, SAV_DEMAND, 5, -1),
    (SAV_DEMAND, ROAD_CAPACITY, 6, 1),
    (ROAD_CAPACITY, TRAVEL_TIME, 7, -1),
    (TRAVEL_TIME, SAV_WAIT, 8, 1),
    (TRAVEL_TIME, HV_DEMAND, 9, -1),
    (SAV_WAIT, HV_DEMAND, 11, 1),
    (HV_DEMAND, EMISSIONS, 12, 1),
];

/// Non-negative gain magnitudes `k1..k12`, indexed by gain number.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainSet {
    k: [f64; SYMBOLS],
}

impl GainSet {
    /// Gains from `(index, value)` pairs; unspecified gains are zero.
    pub fn from_pairs(pairs: &[(usize, f64)]) -> Self {
        let mut k = [0.0; SYMBOLS];
        for &(i, v) in pairs {
            assert!(GAIN_INDICES.contains(&i), "no gain k{i}");
            k[i] = v;
        }
        Self { k }
    }

    pub fn get(&self, i: usize) -> f64 {
        self.k[i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        assert!(GAIN_INDICES.contains(&i), "no gain k{i}");
        self.k[i] = value;
    }

    pub fn as_array(&self) -> &[f64; SYMBOLS] {
        &self.k
    }
}

/// The canonical graph with edge weights built by `gain(index, sign)`.
pub fn build<W: Gain>(gain: impl Fn(usize, i32) -> W) -> SignalFlowGraph<W> {
    let mut g = SignalFlowGraph::new(&NODE_LABELS).expect("seven nodes");
    for &(from, to, index, sign) in &EDGES {
        g.add_edge(from, to, gain(index, sign)).expect("canonical edges are distinct");
    }
    g
}

pub fn numeric_graph(gains: &GainSet) -> SignalFlowGraph<f64> {
    build(|i, s| s as f64 * gains.get(i))
}

pub fn symbolic_graph() -> SignalFlowGraph<Poly> {
    build(|i, s| Poly::constant(s as i64) * Poly::var(i))
}

/// Mason's formula from SAV stock to emissions.
pub fn transfer(gains: &GainSet) -> MasonExpansion<f64> {
    numeric_graph(gains).mason(SAV_STOCK, EMISSIONS)
}

/// Loop gains `L1..L8` (index 0 unused) written out by hand.
pub fn named_loops<W: Gain>(k: &impl Fn(usize) -> W) -> [W; 9] {
    let neg = |w: W| W::from(-1) * w;
    [
        W::from(0),
        neg(k(2) * k(3)),
        neg(k(2) * k(4) * k(8)),
        k(2) * k(6) * k(7) * k(8),
        k(11) * k(4) * k(8),
        neg(k(11) * k(4) * k(5) * k(3)),
        neg(k(4) * k(5)),
        k(6) * k(7) * k(5),
        neg(k(9) * k(4)),
    ]
}

/// Path gains `P1..P3` (index 0 unused) written out by hand.
pub fn named_paths<W: Gain>(k: &impl Fn(usize) -> W) -> [W; 4] {
    let neg = |w: W| W::from(-1) * w;
    [
        W::from(0),
        neg(k(1) * k(11) * k(12)),
        neg(k(1) * k(2) * k(4) * k(9) * k(12)),
        k(1) * k(2) * k(6) * k(7) * k(9) * k(12),
    ]
}

/// Canonical number (`L1..L8`, `P1..P3`) of each enumerated loop and path,
/// in the enumeration order of [`SignalFlowGraph::mason`] on this graph.
pub fn labels() -> (Vec<usize>, Vec<usize>) {
    let m = symbolic_graph().mason(SAV_STOCK, EMISSIONS);
    let loops = named_loops(&Poly::var);
    let paths = named_paths(&Poly::var);
    let find = |named: &[Poly], gain: &Poly| named.iter().position(|x| x == gain).expect("canonical gain");
    (
        m.loops.iter().map(|l| find(&loops, &l.gain)).collect(),
        m.paths.iter().map(|p| find(&paths, &p.gain)).collect(),
    )
}

/// Closed form `(P1 - P1 L6 - P1 L7 + P2 + P3) / (1 - Σ L_i + L1 L8)` as
/// numerator and denominator.
pub fn closed_form<W: Gain>(k: impl Fn(usize) -> W) -> (W, W) {
    let l = named_loops(&k);
    let p = named_paths(&k);
    let numerator = p[1].clone() - p[1].clone() * l[6].clone() - p[1].clone() * l[7].clone() + p[2].clone() + p[3].clone();
    let sum = l[1..].iter().cloned().fold(W::from(0), |a, b| a + b);
    let denominator = W::from(1) - sum + l[1].clone() * l[8].clone();
    (numerator, denominator)
}

pub fn closed_form_transfer(gains: &GainSet) -> f64 {
    let (n, d) = closed_form(|i| gains.get(i));
    n / d
}

/// Result of the sign test for an emission increase caused by more SAVs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UndesiredEffect {
    /// `-k1 k12 (k11 + (k4 - k6 k7)(k11 k5 + k2 k9))`
    pub expression: f64,
    /// The expression is positive.
    pub flag: bool,
    /// `k6 k7 > k4`, necessary for the flag.
    pub necessary: bool,
    /// `k6 k7 - k4`
    pub margin: f64,
}

pub fn undesired_effect_check(g: &GainSet) -> UndesiredEffect {
    let k = |i| g.get(i);
    let expression = -k(1) * k(12) * (k(11) + (k(4) - k(6) * k(7)) * (k(11) * k(5) + k(2) * k(9)));
    let margin = k(6) * k(7) - k(4);
    UndesiredEffect {
        expression,
        flag: expression > 0.0,
        necessary: margin > 0.0,
        margin,
    }
}
