//! Static user-equilibrium assignment on the road network.
//!
//! A short Frank-Wolfe phase with method-of-successive-averages steps
//! generates the working path set, then path-based gradient projection
//! equalises path costs until the relative gap target is met. Paths carrying
//! less than the share threshold are dropped from the returned path set.

use std::collections::BTreeMap;

use super::{bpr_derivative, bpr_unchecked, OdPair, OdPaths, Path, PathSet, RoadNetwork};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct UeOptions {
    pub gap_tolerance: f64,
    pub max_iterations: usize,
    pub msa_iterations: usize,
    pub share_threshold: f64,
}

impl Default for UeOptions {
    fn default() -> Self {
        Self {
            gap_tolerance: 1e-6,
            max_iterations: 20_000,
            msa_iterations: 20,
            share_threshold: 0.01,
        }
    }
}

#[derive(Clone, Debug)]
pub struct UeSolution {
    pub path_set: PathSet,
    /// veh/h per link, consistent with the (pruned) path set.
    pub link_flows: Vec<f64>,
    /// Relative gap of the returned flows.
    pub relative_gap: f64,
    pub iterations: usize,
}

struct Working<'a> {
    net: &'a RoadNetwork,
    od: &'a [OdPair],
    tails: Vec<usize>,
    paths: Vec<Vec<(Path, f64)>>,
    flows: Vec<f64>,
}

impl<'a> Working<'a> {
    fn times(&self) -> Vec<f64> {
        self.net.link_times(&self.flows)
    }

    fn rebuild_flows(&mut self) {
        self.flows.iter_mut().for_each(|f| *f = 0.0);
        for od_paths in &self.paths {
            for (p, f) in od_paths {
                for &l in p {
                    self.flows[l] += f;
                }
            }
        }
    }

    /// Shortest paths for every OD pair under `times`, one tree per origin.
    fn shortest_paths(&self, times: &[f64]) -> Result<Vec<(Path, f64)>> {
        let mut trees = BTreeMap::new();
        self.od
            .iter()
            .map(|p| {
                let (pred, dist) = trees
                    .entry(p.origin)
                    .or_insert_with(|| self.net.graph().shortest_tree(p.origin, times));
                let path = self
                    .net
                    .graph()
                    .trace(pred, &self.tails, p.origin, p.destination)
                    .ok_or(Error::Disconnected {
                        network: "road",
                        origin: p.origin,
                        destination: p.destination,
                    })?;
                let d = self.net.graph().node_index(p.destination).map_or(f64::INFINITY, |i| dist[i]);
                Ok((path, d))
            })
            .collect()
    }

    fn relative_gap(&self, times: &[f64], shortest: &[(Path, f64)]) -> f64 {
        let total: f64 = self.flows.iter().zip(times).map(|(x, t)| x * t).sum();
        if total <= 0.0 {
            return 0.0;
        }
        let lower: f64 = self.od.iter().zip(shortest).map(|(p, (_, c))| p.demand * c).sum();
        ((total - lower) / total).max(0.0)
    }
}

fn index_of(paths: &mut Vec<(Path, f64)>, path: &Path) -> usize {
    match paths.iter().position(|(p, _)| p == path) {
        Some(i) => i,
        None => {
            paths.push((path.clone(), 0.0));
            paths.len() - 1
        }
    }
}

pub fn solve_user_equilibrium(
    net: &RoadNetwork,
    od: &[OdPair],
    opts: &UeOptions,
) -> Result<UeSolution> {
    for p in od {
        if !(p.demand >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "negative demand on OD {}->{}",
                p.origin, p.destination
            )));
        }
    }
    let mut w = Working {
        net,
        od,
        tails: net.graph().tails(),
        paths: vec![Vec::new(); od.len()],
        flows: vec![0.0; net.links.len()],
    };

    // all-or-nothing at free flow, then successive averages
    let free = net.free_flow_times();
    for (i, (path, _)) in w.shortest_paths(&free)?.into_iter().enumerate() {
        w.paths[i].push((path, od[i].demand));
    }
    w.rebuild_flows();
    for k in 1..=opts.msa_iterations {
        let times = w.times();
        let step = 1.0 / (k as f64 + 1.0);
        for (i, (path, _)) in w.shortest_paths(&times)?.into_iter().enumerate() {
            let target = index_of(&mut w.paths[i], &path);
            for (j, (_, f)) in w.paths[i].iter_mut().enumerate() {
                let aon = if j == target { od[i].demand } else { 0.0 };
                *f += step * (aon - *f);
            }
        }
        w.rebuild_flows();
    }

    // gradient projection
    let mut iterations = 0;
    let mut gap = {
        let times = w.times();
        let sp = w.shortest_paths(&times)?;
        w.relative_gap(&times, &sp)
    };
    while gap > opts.gap_tolerance {
        if iterations >= opts.max_iterations {
            return Err(Error::NonConvergence {
                what: "user equilibrium",
                iterations,
                residual: gap,
            });
        }
        iterations += 1;
        for i in 0..od.len() {
            if od[i].demand <= 0.0 {
                continue;
            }
            let times = w.times();
            let (pred, _) = net.graph().shortest_tree(od[i].origin, &times);
            let shortest = net
                .graph()
                .trace(&pred, &w.tails, od[i].origin, od[i].destination)
                .expect("connectivity checked above");
            let s = index_of(&mut w.paths[i], &shortest);
            for j in 0..w.paths[i].len() {
                if j == s || w.paths[i][j].1 <= 0.0 {
                    continue;
                }
                let (cost_p, cost_s, curvature) = {
                    let p = &w.paths[i][j].0;
                    let sp = &w.paths[i][s].0;
                    let cost = |path: &Path| -> f64 {
                        path.iter()
                            .map(|&l| {
                                let k = &net.links[l];
                                bpr_unchecked(w.flows[l], k.capacity, k.free_flow_time, k.alpha, k.beta)
                            })
                            .sum()
                    };
                    let mut curvature = 0.0;
                    for &l in p.iter().filter(|l| !sp.contains(l)).chain(sp.iter().filter(|l| !p.contains(l))) {
                        let k = &net.links[l];
                        curvature +=
                            bpr_derivative(w.flows[l], k.capacity, k.free_flow_time, k.alpha, k.beta);
                    }
                    (cost(p), cost(sp), curvature)
                };
                let diff = cost_p - cost_s;
                if diff <= 0.0 {
                    continue;
                }
                let f_p = w.paths[i][j].1;
                let shift = if curvature > 0.0 { (diff / curvature).min(f_p) } else { f_p };
                w.paths[i][j].1 -= shift;
                w.paths[i][s].1 += shift;
                for &l in &w.paths[i][j].0 {
                    w.flows[l] -= shift;
                }
                for &l in &w.paths[i][s].0 {
                    w.flows[l] += shift;
                }
            }
            w.paths[i].retain(|(_, f)| *f > 0.0);
        }
        w.rebuild_flows();
        let times = w.times();
        let sp = w.shortest_paths(&times)?;
        gap = w.relative_gap(&times, &sp);
    }

    // prune small paths and renormalise
    let mut per_od = Vec::with_capacity(od.len());
    for (i, paths) in w.paths.iter_mut().enumerate() {
        let d = od[i].demand;
        let mut kept: Vec<(Path, f64)> = if d > 0.0 {
            paths
                .iter()
                .filter(|(_, f)| f / d >= opts.share_threshold)
                .map(|(p, f)| (p.clone(), f / d))
                .collect()
        } else {
            Vec::new()
        };
        if kept.is_empty() {
            // zero demand: keep the best path so the pair stays routable
            let best = paths
                .iter()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(p, _)| p.clone())
                .unwrap_or_default();
            kept.push((best, 1.0));
        }
        let total: f64 = kept.iter().map(|(_, s)| s).sum();
        kept.iter_mut().for_each(|(_, s)| *s /= total);
        *paths = kept.iter().map(|(p, s)| (p.clone(), s * d)).collect();
        per_od.push(Some(OdPaths { paths: kept }));
    }
    w.rebuild_flows();
    let times = w.times();
    let sp = w.shortest_paths(&times)?;
    let relative_gap = w.relative_gap(&times, &sp);

    Ok(UeSolution {
        path_set: PathSet { per_od },
        link_flows: w.flows,
        relative_gap,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::RoadLink;

    fn link(from: usize, to: usize, cap: f64, t0: f64) -> RoadLink {
        RoadLink {
            from,
            to,
            capacity: cap,
            length: t0,
            free_flow_time: t0,
            alpha: 0.15,
            beta: 4.0,
        }
    }

    #[test]
    fn parallel_identical_links_split_evenly() {
        // two parallel routes 1->2 via distinct intermediate nodes
        let net = RoadNetwork::new(vec![
            link(1, 3, 100.0, 5.0),
            link(3, 2, 1e6, 0.001),
            link(1, 4, 100.0, 5.0),
            link(4, 2, 1e6, 0.001),
        ])
        .unwrap();
        let od = vec![OdPair { origin: 1, destination: 2, demand: 300.0 }];
        let sol = solve_user_equilibrium(&net, &od, &UeOptions::default()).unwrap();
        assert!((sol.link_flows[0] - 150.0).abs() < 1e-3, "{:?}", sol.link_flows);
        assert!((sol.link_flows[2] - 150.0).abs() < 1e-3);
        assert!(sol.relative_gap <= 1e-6);
    }

    #[test]
    fn single_path_takes_everything() {
        let net = RoadNetwork::new(vec![link(1, 2, 100.0, 5.0), link(2, 3, 100.0, 5.0)]).unwrap();
        let od = vec![OdPair { origin: 1, destination: 3, demand: 42.0 }];
        let sol = solve_user_equilibrium(&net, &od, &UeOptions::default()).unwrap();
        let paths = &sol.path_set.per_od[0].as_ref().unwrap().paths;
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0], (vec![0, 1], 1.0));
        assert_eq!(sol.link_flows, vec![42.0, 42.0]);
    }

    #[test]
    fn disconnected_pair_is_an_error() {
        let net = RoadNetwork::new(vec![link(1, 2, 100.0, 5.0), link(3, 4, 100.0, 5.0)]).unwrap();
        let od = vec![OdPair { origin: 1, destination: 4, demand: 1.0 }];
        let err = solve_user_equilibrium(&net, &od, &UeOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Disconnected { origin: 1, destination: 4, .. }));
    }
}
