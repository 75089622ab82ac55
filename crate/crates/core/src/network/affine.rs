//! Affine OD travel-time model over fixed path sets.
//!
//! Each link's BPR congestion term is linearised at the base flows, so OD
//! times are `t = t0 + S g` with `S = A D Aᵀ`, `A` the share-weighted
//! OD/link incidence and `D` the diagonal of link slopes. When a link's
//! capacity moves away from its reference value the congestion term (level
//! and slope) is rescaled by `(K_ref / K)^beta`, the exact BPR capacity
//! dependence. The congestion term is floored at zero so that very low
//! demand never yields times below free flow.

use super::{bpr_derivative, bpr_unchecked, PathSet};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AffineTTModel {
    free_time: Vec<f64>,
    base_flow: Vec<f64>,
    base_congestion: Vec<f64>,
    slope: Vec<f64>,
    ref_capacity: Vec<f64>,
    beta: Vec<f64>,
    /// per OD: (link, share-weighted incidence); `None` when unserved
    incidence: Vec<Option<Vec<(usize, f64)>>>,
}

/// Per-link HV and SAV vehicle flows (veh/h).
#[derive(Clone, Debug, PartialEq)]
pub struct LinkFlows {
    pub hv: Vec<f64>,
    pub sav: Vec<f64>,
}

impl LinkFlows {
    pub fn total(&self) -> Vec<f64> {
        self.hv.iter().zip(&self.sav).map(|(h, s)| h + s).collect()
    }
}

fn incidence(path_set: &PathSet, link_count: usize) -> Vec<Option<Vec<(usize, f64)>>> {
    path_set
        .per_od
        .iter()
        .map(|od| {
            od.as_ref().map(|od| {
                let mut weights = vec![0.0; link_count];
                for (path, share) in &od.paths {
                    for &l in path {
                        weights[l] += share;
                    }
                }
                weights
                    .into_iter()
                    .enumerate()
                    .filter(|(_, w)| *w > 0.0)
                    .collect()
            })
        })
        .collect()
}

/// Per-link HV and SAV flows obtained by routing each OD's demand over its
/// fixed paths. Unserved OD pairs contribute nothing.
pub fn link_mode_flows(path_set: &PathSet, link_count: usize, hv: &[f64], sav: &[f64]) -> LinkFlows {
    let mut out = LinkFlows {
        hv: vec![0.0; link_count],
        sav: vec![0.0; link_count],
    };
    for (i, od) in path_set.per_od.iter().enumerate() {
        let Some(od) = od else { continue };
        for (path, share) in &od.paths {
            for &l in path {
                out.hv[l] += share * hv[i];
                out.sav[l] += share * sav[i];
            }
        }
    }
    out
}

impl AffineTTModel {
    /// Linearise the BPR link costs at `base_flows` and `capacities`.
    pub fn build(
        free_time: Vec<f64>,
        alpha: &[f64],
        beta: Vec<f64>,
        path_set: &PathSet,
        base_flows: &[f64],
        capacities: &[f64],
    ) -> Result<Self> {
        let n = free_time.len();
        if alpha.len() != n || beta.len() != n || base_flows.len() != n || capacities.len() != n {
            return Err(Error::InvalidArgument("link vector lengths differ".into()));
        }
        if capacities.iter().any(|&k| !(k > 0.0)) {
            return Err(Error::InvalidArgument("reference capacities must be > 0".into()));
        }
        let mut base_congestion = Vec::with_capacity(n);
        let mut slope = Vec::with_capacity(n);
        for l in 0..n {
            let (x, k, t0) = (base_flows[l], capacities[l], free_time[l]);
            base_congestion.push(bpr_unchecked(x, k, t0, alpha[l], beta[l]) - t0);
            slope.push(bpr_derivative(x, k, t0, alpha[l], beta[l]));
        }
        Ok(Self {
            incidence: incidence(path_set, n),
            free_time,
            base_flow: base_flows.to_vec(),
            base_congestion,
            slope,
            ref_capacity: capacities.to_vec(),
            beta,
        })
    }

    pub fn link_count(&self) -> usize {
        self.free_time.len()
    }

    pub fn od_count(&self) -> usize {
        self.incidence.len()
    }

    pub fn serves(&self, od: usize) -> bool {
        self.incidence[od].is_some()
    }

    pub fn reference_capacities(&self) -> &[f64] {
        &self.ref_capacity
    }

    pub fn base_flows(&self) -> &[f64] {
        &self.base_flow
    }

    /// Link flows induced by the OD demand vector.
    pub fn link_flows(&self, od_demand: &[f64]) -> Vec<f64> {
        let mut flows = vec![0.0; self.link_count()];
        for (inc, &g) in self.incidence.iter().zip(od_demand) {
            if let Some(inc) = inc {
                for &(l, w) in inc {
                    flows[l] += w * g;
                }
            }
        }
        flows
    }

    /// Affine link times at the given flows and current capacities.
    pub fn link_times(&self, flows: &[f64], capacities: &[f64]) -> Result<Vec<f64>> {
        (0..self.link_count())
            .map(|l| {
                let k = capacities[l];
                if !(k > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "link {l} capacity must be > 0, got {k}"
                    )));
                }
                let scale = (self.ref_capacity[l] / k).powf(self.beta[l]);
                let congestion =
                    self.base_congestion[l] + self.slope[l] * (flows[l] - self.base_flow[l]);
                Ok(self.free_time[l] + (scale * congestion).max(0.0))
            })
            .collect()
    }

    /// OD times from link times; `NaN` for unserved pairs.
    pub fn od_times_from_links(&self, link_times: &[f64]) -> Vec<f64> {
        self.incidence
            .iter()
            .map(|inc| {
                inc.as_ref().map_or(f64::NAN, |inc| {
                    inc.iter().map(|&(l, w)| w * link_times[l]).sum()
                })
            })
            .collect()
    }

    /// OD travel times (min) for the given OD demand (veh/h or pax/h) and
    /// current link capacities.
    pub fn od_travel_times(&self, od_demand: &[f64], capacities: &[f64]) -> Result<Vec<f64>> {
        if od_demand.iter().any(|&g| !(g >= 0.0)) {
            return Err(Error::InvalidArgument("OD demand must be >= 0".into()));
        }
        let flows = self.link_flows(od_demand);
        let times = self.link_times(&flows, capacities)?;
        Ok(self.od_times_from_links(&times))
    }

    /// Intercepts `t0` of the affine form at reference capacities.
    pub fn intercepts(&self) -> Vec<f64> {
        let link: Vec<f64> = (0..self.link_count())
            .map(|l| self.free_time[l] + self.base_congestion[l] - self.slope[l] * self.base_flow[l])
            .collect();
        self.od_times_from_links(&link)
    }

    /// Dense sensitivity matrix `S` (min per unit OD demand) at reference
    /// capacities.
    pub fn sensitivity_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.od_count();
        let mut s = vec![vec![0.0; n]; n];
        for (i, a) in self.incidence.iter().enumerate() {
            let Some(a) = a else { continue };
            for (j, b) in self.incidence.iter().enumerate() {
                let Some(b) = b else { continue };
                let mut acc = 0.0;
                for &(l, wa) in a {
                    if let Ok(k) = b.binary_search_by_key(&l, |&(m, _)| m) {
                        acc += wa * b[k].1 * self.slope[l];
                    }
                }
                s[i][j] = acc;
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{OdPaths, PathSet};

    fn two_od_model() -> (AffineTTModel, PathSet) {
        // OD0 uses links 0,1; OD1 uses link 1 (70%) or link 2 (30%)
        let ps = PathSet {
            per_od: vec![
                Some(OdPaths { paths: vec![(vec![0, 1], 1.0)] }),
                Some(OdPaths { paths: vec![(vec![1], 0.7), (vec![2], 0.3)] }),
                None,
            ],
        };
        let base = vec![100.0, 170.0, 30.0];
        let caps = vec![120.0, 150.0, 50.0];
        let m = AffineTTModel::build(
            vec![3.0, 4.0, 5.0],
            &[0.15; 3],
            vec![4.0; 3],
            &ps,
            &base,
            &caps,
        )
        .unwrap();
        (m, ps)
    }

    #[test]
    fn reproduces_bpr_at_linearisation_point() {
        let (m, _) = two_od_model();
        let g = [100.0, 100.0, 0.0];
        let t = m.od_travel_times(&g, m.reference_capacities()).unwrap();
        let bpr = |x: f64, k: f64, t0: f64| bpr_unchecked(x, k, t0, 0.15, 4.0);
        let exact0 = bpr(100.0, 120.0, 3.0) + bpr(170.0, 150.0, 4.0);
        let exact1 = 0.7 * bpr(170.0, 150.0, 4.0) + 0.3 * bpr(30.0, 50.0, 5.0);
        assert!((t[0] - exact0).abs() < 1e-12);
        assert!((t[1] - exact1).abs() < 1e-12);
        assert!(t[2].is_nan());
    }

    #[test]
    fn intercept_plus_sensitivity_equals_times() {
        let (m, _) = two_od_model();
        let g = [90.0, 120.0, 0.0];
        let s = m.sensitivity_matrix();
        let t0 = m.intercepts();
        let t = m.od_travel_times(&g, m.reference_capacities()).unwrap();
        for i in 0..2 {
            let affine: f64 = t0[i] + (0..3).map(|j| s[i][j] * g[j]).sum::<f64>();
            assert!((affine - t[i]).abs() < 1e-9, "{affine} vs {}", t[i]);
        }
    }

    #[test]
    fn zero_demand_gives_free_flow() {
        let (m, _) = two_od_model();
        let t = m.od_travel_times(&[0.0; 3], m.reference_capacities()).unwrap();
        assert!((t[0] - 7.0).abs() < 1e-12);
        assert!((t[1] - (0.7 * 4.0 + 0.3 * 5.0)).abs() < 1e-12);
    }

    #[test]
    fn capacity_rescaling_matches_bpr_at_base_flow() {
        let (m, _) = two_od_model();
        let caps = [240.0, 150.0, 50.0];
        let links = m.link_times(m.base_flows(), &caps).unwrap();
        let exact = bpr_unchecked(100.0, 240.0, 3.0, 0.15, 4.0);
        assert!((links[0] - exact).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive_capacity() {
        let (m, _) = two_od_model();
        assert!(m.od_travel_times(&[1.0, 1.0, 0.0], &[0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn mode_flows_follow_path_shares() {
        let (_, ps) = two_od_model();
        let f = link_mode_flows(&ps, 3, &[10.0, 20.0, 5.0], &[100.0, 0.0, 0.0]);
        assert_eq!(f.sav, vec![100.0, 100.0, 0.0]);
        assert!((f.hv[1] - (10.0 + 14.0)).abs() < 1e-12);
        assert!((f.hv[2] - 6.0).abs() < 1e-12);
    }
}
