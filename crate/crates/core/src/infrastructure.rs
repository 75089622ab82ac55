//! Road capacity under mixed HV/SAV traffic.

use crate::params::ParamSet;

/// Mean following headways (s). An HV follows any leader at `hh`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Headways {
    pub hh: f64,
    /// SAV behind an HV
    pub sh: f64,
    /// SAV behind an SAV
    pub ss: f64,
}

impl Headways {
    pub fn from_params(p: &ParamSet) -> Self {
        Self {
            hh: p.h_hh,
            sh: p.h_sh,
            ss: p.h_ss,
        }
    }

    /// Mean headway when a fraction `x` of vehicles are SAVs, with leaders
    /// drawn at random from the traffic mix.
    pub fn mean(&self, x: f64) -> f64 {
        (1.0 - x) * self.hh + x * ((1.0 - x) * self.sh + x * self.ss)
    }
}

/// Link capacity (veh/h) given the SAV and HV flows on it.
pub fn mixed_capacity(q_sav: f64, q_hv: f64, base_capacity: f64, headways: &Headways) -> f64 {
    let total = q_sav + q_hv;
    let x = if total > 0.0 { q_sav / total } else { 0.0 };
    base_capacity * headways.hh / headways.mean(x)
}

/// Per-link capacities for the given mode flows.
pub fn link_capacities(sav: &[f64], hv: &[f64], base: &[f64], headways: &Headways) -> Vec<f64> {
    sav.iter()
        .zip(hv)
        .zip(base)
        .map(|((&s, &h), &k)| mixed_capacity(s, h, k, headways))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const H: Headways = Headways { hh: 1.8, sh: 1.4, ss: 0.9 };

    #[test]
    fn all_human_traffic_keeps_base_capacity() {
        assert_eq!(mixed_capacity(0.0, 500.0, 2000.0, &H), 2000.0);
        assert_eq!(mixed_capacity(0.0, 0.0, 2000.0, &H), 2000.0);
    }

    #[test]
    fn all_sav_traffic() {
        assert!((mixed_capacity(500.0, 0.0, 2000.0, &H) - 2000.0 * 1.8 / 0.9).abs() < 1e-9);
    }

    #[test]
    fn equal_headways_give_base_capacity() {
        let h = Headways { hh: 1.5, sh: 1.5, ss: 1.5 };
        for x in [0.0, 0.2, 0.5, 0.9, 1.0] {
            assert!((mixed_capacity(x, 1.0 - x, 1000.0, &h) - 1000.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn capacity_grows_with_sav_share(x in 0.0f64..1.0, dx in 0.0f64..0.2, k in 100.0f64..5000.0) {
            let y = (x + dx).min(1.0);
            let a = mixed_capacity(x, 1.0 - x, k, &H);
            let b = mixed_capacity(y, 1.0 - y, k, &H);
            prop_assert!(b >= a - 1e-9);
            prop_assert!(a >= k - 1e-9);
        }

        #[test]
        fn vanishing_flow_tends_to_base(x in 0.0f64..1.0) {
            // the share is scale-free; at zero total the x=0 branch applies
            let tiny = 1e-300;
            let k = mixed_capacity(x * tiny, (1.0 - x) * tiny, 1000.0, &H);
            prop_assert!(k >= 1000.0 - 1e-9);
        }
    }
}
