//! Vehicle stocks: the age-structured HV fleet, the SAV fleet and rail.

use crate::error::{Error, Result};
use crate::params::{ParamSet, AGE_CLASSES};

/// HV counts by powertrain and age 0..=30.
#[derive(Clone, Debug, PartialEq)]
pub struct HvStock {
    pub thermal: [f64; AGE_CLASSES],
    pub electric: [f64; AGE_CLASSES],
}

impl HvStock {
    pub fn empty() -> Self {
        Self {
            thermal: [0.0; AGE_CLASSES],
            electric: [0.0; AGE_CLASSES],
        }
    }

    pub fn total_thermal(&self) -> f64 {
        self.thermal.iter().sum()
    }

    pub fn total_electric(&self) -> f64 {
        self.electric.iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.total_thermal() + self.total_electric()
    }

    pub fn electric_share(&self) -> f64 {
        let total = self.total();
        if total > 0.0 {
            self.total_electric() / total
        } else {
            0.0
        }
    }

    /// Stock sized to `vkm` at the annual mileage, with a geometric age
    /// profile and the configured initial electric share.
    pub fn initial(vkm: f64, p: &ParamSet) -> Self {
        let fleet = vkm / p.annual_mileage;
        let weights: Vec<f64> = (0..AGE_CLASSES).map(|a| p.initial_age_ratio.powi(a as i32)).collect();
        let norm: f64 = weights.iter().sum();
        let mut stock = Self::empty();
        for (a, w) in weights.iter().enumerate() {
            let cohort = fleet * w / norm;
            stock.thermal[a] = cohort * (1.0 - p.initial_ev_share);
            stock.electric[a] = cohort * p.initial_ev_share;
        }
        stock
    }
}

/// Annual HV vehicle-km: HV demand times OD distance times working hours.
pub fn hv_vkm(hv_demand: &[f64], od_distances: &[f64], working_hours: f64) -> f64 {
    hv_demand
        .iter()
        .zip(od_distances)
        .map(|(g, d)| g * d)
        .sum::<f64>()
        * working_hours
}

/// Electric share of new HV purchases: a binary logit on total cost of
/// ownership where the electric alternative is weighted by the Bass
/// adoption term `p + q F`, `F` being the electric share of the fleet.
pub fn electric_purchase_share(fleet_electric_share: f64, p: &ParamSet) -> f64 {
    let km = p.annual_mileage * p.tco_years;
    let tco_t = p.hv_purchase_thermal + p.hv_opex_thermal * km;
    let tco_e = p.hv_purchase_electric + p.hv_opex_electric * km;
    let adoption = p.bass_p + p.bass_q * fleet_electric_share;
    // utilities relative to thermal keep the exponentials in range
    let relative = (-p.tco_logit_scale * (tco_e - tco_t)).exp();
    let e = adoption * relative;
    e / (e + 1.0)
}

/// Advance the HV stock by one year: age and scrap the cohorts, then buy
/// what the HV mileage requires beyond the surviving fleet.
pub fn hv_stock_step(stock: &HvStock, vkm: f64, p: &ParamSet) -> Result<HvStock> {
    if !(vkm >= 0.0) {
        return Err(Error::InvalidArgument(format!("HV mileage must be >= 0, got {vkm}")));
    }
    let mut next = HvStock::empty();
    for a in 1..AGE_CLASSES {
        next.thermal[a] = stock.thermal[a - 1] * p.hv_survival[a];
        next.electric[a] = stock.electric[a - 1] * p.hv_survival[a];
    }
    let required = vkm / p.annual_mileage;
    let purchases = (required - next.total()).max(0.0);
    let share = electric_purchase_share(next.electric_share(), p);
    next.electric[0] = purchases * share;
    next.thermal[0] = purchases * (1.0 - share);
    Ok(next)
}

/// Next SAV fleet size from survival and additions.
pub fn sav_stock_step(fleet: f64, additions: f64, survival: f64) -> Result<f64> {
    if !(additions >= 0.0) {
        return Err(Error::InvalidArgument(format!("SAV additions must be >= 0, got {additions}")));
    }
    Ok(survival * fleet + additions)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RailState {
    /// trains
    pub stock: f64,
    /// trains/h per direction and line
    pub frequency: f64,
    /// pax/h
    pub capacity: f64,
}

/// Rail service geometry and vehicle parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct RailSettings {
    pub train_capacity: f64,
    pub occupancy_rate: f64,
    pub min_frequency: f64,
    pub reserve_fraction: f64,
    pub line_count: f64,
    /// km
    pub line_length: f64,
    /// km/h
    pub commercial_speed: f64,
}

impl RailSettings {
    pub fn new(p: &ParamSet, line_count: f64, line_length: f64) -> Self {
        Self {
            train_capacity: p.train_capacity,
            occupancy_rate: p.occupancy_rate,
            min_frequency: p.f_min,
            reserve_fraction: p.reserve_fraction,
            line_count,
            line_length,
            commercial_speed: p.commercial_speed,
        }
    }

    pub fn round_trip_hours(&self) -> f64 {
        2.0 * self.line_length / self.commercial_speed
    }
}

/// Frequency, capacity and fleet that serve rail demand `g_r` (pax/h).
pub fn rail_update(g_r: f64, s: &RailSettings) -> RailState {
    let frequency = (g_r / (s.train_capacity * s.occupancy_rate)).max(s.min_frequency);
    let stock = (frequency * s.round_trip_hours() * s.line_count * (1.0 + s.reserve_fraction)).ceil();
    RailState {
        stock,
        frequency,
        capacity: frequency * s.train_capacity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rail() -> RailSettings {
        RailSettings {
            train_capacity: 700.0,
            occupancy_rate: 0.7,
            min_frequency: 4.0,
            reserve_fraction: 0.1,
            line_count: 4.0,
            line_length: 10.0,
            commercial_speed: 35.0,
        }
    }

    fn aged_stock() -> HvStock {
        let mut s = HvStock::empty();
        for a in 0..AGE_CLASSES {
            s.thermal[a] = 100.0 + a as f64;
            s.electric[a] = 3.0 * a as f64;
        }
        s
    }

    #[test]
    fn zero_demand_only_ages_and_scraps() {
        let p = ParamSet::default();
        let s = aged_stock();
        let n = hv_stock_step(&s, 0.0, &p).unwrap();
        assert_eq!(n.thermal[0] + n.electric[0], 0.0);
        for a in 1..AGE_CLASSES {
            assert!((n.thermal[a] - s.thermal[a - 1] * p.hv_survival[a]).abs() < 1e-12);
        }
    }

    #[test]
    fn full_survival_replaces_only_the_oldest() {
        let mut p = ParamSet::default();
        p.hv_survival = vec![1.0; AGE_CLASSES];
        let s = aged_stock();
        let vkm = s.total() * p.annual_mileage;
        let n = hv_stock_step(&s, vkm, &p).unwrap();
        let dropouts = s.thermal[30] + s.electric[30];
        assert!((n.thermal[0] + n.electric[0] - dropouts).abs() < 1e-9);
        assert!((n.total() - s.total()).abs() < 1e-9);
    }

    #[test]
    fn required_fleet_is_mileage_over_annual_km() {
        let p = ParamSet::default();
        let n = hv_stock_step(&HvStock::empty(), 1.2e8, &p).unwrap();
        assert!((n.total() - 10_000.0).abs() < 1e-9);
    }

    #[test]
    fn hv_vkm_cases() {
        assert_eq!(hv_vkm(&[0.0, 0.0], &[3.0, 4.0], 2000.0), 0.0);
        assert!((hv_vkm(&[100.0], &[5.0], 2000.0) - 1.0e6).abs() < 1e-6);
    }

    #[test]
    fn sav_steps() {
        assert_eq!(sav_stock_step(500.0, 0.0, 1.0).unwrap(), 500.0);
        assert_eq!(sav_stock_step(0.0, 700.0, 0.93).unwrap(), 700.0);
        assert!((sav_stock_step(1000.0, 0.0, 0.95).unwrap() - 950.0).abs() < 1e-12);
        assert!(sav_stock_step(0.0, -1.0, 0.93).is_err());
    }

    #[test]
    fn sav_fleet_converges_to_geometric_limit() {
        let (u, r) = (700.0, 0.93);
        let mut s = 0.0;
        for _ in 0..1000 {
            s = sav_stock_step(s, u, r).unwrap();
        }
        assert!((s - u / (1.0 - r)).abs() < 1e-6);
    }

    #[test]
    fn rail_cases() {
        let s = rail();
        let empty = rail_update(0.0, &s);
        assert_eq!(empty.frequency, 4.0);
        assert_eq!(empty.capacity, 2800.0);
        let r = rail_update(14_700.0, &s);
        assert!((r.frequency - 30.0).abs() < 1e-12);
        assert!((r.capacity - 21_000.0).abs() < 1e-9);
        let d = rail_update(29_400.0, &s);
        assert!((d.frequency - 2.0 * r.frequency).abs() < 1e-12);
        // 30/h * (20 km / 35 km/h) * 4 lines * 1.1, rounded up
        assert_eq!(r.stock, (30.0 * 20.0 / 35.0 * 4.0 * 1.1f64).ceil());
    }

    #[test]
    fn electric_share_rises_with_fleet_share() {
        let p = ParamSet::default();
        let low = electric_purchase_share(0.0, &p);
        let high = electric_purchase_share(0.5, &p);
        assert!(low > 0.0 && high > low && high < 1.0);
    }

    #[test]
    fn initial_stock_serves_the_mileage() {
        let p = ParamSet::default();
        let s = HvStock::initial(6.0e8, &p);
        assert!((s.total() * p.annual_mileage - 6.0e8).abs() < 1e-3);
        assert!((s.electric_share() - p.initial_ev_share).abs() < 1e-12);
        assert!(s.thermal[1] < s.thermal[0]);
    }

    proptest! {
        #[test]
        fn stock_stays_non_negative_and_bounded(
            cohorts in prop::collection::vec(0.0f64..1000.0, AGE_CLASSES),
            vkm in 0.0f64..1e9,
        ) {
            let p = ParamSet::default();
            let mut s = HvStock::empty();
            for (a, c) in cohorts.iter().enumerate() {
                s.thermal[a] = *c;
                s.electric[a] = c / 3.0;
            }
            let n = hv_stock_step(&s, vkm, &p).unwrap();
            let purchases = n.thermal[0] + n.electric[0];
            prop_assert!(n.thermal.iter().chain(&n.electric).all(|&x| x >= 0.0));
            prop_assert!(n.total() <= s.total() + purchases + 1e-9);
        }

        #[test]
        fn rail_stock_monotone_in_frequency(g in 0.0f64..50_000.0, dg in 0.0f64..10_000.0) {
            let s = rail();
            let a = rail_update(g, &s);
            let b = rail_update(g + dg, &s);
            prop_assert!(b.stock >= a.stock);
            prop_assert_eq!(a.capacity, a.frequency * s.train_capacity);
        }
    }
}
