//! Model parameters.
//!
//! Parameters are read from a flat TOML file whose keys follow the model's
//! symbol names (`C_S_pu = 120000`). Any key left out falls back to the
//! committed defaults in `data/default_params.toml`; unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of HV age classes (ages 0 to 30).
pub const AGE_CLASSES: usize = 31;

pub const DEFAULT_PARAMS: &str = include_str!("../data/default_params.toml");

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSet {
    pub horizon_years: u32,
    pub base_year: i32,

    /// Segment shares: choice, HV traveller, rail traveller, SAV traveller.
    pub x_i: [f64; 4],

    #[serde(rename = "C_H_c_ae")]
    pub c_h_c_ae: f64,
    #[serde(rename = "C_H_c_op")]
    pub c_h_c_op: f64,
    #[serde(rename = "C_R_c_ae")]
    pub c_r_c_ae: f64,
    #[serde(rename = "C_R_c_op")]
    pub c_r_c_op: f64,
    #[serde(rename = "C_S_c_ae")]
    pub c_s_c_ae: f64,
    #[serde(rename = "C_S_c_op")]
    pub c_s_c_op: f64,
    #[serde(rename = "C_R_op")]
    pub c_r_op: f64,
    #[serde(rename = "C_R_fix")]
    pub c_r_fix: f64,
    #[serde(rename = "C_S_pu")]
    pub c_s_pu: f64,
    #[serde(rename = "C_S_op")]
    pub c_s_op: f64,

    pub road_bpr_alpha: f64,
    pub road_bpr_beta: f64,
    pub rail_bpr_alpha: f64,
    pub rail_bpr_beta: f64,
    pub ue_gap_tolerance: f64,
    pub ue_max_iterations: usize,
    pub path_share_threshold: f64,
    /// km/h
    pub commercial_speed: f64,
    pub rail_line_count: Option<f64>,
    /// km, one direction
    pub rail_line_length: Option<f64>,

    /// min/EUR
    pub value_of_time: f64,
    /// utils/min
    pub time_weight: f64,
    pub nest_lambda: f64,
    pub asc_hv: f64,
    pub asc_sav: f64,
    pub asc_rail: f64,
    /// min
    pub hv_access_time: f64,

    pub sav_wait_cap: f64,
    pub pickup_overhead: f64,
    pub population_factor: f64,
    pub request_cycle: f64,
    pub benchmark_mileage: f64,
    pub eps_customer: f64,
    pub eps_operator: f64,
    pub utilisation_floor: f64,
    pub cost_ceiling: f64,
    pub cost_min_fraction: f64,
    pub filter_tau: f64,
    pub dt: f64,

    pub walk_speed: f64,
    pub station_spacing: f64,

    #[serde(rename = "h_HH")]
    pub h_hh: f64,
    #[serde(rename = "h_SH")]
    pub h_sh: f64,
    #[serde(rename = "h_SS")]
    pub h_ss: f64,

    pub working_hours: f64,
    pub annual_mileage: f64,
    pub hv_survival: Vec<f64>,
    pub bass_p: f64,
    pub bass_q: f64,
    pub hv_purchase_thermal: f64,
    pub hv_purchase_electric: f64,
    pub hv_opex_thermal: f64,
    pub hv_opex_electric: f64,
    pub tco_years: f64,
    pub tco_logit_scale: f64,
    pub initial_ev_share: f64,
    pub initial_age_ratio: f64,
    pub sav_survival: f64,
    pub train_capacity: f64,
    pub occupancy_rate: f64,
    pub reserve_fraction: f64,
    #[serde(rename = "F_min")]
    pub f_min: f64,

    pub emission_factors: Vec<f64>,
    pub train_purchase_cost: f64,
    pub train_life: f64,
    #[serde(rename = "D_floor")]
    pub d_floor: f64,

    pub equilibrium_damping: f64,
    pub equilibrium_tolerance: f64,
    pub equilibrium_max_iter: usize,
    pub u_max: f64,
}

impl Default for ParamSet {
    fn default() -> Self {
        toml::from_str(DEFAULT_PARAMS).expect("embedded default parameters are valid")
    }
}

/// 1-based line of the first assignment to `key` in `text`, or 0.
fn key_line(text: &str, key: &str) -> u64 {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(0, |i| i as u64 + 1)
}

impl ParamSet {
    /// Parse a parameter file; keys it omits take their default values.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let overrides: toml::Table = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() as u64 + 1)
                .unwrap_or(0);
            Error::input(origin, line, e.message().to_string())
        })?;
        let mut merged: toml::Table =
            toml::from_str(DEFAULT_PARAMS).expect("embedded default parameters are valid");
        for (key, value) in &overrides {
            merged.insert(key.clone(), value.clone());
        }
        let params = ParamSet::deserialize(merged).map_err(|e| {
            let message = e.message().to_string();
            // point at the offending key when the message names one
            let named = message.split('`').nth(1).unwrap_or_default();
            let line = overrides
                .keys()
                .find(|k| k.as_str() == named)
                .map_or(0, |k| key_line(text, k));
            Error::input(origin, line, message)
        })?;
        params.validate()?;
        Ok(params)
    }

    /// The full parameter set as TOML, every key included.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("parameters serialise")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        let share_sum: f64 = self.x_i.iter().sum();
        if self.x_i.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::param("x_i", "segment shares must be non-negative"));
        }
        if (share_sum - 1.0).abs() > 1e-9 {
            return Err(Error::param(
                "x_i",
                format!("segment shares must sum to 1, got {share_sum}"),
            ));
        }
        if self.horizon_years < 1 {
            return Err(Error::param("horizon_years", "must be at least 1"));
        }

        let non_negative = [
            ("C_H_c_ae", self.c_h_c_ae),
            ("C_H_c_op", self.c_h_c_op),
            ("C_R_c_ae", self.c_r_c_ae),
            ("C_R_c_op", self.c_r_c_op),
            ("C_S_c_ae", self.c_s_c_ae),
            ("C_S_c_op", self.c_s_c_op),
            ("C_R_op", self.c_r_op),
            ("C_R_fix", self.c_r_fix),
            ("C_S_pu", self.c_s_pu),
            ("C_S_op", self.c_s_op),
            ("road_bpr_alpha", self.road_bpr_alpha),
            ("rail_bpr_alpha", self.rail_bpr_alpha),
            ("hv_access_time", self.hv_access_time),
            ("sav_wait_cap", self.sav_wait_cap),
            ("pickup_overhead", self.pickup_overhead),
            ("eps_customer", self.eps_customer),
            ("eps_operator", self.eps_operator),
            ("bass_p", self.bass_p),
            ("bass_q", self.bass_q),
            ("hv_purchase_thermal", self.hv_purchase_thermal),
            ("hv_purchase_electric", self.hv_purchase_electric),
            ("hv_opex_thermal", self.hv_opex_thermal),
            ("hv_opex_electric", self.hv_opex_electric),
            ("tco_logit_scale", self.tco_logit_scale),
            ("reserve_fraction", self.reserve_fraction),
            ("train_purchase_cost", self.train_purchase_cost),
            ("D_floor", self.d_floor),
            ("path_share_threshold", self.path_share_threshold),
        ];
        for (key, value) in non_negative {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::param(key, format!("must be finite and >= 0, got {value}")));
            }
        }

        let positive = [
            ("road_bpr_beta", self.road_bpr_beta),
            ("rail_bpr_beta", self.rail_bpr_beta),
            ("ue_gap_tolerance", self.ue_gap_tolerance),
            ("commercial_speed", self.commercial_speed),
            ("value_of_time", self.value_of_time),
            ("time_weight", self.time_weight),
            ("population_factor", self.population_factor),
            ("request_cycle", self.request_cycle),
            ("benchmark_mileage", self.benchmark_mileage),
            ("utilisation_floor", self.utilisation_floor),
            ("cost_ceiling", self.cost_ceiling),
            ("filter_tau", self.filter_tau),
            ("dt", self.dt),
            ("walk_speed", self.walk_speed),
            ("h_HH", self.h_hh),
            ("h_SH", self.h_sh),
            ("h_SS", self.h_ss),
            ("working_hours", self.working_hours),
            ("annual_mileage", self.annual_mileage),
            ("tco_years", self.tco_years),
            ("train_capacity", self.train_capacity),
            ("occupancy_rate", self.occupancy_rate),
            ("F_min", self.f_min),
            ("train_life", self.train_life),
            ("equilibrium_damping", self.equilibrium_damping),
            ("equilibrium_tolerance", self.equilibrium_tolerance),
            ("u_max", self.u_max),
        ];
        for (key, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::param(key, format!("must be finite and > 0, got {value}")));
            }
        }

        if !(self.nest_lambda > 0.0 && self.nest_lambda <= 1.0) {
            return Err(Error::param("nest_lambda", "must lie in (0, 1]"));
        }
        if self.equilibrium_damping > 1.0 {
            return Err(Error::param("equilibrium_damping", "must lie in (0, 1]"));
        }
        if !(self.cost_min_fraction >= 0.0 && self.cost_min_fraction <= 1.0) {
            return Err(Error::param("cost_min_fraction", "must lie in [0, 1]"));
        }
        if self.cost_ceiling < 1.0 {
            return Err(Error::param("cost_ceiling", "must be >= 1"));
        }
        if !(self.h_ss <= self.h_sh && self.h_sh <= self.h_hh) {
            return Err(Error::param(
                "h_SS",
                "headways must satisfy h_SS <= h_SH <= h_HH",
            ));
        }
        for (key, value) in [
            ("sav_survival", self.sav_survival),
            ("initial_ev_share", self.initial_ev_share),
            ("initial_age_ratio", self.initial_age_ratio),
            ("occupancy_rate", self.occupancy_rate),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::param(key, format!("must lie in [0, 1], got {value}")));
            }
        }
        check_table("hv_survival", &self.hv_survival, Some(1.0))?;
        check_table("emission_factors", &self.emission_factors, None)?;
        for (key, value) in [
            ("rail_line_count", self.rail_line_count),
            ("rail_line_length", self.rail_line_length),
        ] {
            if let Some(v) = value {
                if !(v > 0.0) {
                    return Err(Error::param(key, "must be > 0"));
                }
            }
        }
        Ok(())
    }
}

fn check_table(key: &str, values: &[f64], upper: Option<f64>) -> Result<()> {
    if values.len() != AGE_CLASSES {
        return Err(Error::param(
            key,
            format!("expected {AGE_CLASSES} entries (ages 0..30), got {}", values.len()),
        ));
    }
    for &v in values {
        if !(v >= 0.0) || upper.is_some_and(|u| v > u) {
            return Err(Error::param(key, format!("entry {v} out of range")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_validate() {
        let p = ParamSet::default();
        p.validate().unwrap();
        assert_eq!(p.x_i, [0.66, 0.0, 0.34, 0.0]);
        assert_eq!(p.c_s_pu, 120000.0);
        assert_eq!(p.c_r_fix, 5.4767e7);
        assert_eq!(p.c_h_c_op, 0.0745);
        assert_eq!(p.hv_survival.len(), AGE_CLASSES);
    }

    #[test]
    fn missing_keys_fall_back_to_defaults() {
        let p = ParamSet::from_toml_str("C_S_pu = 100000\n", Path::new("p.toml")).unwrap();
        assert_eq!(p.c_s_pu, 100000.0);
        assert_eq!(p.c_s_op, ParamSet::default().c_s_op);
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let err = ParamSet::from_toml_str("C_S_pu = 1\nnot_a_key = 3\n", Path::new("p.toml"))
            .unwrap_err();
        match err {
            Error::Input { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("not_a_key"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shares_must_sum_to_one() {
        let err = ParamSet::from_toml_str("x_i = [0.6, 0.0, 0.3, 0.0]", Path::new("p.toml"))
            .unwrap_err();
        assert!(err.to_string().contains("x_i"), "{err}");
        ParamSet::from_toml_str("x_i = [0.25, 0.25, 0.25, 0.25]", Path::new("p.toml")).unwrap();
    }

    #[test]
    fn negative_cost_is_rejected() {
        let err = ParamSet::from_toml_str("C_R_op = -1", Path::new("p.toml")).unwrap_err();
        assert!(err.to_string().contains("C_R_op"));
    }

    #[test]
    fn toml_round_trip() {
        let mut p = ParamSet::default();
        p.c_s_pu = 98765.5;
        let back = ParamSet::from_toml_str(&p.to_toml_string(), Path::new("p.toml")).unwrap();
        assert_eq!(back, p);
    }
}
