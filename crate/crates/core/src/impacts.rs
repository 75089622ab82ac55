//! Operator costs and tailpipe emissions.

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::service::CobbDouglas;
use crate::stocks::HvStock;

/// Annual SAV operator cost (EUR/y): running cost scaled by utilisation
/// plus purchases of `additions` vehicles.
pub fn sav_operator_cost(vkm: f64, additions: f64, utilisation: f64, p: &ParamSet) -> f64 {
    let factor = CobbDouglas::operator(p).factor(utilisation);
    p.c_s_op * factor * vkm + additions * p.c_s_pu
}

/// Rail depreciation per vehicle-km (EUR/vkm).
pub fn rail_depreciation(vkm: f64, stock: f64, p: &ParamSet) -> f64 {
    stock * p.train_purchase_cost / (p.train_life * vkm.max(p.d_floor))
}

/// Annual rail operator cost (EUR/y).
pub fn rail_operator_cost(vkm: f64, stock: f64, p: &ParamSet) -> f64 {
    (p.c_r_op + rail_depreciation(vkm, stock, p)) * vkm + p.c_r_fix
}

/// Annual tailpipe CO2 of the thermal HV stock (t/y).
pub fn emissions(stock: &HvStock, factors: &[f64], annual_mileage: f64) -> f64 {
    let grams: f64 = stock.thermal.iter().zip(factors).map(|(n, e)| n * e).sum::<f64>() * annual_mileage;
    grams * 1e-6
}

/// Cumulative emissions after one step.
pub fn accumulate(xi: f64, annual: f64, dt: f64) -> Result<f64> {
    if !(annual >= 0.0) {
        return Err(Error::InvalidArgument(format!("emissions must be >= 0, got {annual}")));
    }
    Ok(xi + annual * dt)
}
