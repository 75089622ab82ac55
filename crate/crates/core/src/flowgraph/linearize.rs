//! Finite-difference gains of the aggregate graph at a yearly equilibrium.
//!
//! Aggregates: SAV and HV demand are vehicle-km per hour over the network,
//! so that emissions depend on HV demand alone; the SAV wait node is the
//! generalised SAV access cost in minutes (wait plus fare at the value of
//! time and the mean SAV trip length); road travel time is the
//! car-demand-weighted mean OD time; road capacity is the mean link
//! capacity. Rail service stays at its equilibrium value.

use crate::error::{Error, Result};
use crate::impacts;
use crate::mode_choice::ModeSplit;
use crate::service::SavServiceState;
use crate::simulator::{ChoiceContext, EquilibriumPoint, Model, SystemState};
use crate::stocks::{hv_stock_step, hv_vkm, sav_stock_step};

use super::canonical::{GainSet, EDGES};

pub const DEFAULT_REL_STEP: f64 = 1e-3;

/// Equilibrium of the year that starts from `previous` with `u` additions.
#[derive(Clone, Debug)]
pub struct OperatingPoint {
    pub previous: SystemState,
    pub u: f64,
    /// The state the equilibrium is solved at (fleet already updated).
    pub current: SystemState,
    pub equilibrium: EquilibriumPoint,
}

impl OperatingPoint {
    pub fn new(model: &Model, previous: &SystemState, u: f64) -> Result<Self> {
        let mut current = previous.clone();
        current.year = previous.year + 1;
        current.sav_fleet = sav_stock_step(previous.sav_fleet, u, model.params().sav_survival)?;
        let equilibrium = model
            .solve_year_equilibrium(&current)
            .map_err(|e| e.in_year(current.year))?;
        Ok(Self {
            previous: previous.clone(),
            u,
            current,
            equilibrium,
        })
    }

    pub fn year(&self) -> i32 {
        self.current.year
    }
}

/// Gains with the signed derivatives they came from.
#[derive(Clone, Debug)]
pub struct Linearization {
    pub gains: GainSet,
    /// Signed central-difference derivative for each gain index.
    pub derivatives: [f64; 13],
}

fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total
}

fn scaled(values: &[f64], factor: f64) -> Vec<f64> {
    values.iter().map(|v| v * factor).collect()
}

struct Probe<'a> {
    model: &'a Model,
    point: &'a OperatingPoint,
    car: Vec<f64>,
    h: f64,
}

impl Probe<'_> {
    fn eq(&self) -> &EquilibriumPoint {
        &self.point.equilibrium
    }

    fn fleet(&self) -> f64 {
        self.point.current.sav_fleet
    }

    fn mean_time(&self, times: &[f64]) -> f64 {
        weighted_mean(times, &self.car)
    }

    fn vkm(&self, demand: &[f64]) -> f64 {
        demand.iter().zip(self.model.road_distances()).map(|(g, d)| g * d).sum()
    }

    fn generalised(&self, s: &SavServiceState) -> f64 {
        let km = self.eq().sav_trip_km;
        s.wait + self.model.params().value_of_time * (s.cost_op * km + s.cost_ae)
    }

    /// Generalised SAV access cost for total SAV demand `g_s` (pax/h).
    fn wait(&self, g_s: f64, fleet: f64, trip_minutes: f64) -> Result<f64> {
        let eq = self.eq();
        let raw = self.model.raw_service(g_s, fleet, trip_minutes, eq.sav_trip_km)?.0;
        Ok(self.generalised(&raw))
    }

    fn split(&self, road_times: &[f64], wait: f64) -> Result<ModeSplit> {
        let eq = self.eq();
        let service = SavServiceState {
            wait,
            ..eq.perceived.clone()
        };
        self.model.choose(&ChoiceContext {
            road_times,
            rail_times: &eq.rail_times,
            rail_access: eq.rail_access,
            service: &service,
            sav_available: self.fleet() > 0.0,
        })
    }

    /// Central difference of `f` over `x (1 ± h)`, divided by the change of
    /// the aggregate input `2 h dx`.
    fn central(&self, dx: f64, f: impl Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
        let (plus, minus, base) = (f(1.0 + self.h)?, f(1.0 - self.h)?, f(1.0)?);
        let d = (plus - minus) / (2.0 * self.h * dx);
        let noise = 1e-9 * base.abs().max(1.0) / (self.h * dx);
        Ok((d, noise))
    }
}

/// Estimate `k1..k12` at the operating point by central differences with
/// relative step `rel_step`. A derivative whose sign contradicts its edge
/// beyond round-off is reported as [`Error::SignViolation`].
pub fn linearize(model: &Model, point: &OperatingPoint, rel_step: f64) -> Result<Linearization> {
    if !(rel_step > 0.0 && rel_step < 0.5) {
        return Err(Error::InvalidArgument(format!("rel_step must be in (0, 0.5), got {rel_step}")));
    }
    let eq = &point.equilibrium;
    let p = model.params();
    let probe = Probe {
        model,
        point,
        car: eq.split.car(),
        h: rel_step,
    };
    let fleet = probe.fleet();
    if !(fleet > 0.0) {
        return Err(Error::InvalidArgument("linearisation needs a positive SAV fleet".into()));
    }
    let g_s = eq.split.total_sav();
    let s_vkm = probe.vkm(&eq.split.sav);
    let h_vkm = probe.vkm(&eq.split.hv);
    let wait = probe.generalised(&eq.perceived);
    let tt = probe.mean_time(&eq.road_times);
    let trip = eq.sav_trip_minutes;
    let wait_step = wait.max(1.0);
    let mut d = [0.0; 13];
    let mut noise = [0.0; 13];

    (d[1], noise[1]) = probe.central(fleet, |f| probe.wait(g_s, fleet * f, trip))?;
    (d[3], noise[3]) = probe.central(s_vkm, |f| probe.wait(g_s * f, fleet, trip))?;
    (d[8], noise[8]) = probe.central(tt, |f| probe.wait(g_s, fleet, trip * f))?;

    let raw_wait = eq.perceived.wait;
    let by_wait = |f: f64| probe.split(&eq.road_times, raw_wait + (f - 1.0) * wait_step);
    (d[2], noise[2]) = probe.central(wait_step, |f| Ok(probe.vkm(&by_wait(f)?.sav)))?;
    (d[11], noise[11]) = probe.central(wait_step, |f| Ok(probe.vkm(&by_wait(f)?.hv)))?;

    let by_time = |f: f64| probe.split(&scaled(&eq.road_times, f), raw_wait);
    (d[5], noise[5]) = probe.central(tt, |f| Ok(probe.vkm(&by_time(f)?.sav)))?;
    (d[9], noise[9]) = probe.central(tt, |f| Ok(probe.vkm(&by_time(f)?.hv)))?;

    let car_vkm = probe.vkm(&probe.car);
    (d[4], noise[4]) = probe.central(car_vkm, |f| {
        Ok(probe.mean_time(&model.road_times(&scaled(&probe.car, f), &eq.capacities)?))
    })?;

    // SAV demand acts on travel time through capacity only at fixed car
    // demand; k7 is that effect per unit of mean-capacity change.
    let capacities_at = |f: f64| {
        let split = ModeSplit {
            sav: scaled(&eq.split.sav, f),
            ..eq.split.clone()
        };
        model.capacities(&model.link_flows(&split))
    };
    let mean_capacity = |c: &[f64]| c.iter().sum::<f64>() / c.len() as f64;
    (d[6], noise[6]) = probe.central(s_vkm, |f| Ok(mean_capacity(&capacities_at(f))))?;
    let (tt_by_sav, tt_noise) = probe.central(s_vkm, |f| {
        Ok(probe.mean_time(&model.road_times(&probe.car, &capacities_at(f))?))
    })?;
    if d[6].abs() > noise[6] {
        d[7] = tt_by_sav / d[6];
        noise[7] = tt_noise / d[6].abs();
    } else {
        let k_mean = mean_capacity(&eq.capacities);
        (d[7], noise[7]) = probe.central(k_mean, |f| {
            Ok(probe.mean_time(&model.road_times(&probe.car, &scaled(&eq.capacities, f))?))
        })?;
    }

    let previous = &point.previous;
    (d[12], noise[12]) = probe.central(h_vkm, |f| {
        let vkm = hv_vkm(&scaled(&eq.split.hv, f), model.road_distances(), p.working_hours);
        let stock = hv_stock_step(&previous.hv_stock, vkm, p)?;
        Ok(impacts::emissions(&stock, &p.emission_factors, p.annual_mileage))
    })?;

    let mut gains = GainSet::from_pairs(&[]);
    for &(_, _, index, sign) in &EDGES {
        let k = sign as f64 * d[index];
        if k < -noise[index] {
            return Err(Error::SignViolation { index, value: k });
        }
        gains.set(index, k.max(0.0));
    }
    Ok(Linearization { gains, derivatives: d })
}

/// Emission response of the full yearly step to a relative change of the
/// SAV stock: `(E(S (1 + rel)) - E(S)) / (S rel)` in t/y per vehicle.
pub fn simulated_response(model: &Model, point: &OperatingPoint, rel: f64) -> Result<f64> {
    let fleet = point.current.sav_fleet;
    let extra = fleet * rel;
    let (_, base) = model.step_year(&point.previous, point.u)?;
    let (_, bumped) = model.step_year(&point.previous, point.u + extra)?;
    Ok((bumped.e - base.e) / extra)
}
