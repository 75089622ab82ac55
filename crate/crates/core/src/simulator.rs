//! Within-year equilibrium and the yearly forecast loop.
//!
//! [`Model`] holds everything fixed over a run: OD pairs, the affine road
//! and rail time models with their path sets, OD distances and the settings
//! derived from the parameters. [`SystemState`] carries what evolves.

use crate::error::{Error, Result};
use crate::impacts;
use crate::infrastructure::{link_capacities, Headways};
use crate::mode_choice::{self, mode_utility, Mode, ModeSplit, OdChoice, UtilitySpec};
use crate::network::{
    link_mode_flows, rail_path_set, solve_user_equilibrium, AffineTTModel, LinkFlows, OdPair,
    PathSet, UeOptions,
};
use crate::params::ParamSet;
use crate::scenario::Scenario;
use crate::service::{
    rail_access_egress, sav_customer_costs, sav_wait_time, utilisation, CobbDouglas, QueueSettings,
    SavServiceState,
};
use crate::stocks::{hv_stock_step, hv_vkm, rail_update, sav_stock_step, HvStock, RailSettings, RailState};

/// Evolving state between years.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    /// Calendar year of the last completed step (base year initially).
    pub year: i32,
    pub hv_stock: HvStock,
    /// veh
    pub sav_fleet: f64,
    pub rail: RailState,
    /// Perceived SAV service entering next year's choices.
    pub service: SavServiceState,
    /// Cumulative emissions (t).
    pub xi: f64,
    /// Last equilibrium split, used as the next warm start.
    pub split: ModeSplit,
}

/// Converged within-year values.
#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumPoint {
    pub split: ModeSplit,
    /// Road OD times (min).
    pub road_times: Vec<f64>,
    /// Rail in-vehicle OD times (min); NaN where rail does not serve.
    pub rail_times: Vec<f64>,
    pub link_flows: LinkFlows,
    /// Road link capacities (veh/h).
    pub capacities: Vec<f64>,
    /// Raw SAV wait and customer costs.
    pub raw_service: SavServiceState,
    /// Perceived values used in the utilities.
    pub perceived: SavServiceState,
    /// Rail access/egress time (min).
    pub rail_access: f64,
    /// SAV utilisation (0 without a fleet).
    pub utilisation: f64,
    /// Demand-weighted SAV trip time (min) and length (km).
    pub sav_trip_minutes: f64,
    pub sav_trip_km: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// One simulated year.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub year: i32,
    /// SAVs added (veh/y).
    pub u: f64,
    pub s_s: f64,
    pub s_r: f64,
    pub hv_stock: f64,
    pub hv_thermal: f64,
    pub hv_electric: f64,
    /// Total demand by mode (pax/h).
    pub g_h: f64,
    pub g_s: f64,
    pub g_r: f64,
    /// Mean OD times (min).
    pub t_road: f64,
    pub t_rail: f64,
    pub t_wait: f64,
    pub t_rail_ae: f64,
    /// veh/h
    pub f_r: f64,
    /// Mean road link capacity (veh/h).
    pub k_a: f64,
    /// pax/h
    pub k_r: f64,
    /// EUR/y
    pub c_s: f64,
    pub c_r: f64,
    /// t/y
    pub e: f64,
    /// t
    pub xi: f64,
    pub utilisation: f64,
    pub residual: f64,
    /// Equilibrium iterations used.
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forecast {
    pub records: Vec<TrajectoryRecord>,
    /// Sum of SAV and rail operator costs (EUR).
    pub total_cost: f64,
    /// Cumulative emissions at the horizon (t).
    pub xi: f64,
}

/// Time-invariant model built from a scenario.
#[derive(Clone, Debug)]
pub struct Model {
    params: ParamSet,
    base_year: i32,
    od: Vec<OdPair>,
    road_paths: PathSet,
    road_base_demand: Vec<f64>,
    road: AffineTTModel,
    rail: AffineTTModel,
    road_km: Vec<f64>,
    rail_km: Vec<f64>,
    rail_served: Vec<bool>,
    base_capacity: Vec<f64>,
    rail_link_count: usize,
    headways: Headways,
    spec: UtilitySpec,
    queue: QueueSettings,
    customer_law: CobbDouglas,
    rail_settings: RailSettings,
}

/// Inputs of the mode choice that the network does not supply.
#[derive(Clone, Debug)]
pub(crate) struct ChoiceContext<'a> {
    pub road_times: &'a [f64],
    pub rail_times: &'a [f64],
    pub rail_access: f64,
    pub service: &'a SavServiceState,
    pub sav_available: bool,
}

impl Model {
    /// Build the affine time models. Road paths come from a user equilibrium
    /// on car demand; car demand in turn comes from a first equilibrium on
    /// paths assigned with the total OD demand.
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let p = &scenario.params;
        let od = scenario.od_demand.clone();
        let ue = UeOptions {
            gap_tolerance: p.ue_gap_tolerance,
            max_iterations: p.ue_max_iterations,
            share_threshold: p.path_share_threshold,
            ..UeOptions::default()
        };
        let first = solve_user_equilibrium(&scenario.road_network, &od, &ue)?;
        let rail_link_count = scenario.rail_network.links.len();
        let floor_capacity = p.f_min * p.train_capacity;
        let draft = Self::assemble(
            scenario,
            first.path_set,
            od.iter().map(|p| p.demand).collect(),
            &first.link_flows,
            &vec![0.0; rail_link_count],
            floor_capacity,
        )?;
        let (state, eq) = draft.initial_conditions()?;

        let car: Vec<OdPair> = od
            .iter()
            .zip(eq.split.car())
            .map(|(p, g)| OdPair { demand: g, ..*p })
            .collect();
        let second = solve_user_equilibrium(&scenario.road_network, &car, &ue)?;
        let rail_flows = draft.rail.link_flows(&eq.split.rail);
        Self::assemble(
            scenario,
            second.path_set,
            car.iter().map(|p| p.demand).collect(),
            &second.link_flows,
            &rail_flows,
            state.rail.capacity,
        )
    }

    fn assemble(
        scenario: &Scenario,
        road_paths: PathSet,
        road_base_demand: Vec<f64>,
        road_flows: &[f64],
        rail_flows: &[f64],
        rail_capacity: f64,
    ) -> Result<Self> {
        let p = &scenario.params;
        let road_net = &scenario.road_network;
        let n_road = road_net.links.len();
        let base_capacity = road_net.capacities();
        let road = AffineTTModel::build(
            road_net.free_flow_times(),
            &road_net.links.iter().map(|l| l.alpha).collect::<Vec<_>>(),
            road_net.links.iter().map(|l| l.beta).collect(),
            &road_paths,
            road_flows,
            &base_capacity,
        )?;
        let road_lengths: Vec<f64> = road_net.links.iter().map(|l| l.length).collect();
        let road_km = road_paths.od_lengths(&road_lengths);

        let rail_net = &scenario.rail_network;
        let n_rail = rail_net.links.len();
        let rail_paths = rail_path_set(rail_net, &scenario.od_demand, p.commercial_speed);
        let rail = AffineTTModel::build(
            rail_net.free_flow_times(p.commercial_speed),
            &vec![p.rail_bpr_alpha; n_rail],
            vec![p.rail_bpr_beta; n_rail],
            &rail_paths,
            rail_flows,
            &vec![rail_capacity; n_rail],
        )?;
        let rail_lengths: Vec<f64> = rail_net.links.iter().map(|l| l.length).collect();
        let rail_km = rail_paths.od_lengths(&rail_lengths);
        let rail_served = (0..scenario.od_demand.len()).map(|i| rail_paths.serves(i)).collect();
        debug_assert_eq!(road.link_count(), n_road);

        Ok(Self {
            params: p.clone(),
            base_year: scenario.base_year,
            od: scenario.od_demand.clone(),
            road_paths,
            road_base_demand,
            road,
            rail,
            road_km,
            rail_km,
            rail_served,
            base_capacity,
            rail_link_count: n_rail,
            headways: Headways::from_params(p),
            spec: UtilitySpec::from_params(p),
            queue: QueueSettings::from_params(p),
            customer_law: CobbDouglas::customer(p),
            rail_settings: RailSettings::new(p, scenario.rail_line_count(), scenario.rail_line_length()),
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn od_pairs(&self) -> &[OdPair] {
        &self.od
    }

    pub fn road_model(&self) -> &AffineTTModel {
        &self.road
    }

    pub fn rail_model(&self) -> &AffineTTModel {
        &self.rail
    }

    /// Car OD demand (veh/h) at which the road model was linearised.
    pub fn road_base_demand(&self) -> &[f64] {
        &self.road_base_demand
    }

    pub fn road_paths(&self) -> &PathSet {
        &self.road_paths
    }

    /// Road distance per OD (km).
    pub fn road_distances(&self) -> &[f64] {
        &self.road_km
    }

    pub fn rail_settings(&self) -> &RailSettings {
        &self.rail_settings
    }

    pub fn headways(&self) -> &Headways {
        &self.headways
    }

    pub fn base_capacities(&self) -> &[f64] {
        &self.base_capacity
    }

    // ---- sub-models ------------------------------------------------------

    pub(crate) fn link_flows(&self, split: &ModeSplit) -> LinkFlows {
        link_mode_flows(&self.road_paths, self.base_capacity.len(), &split.hv, &split.sav)
    }

    pub(crate) fn capacities(&self, flows: &LinkFlows) -> Vec<f64> {
        link_capacities(&flows.sav, &flows.hv, &self.base_capacity, &self.headways)
    }

    pub(crate) fn road_times(&self, car: &[f64], capacities: &[f64]) -> Result<Vec<f64>> {
        self.road.od_travel_times(car, capacities)
    }

    pub(crate) fn rail_times(&self, rail_demand: &[f64], rail: &RailState) -> Result<Vec<f64>> {
        self.rail
            .od_travel_times(rail_demand, &vec![rail.capacity; self.rail_link_count])
    }

    pub(crate) fn rail_access(&self, rail: &RailState) -> Result<f64> {
        rail_access_egress(rail.frequency, self.params.station_spacing, self.params.walk_speed)
    }

    /// Raw SAV wait and customer costs for total SAV demand `g_s`.
    pub(crate) fn raw_service(
        &self,
        g_s: f64,
        fleet: f64,
        trip_minutes: f64,
        trip_km: f64,
    ) -> Result<(SavServiceState, f64)> {
        let p = &self.params;
        let wait = if fleet > 0.0 {
            sav_wait_time(g_s, fleet, trip_minutes, &self.queue)?
        } else {
            self.queue.wait_cap
        };
        let u = if fleet > 0.0 {
            utilisation(g_s, fleet, p.benchmark_mileage, trip_km, p.working_hours)?
        } else {
            0.0
        };
        let (cost_op, cost_ae) = if fleet > 0.0 {
            sav_customer_costs(u, p.c_s_c_op, p.c_s_c_ae, &self.customer_law)
        } else {
            (p.c_s_c_op, p.c_s_c_ae)
        };
        Ok((SavServiceState { wait, cost_op, cost_ae }, u))
    }

    pub(crate) fn perceived(&self, prev: &SavServiceState, raw: &SavServiceState) -> Result<SavServiceState> {
        prev.perceive(raw, self.params.filter_tau, self.params.dt)
    }

    /// Mode split for given level of service.
    pub(crate) fn choose(&self, ctx: &ChoiceContext) -> Result<ModeSplit> {
        let p = &self.params;
        let choices: Vec<OdChoice> = (0..self.od.len())
            .map(|i| {
                let d_road = self.road_km[i];
                let t_road = ctx.road_times[i];
                let u_h = mode_utility(Mode::Hv, d_road, t_road, p.hv_access_time, p.c_h_c_op, p.c_h_c_ae, &self.spec);
                let u_s = mode_utility(
                    Mode::Sav,
                    d_road,
                    t_road,
                    ctx.service.wait,
                    ctx.service.cost_op,
                    ctx.service.cost_ae,
                    &self.spec,
                );
                let u_r = if self.rail_served[i] {
                    mode_utility(
                        Mode::Rail,
                        self.rail_km[i],
                        ctx.rail_times[i],
                        ctx.rail_access,
                        p.c_r_c_op,
                        p.c_r_c_ae,
                        &self.spec,
                    )
                } else {
                    0.0
                };
                OdChoice {
                    demand: self.od[i].demand,
                    utilities: [u_h, u_s, u_r],
                    rail_available: self.rail_served[i],
                }
            })
            .collect();
        mode_choice::split_demand(&choices, &p.x_i, self.spec.nest_lambda, ctx.sav_available)
    }

    /// Demand-weighted mean SAV trip time and length. Car demand supplies
    /// the weights while SAV demand is zero.
    pub(crate) fn sav_trip(&self, split: &ModeSplit, road_times: &[f64]) -> (f64, f64) {
        let sav_total = split.total_sav();
        let weights: Vec<f64> = if sav_total > 0.0 {
            split.sav.clone()
        } else {
            let car = split.car();
            if car.iter().sum::<f64>() > 0.0 {
                car
            } else {
                self.od.iter().map(|p| p.demand.max(1.0)).collect()
            }
        };
        let total: f64 = weights.iter().sum();
        let mut minutes = 0.0;
        let mut km = 0.0;
        for i in 0..weights.len() {
            minutes += weights[i] * road_times[i];
            km += weights[i] * self.road_km[i];
        }
        (minutes / total, km / total)
    }

    // ---- equilibrium -----------------------------------------------------

    /// Solve the within-year equilibrium for the state's SAV fleet, rail
    /// service and filter states, starting from the state's split.
    pub fn solve_year_equilibrium(&self, state: &SystemState) -> Result<EquilibriumPoint> {
        let p = &self.params;
        let fleet = state.sav_fleet;
        let rail_access = self.rail_access(&state.rail)?;
        let mut x = state.split.clone();
        // full steps while they contract, the configured damping otherwise
        let mut gamma = 1.0;
        let mut residual = f64::INFINITY;
        let mut hint = None;
        for iteration in 1..=p.equilibrium_max_iter {
            let inner = self.respond(&x, fleet, &state.rail, rail_access, &state.service, hint)?;
            let change = max_relative_change(&x, &inner.split);
            if change <= p.equilibrium_tolerance {
                let mut eq = self.evaluate(&inner.split, fleet, &state.rail, rail_access, &state.service)?;
                eq.residual = change;
                eq.iterations = iteration;
                return Ok(eq);
            }
            if change > 0.9 * residual {
                gamma = p.equilibrium_damping;
            }
            residual = change;
            hint = Some(inner.split.total_sav());
            x = blend(&x, &inner.split, gamma);
        }
        Err(Error::NonConvergence {
            what: "year equilibrium",
            iterations: p.equilibrium_max_iter,
            residual,
        })
    }

    /// One application of the equilibrium map: network and rail times at
    /// split `x`, then the mode split consistent with its own SAV demand.
    fn respond(
        &self,
        x: &ModeSplit,
        fleet: f64,
        rail: &RailState,
        rail_access: f64,
        prev: &SavServiceState,
        hint: Option<f64>,
    ) -> Result<EquilibriumPoint> {
        let flows = self.link_flows(x);
        let capacities = self.capacities(&flows);
        let road_times = self.road_times(&x.car(), &capacities)?;
        let rail_times = self.rail_times(&x.rail, rail)?;
        let (trip_minutes, trip_km) = self.sav_trip(x, &road_times);
        let sav_available = fleet > 0.0;

        let at = |g: f64| -> Result<(ModeSplit, SavServiceState, SavServiceState, f64)> {
            let (raw, u) = self.raw_service(g, fleet, trip_minutes, trip_km)?;
            let perceived = self.perceived(prev, &raw)?;
            let split = self.choose(&ChoiceContext {
                road_times: &road_times,
                rail_times: &rail_times,
                rail_access,
                service: &perceived,
                sav_available,
            })?;
            Ok((split, raw, perceived, u))
        };

        let g = if sav_available {
            let upper: f64 = self.od.iter().map(|p| p.demand).sum();
            solve_scalar_fixed_point(|g| Ok(at(g)?.0.total_sav()), upper, hint)?
        } else {
            0.0
        };
        let (split, raw, perceived, u) = at(g)?;
        Ok(EquilibriumPoint {
            split,
            road_times,
            rail_times,
            link_flows: flows,
            capacities,
            raw_service: raw,
            perceived,
            rail_access,
            utilisation: u,
            sav_trip_minutes: trip_minutes,
            sav_trip_km: trip_km,
            residual: f64::NAN,
            iterations: 0,
        })
    }

    /// Level of service at a converged split, reported consistently with
    /// that split.
    fn evaluate(
        &self,
        split: &ModeSplit,
        fleet: f64,
        rail: &RailState,
        rail_access: f64,
        prev: &SavServiceState,
    ) -> Result<EquilibriumPoint> {
        let flows = self.link_flows(split);
        let capacities = self.capacities(&flows);
        let road_times = self.road_times(&split.car(), &capacities)?;
        let rail_times = self.rail_times(&split.rail, rail)?;
        let (trip_minutes, trip_km) = self.sav_trip(split, &road_times);
        let (raw, u) = self.raw_service(split.total_sav(), fleet, trip_minutes, trip_km)?;
        let perceived = self.perceived(prev, &raw)?;
        Ok(EquilibriumPoint {
            split: split.clone(),
            road_times,
            rail_times,
            link_flows: flows,
            capacities,
            raw_service: raw,
            perceived,
            rail_access,
            utilisation: u,
            sav_trip_minutes: trip_minutes,
            sav_trip_km: trip_km,
            residual: f64::NAN,
            iterations: 0,
        })
    }

    // ---- yearly dynamics -------------------------------------------------

    fn initial_service(&self) -> SavServiceState {
        SavServiceState {
            wait: self.params.sav_wait_cap,
            cost_op: self.params.c_s_c_op,
            cost_ae: self.params.c_s_c_ae,
        }
    }

    /// Base-year state and equilibrium: no SAVs, rail service matched to its
    /// own demand, HV stock sized to the HV mileage.
    fn initial_conditions(&self) -> Result<(SystemState, EquilibriumPoint)> {
        let p = &self.params;
        let mut rail = rail_update(0.0, &self.rail_settings);
        let mut state = SystemState {
            year: self.base_year,
            hv_stock: HvStock::empty(),
            sav_fleet: 0.0,
            rail: rail.clone(),
            service: self.initial_service(),
            xi: 0.0,
            split: self.initial_split(),
        };
        let mut last = f64::INFINITY;
        for _ in 0..p.equilibrium_max_iter {
            let eq = self.solve_year_equilibrium(&state)?;
            rail = rail_update(eq.split.total_rail(), &self.rail_settings);
            let change = (rail.frequency - state.rail.frequency).abs() / rail.frequency;
            state.rail = rail.clone();
            state.split = eq.split.clone();
            if change <= p.equilibrium_tolerance {
                let eq = self.solve_year_equilibrium(&state)?;
                let vkm = hv_vkm(&eq.split.hv, &self.road_km, p.working_hours);
                state.hv_stock = HvStock::initial(vkm, p);
                state.split = eq.split.clone();
                return Ok((state, eq));
            }
            last = change;
        }
        Err(Error::NonConvergence {
            what: "initial rail service",
            iterations: p.equilibrium_max_iter,
            residual: last,
        })
    }

    fn initial_split(&self) -> ModeSplit {
        let mut split = ModeSplit::zeros(self.od.len());
        for (i, p) in self.od.iter().enumerate() {
            split.hv[i] = p.demand;
        }
        split
    }

    pub fn initial_state(&self) -> Result<SystemState> {
        self.initial_conditions().map(|(s, _)| s)
    }

    /// Advance one year with `u` SAVs added.
    pub fn step_year(&self, state: &SystemState, u: f64) -> Result<(SystemState, TrajectoryRecord)> {
        let year = state.year + 1;
        self.step_inner(state, u).map_err(|e| e.in_year(year))
    }

    fn step_inner(&self, state: &SystemState, u: f64) -> Result<(SystemState, TrajectoryRecord)> {
        let p = &self.params;
        let mut next = state.clone();
        next.year = state.year + 1;
        next.sav_fleet = sav_stock_step(state.sav_fleet, u, p.sav_survival)?;
        let eq = self.solve_year_equilibrium(&next)?;
        next.service = eq.perceived.clone();
        next.split = eq.split.clone();
        next.rail = rail_update(eq.split.total_rail(), &self.rail_settings);
        let vkm = hv_vkm(&eq.split.hv, &self.road_km, p.working_hours);
        next.hv_stock = hv_stock_step(&state.hv_stock, vkm, p)?;

        let e = impacts::emissions(&next.hv_stock, &p.emission_factors, p.annual_mileage);
        next.xi = impacts::accumulate(state.xi, e, p.dt)?;
        let d_s = hv_vkm(&eq.split.sav, &self.road_km, p.working_hours);
        let c_s = impacts::sav_operator_cost(d_s, u, eq.utilisation, p);
        let d_r = self.rail_vkm(&next.rail);
        let c_r = impacts::rail_operator_cost(d_r, next.rail.stock, p);

        let record = TrajectoryRecord {
            year: next.year,
            u,
            s_s: next.sav_fleet,
            s_r: next.rail.stock,
            hv_stock: next.hv_stock.total(),
            hv_thermal: next.hv_stock.total_thermal(),
            hv_electric: next.hv_stock.total_electric(),
            g_h: eq.split.total_hv(),
            g_s: eq.split.total_sav(),
            g_r: eq.split.total_rail(),
            t_road: mean(eq.road_times.iter().copied()),
            t_rail: mean(eq.rail_times.iter().copied().filter(|t| !t.is_nan())),
            t_wait: eq.raw_service.wait,
            t_rail_ae: eq.rail_access,
            f_r: next.rail.frequency,
            k_a: mean(eq.capacities.iter().copied()),
            k_r: next.rail.capacity,
            c_s,
            c_r,
            e,
            xi: next.xi,
            utilisation: eq.utilisation,
            residual: eq.residual,
            iterations: eq.iterations,
        };
        Ok((next, record))
    }

    /// Annual rail vehicle-km: trains per hour each way on every line.
    pub fn rail_vkm(&self, rail: &RailState) -> f64 {
        let s = &self.rail_settings;
        rail.frequency * self.params.working_hours * 2.0 * s.line_count * s.line_length
    }

    /// Run the policy from the initial state.
    pub fn forecast(&self, policy: &[f64]) -> Result<Forecast> {
        self.forecast_from(&self.initial_state()?, policy)
    }

    pub fn forecast_from(&self, initial: &SystemState, policy: &[f64]) -> Result<Forecast> {
        let mut state = initial.clone();
        let mut records = Vec::with_capacity(policy.len());
        for &u in policy {
            let (next, record) = self.step_year(&state, u)?;
            records.push(record);
            state = next;
        }
        let total_cost = records.iter().map(|r| r.c_s + r.c_r).sum();
        Ok(Forecast {
            records,
            total_cost,
            xi: state.xi,
        })
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn blend(x: &ModeSplit, y: &ModeSplit, gamma: f64) -> ModeSplit {
    let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(a, b)| (1.0 - gamma) * a + gamma * b).collect()
    };
    ModeSplit {
        hv: mix(&x.hv, &y.hv),
        sav: mix(&x.sav, &y.sav),
        rail: mix(&x.rail, &y.rail),
    }
}

/// Largest change relative to max(|x|, 1 pax/h) over all OD/mode entries.
pub(crate) fn max_relative_change(x: &ModeSplit, y: &ModeSplit) -> f64 {
    let mut worst: f64 = 0.0;
    for m in Mode::ALL {
        for (a, b) in x.get(m).iter().zip(y.get(m)) {
            worst = worst.max((b - a).abs() / a.abs().max(1.0));
        }
    }
    worst
}

/// Solve `phi(g) = g` on `[0, upper]` where `phi(0) >= 0` and
/// `phi(upper) <= upper`, by the Illinois variant of regula falsi. A `hint`
/// near the root seeds a narrow bracket that is widened until it holds a
/// sign change.
pub(crate) fn solve_scalar_fixed_point(
    mut phi: impl FnMut(f64) -> Result<f64>,
    upper: f64,
    hint: Option<f64>,
) -> Result<f64> {
    let mut h = |g: f64| -> Result<f64> { Ok(phi(g)? - g) };
    let (mut a, mut fa, mut b, mut fb);
    match hint.filter(|&g| g > 0.0 && g < upper) {
        Some(g) => {
            let fg = h(g)?;
            if fg == 0.0 {
                return Ok(g);
            }
            let mut width = 1e-3 * g.max(1.0);
            loop {
                // step away from g in the direction of the root
                let c = if fg > 0.0 { (g + width).min(upper) } else { (g - width).max(0.0) };
                let fc = h(c)?;
                if (fc > 0.0) != (fg > 0.0) || fc == 0.0 || c == 0.0 || c == upper {
                    if fg > 0.0 {
                        (a, fa, b, fb) = (g, fg, c, fc);
                    } else {
                        (a, fa, b, fb) = (c, fc, g, fg);
                    }
                    break;
                }
                width *= 4.0;
            }
        }
        None => {
            (a, b) = (0.0, upper);
            fa = h(a)?;
            fb = h(b)?;
        }
    }
    if fa <= 0.0 {
        return Ok(a);
    }
    if fb >= 0.0 {
        return Ok(b);
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = h(c)?;
        if fc == 0.0 || (b - a) <= 1e-13 * upper.max(1.0) || fc.abs() <= 1e-13 * c.max(1.0) {
            return Ok(c);
        }
        if fc > 0.0 {
            a = c;
            fa = fc;
            if side == -1 {
                fb /= 2.0;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa /= 2.0;
            }
            side = 1;
        }
    }
    Ok((a * fb - b * fa) / (fb - fa))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_fixed_point_on_a_line() {
        // phi(g) = 100 - g has its fixed point at 50
        let g = solve_scalar_fixed_point(|g| Ok(100.0 - g), 1000.0, None).unwrap();
        assert!((g - 50.0).abs() < 1e-9);
    }

    #[test]
    fn scalar_fixed_point_at_zero() {
        assert_eq!(solve_scalar_fixed_point(|_| Ok(0.0), 10.0, None).unwrap(), 0.0);
    }

    #[test]
    fn scalar_fixed_point_steep_map() {
        // a queue-like response: flat then collapsing past capacity
        let phi = |g: f64| Ok(800.0 / (1.0 + ((g - 300.0) / 2.0).exp()));
        let g = solve_scalar_fixed_point(phi, 5000.0, None).unwrap();
        assert!((phi(g).unwrap() - g).abs() < 1e-8);
        for hint in [1.0, 290.0, 310.0, 4999.0] {
            let w = solve_scalar_fixed_point(phi, 5000.0, Some(hint)).unwrap();
            assert!((w - g).abs() < 1e-8, "hint {hint}: {w} vs {g}");
        }
    }

    #[test]
    fn relative_change_uses_unit_floor() {
        let a = ModeSplit { hv: vec![0.0, 100.0], sav: vec![0.0; 2], rail: vec![0.0; 2] };
        let b = ModeSplit { hv: vec![0.5, 101.0], sav: vec![0.0; 2], rail: vec![0.0; 2] };
        assert_eq!(max_relative_change(&a, &b), 0.5);
    }
}
