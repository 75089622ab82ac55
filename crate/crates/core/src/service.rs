//! SAV level of service and rail access/egress.
//!
//! SAV waiting time comes from a finite-population M/M/s queue (the
//! machine-repair model): `N` potential customers each request a ride at
//! rate `lambda` while idle, and `s` vehicles serve at rate `mu` each.

use crate::error::{Error, Result};
use crate::params::ParamSet;

/// Steady-state summary of a finite-population queue.
#[derive(Clone, Debug, PartialEq)]
pub struct QueueStats {
    /// State probabilities `p_0..p_N`.
    pub probabilities: Vec<f64>,
    /// Mean number waiting for a server.
    pub mean_queue: f64,
    /// Mean arrival rate of requests (1/h).
    pub effective_arrival: f64,
    /// Mean wait before service (h).
    pub wait_hours: f64,
}

/// Solve the birth-death chain with birth rate `(N - n) lambda` and death
/// rate `min(n, s) mu`. `servers` may be fractional, which keeps the wait
/// continuous in fleet size.
pub fn finite_population_queue(
    servers: f64,
    population: usize,
    request_rate: f64,
    service_rate: f64,
) -> Result<QueueStats> {
    if !(servers >= 0.0) || !(request_rate >= 0.0) || !(service_rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "queue needs s >= 0, lambda >= 0, mu > 0 (got {servers}, {request_rate}, {service_rate})"
        )));
    }
    if servers == 0.0 {
        return Err(Error::InvalidArgument("queue without servers has no steady state".into()));
    }
    let n_max = population;
    // unnormalised weights from the ratio recurrence, rescaled whenever
    // they approach overflow
    let mut p = Vec::with_capacity(n_max + 1);
    p.push(1.0);
    let mut w = 1.0;
    for n in 1..=n_max {
        let birth = (n_max - n + 1) as f64 * request_rate;
        let death = (n as f64).min(servers) * service_rate;
        w *= birth / death;
        if w > 1e250 {
            p.iter_mut().for_each(|x| *x *= 1e-250);
            w *= 1e-250;
        }
        p.push(w);
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);

    let mut mean_queue = 0.0;
    let mut effective_arrival = 0.0;
    for (n, &pn) in p.iter().enumerate() {
        mean_queue += (n as f64 - servers).max(0.0) * pn;
        effective_arrival += (n_max - n) as f64 * request_rate * pn;
    }
    let wait_hours = if effective_arrival > 0.0 {
        mean_queue / effective_arrival
    } else {
        0.0
    };
    Ok(QueueStats {
        probabilities: p,
        mean_queue,
        effective_arrival,
        wait_hours,
    })
}

/// Mean wait (h) of the same chain as [`finite_population_queue`],
/// accumulated in one pass without storing the distribution.
fn queue_wait_hours(servers: f64, population: usize, request_rate: f64, service_rate: f64) -> f64 {
    let n_max = population as f64;
    // the ratio of the two sums needs no normalisation
    let (mut w, mut queue, mut arrivals) = (1.0, 0.0, n_max * request_rate);
    for n in 1..=population {
        let k = n as f64;
        w *= (n_max - k + 1.0) * request_rate / (k.min(servers) * service_rate);
        if w > 1e250 {
            w *= 1e-250;
            queue *= 1e-250;
            arrivals *= 1e-250;
        }
        queue += (k - servers).max(0.0) * w;
        arrivals += (n_max - k) * request_rate * w;
    }
    if arrivals > 0.0 {
        queue / arrivals
    } else {
        0.0
    }
}

/// How SAV demand maps onto the queue.
#[derive(Clone, Debug, PartialEq)]
pub struct QueueSettings {
    /// Potential customers per unit of demand in the system.
    pub population_factor: f64,
    /// Hours between requests of an idle customer.
    pub request_cycle: f64,
    /// Empty drive to the customer added to each trip (min).
    pub pickup_overhead: f64,
    /// Wait reported when the fleet is empty or saturated (min).
    pub wait_cap: f64,
}

impl QueueSettings {
    pub fn from_params(p: &ParamSet) -> Self {
        Self {
            population_factor: p.population_factor,
            request_cycle: p.request_cycle,
            pickup_overhead: p.pickup_overhead,
            wait_cap: p.sav_wait_cap,
        }
    }
}

/// Mean SAV waiting time (min) for total SAV demand `g_s` (pax/h), fleet
/// `fleet` (veh) and mean trip time `trip_minutes`.
///
/// The customer population `g_s * trip_hours * population_factor` is
/// generally fractional; the wait is interpolated linearly between the two
/// neighbouring integer populations.
pub fn sav_wait_time(g_s: f64, fleet: f64, trip_minutes: f64, settings: &QueueSettings) -> Result<f64> {
    if !(g_s >= 0.0) || !(fleet >= 0.0) || !(trip_minutes >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "SAV wait needs non-negative inputs (demand {g_s}, fleet {fleet}, trip {trip_minutes})"
        )));
    }
    if g_s == 0.0 {
        return Ok(0.0);
    }
    if fleet == 0.0 {
        return Ok(settings.wait_cap);
    }
    let population = g_s * trip_minutes / 60.0 * settings.population_factor;
    let lambda = 1.0 / settings.request_cycle;
    let mu = 60.0 / (trip_minutes + settings.pickup_overhead);
    let lower = population.floor();
    let weight = population - lower;
    let wait = |n: f64| -> Result<f64> {
        if n <= fleet {
            return Ok(0.0);
        }
        Ok(queue_wait_hours(fleet, n as usize, lambda, mu) * 60.0)
    };
    let w = if weight > 0.0 {
        (1.0 - weight) * wait(lower)? + weight * wait(lower + 1.0)?
    } else {
        wait(lower)?
    };
    Ok(w.min(settings.wait_cap))
}

/// Annual km demanded per SAV relative to the benchmark mileage.
pub fn utilisation(
    g_s: f64,
    fleet: f64,
    benchmark_mileage: f64,
    mean_trip_km: f64,
    working_hours: f64,
) -> Result<f64> {
    if !(fleet > 0.0) {
        return Err(Error::InvalidArgument("utilisation is undefined without a fleet".into()));
    }
    Ok(g_s * mean_trip_km * working_hours / fleet / benchmark_mileage)
}

/// Constant-elasticity cost factor `U^-eps` with clamps.
#[derive(Clone, Debug, PartialEq)]
pub struct CobbDouglas {
    pub elasticity: f64,
    pub utilisation_floor: f64,
    pub ceiling: f64,
    pub min_fraction: f64,
}

impl CobbDouglas {
    pub fn customer(p: &ParamSet) -> Self {
        Self::with_elasticity(p, p.eps_customer)
    }

    pub fn operator(p: &ParamSet) -> Self {
        Self::with_elasticity(p, p.eps_operator)
    }

    fn with_elasticity(p: &ParamSet, elasticity: f64) -> Self {
        Self {
            elasticity,
            utilisation_floor: p.utilisation_floor,
            ceiling: p.cost_ceiling,
            min_fraction: p.cost_min_fraction,
        }
    }

    pub fn factor(&self, u: f64) -> f64 {
        u.max(self.utilisation_floor)
            .powf(-self.elasticity)
            .clamp(self.min_fraction, self.ceiling)
    }
}

/// SAV customer costs `(EUR/km, EUR)` at utilisation `u`.
pub fn sav_customer_costs(u: f64, base_op: f64, base_ae: f64, law: &CobbDouglas) -> (f64, f64) {
    let f = law.factor(u);
    (base_op * f, base_ae * f)
}

/// One step of a first-order filter towards `raw`.
pub fn perceive(prev: f64, raw: f64, tau: f64, dt: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("filter time constant must be > 0, got {tau}")));
    }
    Ok(prev + dt / tau * (raw - prev))
}

/// Perceived SAV service: waiting time (min) and customer costs.
#[derive(Clone, Debug, PartialEq)]
pub struct SavServiceState {
    pub wait: f64,
    pub cost_op: f64,
    pub cost_ae: f64,
}

impl SavServiceState {
    /// Filter every component towards the raw values.
    pub fn perceive(&self, raw: &SavServiceState, tau: f64, dt: f64) -> Result<Self> {
        Ok(Self {
            wait: perceive(self.wait, raw.wait, tau, dt)?,
            cost_op: perceive(self.cost_op, raw.cost_op, tau, dt)?,
            cost_ae: perceive(self.cost_ae, raw.cost_ae, tau, dt)?,
        })
    }
}

/// Rail access/egress time (min): half the headway plus walking half the
/// station spacing at each end.
pub fn rail_access_egress(frequency: f64, station_spacing: f64, walk_speed: f64) -> Result<f64> {
    if !(frequency > 0.0) {
        return Err(Error::InvalidArgument(format!("rail frequency must be > 0, got {frequency}")));
    }
    let wait = 60.0 / (2.0 * frequency);
    let walk = 2.0 * 60.0 * (station_spacing / 2.0) / walk_speed;
    Ok(wait + walk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Stationary distribution from the generator matrix, with one balance
    /// equation replaced by normalisation.
    fn ctmc_wait(s: f64, n: usize, lambda: f64, mu: f64) -> f64 {
        let size = n + 1;
        let mut q = DMatrix::<f64>::zeros(size, size);
        for k in 0..size {
            if k < n {
                q[(k, k + 1)] = (n - k) as f64 * lambda;
            }
            if k > 0 {
                q[(k, k - 1)] = (k as f64).min(s) * mu;
            }
            let out: f64 = (0..size).filter(|&j| j != k).map(|j| q[(k, j)]).sum();
            q[(k, k)] = -out;
        }
        let mut a = q.transpose();
        let mut b = DVector::<f64>::zeros(size);
        for j in 0..size {
            a[(size - 1, j)] = 1.0;
        }
        b[size - 1] = 1.0;
        let p = a.lu().solve(&b).unwrap();
        let lq: f64 = (0..size).map(|k| (k as f64 - s).max(0.0) * p[k]).sum();
        let le: f64 = (0..size).map(|k| (n - k) as f64 * lambda * p[k]).sum();
        lq / le
    }

    fn settings() -> QueueSettings {
        QueueSettings {
            population_factor: 2.0,
            request_cycle: 1.0,
            pickup_overhead: 3.0,
            wait_cap: 60.0,
        }
    }

    #[test]
    fn small_chain_matches_balance_equations() {
        let q = finite_population_queue(2.0, 5, 0.5, 2.0).unwrap();
        assert!((q.wait_hours - ctmc_wait(2.0, 5, 0.5, 2.0)).abs() < 1e-8);
        assert!((q.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_chains_match_balance_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let s = rng.random_range(1..20) as f64;
            let n = rng.random_range(1..60);
            let lambda = rng.random_range(0.05..3.0);
            let mu = rng.random_range(0.2..5.0);
            let q = finite_population_queue(s, n, lambda, mu).unwrap();
            let oracle = ctmc_wait(s, n, lambda, mu);
            assert!((q.wait_hours - oracle).abs() < 1e-8, "s={s} n={n}: {} vs {oracle}", q.wait_hours);
        }
    }

    #[test]
    fn large_population_is_stable() {
        let q = finite_population_queue(800.0, 6000, 1.0, 3.0).unwrap();
        assert!(q.wait_hours.is_finite() && q.wait_hours > 0.0);
        assert!((q.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn streamed_wait_matches_full_solve() {
        for (s, n, l, m) in [(3.0, 40, 0.7, 1.1), (250.5, 4000, 10.0, 4.0), (10.0, 8, 1.0, 1.0)] {
            let full = finite_population_queue(s, n, l, m).unwrap().wait_hours;
            let streamed = queue_wait_hours(s, n, l, m);
            assert!((full - streamed).abs() <= 1e-12 * full.max(1e-3), "{full} vs {streamed}");
        }
    }

    #[test]
    fn empty_system_has_no_wait() {
        assert_eq!(sav_wait_time(0.0, 10.0, 15.0, &settings()).unwrap(), 0.0);
    }

    #[test]
    fn server_per_customer_has_no_wait() {
        // N = 100 * 0.25 h * 2 = 50 customers
        assert_eq!(sav_wait_time(100.0, 50.0, 15.0, &settings()).unwrap(), 0.0);
        assert_eq!(finite_population_queue(5.0, 5, 1.0, 1.0).unwrap().mean_queue, 0.0);
    }

    #[test]
    fn empty_fleet_gives_the_cap() {
        assert_eq!(sav_wait_time(10.0, 0.0, 15.0, &settings()).unwrap(), 60.0);
    }

    #[test]
    fn negative_inputs_are_rejected() {
        assert!(sav_wait_time(-1.0, 1.0, 1.0, &settings()).is_err());
        assert!(sav_wait_time(1.0, -1.0, 1.0, &settings()).is_err());
    }

    proptest! {
        #[test]
        fn wait_monotone_in_fleet_and_demand(
            g in 10.0f64..3000.0, s in 5.0f64..1500.0, ds in 0.5f64..50.0, dg in 0.5f64..100.0,
        ) {
            let st = settings();
            let w = sav_wait_time(g, s, 15.0, &st).unwrap();
            prop_assert!(sav_wait_time(g, s + ds, 15.0, &st).unwrap() <= w + 1e-12);
            prop_assert!(sav_wait_time(g + dg, s, 15.0, &st).unwrap() >= w - 1e-12);
        }

        #[test]
        fn queue_quantities_are_consistent(s in 1.0f64..30.0, n in 0usize..200, l in 0.01f64..4.0, m in 0.1f64..5.0) {
            let q = finite_population_queue(s, n, l, m).unwrap();
            prop_assert!((q.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(q.mean_queue >= 0.0 && q.effective_arrival >= 0.0);
        }

        #[test]
        fn costs_stay_within_clamps(u in 0.0f64..1e6, eps in 0.0f64..3.0) {
            let law = CobbDouglas { elasticity: eps, utilisation_floor: 0.1, ceiling: 2.0, min_fraction: 0.2 };
            let (op, ae) = sav_customer_costs(u, 0.5, 2.0, &law);
            prop_assert!((0.1 - 1e-15..=1.0 + 1e-15).contains(&op));
            prop_assert!((0.4 - 1e-15..=4.0 + 1e-15).contains(&ae));
        }

        #[test]
        fn filter_never_overshoots(prev in -100.0f64..100.0, raw in -100.0f64..100.0, tau in 1.0f64..10.0, frac in 0.0f64..1.0) {
            let dt = tau * frac;
            let x = perceive(prev, raw, tau, dt).unwrap();
            prop_assert!(x >= prev.min(raw) - 1e-12 && x <= prev.max(raw) + 1e-12);
        }
    }

    #[test]
    fn utilisation_cases() {
        // 10 pax/h * 5 km * 2000 h = 100000 km over 2 vehicles = benchmark
        assert!((utilisation(10.0, 2.0, 50000.0, 5.0, 2000.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(utilisation(0.0, 2.0, 50000.0, 5.0, 2000.0).unwrap(), 0.0);
        let a = utilisation(10.0, 2.0, 50000.0, 5.0, 2000.0).unwrap();
        let b = utilisation(10.0, 4.0, 50000.0, 5.0, 2000.0).unwrap();
        assert!((b - a / 2.0).abs() < 1e-15);
        assert!(utilisation(1.0, 0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn customer_cost_points() {
        let p = ParamSet::default();
        let law = CobbDouglas::customer(&p);
        assert_eq!(sav_customer_costs(1.0, p.c_s_c_op, p.c_s_c_ae, &law), (0.5, 2.0));
        let (op, _) = sav_customer_costs(2.0, 0.5, 2.0, &law);
        assert!((op - 0.5 * 2f64.powf(-0.3)).abs() < 1e-15);
        assert!((op - 0.406).abs() < 1e-3);
        assert_eq!(law.factor(0.01), law.factor(0.1));
    }

    #[test]
    fn filter_cases() {
        assert_eq!(perceive(3.0, 3.0, 2.0, 1.0).unwrap(), 3.0);
        assert_eq!(perceive(10.0, 4.0, 1.0, 1.0).unwrap(), 4.0);
        // constant input: error shrinks by 1 - dt/tau per step
        let (raw, tau, dt) = (5.0, 4.0, 1.0);
        let mut x = 1.0;
        for k in 1..=10 {
            x = perceive(x, raw, tau, dt).unwrap();
            let expected = raw + (1.0 - raw) * (1.0 - dt / tau).powi(k);
            assert!((x - expected).abs() < 1e-12);
        }
        assert!(perceive(0.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn rail_access_cases() {
        let walk = 2.0 * 60.0 * 0.4 / 4.5;
        assert!((rail_access_egress(30.0, 0.8, 4.5).unwrap() - (1.0 + walk)).abs() < 1e-12);
        assert!((walk - 10.6667).abs() < 1e-4);
        let w1 = rail_access_egress(10.0, 0.0, 4.5).unwrap();
        let w2 = rail_access_egress(5.0, 0.0, 4.5).unwrap();
        assert!((w2 - 2.0 * w1).abs() < 1e-12);
        assert!(rail_access_egress(0.0, 0.8, 4.5).is_err());
    }
}
