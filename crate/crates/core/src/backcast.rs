//! Backcasting: the SAV introduction schedule that minimises operator cost
//! under a cap on cumulative emissions.
//!
//! Controls are relaxed to `[0, u_max]` and scaled to the unit box. An
//! augmented Lagrangian handles the terminal cap; each subproblem is solved
//! by projected gradient descent with forward-difference gradients,
//! Barzilai-Borwein step lengths and Armijo backtracking. Several starts are
//! screened briefly and the most promising one is refined. The best policy
//! seen that meets the cap is rounded to whole vehicles at the end.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::output::Table;
use crate::simulator::{Forecast, Model};

/// Total cost and cumulative emissions of a policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyOutcome {
    /// EUR
    pub total_cost: f64,
    /// t
    pub xi: f64,
}

/// Run the forecast for `policy` and return its totals.
pub fn evaluate_policy(model: &Model, policy: &[f64]) -> Result<PolicyOutcome> {
    if let Some(u) = policy.iter().find(|u| !(**u >= 0.0)) {
        return Err(Error::InvalidArgument(format!("policy entries must be >= 0, got {u}")));
    }
    let f = model.forecast(policy)?;
    Ok(PolicyOutcome {
        total_cost: f.total_cost,
        xi: f.xi,
    })
}

#[derive(Clone, Debug)]
pub struct BackcastProblem {
    /// Comparison policy; the default cap is its own cumulative emissions.
    pub reference: Vec<f64>,
    /// Cap on cumulative emissions (t); `None` uses the reference's value.
    pub cap: Option<f64>,
    /// veh/y
    pub u_max: f64,
}

impl BackcastProblem {
    pub fn constant(u: f64, years: usize, u_max: f64) -> Self {
        Self {
            reference: vec![u; years],
            cap: None,
            u_max,
        }
    }

    pub fn horizon(&self) -> usize {
        self.reference.len()
    }
}

#[derive(Clone, Debug)]
pub struct BackcastOptions {
    /// Number of starts: the reference, the zero policy, then seeded random
    /// policies.
    pub starts: usize,
    pub seed: u64,
    /// Forward-difference step (veh).
    pub fd_step: f64,
    /// Relative improvement below which a subproblem stops.
    pub tolerance: f64,
    /// Accepted relative excess of the cap.
    pub cap_tolerance: f64,
    /// Gradient iterations given to each start before refinement.
    pub screen_iterations: usize,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Budget of distinct forecasts.
    pub max_evaluations: usize,
    /// Wall-clock budget; when it binds the result depends on machine speed.
    pub time_budget: Option<Duration>,
    pub initial_penalty: f64,
}

impl Default for BackcastOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            seed: 42,
            fd_step: 1.0,
            tolerance: 1e-5,
            cap_tolerance: 5e-3,
            screen_iterations: 3,
            max_outer: 12,
            max_inner: 40,
            max_evaluations: 3000,
            time_budget: None,
            initial_penalty: 100.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub evaluations: usize,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Start index (0 = reference, 1 = zero) that was refined.
    pub refined_start: usize,
    /// `max(0, xi / cap - 1)` of the returned policy.
    pub violation: f64,
    /// `1 - cost / reference cost`
    pub improvement: f64,
    pub budget_exhausted: bool,
    pub multiplier: f64,
}

#[derive(Clone, Debug)]
pub struct BackcastSolution {
    /// veh/y, whole vehicles
    pub policy: Vec<f64>,
    pub total_cost: f64,
    pub xi: f64,
    pub cap: f64,
    pub reference: PolicyOutcome,
    pub diagnostics: Diagnostics,
}

/// Why an evaluation could not be made.
enum Halt {
    Budget,
    Model(Error),
}

impl From<Error> for Halt {
    fn from(e: Error) -> Self {
        Halt::Model(e)
    }
}

type Step<T> = std::result::Result<T, Halt>;

struct Evaluator<'a> {
    model: &'a Model,
    cap: f64,
    cost_scale: f64,
    u_max: f64,
    cache: HashMap<Vec<u64>, PolicyOutcome>,
    evaluations: usize,
    max_evaluations: usize,
    deadline: Option<Instant>,
    /// Cheapest evaluated policy within the cap.
    best: Option<(Vec<f64>, PolicyOutcome)>,
}

impl Evaluator<'_> {
    fn outcome(&mut self, v: &[f64]) -> Step<PolicyOutcome> {
        let u: Vec<f64> = v.iter().map(|x| x * self.u_max).collect();
        self.outcome_u(&u)
    }

    fn outcome_u(&mut self, u: &[f64]) -> Step<PolicyOutcome> {
        let key: Vec<u64> = u.iter().map(|x| x.to_bits()).collect();
        if let Some(o) = self.cache.get(&key) {
            return Ok(*o);
        }
        if self.evaluations >= self.max_evaluations || self.deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(Halt::Budget);
        }
        self.evaluations += 1;
        let o = evaluate_policy(self.model, u)?;
        self.cache.insert(key, o);
        if o.xi <= self.cap && self.best.as_ref().is_none_or(|(_, b)| o.total_cost < b.total_cost) {
            self.best = Some((u.to_vec(), o));
        }
        Ok(o)
    }

    fn cost(&self, o: &PolicyOutcome) -> f64 {
        o.total_cost / self.cost_scale
    }

    fn violation(&self, o: &PolicyOutcome) -> f64 {
        o.xi / self.cap - 1.0
    }
}

#[derive(Clone, Debug)]
struct Multipliers {
    lambda: f64,
    rho: f64,
}

impl Multipliers {
    fn merit(&self, f: f64, g: f64) -> f64 {
        let shifted = (self.lambda + self.rho * g).max(0.0);
        f + (shifted * shifted - self.lambda * self.lambda) / (2.0 * self.rho)
    }
}

/// One start: current iterate and its multiplier state.
#[derive(Clone, Debug)]
struct Run {
    v: Vec<f64>,
    mult: Multipliers,
    merit: f64,
    outer: usize,
    inner: usize,
    last_violation: f64,
    last_cost: f64,
    converged: bool,
}

fn project(v: &mut [f64]) {
    for x in v {
        *x = x.clamp(0.0, 1.0);
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Solver<'a, 'm> {
    eval: Evaluator<'m>,
    opts: &'a BackcastOptions,
}

impl Solver<'_, '_> {
    fn merit_at(&mut self, v: &[f64], m: &Multipliers) -> Step<f64> {
        let o = self.eval.outcome(v)?;
        Ok(m.merit(self.eval.cost(&o), self.eval.violation(&o)))
    }

    /// Forward differences in the unit box; backward at the upper bound.
    fn gradient(&mut self, v: &[f64], m: &Multipliers, at: f64) -> Step<Vec<f64>> {
        let h = self.opts.fd_step / self.eval.u_max;
        let mut grad = vec![0.0; v.len()];
        for t in 0..v.len() {
            let mut w = v.to_vec();
            let step = if v[t] + h <= 1.0 { h } else { -h };
            w[t] += step;
            grad[t] = (self.merit_at(&w, m)? - at) / step;
        }
        Ok(grad)
    }

    /// Projected gradient descent on the merit function.
    fn descend(&mut self, run: &mut Run, iterations: usize) -> Step<()> {
        let mut phi = self.merit_at(&run.v, &run.mult)?;
        let mut grad = self.gradient(&run.v, &run.mult, phi)?;
        let mut alpha = 0.1 / max_abs(&grad).max(1e-12);
        for _ in 0..iterations {
            run.inner += 1;
            let mut accepted = None;
            let mut a = alpha;
            for _ in 0..20 {
                let mut trial: Vec<f64> = run.v.iter().zip(&grad).map(|(x, g)| x - a * g).collect();
                project(&mut trial);
                let moved: Vec<f64> = trial.iter().zip(&run.v).map(|(x, y)| x - y).collect();
                if max_abs(&moved) < 1e-9 {
                    break;
                }
                let value = self.merit_at(&trial, &run.mult)?;
                if value <= phi + 1e-4 * dot(&grad, &moved) {
                    accepted = Some((trial, moved, value));
                    break;
                }
                a *= 0.5;
            }
            let Some((next, s, value)) = accepted else {
                run.converged = true;
                break;
            };
            let improvement = (phi - value) / phi.abs().max(1e-12);
            let next_grad = self.gradient(&next, &run.mult, value)?;
            let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            alpha = if sy > 0.0 { (dot(&s, &s) / sy).clamp(1e-8, 1e3) } else { 2.0 * a };
            run.v = next;
            grad = next_grad;
            phi = value;
            if improvement < self.opts.tolerance {
                run.converged = true;
                break;
            }
        }
        run.merit = phi;
        Ok(())
    }

    /// Multiplier and penalty update after a subproblem.
    fn update_multipliers(&mut self, run: &mut Run) -> Step<bool> {
        let o = self.eval.outcome(&run.v)?;
        let g = self.eval.violation(&o);
        let f = self.eval.cost(&o);
        run.outer += 1;
        run.mult.lambda = (run.mult.lambda + run.mult.rho * g).max(0.0);
        if g > 1e-4 && g > 0.25 * run.last_violation {
            run.mult.rho *= 10.0;
        }
        let settled = g <= 1e-4 && (f - run.last_cost).abs() <= self.opts.tolerance * f && run.converged;
        run.last_violation = g.max(0.0);
        run.last_cost = f;
        run.merit = run.mult.merit(f, g);
        Ok(settled)
    }

    fn refine(&mut self, run: &mut Run) -> Step<()> {
        while run.outer < self.opts.max_outer {
            run.converged = false;
            self.descend(run, self.opts.max_inner)?;
            if self.update_multipliers(run)? {
                break;
            }
        }
        Ok(())
    }
}

fn starts(problem: &BackcastProblem, opts: &BackcastOptions) -> Vec<Vec<f64>> {
    let n = problem.horizon();
    let mut list = vec![
        problem.reference.iter().map(|u| (u / problem.u_max).clamp(0.0, 1.0)).collect(),
        vec![0.0; n],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    while list.len() < opts.starts {
        list.push((0..n).map(|_| rng.random::<f64>()).collect());
    }
    list.truncate(opts.starts.max(1));
    list
}

/// Solve the backcasting problem. The returned policy meets the cap within
/// `cap_tolerance` and costs no more than the reference.
pub fn solve_backcast(model: &Model, problem: &BackcastProblem, opts: &BackcastOptions) -> Result<BackcastSolution> {
    if problem.reference.is_empty() {
        return Err(Error::InvalidArgument("reference policy is empty".into()));
    }
    if !(problem.u_max > 0.0) {
        return Err(Error::InvalidArgument(format!("u_max must be > 0, got {}", problem.u_max)));
    }
    if problem.reference.iter().any(|u| !(*u >= 0.0 && *u <= problem.u_max)) {
        return Err(Error::InvalidArgument("reference policy leaves [0, u_max]".into()));
    }
    let reference = evaluate_policy(model, &problem.reference)?;
    let cap = problem.cap.unwrap_or(reference.xi);
    if !(cap > 0.0) {
        return Err(Error::InvalidArgument(format!("emission cap must be > 0, got {cap}")));
    }
    if reference.xi > cap {
        return Err(Error::Infeasible(format!(
            "reference policy emits {:.6e} t, above the cap {cap:.6e} t",
            reference.xi
        )));
    }

    let mut solver = Solver {
        eval: Evaluator {
            model,
            cap,
            cost_scale: reference.total_cost,
            u_max: problem.u_max,
            cache: HashMap::new(),
            evaluations: 0,
            max_evaluations: opts.max_evaluations,
            deadline: opts.time_budget.map(|b| Instant::now() + b),
            best: None,
        },
        opts,
    };
    solver.eval.best = Some((problem.reference.clone(), reference));

    let mut runs: Vec<Run> = starts(problem, opts)
        .into_iter()
        .map(|v| Run {
            v,
            mult: Multipliers {
                lambda: 0.0,
                rho: opts.initial_penalty,
            },
            merit: f64::INFINITY,
            outer: 0,
            inner: 0,
            last_violation: f64::INFINITY,
            last_cost: f64::INFINITY,
            converged: false,
        })
        .collect();

    let mut budget_exhausted = false;
    let mut outcome = Ok(());
    for run in runs.iter_mut() {
        outcome = solver.descend(run, opts.screen_iterations);
        if outcome.is_err() {
            break;
        }
    }
    // the first start with the lowest merit wins ties
    let chosen = runs
        .iter()
        .enumerate()
        .fold(0, |best, (i, r)| if r.merit < runs[best].merit { i } else { best });
    let mut run = runs[chosen].clone();
    if outcome.is_ok() {
        outcome = solver.refine(&mut run);
    }
    match outcome {
        Ok(()) => {}
        Err(Halt::Budget) => budget_exhausted = true,
        Err(Halt::Model(e)) => return Err(e),
    }

    // whole vehicles, keeping the cap
    let (relaxed, _) = solver.eval.best.clone().expect("reference is feasible");
    let limit = cap * (1.0 + opts.cap_tolerance);
    let mut candidates: Vec<(Vec<f64>, PolicyOutcome)> = Vec::new();
    for rounded in [
        relaxed.iter().map(|u| u.round()).collect::<Vec<f64>>(),
        relaxed.iter().map(|u| u.ceil().min(problem.u_max.floor())).collect(),
    ] {
        let o = evaluate_policy(model, &rounded)?;
        if o.xi <= limit {
            candidates.push((rounded, o));
            break;
        }
    }
    candidates.push((problem.reference.iter().map(|u| u.round()).collect(), reference));
    let (policy, best) = candidates
        .into_iter()
        .filter(|(_, o)| o.xi <= limit)
        .min_by(|a, b| a.1.total_cost.total_cmp(&b.1.total_cost))
        .ok_or_else(|| Error::Infeasible("no policy within the cap was found".into()))?;
    // the reference may be fractional; its rounding is re-evaluated
    let best = if policy == problem.reference { best } else { evaluate_policy(model, &policy)? };
    if best.xi > limit {
        return Err(Error::Infeasible("rounded policy exceeds the cap".into()));
    }

    Ok(BackcastSolution {
        total_cost: best.total_cost,
        xi: best.xi,
        cap,
        reference,
        diagnostics: Diagnostics {
            evaluations: solver.eval.evaluations,
            outer_iterations: run.outer,
            inner_iterations: runs.iter().map(|r| r.inner).sum::<usize>() + run.inner - runs[chosen].inner,
            refined_start: chosen,
            violation: (best.xi / cap - 1.0).max(0.0),
            improvement: 1.0 - best.total_cost / reference.total_cost,
            budget_exhausted,
            multiplier: run.mult.lambda,
        },
        policy,
    })
}

/// Differences between a solution and the reference trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub cost_reference: f64,
    pub cost_solution: f64,
    /// EUR, solution minus reference
    pub cost_delta: f64,
    /// percent saving relative to the reference
    pub saving_percent: f64,
    pub xi_reference: f64,
    pub xi_solution: f64,
    pub xi_delta: f64,
    /// year, u reference, u solution, annual cost reference, annual cost
    /// solution, cumulative emissions reference, cumulative emissions solution
    pub years: Vec<(i32, f64, f64, f64, f64, f64, f64)>,
}

pub fn compare_to_reference(solution: &Forecast, reference: &Forecast) -> Comparison {
    let years = solution
        .records
        .iter()
        .zip(&reference.records)
        .map(|(s, r)| (s.year, r.u, s.u, r.c_s + r.c_r, s.c_s + s.c_r, r.xi, s.xi))
        .collect();
    Comparison {
        cost_reference: reference.total_cost,
        cost_solution: solution.total_cost,
        cost_delta: solution.total_cost - reference.total_cost,
        saving_percent: 100.0 * (1.0 - solution.total_cost / reference.total_cost),
        xi_reference: reference.xi,
        xi_solution: solution.xi,
        xi_delta: solution.xi - reference.xi,
        years,
    }
}

impl Comparison {
    pub fn yearly_table(&self) -> Table {
        let mut t = Table::new(&["year", "u_reference", "u_solution", "cost_reference", "cost_solution", "xi_reference", "xi_solution"]);
        for &(year, ur, us, cr, cs, xr, xs) in &self.years {
            t.push([year.to_string(), ur.to_string(), us.to_string(), cr.to_string(), cs.to_string(), xr.to_string(), xs.to_string()]);
        }
        t
    }

    pub fn summary(&self) -> String {
        format!(
            "reference cost (EUR): {}\nsolution cost (EUR): {}\ncost change (EUR): {}\nsaving (%): {:.4}\n\
             reference cumulative emissions (t): {}\nsolution cumulative emissions (t): {}\nemission change (t): {}\n",
            self.cost_reference,
            self.cost_solution,
            self.cost_delta,
            self.saving_percent,
            self.xi_reference,
            self.xi_solution,
            self.xi_delta
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    fn model() -> Model {
        Model::new(&Scenario::sioux_falls()).unwrap()
    }

    #[test]
    fn evaluation_matches_the_forecast() {
        let m = model();
        let policy = [700.0, 0.0, 1200.0, 300.0];
        let o = evaluate_policy(&m, &policy).unwrap();
        let f = m.forecast(&policy).unwrap();
        assert_eq!(o.total_cost.to_bits(), f.total_cost.to_bits());
        assert_eq!(o.xi.to_bits(), f.xi.to_bits());
        assert!(evaluate_policy(&m, &[-1.0]).is_err());
    }

    #[test]
    fn zero_policy_costs_the_rail_service_only() {
        let m = model();
        let f = m.forecast(&[0.0; 3]).unwrap();
        let rail: f64 = f.records.iter().map(|r| r.c_r).sum();
        assert!(f.records.iter().all(|r| r.c_s == 0.0));
        assert_eq!(evaluate_policy(&m, &[0.0; 3]).unwrap().total_cost, rail);
    }

    #[test]
    fn order_of_additions_matters() {
        let m = model();
        let a = evaluate_policy(&m, &[1500.0, 0.0, 0.0, 0.0]).unwrap();
        let b = evaluate_policy(&m, &[0.0, 0.0, 0.0, 1500.0]).unwrap();
        assert!(a.xi != b.xi && a.total_cost != b.total_cost);
    }

    #[test]
    fn infeasible_cap_is_reported() {
        let m = model();
        let mut problem = BackcastProblem::constant(700.0, 3, 2000.0);
        problem.cap = Some(1.0);
        assert!(matches!(
            solve_backcast(&m, &problem, &BackcastOptions::default()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn slack_cap_gives_no_purchases() {
        let m = model();
        let zero = evaluate_policy(&m, &[0.0; 4]).unwrap();
        let problem = BackcastProblem {
            reference: vec![700.0; 4],
            cap: Some(zero.xi),
            u_max: 2000.0,
        };
        let opts = BackcastOptions {
            starts: 2,
            max_evaluations: 400,
            ..BackcastOptions::default()
        };
        let s = solve_backcast(&m, &problem, &opts).unwrap();
        assert_eq!(s.policy, vec![0.0; 4]);
        assert_eq!(s.total_cost, zero.total_cost);
    }

    #[test]
    fn solution_is_bounded_and_no_worse_than_the_reference() {
        let m = model();
        let problem = BackcastProblem::constant(700.0, 5, 2000.0);
        let opts = BackcastOptions {
            starts: 3,
            max_evaluations: 300,
            ..BackcastOptions::default()
        };
        let s = solve_backcast(&m, &problem, &opts).unwrap();
        assert!(s.policy.iter().all(|u| (0.0..=2000.0).contains(u) && u.fract() == 0.0));
        assert!(s.xi <= s.cap * 1.005);
        assert!(s.total_cost <= s.reference.total_cost);
        let again = solve_backcast(&m, &problem, &opts).unwrap();
        assert_eq!(s.policy, again.policy);
    }

    #[test]
    fn comparison_of_identical_runs_is_zero() {
        let m = model();
        let f = m.forecast(&[700.0; 3]).unwrap();
        let c = compare_to_reference(&f, &f);
        assert_eq!(c.saving_percent, 0.0);
        assert_eq!(c.xi_delta, 0.0);
        let yearly: f64 = c.years.iter().map(|y| y.4).sum();
        assert!((yearly - c.cost_solution).abs() <= 1e-6 * c.cost_solution);
    }
}
