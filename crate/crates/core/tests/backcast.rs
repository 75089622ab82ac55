use mobcast::backcast::{compare_to_reference, evaluate_policy, solve_backcast, BackcastOptions, BackcastProblem};
use mobcast::{Model, Scenario};

fn model() -> Model {
    Model::new(&Scenario::sioux_falls()).unwrap()
}

fn quick() -> BackcastOptions {
    BackcastOptions {
        starts: 3,
        max_evaluations: 400,
        ..BackcastOptions::default()
    }
}

#[test]
fn tighter_caps_never_cost_less() {
    let m = model();
    // the stronger reference stays feasible under both caps
    let cap = m.forecast(&[700.0; 5]).unwrap().xi;
    let mut problem = BackcastProblem::constant(1400.0, 5, m.params().u_max);
    problem.cap = Some(cap);
    let loose = solve_backcast(&m, &problem, &quick()).unwrap();
    problem.cap = Some(cap * 0.995);
    let tight = solve_backcast(&m, &problem, &quick()).unwrap();
    assert!(tight.xi <= tight.cap * (1.0 + 5e-3));
    assert!(tight.total_cost >= loose.total_cost, "{} < {}", tight.total_cost, loose.total_cost);
}

#[test]
fn solution_outcome_matches_a_standalone_forecast() {
    let m = model();
    let problem = BackcastProblem::constant(700.0, 4, m.params().u_max);
    let sol = solve_backcast(&m, &problem, &quick()).unwrap();
    assert!(sol.policy.iter().all(|u| u.fract() == 0.0 && (0.0..=problem.u_max).contains(u)));
    let outcome = evaluate_policy(&m, &sol.policy).unwrap();
    assert_eq!(outcome.total_cost.to_bits(), sol.total_cost.to_bits());
    assert_eq!(outcome.xi.to_bits(), sol.xi.to_bits());
    assert!(sol.total_cost <= sol.reference.total_cost);
}

#[test]
fn comparison_totals_resum_from_the_yearly_table() {
    let m = model();
    let reference = m.forecast(&[700.0; 6]).unwrap();
    let other = m.forecast(&[1500.0, 1200.0, 300.0, 0.0, 0.0, 100.0]).unwrap();
    let c = compare_to_reference(&other, &reference);
    let csv = c.yearly_table().to_csv_string().unwrap();
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    let rows: Vec<Vec<f64>> = reader
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 6);
    let cost_ref: f64 = rows.iter().map(|r| r[3]).sum();
    let cost_sol: f64 = rows.iter().map(|r| r[4]).sum();
    assert!((cost_ref - c.cost_reference).abs() <= 1e-9 * cost_ref);
    assert!((cost_sol - c.cost_solution).abs() <= 1e-9 * cost_sol);
    assert_eq!(rows.last().unwrap()[5], c.xi_reference);
    assert_eq!(rows.last().unwrap()[6], c.xi_solution);
    let saving = 100.0 * (1.0 - cost_sol / cost_ref);
    assert!((saving - c.saving_percent).abs() < 1e-9);
}
