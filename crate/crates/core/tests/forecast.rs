use mobcast::mode_choice::ModeSplit;
use mobcast::{Model, Scenario};

fn model() -> Model {
    Model::new(&Scenario::sioux_falls()).unwrap()
}

#[test]
fn without_savs_nobody_rides_one() {
    let f = model().forecast(&[0.0; 6]).unwrap();
    for r in &f.records {
        assert_eq!(r.s_s, 0.0);
        assert!(r.g_s.abs() < 1e-9, "year {}: {}", r.year, r.g_s);
        assert!(r.c_s.abs() < 1e-6);
    }
}

#[test]
fn cumulative_emissions_are_the_running_sum() {
    let f = model().forecast(&[700.0; 8]).unwrap();
    let mut xi = 0.0;
    for r in &f.records {
        xi += r.e;
        assert!((r.xi - xi).abs() <= 1e-9 * xi, "year {}", r.year);
        assert!(r.residual <= 1e-6);
        for v in [r.g_h, r.g_s, r.g_r, r.s_r, r.hv_stock, r.c_s, r.c_r, r.e] {
            assert!(v >= 0.0 && v.is_finite());
        }
    }
    assert_eq!(f.xi, f.records.last().unwrap().xi);
    let cost: f64 = f.records.iter().map(|r| r.c_s + r.c_r).sum();
    assert!((f.total_cost - cost).abs() <= 1e-9 * cost);
}

#[test]
fn demand_is_conserved_every_year() {
    let m = model();
    let total: f64 = m.od_pairs().iter().map(|p| p.demand).sum();
    for r in m.forecast(&[1000.0; 5]).unwrap().records {
        assert!(((r.g_h + r.g_s + r.g_r) - total).abs() < 1e-6 * total, "year {}", r.year);
    }
}

#[test]
fn forecasts_compose_from_single_steps() {
    let m = model();
    let policy = [300.0, 900.0, 0.0, 1500.0, 700.0, 200.0];
    let whole = m.forecast(&policy).unwrap();

    let mut state = m.initial_state().unwrap();
    for (u, expected) in policy.iter().zip(&whole.records) {
        let (next, record) = m.step_year(&state, *u).unwrap();
        assert_eq!(&record, expected);
        state = next;
    }

    let mut mid = m.initial_state().unwrap();
    for &u in &policy[..3] {
        mid = m.step_year(&mid, u).unwrap().0;
    }
    let tail = m.forecast_from(&mid, &policy[3..]).unwrap();
    assert_eq!(tail.records, whole.records[3..]);
    assert_eq!(tail.xi, whole.xi);
}

#[test]
fn more_purchases_give_a_larger_final_fleet() {
    let m = model();
    let finals: Vec<f64> = [0.0, 350.0, 700.0, 1400.0]
        .iter()
        .map(|&u| m.forecast(&[u; 5]).unwrap().records.last().unwrap().s_s)
        .collect();
    assert!(finals.windows(2).all(|w| w[1] > w[0]), "{finals:?}");
}

#[test]
fn equilibrium_does_not_depend_on_the_starting_split() {
    let m = model();
    let mut state = m.initial_state().unwrap();
    for _ in 0..4 {
        state = m.step_year(&state, 700.0).unwrap().0;
    }
    let n = m.od_pairs().len();
    let mut all_hv = ModeSplit::zeros(n);
    let mut uniform = ModeSplit::zeros(n);
    for (i, p) in m.od_pairs().iter().enumerate() {
        all_hv.hv[i] = p.demand;
        uniform.hv[i] = p.demand / 3.0;
        uniform.sav[i] = p.demand / 3.0;
        uniform.rail[i] = p.demand / 3.0;
    }
    let solve = |split: ModeSplit| {
        let mut s = state.clone();
        s.split = split;
        m.solve_year_equilibrium(&s).unwrap()
    };
    let a = solve(all_hv);
    let b = solve(uniform);
    for (x, y) in [(&a.split.hv, &b.split.hv), (&a.split.sav, &b.split.sav), (&a.split.rail, &b.split.rail)] {
        for (p, q) in x.iter().zip(y) {
            assert!((p - q).abs() <= 1e-6 * p.abs().max(1.0), "{p} vs {q}");
        }
    }
}

#[test]
fn forecasts_are_bit_identical_across_runs_and_models() {
    let policy = [700.0; 6];
    let a = model().forecast(&policy).unwrap();
    let b = model().forecast(&policy).unwrap();
    assert_eq!(a, b);
}

#[test]
fn scaled_down_demand_lowers_emissions() {
    let base = model().forecast(&[700.0; 3]).unwrap();
    let half = Model::new(&Scenario::sioux_falls().with_demand_scaled(0.5))
        .unwrap()
        .forecast(&[700.0; 3])
        .unwrap();
    assert!(half.xi < base.xi);
    for r in &half.records {
        assert!(r.residual <= 1e-6);
    }
}

#[test]
fn zero_demand_runs_with_no_traffic() {
    let m = Model::new(&Scenario::sioux_falls().with_demand_scaled(0.0)).unwrap();
    let f = m.forecast(&[700.0; 3]).unwrap();
    for r in &f.records {
        assert_eq!(r.g_h + r.g_s + r.g_r, 0.0);
        assert_eq!(r.e, 0.0);
    }
}

fn shared() -> &'static Model {
    static MODEL: std::sync::OnceLock<Model> = std::sync::OnceLock::new();
    MODEL.get_or_init(model)
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(12))]

    #[test]
    fn larger_policies_never_shrink_the_fleet(
        base in proptest::collection::vec(0.0f64..2000.0, 4),
        bump in proptest::collection::vec(0.0f64..500.0, 4),
    ) {
        let m = shared();
        let more: Vec<f64> = base.iter().zip(&bump).map(|(u, b)| u + b).collect();
        let a = m.forecast(&base).unwrap();
        let b = m.forecast(&more).unwrap();
        proptest::prop_assert!(b.records[3].s_s >= a.records[3].s_s);
        for f in [&a, &b] {
            proptest::prop_assert!(f.records.windows(2).all(|w| w[1].xi >= w[0].xi));
            proptest::prop_assert!(f.records.iter().all(|r| r.residual <= 1e-6));
        }
    }
}
