use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mobcast::backcast::{compare_to_reference, solve_backcast, BackcastOptions, BackcastProblem};
use mobcast::flowgraph::canonical::{self, GAIN_INDICES, NODE_LABELS};
use mobcast::flowgraph::{linearize, simulated_response, undesired_effect_check, OperatingPoint};
use mobcast::output::{plot_table, trajectory_table, Table};
use mobcast::scenario::{ScenarioPaths, OD_FILE, RAIL_FILE, ROAD_FILE};
use mobcast::{load_scenario, Model, ParamSet, Scenario};

mod outputs;

use outputs::OutputSet;

/// Urban mobility with private cars, a shared autonomous fleet and rail:
/// forecasts, feedback-loop analysis and backcasting of SAV purchases.
#[derive(Debug, Parser)]
#[command(name = "mobcast", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a SAV purchase policy year by year.
    Forecast {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Find the cheapest SAV purchase schedule under a cumulative CO2 cap.
    Backcast {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        /// Cap on cumulative emissions at the horizon, t CO2 [default: the
        /// reference policy's own cumulative emissions]
        #[arg(long, value_name = "T")]
        cap: Option<f64>,
        /// Upper bound on SAV purchases per year, veh/y [default: u_max parameter]
        #[arg(long, value_name = "N")]
        umax: Option<f64>,
        /// Seed for the random starting policies
        #[arg(long, value_name = "N", default_value_t = 42)]
        seed: u64,
        /// Number of starting policies (reference, zero, then random)
        #[arg(long, value_name = "N", default_value_t = 8)]
        starts: usize,
        /// Budget of simulated forecasts
        #[arg(long, value_name = "N", default_value_t = 3000)]
        max_evals: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Linearise the model along a forecast and report loop gains, the
    /// transfer from SAV stock to emissions and the undesired-effect test.
    Analyze {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        /// Simulated year to analyse, counted from 1 [default: every year]
        #[arg(long, value_name = "N")]
        year: Option<usize>,
        /// Relative finite-difference step, dimensionless
        #[arg(long, value_name = "H", default_value_t = mobcast::flowgraph::DEFAULT_REL_STEP)]
        rel_step: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Check the scenario files and print the parameters in effect.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario directory with road_links.csv, rail_links.csv, od.csv and
    /// optionally params.toml [default: bundled Sioux Falls]
    #[arg(long, value_name = "DIR")]
    scenario: Option<PathBuf>,
    /// Parameter file (TOML) overriding the defaults and any params.toml in
    /// the scenario directory
    #[arg(long, value_name = "FILE")]
    params: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PolicyArgs {
    /// SAVs added every year, veh/y; the reference policy for backcast
    /// [default: 700]
    #[arg(long, value_name = "N", conflicts_with = "policy_csv")]
    policy_const: Option<f64>,
    /// CSV with a column `u` (veh/y), one row per simulated year
    #[arg(long, value_name = "FILE")]
    policy_csv: Option<PathBuf>,
    /// Simulated years, y [default: horizon_years parameter]
    #[arg(long, value_name = "N")]
    years: Option<usize>,
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Output directory, created if missing
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Forecast { scenario, policy, out } => forecast(&scenario, &policy, &out.out),
        Command::Backcast {
            scenario,
            policy,
            cap,
            umax,
            seed,
            starts,
            max_evals,
            out,
        } => {
            let scenario = scenario.load()?;
            let reference = policy.resolve(&scenario)?;
            let problem = BackcastProblem {
                reference,
                cap,
                u_max: umax.unwrap_or(scenario.params.u_max),
            };
            let opts = BackcastOptions {
                starts,
                seed,
                max_evaluations: max_evals,
                ..BackcastOptions::default()
            };
            backcast(&scenario, &problem, &opts, &out.out)
        }
        Command::Analyze {
            scenario,
            policy,
            year,
            rel_step,
            out,
        } => analyze(&scenario, &policy, year, rel_step, &out.out),
        Command::Validate { scenario } => validate(&scenario),
    }
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario> {
        let params = match &self.params {
            Some(path) => Some(ParamSet::load(path)?),
            None => None,
        };
        let scenario = match &self.scenario {
            Some(dir) => {
                if !dir.is_dir() {
                    bail!("scenario directory {} does not exist", dir.display());
                }
                let mut paths = ScenarioPaths::in_dir(dir);
                if let Some(path) = &self.params {
                    paths.params = Some(path.clone());
                }
                load_scenario(&paths)?
            }
            None => Scenario::sioux_falls_with(params.unwrap_or_default())?,
        };
        Ok(scenario)
    }
}

impl PolicyArgs {
    fn resolve(&self, scenario: &Scenario) -> Result<Vec<f64>> {
        let policy = match &self.policy_csv {
            Some(path) => {
                let policy = read_policy(path)?;
                if let Some(years) = self.years {
                    if years != policy.len() {
                        bail!(
                            "{}: {} policy rows but --years {years}",
                            path.display(),
                            policy.len()
                        );
                    }
                }
                policy
            }
            None => {
                let years = self.years.unwrap_or(scenario.horizon_years as usize);
                vec![self.policy_const.unwrap_or(700.0); years]
            }
        };
        if policy.is_empty() {
            bail!("the policy covers no years");
        }
        if let Some(u) = policy.iter().find(|u| !(**u >= 0.0) || !u.is_finite()) {
            bail!("SAV additions must be finite and >= 0, got {u}");
        }
        Ok(policy)
    }
}

fn read_policy(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("{}", path.display()))?;
    let headers = reader.headers().with_context(|| format!("{}", path.display()))?.clone();
    let column = headers
        .iter()
        .position(|h| h.trim() == "u")
        .with_context(|| format!("{}:1: no column named `u`", path.display()))?;
    let mut policy = Vec::new();
    for row in reader.records() {
        let row = row.with_context(|| format!("{}", path.display()))?;
        let line = row.position().map_or(0, |p| p.line());
        let value: f64 = row
            .get(column)
            .unwrap_or("")
            .trim()
            .parse()
            .with_context(|| format!("{}:{line}: column u", path.display()))?;
        policy.push(value);
    }
    Ok(policy)
}

fn forecast(scenario: &ScenarioArgs, policy: &PolicyArgs, out: &Path) -> Result<()> {
    let scenario = scenario.load()?;
    let policy = policy.resolve(&scenario)?;
    let model = Model::new(&scenario)?;
    let f = model.forecast(&policy)?;
    let mut files = OutputSet::default();
    files.table("trajectory.csv", &trajectory_table(&f.records))?;
    files.table("plot_data.csv", &plot_table(&f.records))?;
    files.commit(out)?;
    println!(
        "{} years; total operator cost {} EUR; cumulative emissions {} t",
        f.records.len(),
        f.total_cost,
        f.xi
    );
    Ok(())
}

fn backcast(scenario: &Scenario, problem: &BackcastProblem, opts: &BackcastOptions, out: &Path) -> Result<()> {
    let model = Model::new(scenario)?;
    let solution = solve_backcast(&model, problem, opts)?;
    let reference = model.forecast(&problem.reference)?;
    let optimal = model.forecast(&solution.policy)?;
    let comparison = compare_to_reference(&optimal, &reference);

    let mut policy = Table::new(&["year", "u"]);
    for r in &optimal.records {
        policy.push([r.year.to_string(), r.u.to_string()]);
    }
    let d = &solution.diagnostics;
    let mut report = comparison.summary();
    report.push_str(&format!(
        "emission cap (t): {}\ncap violation (fraction): {}\nforecast evaluations: {}\nouter iterations: {}\n\
         refined start: {}\nbudget exhausted: {}\n",
        solution.cap, d.violation, d.evaluations, d.outer_iterations, d.refined_start, d.budget_exhausted
    ));

    let mut files = OutputSet::default();
    files.table("solution.csv", &policy)?;
    files.table("comparison.csv", &comparison.yearly_table())?;
    files.table("trajectory.csv", &trajectory_table(&optimal.records))?;
    files.text("comparison.txt", &report);
    files.commit(out)?;
    print!("{report}");
    Ok(())
}

fn analyze(scenario: &ScenarioArgs, policy: &PolicyArgs, year: Option<usize>, rel_step: f64, out: &Path) -> Result<()> {
    let scenario = scenario.load()?;
    let policy = policy.resolve(&scenario)?;
    if let Some(y) = year {
        if y == 0 || y > policy.len() {
            bail!("--year must lie in 1..={}, got {y}", policy.len());
        }
    }
    let model = Model::new(&scenario)?;

    let mut gains = Table::new(
        &std::iter::once("year".to_string())
            .chain(GAIN_INDICES.iter().map(|i| format!("k{i}")))
            .collect::<Vec<_>>(),
    );
    let mut loops = Table::new(&["year", "kind", "id", "sign", "gain", "nodes"]);
    let mut transfer = Table::new(&[
        "year",
        "T",
        "simulated_response",
        "numerator",
        "denominator",
        "undesired_expression",
        "undesired_flag",
        "k6k7_minus_k4",
        "necessary_condition",
    ]);
    let mut report = String::new();

    let mut state = model.initial_state()?;
    for (index, &u) in policy.iter().enumerate() {
        let wanted = year.is_none_or(|y| y == index + 1);
        if wanted {
            let point = OperatingPoint::new(&model, &state, u)?;
            let lin = linearize(&model, &point, rel_step).map_err(|e| e.in_year(point.year()))?;
            let m = canonical::transfer(&lin.gains);
            let check = undesired_effect_check(&lin.gains);
            let simulated = simulated_response(&model, &point, 0.01)?;
            let y = point.year();

            let mut row = vec![y.to_string()];
            row.extend(GAIN_INDICES.iter().map(|&i| lin.gains.get(i).to_string()));
            gains.push(row);
            let (loop_ids, path_ids) = canonical::labels();
            let mut rows: Vec<(String, f64, &[usize])> = Vec::new();
            for (l, id) in m.loops.iter().zip(&loop_ids) {
                rows.push((format!("L{id}"), l.gain, &l.nodes));
            }
            for (p, id) in m.paths.iter().zip(&path_ids) {
                rows.push((format!("P{id}"), p.gain, &p.nodes));
            }
            rows.sort_by(|a, b| a.0.cmp(&b.0));
            {
                for (id, gain, nodes) in rows {
                    let kind = if id.starts_with('L') { "loop" } else { "path" };
                    let names: Vec<&str> = nodes.iter().map(|&n| NODE_LABELS[n]).collect();
                    loops.push([
                        y.to_string(),
                        kind.to_string(),
                        id,
                        sign(gain).to_string(),
                        gain.to_string(),
                        names.join(" > "),
                    ]);
                }
            }
            transfer.push([
                y.to_string(),
                m.transfer().to_string(),
                simulated.to_string(),
                m.numerator.to_string(),
                m.denominator.to_string(),
                check.expression.to_string(),
                check.flag.to_string(),
                check.margin.to_string(),
                check.necessary.to_string(),
            ]);

            let reinforcing = m.loops.iter().filter(|l| l.gain > 0.0).count();
            report.push_str(&format!(
                "year {y}\n  loops: {} ({reinforcing} reinforcing, {} balancing)\n  paths: {}\n  \
                 T (t/y per veh): {}\n  simulated response (t/y per veh): {}\n  \
                 undesired effect: {} (k6k7 - k4 = {})\n",
                m.loops.len(),
                m.loops.len() - reinforcing,
                m.paths.len(),
                m.transfer(),
                simulated,
                if check.flag { "yes" } else { "no" },
                check.margin,
            ));
        }
        state = model.step_year(&state, u)?.0;
    }

    let mut files = OutputSet::default();
    files.table("gains.csv", &gains)?;
    files.table("loops_paths.csv", &loops)?;
    files.table("transfer.csv", &transfer)?;
    files.text("report.txt", &report);
    files.commit(out)?;
    print!("{report}");
    Ok(())
}

fn sign(x: f64) -> &'static str {
    if x > 0.0 {
        "+"
    } else if x < 0.0 {
        "-"
    } else {
        "0"
    }
}

fn validate(args: &ScenarioArgs) -> Result<()> {
    let scenario = args.load()?;
    match &args.scenario {
        Some(dir) => println!(
            "scenario: {} ({ROAD_FILE}, {RAIL_FILE}, {OD_FILE})",
            dir.display()
        ),
        None => println!("scenario: bundled Sioux Falls"),
    }
    println!(
        "road network: {} nodes, {} links",
        scenario.road_network.node_count(),
        scenario.road_network.links.len()
    );
    println!(
        "rail network: {} nodes, {} links, {} lines",
        scenario.rail_network.node_count(),
        scenario.rail_network.links.len(),
        scenario.rail_network.line_ids().len()
    );
    println!(
        "OD pairs: {}, total demand {} pax/h",
        scenario.od_demand.len(),
        scenario.total_demand()
    );
    println!("\n# parameters in effect");
    print!("{}", scenario.params.to_toml_string());
    Ok(())
}
