//! Scenario bundle: networks, OD demand and parameters.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::network::{OdPair, ODMatrix, RailLink, RailNetwork, RoadLink, RoadNetwork};
use crate::params::ParamSet;

pub const ROAD_FILE: &str = "road_links.csv";
pub const RAIL_FILE: &str = "rail_links.csv";
pub const OD_FILE: &str = "od.csv";
pub const PARAMS_FILE: &str = "params.toml";

const SIOUX_FALLS_ROAD: &str = include_str!("../data/sioux_falls/road_links.csv");
const SIOUX_FALLS_RAIL: &str = include_str!("../data/sioux_falls/rail_links.csv");
const SIOUX_FALLS_OD: &str = include_str!("../data/sioux_falls/od.csv");

/// Immutable model input.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub road_network: RoadNetwork,
    pub rail_network: RailNetwork,
    /// pax/h
    pub od_demand: ODMatrix,
    pub params: ParamSet,
    pub horizon_years: u32,
    pub base_year: i32,
}

/// Where to find the scenario files.
#[derive(Clone, Debug, Default)]
pub struct ScenarioPaths {
    pub road: PathBuf,
    pub rail: PathBuf,
    pub od: PathBuf,
    /// Parameter file; `None` uses the committed defaults.
    pub params: Option<PathBuf>,
}

impl ScenarioPaths {
    /// Standard file names inside a scenario directory. A `params.toml` in
    /// the directory is picked up when present.
    pub fn in_dir(dir: &Path) -> Self {
        let params = dir.join(PARAMS_FILE);
        Self {
            road: dir.join(ROAD_FILE),
            rail: dir.join(RAIL_FILE),
            od: dir.join(OD_FILE),
            params: params.exists().then_some(params),
        }
    }
}

#[derive(Deserialize)]
struct RoadRow {
    from: usize,
    to: usize,
    capacity: f64,
    length: f64,
    free_flow_time: f64,
}

#[derive(Deserialize)]
struct RailRow {
    line: u32,
    from: usize,
    to: usize,
    length: f64,
}

#[derive(Deserialize)]
struct OdRow {
    origin: usize,
    destination: usize,
    flow: f64,
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parse a headed CSV into rows, reporting the line of any bad record.
fn parse_rows<T: for<'de> Deserialize<'de>>(text: &str, origin: &Path) -> Result<Vec<(u64, T)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::input(origin, 1, format!("bad header: {e}")))?
        .clone();
    let mut rows = Vec::new();
    let describe = |e: &csv::Error| match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => format!("malformed row: {err}"),
        _ => format!("malformed row: {e}"),
    };
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::input(origin, line, describe(&e))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .deserialize::<T>(Some(&headers))
            .map_err(|e| Error::input(origin, line, describe(&e)))?;
        rows.push((line, row));
    }
    Ok(rows)
}

fn parse_road(text: &str, origin: &Path, params: &ParamSet) -> Result<RoadNetwork> {
    let rows: Vec<(u64, RoadRow)> = parse_rows(text, origin)?;
    let mut links = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        if !(r.capacity > 0.0) {
            return Err(Error::input(origin, line, format!("capacity must be > 0, got {}", r.capacity)));
        }
        if !(r.free_flow_time > 0.0) {
            return Err(Error::input(
                origin,
                line,
                format!("free-flow time must be > 0, got {}", r.free_flow_time),
            ));
        }
        if !(r.length >= 0.0) {
            return Err(Error::input(origin, line, format!("length must be >= 0, got {}", r.length)));
        }
        links.push(RoadLink {
            from: r.from,
            to: r.to,
            capacity: r.capacity,
            length: r.length,
            free_flow_time: r.free_flow_time,
            alpha: params.road_bpr_alpha,
            beta: params.road_bpr_beta,
        });
    }
    if links.is_empty() {
        return Err(Error::input(origin, 0, "no road links"));
    }
    RoadNetwork::new(links)
}

fn parse_rail(text: &str, origin: &Path, road: &RoadNetwork) -> Result<RailNetwork> {
    let rows: Vec<(u64, RailRow)> = parse_rows(text, origin)?;
    let mut links = Vec::with_capacity(rows.len());
    let mut seen = BTreeSet::new();
    for (line, r) in rows {
        for node in [r.from, r.to] {
            if !road.has_node(node) {
                return Err(Error::input(
                    origin,
                    line,
                    format!("rail node {node} is not a road network node"),
                ));
            }
        }
        if !(r.length > 0.0) {
            return Err(Error::input(origin, line, format!("length must be > 0, got {}", r.length)));
        }
        if !seen.insert((r.from, r.to)) {
            return Err(Error::input(
                origin,
                line,
                format!("rail link {}->{} listed twice", r.from, r.to),
            ));
        }
        links.push(RailLink {
            line: r.line,
            from: r.from,
            to: r.to,
            length: r.length,
        });
    }
    if links.is_empty() {
        return Err(Error::input(origin, 0, "no rail links"));
    }
    RailNetwork::new(links)
}

fn parse_od(text: &str, origin: &Path, road: &RoadNetwork) -> Result<ODMatrix> {
    let rows: Vec<(u64, OdRow)> = parse_rows(text, origin)?;
    let mut od = Vec::with_capacity(rows.len());
    let mut seen = BTreeSet::new();
    for (line, r) in rows {
        for node in [r.origin, r.destination] {
            if !road.has_node(node) {
                return Err(Error::input(origin, line, format!("unknown node {node}")));
            }
        }
        if r.origin == r.destination {
            return Err(Error::input(origin, line, "origin equals destination"));
        }
        if !(r.flow >= 0.0) || !r.flow.is_finite() {
            return Err(Error::input(origin, line, format!("demand must be >= 0, got {}", r.flow)));
        }
        if !seen.insert((r.origin, r.destination)) {
            return Err(Error::input(
                origin,
                line,
                format!("OD pair {}->{} listed twice", r.origin, r.destination),
            ));
        }
        od.push(OdPair {
            origin: r.origin,
            destination: r.destination,
            demand: r.flow,
        });
    }
    if od.is_empty() {
        return Err(Error::input(origin, 0, "no OD pairs"));
    }
    Ok(od)
}

impl Scenario {
    /// Build a scenario from in-memory file contents. `names` label the
    /// sources in error messages.
    pub fn from_sources(
        road: (&str, &Path),
        rail: (&str, &Path),
        od: (&str, &Path),
        params: ParamSet,
    ) -> Result<Self> {
        params.validate()?;
        let road_network = parse_road(road.0, road.1, &params)?;
        let rail_network = parse_rail(rail.0, rail.1, &road_network)?;
        let od_demand = parse_od(od.0, od.1, &road_network)?;
        Ok(Self {
            road_network,
            rail_network,
            od_demand,
            horizon_years: params.horizon_years,
            base_year: params.base_year,
            params,
        })
    }

    /// The bundled Sioux Falls scenario with the given parameters.
    pub fn sioux_falls_with(params: ParamSet) -> Result<Self> {
        Self::from_sources(
            (SIOUX_FALLS_ROAD, Path::new("sioux_falls/road_links.csv")),
            (SIOUX_FALLS_RAIL, Path::new("sioux_falls/rail_links.csv")),
            (SIOUX_FALLS_OD, Path::new("sioux_falls/od.csv")),
            params,
        )
    }

    /// The bundled Sioux Falls scenario with default parameters.
    pub fn sioux_falls() -> Self {
        Self::sioux_falls_with(ParamSet::default()).expect("bundled scenario is valid")
    }

    pub fn total_demand(&self) -> f64 {
        self.od_demand.iter().map(|p| p.demand).sum()
    }

    /// Number of rail lines (parameter override or derived from the rail file).
    pub fn rail_line_count(&self) -> f64 {
        self.params
            .rail_line_count
            .unwrap_or(self.rail_network.line_ids().len() as f64)
    }

    /// Mean one-direction rail line length in km.
    pub fn rail_line_length(&self) -> f64 {
        self.params
            .rail_line_length
            .unwrap_or_else(|| self.rail_network.mean_line_length())
    }

    /// Same scenario with every OD demand multiplied by `factor`.
    pub fn with_demand_scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.od_demand.iter_mut().for_each(|p| p.demand *= factor);
        s
    }
}

/// Load and validate a scenario from files.
pub fn load_scenario(paths: &ScenarioPaths) -> Result<Scenario> {
    let params = match &paths.params {
        Some(p) => ParamSet::load(p)?,
        None => ParamSet::default(),
    };
    let road = read_file(&paths.road)?;
    let rail = read_file(&paths.rail)?;
    let od = read_file(&paths.od)?;
    Scenario::from_sources(
        (&road, &paths.road),
        (&rail, &paths.rail),
        (&od, &paths.od),
        params,
    )
}
