//! Delimited-text outputs: trajectories, plot data and generic tables.
//!
//! Every writer goes through a temporary sibling file that is renamed into
//! place, so a failed run never leaves a truncated file behind.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::simulator::TrajectoryRecord;

pub const TRAJECTORY_HEADER: [&str; 24] = [
    "year", "u", "S_S", "S_R", "HV_stock", "HV_thermal", "HV_electric", "G_H", "G_S", "G_R", "t_A", "t_R",
    "t_S_w", "t_R_ae", "F_R", "K_A", "K_R", "C_S", "C_R", "E", "xi", "U", "residual", "iterations",
];

pub const PLOT_HEADER: [&str; 12] = [
    "year", "G_H", "G_S", "G_R", "S_S", "F_R", "K_A", "t_S_w", "C_S", "C_R", "E", "xi",
];

/// A table kept in memory until it is written in one go.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|h| h.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<I, S>(&mut self, row: I)
    where
        I: IntoIterator<Item = S>,
        S: ToString,
    {
        self.rows.push(row.into_iter().map(|c| c.to_string()).collect());
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let wrap = |e: csv::Error| Error::InvalidArgument(format!("csv encoding: {e}"));
        writer.write_record(&self.header).map_err(wrap)?;
        for row in &self.rows {
            writer.write_record(row).map_err(wrap)?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::InvalidArgument(format!("csv encoding: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv_string()?.as_bytes())
    }
}

/// Write `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let tmp = temporary_sibling(path);
    let result = fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .and_then(|_| fs::rename(&tmp, path));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}

fn temporary_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    path.with_file_name(name)
}

fn trajectory_row(r: &TrajectoryRecord) -> Vec<String> {
    let values = [
        r.u, r.s_s, r.s_r, r.hv_stock, r.hv_thermal, r.hv_electric, r.g_h, r.g_s, r.g_r, r.t_road, r.t_rail,
        r.t_wait, r.t_rail_ae, r.f_r, r.k_a, r.k_r, r.c_s, r.c_r, r.e, r.xi, r.utilisation, r.residual,
    ];
    let mut row = vec![r.year.to_string()];
    row.extend(values.iter().map(|v| v.to_string()));
    row.push(r.iterations.to_string());
    row
}

pub fn trajectory_table(records: &[TrajectoryRecord]) -> Table {
    let mut table = Table::new(&TRAJECTORY_HEADER);
    for r in records {
        table.rows.push(trajectory_row(r));
    }
    table
}

pub fn plot_table(records: &[TrajectoryRecord]) -> Table {
    let mut table = Table::new(&PLOT_HEADER);
    for r in records {
        table.push([r.year as f64, r.g_h, r.g_s, r.g_r, r.s_s, r.f_r, r.k_a, r.t_wait, r.c_s, r.c_r, r.e, r.xi]);
    }
    table
}

/// One row per record under a fixed header.
pub fn write_trajectory(records: &[TrajectoryRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no trajectory records to write".into()));
    }
    trajectory_table(records).write(path)
}

/// Year against the quantities usually plotted for a forecast.
pub fn write_plot_data(records: &[TrajectoryRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no trajectory records to write".into()));
    }
    plot_table(records).write(path)
}

/// Parse a file written by [`write_trajectory`].
pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::input(path, 0, e.to_string()))?;
    let header = reader.headers().map_err(|e| Error::input(path, 1, e.to_string()))?.clone();
    if header.iter().ne(TRAJECTORY_HEADER.iter().copied()) {
        return Err(Error::input(path, 1, "unexpected trajectory header"));
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::input(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .map_err(|e| Error::input(path, line, format!("column {}: {e}", TRAJECTORY_HEADER[i])))
        };
        let year = row[0]
            .parse::<i32>()
            .map_err(|e| Error::input(path, line, format!("column year: {e}")))?;
        let iterations = row[23]
            .parse::<usize>()
            .map_err(|e| Error::input(path, line, format!("column iterations: {e}")))?;
        records.push(TrajectoryRecord {
            year,
            u: num(1)?,
            s_s: num(2)?,
            s_r: num(3)?,
            hv_stock: num(4)?,
            hv_thermal: num(5)?,
            hv_electric: num(6)?,
            g_h: num(7)?,
            g_s: num(8)?,
            g_r: num(9)?,
            t_road: num(10)?,
            t_rail: num(11)?,
            t_wait: num(12)?,
            t_rail_ae: num(13)?,
            f_r: num(14)?,
            k_a: num(15)?,
            k_r: num(16)?,
            c_s: num(17)?,
            c_r: num(18)?,
            e: num(19)?,
            xi: num(20)?,
            utilisation: num(21)?,
            residual: num(22)?,
            iterations,
        });
    }
    Ok(records)
}
