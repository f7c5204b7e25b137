//! Tables for sweep and sampling reports.

use crate::asymptotics::SweepReport;
use crate::sampling::{DensityRow, NecessaryReport};
use serde::Serialize;
use std::fmt;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(String),
}

/// `x` with 17 significant digits; `inf`, `-inf` and `nan` spelled out.
pub fn format_real(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Real(x) => f.write_str(&format_real(*x)),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(if x { "true" } else { "false" }.into())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// A named table with one row per record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Rows as strings, ready for a CSV writer.
    pub fn records(&self) -> Vec<Vec<String>> {
        self.rows.iter().map(|r| r.iter().map(Cell::to_string).collect()).collect()
    }
}

pub fn bergman_table(r: &SweepReport) -> Table {
    let mut t = Table::new("bergman", &["k", "dim", "dim_oracle", "dim_mass_error", "l1_error", "max_dev"]);
    for row in &r.rows {
        if let (Some(l1), Some(md)) = (row.l1_error, row.max_dev) {
            t.push(vec![row.k.into(), row.dim.into(), row.dim_oracle.into(), row.dim_mass_error.into(), l1.into(), md.into()]);
        }
    }
    t
}

pub fn spectrum_table(r: &SweepReport) -> Table {
    let mut t = Table::new("spectrum", &["k", "gamma", "n_above_scaled", "limit_mass", "error"]);
    for row in &r.rows {
        for c in &row.counting {
            t.push(vec![row.k.into(), c.gamma.into(), c.scaled_count.into(), c.limit_mass.into(), c.error().into()]);
        }
    }
    t
}

pub fn trace_table(r: &SweepReport) -> Table {
    let mut t = Table::new(
        "trace",
        &["k", "eigen_sum", "integral", "limit", "trace_error", "route_gap", "product_trace_defect", "ks", "levy"],
    );
    let opt = |x: Option<f64>| Cell::Real(x.unwrap_or(f64::NAN));
    for row in &r.rows {
        if let Some(tc) = row.trace {
            t.push(vec![
                row.k.into(),
                tc.eigen_sum.into(),
                tc.integral.into(),
                tc.limit.into(),
                tc.error().into(),
                tc.route_gap().into(),
                opt(row.product_trace_defect),
                opt(row.ks),
                opt(row.levy),
            ]);
        }
    }
    t
}

pub fn kernel_table(r: &SweepReport) -> Table {
    let mut t = Table::new("kernel", &["k", "offdiag_fraction"]);
    for row in &r.rows {
        if let Some(f) = row.offdiag_fraction {
            t.push(vec![row.k.into(), f.into()]);
        }
    }
    t
}

pub fn sampling_table(r: &NecessaryReport) -> Table {
    let mut t = Table::new(
        "sampling",
        &["family", "k", "count", "dim", "undersampled", "lambda_min", "lambda_max", "a", "worst_margin"],
    );
    for row in &r.rows {
        t.push(vec![
            row.family.clone().into(),
            row.k.into(),
            row.count.into(),
            row.dim.into(),
            row.undersampled.into(),
            row.bounds.lambda_min.into(),
            row.bounds.lambda_max.into(),
            row.bounds.a.into(),
            row.worst_margin.into(),
        ]);
    }
    t
}

pub fn density_table(family: &str, rows: &[DensityRow]) -> Table {
    let mut t = Table::new(
        "density",
        &["family", "k", "cap_theta", "cap_phi", "cap_radius", "count", "density", "mass", "margin", "clipped"],
    );
    for r in rows {
        t.push(vec![
            family.to_string().into(),
            r.k.into(),
            r.region.theta.into(),
            r.region.phi.into(),
            r.region.radius.into(),
            r.count.into(),
            r.density.into(),
            r.mass.into(),
            r.margin.into(),
            r.clipped.into(),
        ]);
    }
    t
}
