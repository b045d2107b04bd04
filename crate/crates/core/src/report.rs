//! Experiment reports, published reference tables, comparison bands and
//! CSV/JSON emission.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::{CalibrationResult, McEstimate};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Relative tolerance for reference cells published without a standard error.
pub const DEFAULT_REL_TOL: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TableId {
    T1,
    T2,
    T3,
    T4,
    T5,
}

impl TableId {
    pub const ALL: [TableId; 5] = [TableId::T1, TableId::T2, TableId::T3, TableId::T4, TableId::T5];
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for TableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "T1" | "1" => Ok(TableId::T1),
            "T2" | "2" => Ok(TableId::T2),
            "T3" | "3" => Ok(TableId::T3),
            "T4" | "4" => Ok(TableId::T4),
            "T5" | "5" => Ok(TableId::T5),
            _ => Err(Error::Config { field: "table_id".into(), message: format!("unknown table '{s}'") }),
        }
    }
}

/// A published cell. Rows that report a tuned shrinkage factor keep it in `c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCell {
    pub mean: f64,
    pub se: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTable {
    pub table_id: TableId,
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    /// `cells[row][column]`.
    pub cells: Vec<Vec<ReferenceCell>>,
}

impl ReferenceTable {
    pub fn cell(&self, row: &str, column: &str) -> Option<&ReferenceCell> {
        let r = self.rows.iter().position(|x| x == row)?;
        let c = self.columns.iter().position(|x| x == column)?;
        Some(&self.cells[r][c])
    }
}

fn se_row(values: &[(f64, f64)]) -> Vec<ReferenceCell> {
    values.iter().map(|&(mean, se)| ReferenceCell { mean, se: Some(se), c: None }).collect()
}

fn tuned_row(values: &[(f64, f64, f64)]) -> Vec<ReferenceCell> {
    values.iter().map(|&(c, mean, se)| ReferenceCell { mean, se: Some(se), c: Some(c) }).collect()
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Published detection delays for each table.
pub fn reference_table(id: TableId) -> ReferenceTable {
    match id {
        TableId::T1 => ReferenceTable {
            table_id: id,
            rows: strings(&["c=1", "c=0.9", "c=0.5", "c=0.1", "oracle", "opt_sim", "js"]),
            columns: strings(&["(0.41,0.39,0.34)", "(0.58,0.53,0.39)", "(0.65,0.68,0.79)", "(1,1,1)"]),
            cells: vec![
                se_row(&[(34.48, 0.39), (20.84, 0.22), (11.70, 0.11), (6.76, 0.06)]),
                se_row(&[(32.20, 0.36), (19.84, 0.20), (11.37, 0.11), (6.65, 0.05)]),
                se_row(&[(26.00, 0.25), (17.33, 0.15), (10.75, 0.08), (6.69, 0.04)]),
                se_row(&[(23.50, 0.18), (17.31, 0.11), (12.00, 0.06), (8.31, 0.03)]),
                tuned_row(&[(0.14, 23.54, 0.18), (0.32, 16.89, 0.13), (0.51, 10.75, 0.08), (0.68, 6.58, 0.05)]),
                tuned_row(&[(0.10, 23.50, 0.18), (0.29, 16.86, 0.13), (0.54, 10.74, 0.08), (0.75, 6.57, 0.05)]),
                se_row(&[(28.81, 0.29), (18.88, 0.18), (11.39, 0.10), (6.79, 0.05)]),
            ],
        },
        TableId::T2 => ReferenceTable {
            table_id: id,
            rows: strings(&["baseline", "soft", "hard"]),
            columns: strings(&["(1,1,0)", "(0.75,0.5,0)", "(0.75,0,0)", "(0.5,0,0)"]),
            cells: vec![
                se_row(&[(9.23, 0.08), (19.68, 0.21), (26.59, 0.29), (53.51, 0.67)]),
                se_row(&[(9.51, 0.08), (19.53, 0.19), (24.16, 0.24), (48.93, 0.57)]),
                se_row(&[(8.91, 0.08), (18.13, 0.18), (22.86, 0.23), (43.12, 0.51)]),
            ],
        },
        TableId::T3 => ReferenceTable {
            table_id: id,
            rows: strings(&["baseline", "c=0.1", "c=0.5", "c=0.9"]),
            columns: strings(&["(1.5,1.5,1.25)", "(2,1.5,1.5)", "(5,1.25,1.25)", "(4,4,4)"]),
            cells: vec![
                se_row(&[(33.86, 0.39), (15.40, 0.16), (4.01, 0.03), (2.64, 0.01)]),
                se_row(&[(22.42, 0.20), (13.63, 0.09), (4.90, 0.02), (3.37, 0.01)]),
                se_row(&[(24.37, 0.24), (12.96, 0.12), (3.60, 0.02), (2.66, 0.01)]),
                se_row(&[(31.47, 0.35), (14.73, 0.15), (3.62, 0.03), (2.63, 0.01)]),
            ],
        },
        TableId::T4 => ReferenceTable {
            table_id: id,
            rows: strings(&["baseline", "hard"]),
            columns: strings(&["(1.5,1,1)", "(1.5,1.5,1)", "(2,1,1)", "(2,2,1)"]),
            cells: vec![
                se_row(&[(70.19, 0.88), (37.83, 0.45), (23.03, 0.26), (12.64, 0.13)]),
                se_row(&[(46.66, 0.57), (29.17, 0.34), (17.45, 0.18), (11.03, 0.11)]),
            ],
        },
        TableId::T5 => {
            let bare = |v: [f64; 6]| v.iter().map(|&mean| ReferenceCell { mean, se: None, c: None }).collect();
            ReferenceTable {
                table_id: id,
                rows: strings(&["T_B", "MAX", "SUM"]),
                columns: strings(&[
                    "mu1=0.5,r=5",
                    "mu1=0.5,r=10",
                    "mu1=0.5,r=20",
                    "mu1=1,r=5",
                    "mu1=1,r=10",
                    "mu1=1,r=20",
                ]),
                cells: vec![
                    bare([96.4, 28.9, 13.2, 10.4, 6.7, 5.0]),
                    bare([52.8, 45.5, 40.1, 22.9, 20.9, 19.4]),
                    bare([57.0, 33.9, 20.3, 26.0, 15.9, 9.8]),
                ],
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub row: String,
    pub column: String,
    pub estimate: McEstimate,
    /// Shrinkage factor chosen for this cell, for tuned rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub row: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    pub result: CalibrationResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    #[serde(default)]
    pub table_id: Option<TableId>,
    pub seed: u64,
    pub replications: u64,
    pub version: String,
    pub wall_time_secs: f64,
    pub cells: Vec<ReportCell>,
    #[serde(default)]
    pub calibrations: Vec<CalibrationRecord>,
}

impl ExperimentReport {
    pub fn new(experiment: impl Into<String>, table_id: Option<TableId>, seed: u64, replications: u64) -> Self {
        ExperimentReport {
            schema_version: REPORT_SCHEMA_VERSION,
            experiment: experiment.into(),
            table_id,
            seed,
            replications,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_secs: 0.0,
            cells: Vec::new(),
            calibrations: Vec::new(),
        }
    }

    pub fn cell(&self, row: &str, column: &str) -> Option<&ReportCell> {
        self.cells.iter().find(|c| c.row == row && c.column == column)
    }

    /// `{experiment}_{table_id}_{seed}.{ext}`; tables default to `custom`.
    pub fn file_name(&self, ext: &str) -> String {
        let table = self.table_id.map(|t| t.to_string()).unwrap_or_else(|| "custom".into());
        format!("{}_{}_{}.{}", self.experiment, table, self.seed, ext)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellVerdict {
    pub row: String,
    pub column: String,
    pub simulated: McEstimate,
    pub reference: ReferenceCell,
    /// Allowed absolute deviation.
    pub band: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub table_id: TableId,
    pub k_se: f64,
    pub verdicts: Vec<CellVerdict>,
}

impl Comparison {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn failures(&self) -> usize {
        self.verdicts.iter().filter(|v| !v.pass).count()
    }
}

/// Band for one cell: `k_se * sqrt(se_sim^2 + se_ref^2)`, or a relative
/// tolerance when the reference has no standard error.
pub fn cell_band(simulated: &McEstimate, reference: &ReferenceCell, k_se: f64, rel_tol: f64) -> f64 {
    match reference.se {
        Some(se) => k_se * (simulated.std_error.powi(2) + se * se).sqrt(),
        None => rel_tol * reference.mean.abs(),
    }
}

pub fn compare_cell(simulated: &McEstimate, reference: &ReferenceCell, k_se: f64, rel_tol: f64) -> (bool, f64) {
    let band = cell_band(simulated, reference, k_se, rel_tol);
    ((simulated.mean - reference.mean).abs() <= band, band)
}

/// Compares every simulated cell with its published counterpart.
pub fn compare_to_reference(report: &ExperimentReport, reference: &ReferenceTable, k_se: f64) -> Result<Comparison> {
    compare_with_tolerance(report, reference, k_se, DEFAULT_REL_TOL)
}

pub fn compare_with_tolerance(
    report: &ExperimentReport,
    reference: &ReferenceTable,
    k_se: f64,
    rel_tol: f64,
) -> Result<Comparison> {
    if let Some(t) = report.table_id {
        if t != reference.table_id {
            return Err(Error::ShapeMismatch(format!("report is for {t}, reference is {}", reference.table_id)));
        }
    }
    let mut verdicts = Vec::with_capacity(report.cells.len());
    for cell in &report.cells {
        let r = reference
            .cell(&cell.row, &cell.column)
            .ok_or_else(|| Error::ShapeMismatch(format!("no reference cell ({}, {})", cell.row, cell.column)))?;
        let (pass, band) = compare_cell(&cell.estimate, r, k_se, rel_tol);
        verdicts.push(CellVerdict {
            row: cell.row.clone(),
            column: cell.column.clone(),
            simulated: cell.estimate,
            reference: *r,
            band,
            pass,
        });
    }
    Ok(Comparison { table_id: reference.table_id, k_se, verdicts })
}

/// Formats `x` with 6 significant digits.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..15).contains(&mag) {
        let s = format!("{:.*}", (5 - mag).max(0) as usize, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

/// A record type that can be written as a CSV row.
pub trait CsvRow {
    fn header() -> &'static [&'static str];
    fn record(&self) -> Vec<String>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub experiment: String,
    pub table_id: String,
    pub row: String,
    pub column: String,
    pub c: Option<f64>,
    pub mean: f64,
    pub std_error: f64,
    pub replications: u64,
    pub censored_fraction: f64,
}

impl CsvRow for CellRow {
    fn header() -> &'static [&'static str] {
        &["experiment", "table_id", "row", "column", "c", "mean", "std_error", "replications", "censored_fraction"]
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.experiment.clone(),
            self.table_id.clone(),
            self.row.clone(),
            self.column.clone(),
            self.c.map(fmt_sig6).unwrap_or_default(),
            fmt_sig6(self.mean),
            fmt_sig6(self.std_error),
            self.replications.to_string(),
            fmt_sig6(self.censored_fraction),
        ]
    }
}

impl ExperimentReport {
    pub fn rows(&self) -> Vec<CellRow> {
        let table = self.table_id.map(|t| t.to_string()).unwrap_or_default();
        self.cells
            .iter()
            .map(|c| CellRow {
                experiment: self.experiment.clone(),
                table_id: table.clone(),
                row: c.row.clone(),
                column: c.column.clone(),
                c: c.c,
                mean: c.estimate.mean,
                std_error: c.estimate.std_error,
                replications: c.estimate.replications,
                censored_fraction: c.estimate.censored_fraction,
            })
            .collect()
    }
}

/// One point of a fixed-threshold sweep over `c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedThresholdRow {
    pub c: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub arl_mean: f64,
    pub arl_se: f64,
    pub delay_mean: f64,
    pub delay_se: f64,
}

impl CsvRow for FixedThresholdRow {
    fn header() -> &'static [&'static str] {
        &["c", "B", "arl_mean", "arl_se", "delay_mean", "delay_se"]
    }

    fn record(&self) -> Vec<String> {
        [self.c, self.b, self.arl_mean, self.arl_se, self.delay_mean, self.delay_se].map(fmt_sig6).to_vec()
    }
}

/// One point of a calibrated sweep over `c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibratedRow {
    pub c: f64,
    #[serde(rename = "B_calibrated")]
    pub b_calibrated: f64,
    pub achieved_arl: f64,
    pub se: f64,
}

impl CsvRow for CalibratedRow {
    fn header() -> &'static [&'static str] {
        &["c", "B_calibrated", "achieved_arl", "se"]
    }

    fn record(&self) -> Vec<String> {
        [self.c, self.b_calibrated, self.achieved_arl, self.se].map(fmt_sig6).to_vec()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if !e.is_io_error() {
        return Error::Csv(e);
    }
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
        _ => unreachable!("checked is_io_error"),
    }
}

/// Writes `rows` as UTF-8 CSV with a header row.
pub fn emit_csv<R: CsvRow>(rows: &[R], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(R::header()).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r.record()).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

/// Parses CSV produced by [`emit_csv`].
pub fn parse_csv<R: DeserializeOwned>(data: &[u8]) -> Result<Vec<R>> {
    let mut rdr = csv::Reader::from_reader(data);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_csv<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    parse_csv(&bytes)
}

pub fn emit_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Writes the CSV and JSON mirror of `report` into `dir`; returns the CSV path.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv_path = dir.join(report.file_name("csv"));
    emit_csv(&report.rows(), &csv_path)?;
    emit_json(report, &dir.join(report.file_name("json")))?;
    Ok(csv_path)
}
