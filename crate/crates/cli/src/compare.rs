//! Column-wise comparison of two trajectory CSV files.

use std::path::Path;

use lightmatter_core::record::{compare_records, ColumnDiff};
use lightmatter_core::TrajectoryRecord;
use serde::Serialize;

use crate::output::read_record;
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct ColumnReport {
    pub column: String,
    pub max_abs: f64,
    pub rms: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_exceedance: Option<Exceedance>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Exceedance {
    pub time: f64,
    pub a: f64,
    pub b: f64,
}

impl From<ColumnDiff> for ColumnReport {
    fn from(d: ColumnDiff) -> Self {
        Self {
            column: d.column,
            max_abs: d.max_abs,
            rms: d.rms,
            passed: d.passed,
            first_exceedance: d.first_exceedance.map(|(time, a, b)| Exceedance { time, a, b }),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub tolerance: f64,
    pub window: Option<(f64, f64)>,
    pub columns: Vec<ColumnReport>,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.columns.iter().all(|c| c.passed)
    }
}

/// Restricts a record to samples with t in `[t0, t1]`.
fn restrict(r: &TrajectoryRecord, t0: f64, t1: f64) -> TrajectoryRecord {
    let keep: Vec<usize> = (0..r.len()).filter(|&i| r.time[i] >= t0 && r.time[i] <= t1).collect();
    let mut out = TrajectoryRecord::default();
    out.time = keep.iter().map(|&i| r.time[i]).collect();
    for (name, col) in r.columns() {
        out.insert_column(name.clone(), keep.iter().map(|&i| col[i]).collect()).expect("same axis");
    }
    out
}

/// Compares `columns` (all shared columns when empty) of two CSV files.
pub fn compare_files(
    a: &Path,
    b: &Path,
    columns: &[String],
    tolerance: f64,
    window: Option<(f64, f64)>,
) -> Result<CompareReport, CliError> {
    if !(tolerance >= 0.0) {
        return Err(CliError::Config("tolerance must be >= 0".into()));
    }
    let (mut ra, mut rb) = (read_record(a)?, read_record(b)?);
    if let Some((t0, t1)) = window {
        if t1 < t0 {
            return Err(CliError::Config(format!("empty window [{t0}, {t1}]")));
        }
        ra = restrict(&ra, t0, t1);
        rb = restrict(&rb, t0, t1);
    }
    let cols: Vec<String> = if columns.is_empty() {
        ra.column_names().filter(|n| rb.column(n).is_some()).map(str::to_string).collect()
    } else {
        columns.to_vec()
    };
    let diffs = compare_records(&ra, &rb, &cols, tolerance).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(CompareReport { tolerance, window, columns: diffs.into_iter().map(ColumnReport::from).collect() })
}
