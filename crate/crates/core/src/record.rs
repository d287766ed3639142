//! Column-oriented time series shared by all engines.

use std::collections::BTreeMap;

use crate::error::{invalid, Result};

/// Sampled observables on a common time axis.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub time: Vec<f64>,
    columns: Vec<(String, Vec<f64>)>,
    pub metadata: BTreeMap<String, String>,
}

impl TrajectoryRecord {
    pub fn new(names: impl IntoIterator<Item = String>) -> Self {
        Self {
            time: Vec::new(),
            columns: names.into_iter().map(|n| (n, Vec::new())).collect(),
            metadata: BTreeMap::new(),
        }
    }

    /// Appends one sample; `values` must follow the column order.
    pub fn push(&mut self, t: f64, values: &[f64]) -> Result<()> {
        if values.len() != self.columns.len() {
            return Err(invalid(format!(
                "sample has {} values for {} columns",
                values.len(),
                self.columns.len()
            )));
        }
        if let Some(&last) = self.time.last() {
            if t <= last {
                return Err(invalid(format!("non-monotone time {t} after {last}")));
            }
        }
        self.time.push(t);
        for ((_, col), &v) in self.columns.iter_mut().zip(values) {
            col.push(v);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_slice())
    }

    pub fn columns(&self) -> &[(String, Vec<f64>)] {
        &self.columns
    }

    /// Adds a full column computed elsewhere on the same time axis.
    pub fn insert_column(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.time.len() {
            return Err(invalid("column length does not match the time axis"));
        }
        let name = name.into();
        if self.column(&name).is_some() {
            return Err(invalid(format!("duplicate column {name}")));
        }
        self.columns.push((name, values));
        Ok(())
    }

    /// Index of the sample closest to `t`.
    pub fn nearest_index(&self, t: f64) -> Option<usize> {
        if self.time.is_empty() {
            return None;
        }
        let idx = self.time.partition_point(|&x| x < t);
        let candidates = [idx.saturating_sub(1), idx.min(self.time.len() - 1)];
        candidates
            .into_iter()
            .min_by(|&a, &b| (self.time[a] - t).abs().total_cmp(&(self.time[b] - t).abs()))
    }
}

/// Per-column difference statistics between two records.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDiff {
    pub column: String,
    pub max_abs: f64,
    pub rms: f64,
    pub passed: bool,
    /// First sample where |a − b| exceeds the tolerance: (t, a, b).
    pub first_exceedance: Option<(f64, f64, f64)>,
}

/// Compares `columns` of two records sampled on the same grid.
pub fn compare_records(
    a: &TrajectoryRecord,
    b: &TrajectoryRecord,
    columns: &[String],
    tolerance: f64,
) -> Result<Vec<ColumnDiff>> {
    if a.time.len() != b.time.len() {
        return Err(invalid(format!(
            "time grids differ in length ({} vs {})",
            a.time.len(),
            b.time.len()
        )));
    }
    for (i, (&ta, &tb)) in a.time.iter().zip(&b.time).enumerate() {
        if (ta - tb).abs() > 1e-9 * ta.abs().max(1.0) {
            return Err(invalid(format!("time grids differ at sample {i}: {ta} vs {tb}")));
        }
    }
    columns
        .iter()
        .map(|name| {
            let ca = a.column(name).ok_or_else(|| invalid(format!("column {name} missing in first record")))?;
            let cb = b.column(name).ok_or_else(|| invalid(format!("column {name} missing in second record")))?;
            let mut max_abs = 0.0f64;
            let mut sum_sq = 0.0;
            let mut first = None;
            for ((&x, &y), &t) in ca.iter().zip(cb).zip(&a.time) {
                let d = (x - y).abs();
                max_abs = max_abs.max(d);
                sum_sq += d * d;
                if first.is_none() && d > tolerance {
                    first = Some((t, x, y));
                }
            }
            let rms = if ca.is_empty() { 0.0 } else { (sum_sq / ca.len() as f64).sqrt() };
            Ok(ColumnDiff {
                column: name.clone(),
                max_abs,
                rms,
                passed: first.is_none(),
                first_exceedance: first,
            })
        })
        .collect()
}

/// Peak-to-peak excursion of `values` over samples with t in `[t0, t1]`.
pub fn envelope(time: &[f64], values: &[f64], t0: f64, t1: f64) -> Option<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (&t, &v) in time.iter().zip(values) {
        if t >= t0 && t <= t1 {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (hi >= lo).then_some(hi - lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(vals: &[f64]) -> TrajectoryRecord {
        let mut r = TrajectoryRecord::new(["x".to_string()]);
        for (i, &v) in vals.iter().enumerate() {
            r.push(i as f64 * 0.5, &[v]).unwrap();
        }
        r
    }

    #[test]
    fn identical_records_have_zero_diff() {
        let a = rec(&[1.0, 2.0, 3.0]);
        let d = compare_records(&a, &a, &["x".into()], 0.0).unwrap();
        assert_eq!(d[0].max_abs, 0.0);
        assert_eq!(d[0].rms, 0.0);
        assert!(d[0].passed);
    }

    #[test]
    fn zero_tolerance_locates_first_exceedance() {
        let a = rec(&[1.0, 2.0, 3.0]);
        let b = rec(&[1.0, 2.5, 2.0]);
        let d = compare_records(&a, &b, &["x".into()], 0.0).unwrap();
        assert!(!d[0].passed);
        assert_eq!(d[0].first_exceedance, Some((0.5, 2.0, 2.5)));
        assert_eq!(d[0].max_abs, 1.0);
    }

    #[test]
    fn mismatched_grids_are_an_error() {
        let a = rec(&[1.0, 2.0]);
        let b = rec(&[1.0, 2.0, 3.0]);
        assert!(compare_records(&a, &b, &["x".into()], 0.1).is_err());
    }

    #[test]
    fn push_rejects_non_monotone_time() {
        let mut r = rec(&[1.0]);
        assert!(r.push(0.0, &[1.0]).is_err());
        assert!(r.push(1.0, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn envelope_window() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let v = [5.0, -1.0, 2.0, 9.0];
        assert_eq!(envelope(&t, &v, 1.0, 2.0), Some(3.0));
        assert_eq!(envelope(&t, &v, 10.0, 20.0), None);
    }
}
