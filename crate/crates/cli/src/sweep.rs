//! Cartesian parameter sweeps; each point runs in its own directory.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{resolve_output, set_dotted, RunConfig};
use crate::output::execute;
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub index: usize,
    pub directory: String,
    pub parameters: toml::Table,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub exit_code: i32,
}

/// Expands the `sweep` table of `doc` into concrete point configurations.
/// Axes are taken in sorted key order; the first key varies slowest.
pub fn expand(doc: &toml::Table) -> Result<Vec<(toml::Table, toml::Table)>, CliError> {
    let mut base = doc.clone();
    let sweep = match base.remove("sweep") {
        Some(toml::Value::Table(t)) => t,
        Some(_) => return Err(CliError::Config("sweep must be a table of arrays".into())),
        None => toml::Table::new(),
    };
    let mut axes = Vec::new();
    for (key, values) in sweep {
        match values {
            toml::Value::Array(a) if !a.is_empty() => axes.push((key, a)),
            _ => return Err(CliError::Config(format!("sweep.{key} must be a non-empty array"))),
        }
    }
    let mut points = vec![(base, toml::Table::new())];
    for (key, values) in &axes {
        let mut next = Vec::with_capacity(points.len() * values.len());
        for (doc, params) in &points {
            for v in values {
                let mut d = doc.clone();
                set_dotted(&mut d, key, v.clone())?;
                let mut p = params.clone();
                p.insert(key.clone(), v.clone());
                next.push((d, p));
            }
        }
        points = next;
    }
    Ok(points)
}

fn run_point(index: usize, doc: toml::Table, params: toml::Table, root: &Path) -> SweepEntry {
    let dir = root.join(format!("run_{index:03}"));
    let mut entry = SweepEntry {
        index,
        directory: dir.file_name().unwrap().to_string_lossy().into_owned(),
        parameters: params,
        status: "config_error".into(),
        config_hash: None,
        error: None,
        exit_code: 2,
    };
    let validated = doc
        .try_into::<RunConfig>()
        .map_err(|e| CliError::Config(e.to_string()))
        .and_then(|c| c.validate());
    let v = match validated {
        Ok(v) => v,
        Err(e) => {
            entry.error = Some(e.to_string());
            return entry;
        }
    };
    entry.config_hash = Some(v.hash.clone());
    match execute(&v, &dir) {
        Ok(m) if m.all_completed() => {
            entry.status = "completed".into();
            entry.exit_code = 0;
        }
        Ok(m) => {
            entry.status = "aborted".into();
            entry.error = m.engines.iter().find_map(|e| e.message.clone());
            entry.exit_code = 3;
        }
        Err(e) => {
            entry.status = "failed".into();
            entry.exit_code = e.exit_code();
            entry.error = Some(e.to_string());
        }
    }
    entry
}

/// Runs every sweep point in parallel and writes `sweep.json` into the
/// output directory of the base configuration. Failures stay per point.
pub fn run_sweep(path: &Path) -> Result<(PathBuf, Vec<SweepEntry>), CliError> {
    let text = std::fs::read_to_string(path).map_err(crate::io_err(path))?;
    let doc: toml::Table = toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    let base = RunConfig::from_toml(&text)?;
    let root = resolve_output(&base.output.directory);
    let points = expand(&doc)?;
    std::fs::create_dir_all(&root).map_err(crate::io_err(&root))?;
    let entries: Vec<SweepEntry> = points
        .into_par_iter()
        .enumerate()
        .map(|(i, (d, p))| run_point(i, d, p, &root))
        .collect();
    let index = root.join("sweep.json");
    let body = serde_json::to_string_pretty(&entries).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::write(&index, body).map_err(crate::io_err(&index))?;
    Ok((root, entries))
}
