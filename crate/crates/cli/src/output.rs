//! CSV, JSON and manifest writers.

use std::fs;
use std::path::{Path, PathBuf};

use lightmatter_core::{PhotonDistribution, TrajectoryRecord};
use serde::{Deserialize, Serialize};

use crate::config::Validated;
use crate::engines::{EngineOutput, EngineStatus};
use crate::{io_err, CliError};

/// Float format used in every CSV file; round-trips at 1e-14 relative.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.14e}")
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

/// Writes `time,<columns...>` rows.
pub fn write_record(path: &Path, record: &TrajectoryRecord) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let header: Vec<&str> = std::iter::once("time").chain(record.column_names()).collect();
    w.write_record(&header).map_err(csv_err(path))?;
    for (i, &t) in record.time.iter().enumerate() {
        let row = std::iter::once(fmt_f64(t)).chain(record.columns().iter().map(|(_, c)| fmt_f64(c[i])));
        w.write_record(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a CSV written by [`write_record`] (first column must be `time`).
pub fn read_record(path: &Path) -> Result<TrajectoryRecord, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("time") {
        return Err(CliError::Data(format!("{}: first column must be time", path.display())));
    }
    let mut record = TrajectoryRecord::new(header[1..].iter().cloned());
    for (line, row) in r.records().enumerate() {
        let row = row.map_err(csv_err(path))?;
        let vals = row
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| CliError::Data(format!("{} row {}: {e}", path.display(), line + 2)))?;
        record
            .push(vals[0], &vals[1..])
            .map_err(|e| CliError::Data(format!("{} row {}: {e}", path.display(), line + 2)))?;
    }
    Ok(record)
}

/// Writes `n_1,...,n_N,p` rows over the distribution window.
pub fn write_distribution(path: &Path, d: &PhotonDistribution) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header: Vec<String> = (1..=d.windows.len()).map(|k| format!("n_{k}")).collect();
    header.push("p".into());
    w.write_record(&header).map_err(csv_err(path))?;
    for (n, p) in d.iter() {
        let row = n.iter().map(usize::to_string).chain(std::iter::once(fmt_f64(p)));
        w.write_record(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Serialize)]
struct RecordJson<'a> {
    time: &'a [f64],
    columns: std::collections::BTreeMap<&'a str, &'a [f64]>,
    metadata: &'a std::collections::BTreeMap<String, String>,
}

fn write_record_json(path: &Path, record: &TrajectoryRecord) -> Result<(), CliError> {
    let body = RecordJson {
        time: &record.time,
        columns: record.columns().iter().map(|(n, c)| (n.as_str(), c.as_slice())).collect(),
        metadata: &record.metadata,
    };
    let text = serde_json::to_string_pretty(&body).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(path, text).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineEntry {
    pub engine: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aborted_at: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub samples: usize,
    pub files: Vec<String>,
    /// Distributions whose window holds less than 0.999 of the mass.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mass_warnings: Vec<f64>,
    #[serde(default)]
    pub metadata: std::collections::BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub engines: Vec<EngineEntry>,
}

impl Manifest {
    pub fn all_completed(&self) -> bool {
        self.engines.iter().all(|e| e.status == "completed")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

fn time_tag(t: f64) -> String {
    let s = format!("{t}");
    s.replace('.', "p")
}

/// Writes every engine's output plus `config.toml` and `manifest.json` into `dir`.
pub fn write_run(dir: &Path, v: &Validated, outputs: &[EngineOutput]) -> Result<Manifest, CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let cfg_path = dir.join("config.toml");
    let cfg_text = toml::to_string(&v.config).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(&cfg_path, cfg_text).map_err(io_err(&cfg_path))?;
    let json = v.config.output.formats.iter().any(|f| f == "json");
    let mut engines = Vec::new();
    for out in outputs {
        let name = out.engine.name();
        let mut files = Vec::new();
        let mut emit = |p: PathBuf| files.push(p.file_name().unwrap().to_string_lossy().into_owned());
        let csv_path = dir.join(format!("{name}.csv"));
        write_record(&csv_path, &out.record)?;
        emit(csv_path);
        if json {
            let p = dir.join(format!("{name}.json"));
            write_record_json(&p, &out.record)?;
            emit(p);
        }
        let mut mass_warnings = Vec::new();
        for d in &out.distributions {
            let p = dir.join(format!("{name}_distribution_t{}.csv", time_tag(d.time)));
            write_distribution(&p, d)?;
            emit(p);
            if d.mass_warning {
                mass_warnings.push(d.time);
            }
        }
        let (status, aborted_at, message) = match &out.status {
            EngineStatus::Completed => ("completed".to_string(), None, None),
            EngineStatus::Aborted { time, message } => ("aborted".to_string(), *time, Some(message.clone())),
        };
        engines.push(EngineEntry {
            engine: name.to_string(),
            status,
            aborted_at,
            message,
            samples: out.record.len(),
            files,
            mass_warnings,
            metadata: out.record.metadata.clone(),
        });
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: v.hash.clone(),
        seed: v.config.ansatz.seed,
        engines,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(manifest)
}

/// Validates, runs and writes one configuration.
pub fn execute(v: &Validated, dir: &Path) -> Result<Manifest, CliError> {
    let outputs = crate::engines::run_all(v);
    write_run(dir, v, &outputs)
}
