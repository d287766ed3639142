//! Runs the enabled engines for one validated configuration.

use lightmatter_core::ansatz::initial_state_with_offset;
use lightmatter_core::integrator::{self, FieldChanges, NormError, Observer, Populations, Snapshots};
use lightmatter_core::observables::photon_distribution;
use lightmatter_core::oracle::{propagate_exact, ExactRequest};
use lightmatter_core::semiclassical::{field_response, populations_sc, propagate_us};
use lightmatter_core::{PhotonDistribution, TrajectoryRecord};
use serde::Serialize;

use crate::config::Validated;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Variational,
    Semiclassical,
    Oracle,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Variational => "variational",
            Engine::Semiclassical => "semiclassical",
            Engine::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EngineStatus {
    Completed,
    /// Stopped early; any samples before `time` are still written.
    Aborted { time: Option<f64>, message: String },
}

#[derive(Debug, Clone)]
pub struct EngineOutput {
    pub engine: Engine,
    pub record: TrajectoryRecord,
    pub distributions: Vec<PhotonDistribution>,
    pub status: EngineStatus,
}

impl EngineOutput {
    fn failed(engine: Engine, err: impl std::fmt::Display, time: Option<f64>) -> Self {
        Self {
            engine,
            record: TrajectoryRecord::default(),
            distributions: Vec::new(),
            status: EngineStatus::Aborted { time, message: err.to_string() },
        }
    }
}

/// Keeps the time axis and the columns the observables section asks for.
fn select_columns(record: &TrajectoryRecord, v: &Validated) -> TrajectoryRecord {
    let o = &v.config.observables;
    let keep = |name: &str| {
        if name.starts_with("P_") {
            o.populations
        } else if name.starts_with("Pqc_") {
            o.second_order
        } else if name.starts_with("dn_") {
            o.delta_n
        } else if name.starts_with("dvar_") {
            o.delta_variance
        } else {
            true
        }
    };
    let mut out = TrajectoryRecord::default();
    out.time = record.time.clone();
    out.metadata = record.metadata.clone();
    for (name, col) in record.columns() {
        if keep(name) {
            out.insert_column(name.clone(), col.clone()).expect("same time axis");
        }
    }
    out
}

pub fn run_variational(v: &Validated) -> EngineOutput {
    let a = &v.config.ansatz;
    let state = match initial_state_with_offset(&v.spec, &v.psi0, a.multiplicity, a.seed, a.init_offset) {
        Ok(s) => s,
        Err(e) => return EngineOutput::failed(Engine::Variational, e, None),
    };
    let dist_times = v.distribution_times();
    let mut snapshots = Snapshots::new(dist_times.clone(), 1e-9 * v.integration.t_final.max(1.0));
    let mut observers: [&mut dyn Observer; 4] = [&mut Populations, &mut FieldChanges, &mut NormError, &mut snapshots];
    let (record, status) = match integrator::propagate(state, &v.spec, &v.integration, &mut observers) {
        Ok(t) => (t.record, EngineStatus::Completed),
        Err(ab) => {
            let status = EngineStatus::Aborted { time: ab.error.time(), message: ab.error.to_string() };
            (ab.record, status)
        }
    };
    let (windows, grid) = (v.windows(), v.grid());
    let mut distributions = Vec::new();
    let mut status = status;
    for t in dist_times {
        if let Some(s) = snapshots.get(t) {
            match photon_distribution(s, &v.spec, &windows, &grid) {
                Ok(mut d) => {
                    d.time = t;
                    distributions.push(d);
                }
                Err(e) if status == EngineStatus::Completed => {
                    status = EngineStatus::Aborted { time: Some(t), message: e.to_string() };
                }
                Err(_) => {}
            }
        }
    }
    EngineOutput { engine: Engine::Variational, record: select_columns(&record, v), distributions, status }
}

pub fn run_semiclassical(v: &Validated) -> EngineOutput {
    let i = &v.integration;
    let series = match propagate_us(&v.spec, i.t_final, i.dt) {
        Ok(s) => s,
        Err(e) => return EngineOutput::failed(Engine::Semiclassical, &e, e.time()),
    };
    let response = match field_response(&series, &v.spec, &v.psi0) {
        Ok(r) => r,
        Err(e) => return EngineOutput::failed(Engine::Semiclassical, &e, e.time()),
    };
    let pops = populations_sc(&series, &v.psi0);
    let idx: Vec<usize> = (0..series.len()).step_by(i.sample_stride).collect();
    let pick = |col: &[f64]| idx.iter().map(|&k| col[k]).collect::<Vec<f64>>();
    let mut record = TrajectoryRecord::default();
    record.time = pick(series.times());
    let labels = v.spec.labels();
    for (l, p) in labels.iter().zip(&pops) {
        record.insert_column(format!("P_{l}"), pick(p)).expect("unique column");
    }
    for k in 0..v.spec.num_modes() {
        record.insert_column(format!("dn_{}", k + 1), pick(&response.delta_n[k])).expect("unique column");
        record.insert_column(format!("dvar_{}", k + 1), pick(&response.delta_variance[k])).expect("unique column");
    }
    for (l, p) in labels.iter().zip(&response.population_correction) {
        record.insert_column(format!("Pqc_{l}"), pick(p)).expect("unique column");
    }
    record.metadata.insert("max_unitarity_drift".into(), format!("{:e}", series.max_unitarity_drift()));
    EngineOutput {
        engine: Engine::Semiclassical,
        record: select_columns(&record, v),
        distributions: Vec::new(),
        status: EngineStatus::Completed,
    }
}

pub fn run_oracle(v: &Validated) -> EngineOutput {
    let request = ExactRequest {
        times: v.sample_times(),
        distribution_times: v.distribution_times(),
        windows: Some(v.windows()),
    };
    match propagate_exact(&v.spec, &v.psi0, &v.fock_config(), &request) {
        Ok(mut t) => {
            t.record.metadata.insert("hilbert_dim".into(), t.dim.to_string());
            EngineOutput {
                engine: Engine::Oracle,
                record: select_columns(&t.record, v),
                distributions: t.distributions,
                status: EngineStatus::Completed,
            }
        }
        Err(e) => EngineOutput::failed(Engine::Oracle, &e, e.time()),
    }
}

/// Runs every enabled engine in a fixed order.
pub fn run_all(v: &Validated) -> Vec<EngineOutput> {
    let e = &v.config.engines;
    let mut out = Vec::new();
    if e.variational {
        out.push(run_variational(v));
    }
    if e.semiclassical {
        out.push(run_semiclassical(v));
    }
    if e.oracle {
        out.push(run_oracle(v));
    }
    out
}
