//! Fourth-order Runge–Kutta propagation of the variational parameters.
//!
//! The equations of motion are implicit through the metric, so every stage
//! assembles and solves the linear system anew.

use thiserror::Error;

use crate::ansatz::{self, DavydovState, StateDerivative, DEFAULT_REGULARIZATION};
use crate::error::{invalid, Error, Result};
use crate::model::ModelSpec;
use crate::observables;
use crate::record::TrajectoryRecord;
use crate::{CMatrix, C64};

/// Single-step norm change above which a step is redone as two half steps.
pub const DEFAULT_STEP_DRIFT_LIMIT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Abort when |norm − 1| exceeds this.
    pub norm_tolerance: f64,
    /// Steps between recorded samples.
    pub sample_stride: usize,
    /// Relative Tikhonov shift passed to [`ansatz::solve_eom`].
    pub reg: f64,
    /// Step-halving trigger; `None` disables refinement.
    pub step_drift_limit: Option<f64>,
    /// Maximum number of successive halvings of one step.
    pub max_refinements: u32,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_final: 0.0,
            norm_tolerance: 1e-6,
            sample_stride: 1,
            reg: DEFAULT_REGULARIZATION,
            step_drift_limit: Some(DEFAULT_STEP_DRIFT_LIMIT),
            max_refinements: 2,
        }
    }
}

impl IntegrationConfig {
    pub fn new(dt: f64, t_final: f64, sample_stride: usize) -> Self {
        Self {
            dt,
            t_final,
            sample_stride,
            ..Self::default()
        }
    }

    /// Checks the invariants and returns the number of steps.
    pub fn validate(&self) -> Result<usize> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(invalid(format!("t_final must be >= 0, got {}", self.t_final)));
        }
        if self.sample_stride == 0 {
            return Err(invalid("sample_stride must be >= 1"));
        }
        if !(self.norm_tolerance > 0.0) {
            return Err(invalid("norm_tolerance must be > 0"));
        }
        if !(self.reg.is_finite() && self.reg >= 0.0) {
            return Err(invalid("reg must be >= 0"));
        }
        let steps = (self.t_final / self.dt).round();
        if (steps * self.dt - self.t_final).abs() > 1e-9 * self.t_final.max(1.0) {
            return Err(invalid(format!(
                "t_final = {} is not a multiple of dt = {}",
                self.t_final, self.dt
            )));
        }
        Ok(steps as usize)
    }

    /// Time of the `i`-th recorded sample.
    pub fn sample_time(&self, i: usize) -> f64 {
        (i * self.sample_stride) as f64 * self.dt
    }
}

/// Variational time derivative at the state's own time.
pub fn derivative(state: &DavydovState, spec: &ModelSpec, reg: f64) -> Result<StateDerivative> {
    let eom = ansatz::assemble_eom(state, spec)?;
    ansatz::solve_eom(&eom, reg)
}

fn displaced(state: &DavydovState, d: &StateDerivative, h: f64, time: f64) -> DavydovState {
    DavydovState {
        amplitudes: &state.amplitudes + &d.amplitudes * C64::from(h),
        displacements: &state.displacements + &d.displacements * C64::from(h),
        time,
    }
}

/// One classic RK4 step of size `dt` using the default regularization.
pub fn step(state: &DavydovState, spec: &ModelSpec, dt: f64) -> Result<DavydovState> {
    step_with_reg(state, spec, dt, DEFAULT_REGULARIZATION)
}

pub fn step_with_reg(state: &DavydovState, spec: &ModelSpec, dt: f64, reg: f64) -> Result<DavydovState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid(format!("dt must be > 0, got {dt}")));
    }
    let t = state.time;
    let k1 = derivative(state, spec, reg)?;
    let k2 = derivative(&displaced(state, &k1, dt / 2.0, t + dt / 2.0), spec, reg)?;
    let k3 = derivative(&displaced(state, &k2, dt / 2.0, t + dt / 2.0), spec, reg)?;
    let k4 = derivative(&displaced(state, &k3, dt, t + dt), spec, reg)?;
    let w = |a: &CMatrix, b: &CMatrix, c: &CMatrix, d: &CMatrix| -> CMatrix {
        (a + (b + c) * C64::from(2.0) + d) * C64::from(dt / 6.0)
    };
    let next = DavydovState {
        amplitudes: &state.amplitudes + w(&k1.amplitudes, &k2.amplitudes, &k3.amplitudes, &k4.amplitudes),
        displacements: &state.displacements
            + w(&k1.displacements, &k2.displacements, &k3.displacements, &k4.displacements),
        time: t + dt,
    };
    if !next.is_finite() {
        return Err(Error::NonFinite { time: t + dt });
    }
    Ok(next)
}

/// Advances by `dt`, splitting the step in halves while the norm changes by
/// more than the configured single-step limit.
fn refined_step(state: &DavydovState, spec: &ModelSpec, dt: f64, cfg: &IntegrationConfig, depth: u32, stats: &mut StepStats) -> Result<DavydovState> {
    let next = step_with_reg(state, spec, dt, cfg.reg)?;
    stats.steps += 1;
    let Some(limit) = cfg.step_drift_limit else {
        return Ok(next);
    };
    if depth >= cfg.max_refinements {
        return Ok(next);
    }
    let drift = (ansatz::norm(&next) - ansatz::norm(state)).abs();
    if drift <= limit {
        return Ok(next);
    }
    stats.refinements += 1;
    let half = refined_step(state, spec, dt / 2.0, cfg, depth + 1, stats)?;
    refined_step(&half, spec, dt / 2.0, cfg, depth + 1, stats)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    /// RK4 steps actually taken, including refined sub-steps.
    pub steps: usize,
    /// Number of times a step was split.
    pub refinements: usize,
}

/// Something sampled along a trajectory.
pub trait Observer {
    fn columns(&self, spec: &ModelSpec) -> Vec<String>;
    fn observe(&mut self, state: &DavydovState, spec: &ModelSpec, out: &mut Vec<f64>);
}

/// P_j for every basis state, columns `P_<label>`.
pub struct Populations;

impl Observer for Populations {
    fn columns(&self, spec: &ModelSpec) -> Vec<String> {
        spec.labels().iter().map(|l| format!("P_{l}")).collect()
    }

    fn observe(&mut self, state: &DavydovState, _spec: &ModelSpec, out: &mut Vec<f64>) {
        let weights = observables::branch_weights(state);
        out.extend((0..state.system_dim()).map(|j| observables::population_with(&weights, state, j)));
    }
}

/// Δn_k and Δσ²_k for every mode, columns `dn_k`, `dvar_k`.
pub struct FieldChanges;

impl Observer for FieldChanges {
    fn columns(&self, spec: &ModelSpec) -> Vec<String> {
        (1..=spec.num_modes())
            .flat_map(|k| [format!("dn_{k}"), format!("dvar_{k}")])
            .collect()
    }

    fn observe(&mut self, state: &DavydovState, spec: &ModelSpec, out: &mut Vec<f64>) {
        for m in observables::field_moments(state, spec).changes() {
            out.push(m.0);
            out.push(m.1);
        }
    }
}

/// |norm − 1|, column `norm_error`.
pub struct NormError;

impl Observer for NormError {
    fn columns(&self, _spec: &ModelSpec) -> Vec<String> {
        vec!["norm_error".into()]
    }

    fn observe(&mut self, state: &DavydovState, _spec: &ModelSpec, out: &mut Vec<f64>) {
        out.push((ansatz::norm(state) - 1.0).abs());
    }
}

/// Keeps copies of the state at requested sample times; adds no columns.
#[derive(Debug, Clone, Default)]
pub struct Snapshots {
    pub times: Vec<f64>,
    pub tolerance: f64,
    pub states: Vec<DavydovState>,
}

impl Snapshots {
    pub fn new(times: Vec<f64>, tolerance: f64) -> Self {
        Self {
            times,
            tolerance,
            states: Vec::new(),
        }
    }

    pub fn get(&self, t: f64) -> Option<&DavydovState> {
        self.states.iter().find(|s| (s.time - t).abs() <= self.tolerance)
    }
}

impl Observer for Snapshots {
    fn columns(&self, _spec: &ModelSpec) -> Vec<String> {
        Vec::new()
    }

    fn observe(&mut self, state: &DavydovState, _spec: &ModelSpec, _out: &mut Vec<f64>) {
        if self.times.iter().any(|&t| (state.time - t).abs() <= self.tolerance) {
            self.states.push(state.clone());
        }
    }
}

/// Successful propagation.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub record: TrajectoryRecord,
    pub state: DavydovState,
    pub stats: StepStats,
}

/// Propagation stopped early; the samples recorded so far are kept.
#[derive(Debug, Error)]
#[error("propagation aborted at t = {}: {error}", state.time)]
pub struct Aborted {
    #[source]
    pub error: Error,
    pub record: TrajectoryRecord,
    pub state: DavydovState,
}

/// Steps from `state.time` to `t_final`, recording observers every
/// `sample_stride` steps (including the initial sample).
pub fn propagate(
    state: DavydovState,
    spec: &ModelSpec,
    cfg: &IntegrationConfig,
    observers: &mut [&mut dyn Observer],
) -> std::result::Result<Trajectory, Box<Aborted>> {
    let mut record = TrajectoryRecord::new(observers.iter().flat_map(|o| o.columns(spec)));
    let abort = |error, record, state| Box::new(Aborted { error, record, state });
    let steps = match cfg.validate() {
        Ok(n) => n,
        Err(e) => return Err(abort(e, record, state)),
    };
    let t0 = state.time;
    let mut buf = Vec::new();
    let mut sample = |st: &DavydovState, record: &mut TrajectoryRecord, observers: &mut [&mut dyn Observer]| {
        buf.clear();
        for o in observers.iter_mut() {
            o.observe(st, spec, &mut buf);
        }
        record.push(st.time, &buf)
    };
    if let Err(e) = sample(&state, &mut record, observers) {
        return Err(abort(e, record, state));
    }
    let mut stats = StepStats::default();
    let mut current = state;
    for i in 1..=steps {
        let mut next = match refined_step(&current, spec, cfg.dt, cfg, 0, &mut stats) {
            Ok(s) => s,
            Err(e) => return Err(abort(e, record, current)),
        };
        next.time = t0 + i as f64 * cfg.dt;
        let drift = (ansatz::norm(&next) - 1.0).abs();
        if drift > cfg.norm_tolerance {
            let e = Error::NormDrift {
                time: next.time,
                drift,
                tolerance: cfg.norm_tolerance,
            };
            return Err(abort(e, record, next));
        }
        if i % cfg.sample_stride == 0 {
            if let Err(e) = sample(&next, &mut record, observers) {
                return Err(abort(e, record, next));
            }
        }
        current = next;
    }
    Ok(Trajectory {
        record,
        state: current,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::initial_state;
    use crate::model::build_jc;
    use crate::{C64, I};
    use approx::assert_abs_diff_eq;

    #[test]
    fn free_phases() {
        let spec = build_jc(1.3, 1.0, 0.0, 0.0, 0.0).unwrap();
        let psi = [C64::new(0.6, 0.0), C64::new(0.8, 0.0)];
        let st = initial_state(&spec, &psi, 1, 0).unwrap();
        let dt = 0.05;
        let next = step(&st, &spec, dt).unwrap();
        let e = [-0.65, 0.65];
        for j in 0..2 {
            let exact = psi[j] * (-I * e[j] * dt).exp();
            assert!((next.amplitudes[(0, j)] - exact).norm() < 1e-9);
        }
        assert_abs_diff_eq!(next.time, dt);
    }

    #[test]
    fn zero_horizon_keeps_only_initial_sample() {
        let spec = build_jc(1.0, 1.0, 0.1, 3.0, 0.0).unwrap();
        let st = initial_state(&spec, &[C64::ONE, C64::ZERO], 2, 1).unwrap();
        let cfg = IntegrationConfig::new(0.01, 0.0, 1);
        let traj = propagate(st, &spec, &cfg, &mut [&mut Populations, &mut NormError]).unwrap();
        assert_eq!(traj.record.len(), 1);
        assert_eq!(traj.record.column("P_1").unwrap(), &[1.0]);
    }

    #[test]
    fn samples_are_evenly_spaced() {
        let spec = build_jc(1.0, 1.0, 0.1, 3.0, 0.0).unwrap();
        let st = initial_state(&spec, &[C64::ONE, C64::ZERO], 1, 0).unwrap();
        let cfg = IntegrationConfig::new(0.01, 1.0, 10);
        let traj = propagate(st, &spec, &cfg, &mut [&mut Populations]).unwrap();
        assert_eq!(traj.record.len(), 11);
        for w in traj.record.time.windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], 0.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        assert!(IntegrationConfig::new(0.0, 1.0, 1).validate().is_err());
        assert!(IntegrationConfig::new(0.01, 1.0, 0).validate().is_err());
        assert!(IntegrationConfig::new(0.3, 1.0, 1).validate().is_err());
        assert!(step(
            &initial_state(&build_jc(1.0, 1.0, 0.1, 1.0, 0.0).unwrap(), &[C64::ONE, C64::ZERO], 1, 0).unwrap(),
            &build_jc(1.0, 1.0, 0.1, 1.0, 0.0).unwrap(),
            -0.1
        )
        .is_err());
    }

    #[test]
    fn norm_drift_abort_keeps_partial_record() {
        let spec = build_jc(1.0, 1.0, 0.1, 3.0, 0.0).unwrap();
        let st = initial_state(&spec, &[C64::ONE, C64::ZERO], 1, 0).unwrap();
        let mut cfg = IntegrationConfig::new(0.5, 50.0, 1);
        cfg.norm_tolerance = 1e-14;
        cfg.step_drift_limit = None;
        let err = propagate(st, &spec, &cfg, &mut [&mut Populations]).unwrap_err();
        assert!(matches!(err.error, Error::NormDrift { .. }));
        assert!(err.record.len() >= 1);
        assert!(err.error.time().is_some());
    }
}
