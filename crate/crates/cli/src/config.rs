//! Run configuration: TOML on disk, validated into core model types.
//!
//! All parameters are in units of ω₀ = 1 (ħ = 1). Coupling may be given as
//! `coupling` (g) or `rabi_frequency` (Ω = g|α|), field strength as
//! `mean_photons` (|α|²) or `amplitude` (|α|).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lightmatter_core::integrator::DEFAULT_STEP_DRIFT_LIMIT;
use lightmatter_core::model::{self, MultimodeEntry};
use lightmatter_core::observables::ModeWindow;
use lightmatter_core::oracle::FockConfig;
use lightmatter_core::{IntegrationConfig, ModelSpec, C64};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Version of the configuration dialect understood by this build.
pub const FORMAT_VERSION: u32 = 1;

/// Environment variable that relocates every output directory.
pub const OUTPUT_ROOT_ENV: &str = "LIGHTMATTER_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "format_version")]
    pub format_version: u32,
    pub model: ModelConfig,
    #[serde(default)]
    pub ansatz: AnsatzConfig,
    pub integration: IntegrationSection,
    #[serde(default)]
    pub observables: ObservablesConfig,
    #[serde(default)]
    pub engines: EnginesConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Dotted config keys mapped to the values to sweep over.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sweep: BTreeMap<String, Vec<toml::Value>>,
}

fn format_version() -> u32 {
    FORMAT_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelConfig {
    Jc(SingleModeConfig),
    Rabi(SingleModeConfig),
    MultimodeRabi(MultimodeConfig),
    Dicke(DickeConfig),
}

/// Coupling strength and coherent amplitude of one mode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldParams {
    pub coupling: Option<f64>,
    pub rabi_frequency: Option<f64>,
    pub mean_photons: Option<f64>,
    pub amplitude: Option<f64>,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleModeConfig {
    #[serde(default = "one")]
    pub omega0: f64,
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(flatten)]
    pub field: FieldParams,
    /// Initial system state as [re, im] pairs; defaults to the ground state.
    pub initial_state: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub frequency: f64,
    #[serde(flatten)]
    pub field: FieldParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultimodeConfig {
    #[serde(default = "one")]
    pub omega0: f64,
    pub modes: Vec<ModeConfig>,
    pub initial_state: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DickeConfig {
    pub qubit_frequencies: Vec<f64>,
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(flatten)]
    pub field: FieldParams,
    pub initial_state: Option<Vec<[f64; 2]>>,
    #[serde(default = "max_qubits")]
    pub max_qubits: usize,
}

fn one() -> f64 {
    1.0
}

fn max_qubits() -> usize {
    model::DEFAULT_MAX_QUBITS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnsatzConfig {
    pub multiplicity: usize,
    pub init_offset: f64,
    pub seed: u64,
    pub reg: f64,
}

impl Default for AnsatzConfig {
    fn default() -> Self {
        Self {
            multiplicity: 2,
            init_offset: lightmatter_core::ansatz::DEFAULT_INIT_OFFSET,
            seed: 0,
            reg: lightmatter_core::ansatz::DEFAULT_REGULARIZATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
    #[serde(default = "default_norm_tolerance")]
    pub norm_tolerance: f64,
    /// Single-step norm change that triggers step halving; 0 disables it.
    #[serde(default = "default_drift_limit")]
    pub step_drift_limit: f64,
    #[serde(default = "default_refinements")]
    pub max_refinements: u32,
}

fn default_dt() -> f64 {
    0.01
}
fn default_stride() -> usize {
    1
}
fn default_norm_tolerance() -> f64 {
    1e-6
}
fn default_drift_limit() -> f64 {
    DEFAULT_STEP_DRIFT_LIMIT
}
fn default_refinements() -> u32 {
    IntegrationConfig::default().max_refinements
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservablesConfig {
    pub populations: bool,
    pub delta_n: bool,
    pub delta_variance: bool,
    /// Adds the O(g²) population correction columns to the semiclassical record.
    pub second_order: bool,
    pub distribution: Option<DistributionConfig>,
}

impl Default for ObservablesConfig {
    fn default() -> Self {
        Self {
            populations: true,
            delta_n: true,
            delta_variance: true,
            second_order: false,
            distribution: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionConfig {
    pub times: Vec<f64>,
    /// Per mode [center, half_width]; defaults follow the initial amplitudes.
    pub windows: Option<Vec<[usize; 2]>>,
    /// χ-grid points per mode; defaults to 4W+1.
    pub grid: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnginesConfig {
    pub variational: bool,
    pub semiclassical: bool,
    pub oracle: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub cutoffs: Option<Vec<usize>>,
    pub tail_tolerance: Option<f64>,
    pub max_dim: Option<usize>,
    pub dense_limit: Option<usize>,
    pub krylov_dim: Option<usize>,
    pub krylov_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Any of "csv" (always written) and "json".
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("output"),
            formats: vec!["csv".into()],
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl FieldParams {
    /// (g, |α|) after resolving the alternative parameterizations.
    fn resolve(&self, what: &str) -> Result<(f64, f64), CliError> {
        let amplitude = match (self.mean_photons, self.amplitude) {
            (Some(n), None) if n >= 0.0 => n.sqrt(),
            (None, Some(a)) if a >= 0.0 => a,
            (Some(_), Some(_)) => return Err(bad(format!("{what}: give mean_photons or amplitude, not both"))),
            (None, None) => return Err(bad(format!("{what}: mean_photons or amplitude is required"))),
            _ => return Err(bad(format!("{what}: field strength must be >= 0"))),
        };
        let coupling = match (self.coupling, self.rabi_frequency) {
            (Some(g), None) => g,
            (None, Some(r)) => model::coupling_from_rabi(r, amplitude).map_err(|e| bad(format!("{what}: {e}")))?,
            (Some(_), Some(_)) => return Err(bad(format!("{what}: give coupling or rabi_frequency, not both"))),
            (None, None) => return Err(bad(format!("{what}: coupling or rabi_frequency is required"))),
        };
        Ok((coupling, amplitude))
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<ModelSpec, CliError> {
        let spec = match self {
            ModelConfig::Jc(c) | ModelConfig::Rabi(c) => {
                let (g, a) = c.field.resolve("model")?;
                if matches!(self, ModelConfig::Jc(_)) {
                    model::build_jc(c.omega0, c.omega, g, a, c.field.phase)
                } else {
                    model::build_rabi(c.omega0, c.omega, g, a, c.field.phase)
                }
            }
            ModelConfig::MultimodeRabi(c) => {
                let entries = c
                    .modes
                    .iter()
                    .enumerate()
                    .map(|(k, m)| {
                        let (g, a) = m.field.resolve(&format!("model.modes[{k}]"))?;
                        Ok(MultimodeEntry::new(m.frequency, g, a, m.field.phase))
                    })
                    .collect::<Result<Vec<_>, CliError>>()?;
                model::build_multimode_rabi(c.omega0, &entries)
            }
            ModelConfig::Dicke(c) => {
                let (g, a) = c.field.resolve("model")?;
                model::build_dicke_with_capacity(&c.qubit_frequencies, c.omega, g, a, c.field.phase, c.max_qubits)
            }
        };
        spec.map_err(|e| bad(format!("model: {e}")))
    }

    fn initial_state(&self) -> Option<&Vec<[f64; 2]>> {
        match self {
            ModelConfig::Jc(c) | ModelConfig::Rabi(c) => c.initial_state.as_ref(),
            ModelConfig::MultimodeRabi(c) => c.initial_state.as_ref(),
            ModelConfig::Dicke(c) => c.initial_state.as_ref(),
        }
    }
}

/// A configuration checked against the model it describes.
#[derive(Debug, Clone)]
pub struct Validated {
    pub config: RunConfig,
    pub spec: ModelSpec,
    pub psi0: Vec<C64>,
    pub integration: IntegrationConfig,
    pub hash: String,
}

impl Validated {
    pub fn fock_config(&self) -> FockConfig {
        let o = &self.config.oracle;
        let mut cfg = match &o.cutoffs {
            Some(c) => FockConfig::with_cutoffs(c.clone()),
            None => FockConfig::for_model(&self.spec),
        };
        if let Some(v) = o.tail_tolerance {
            cfg.tail_tolerance = v;
        }
        if let Some(v) = o.max_dim {
            cfg.max_dim = v;
        }
        if let Some(v) = o.dense_limit {
            cfg.dense_limit = v;
        }
        if let Some(v) = o.krylov_dim {
            cfg.krylov_dim = v;
        }
        if let Some(v) = o.krylov_tolerance {
            cfg.krylov_tolerance = v;
        }
        cfg
    }

    /// Distribution windows, one per mode.
    pub fn windows(&self) -> Vec<ModeWindow> {
        match self.config.observables.distribution.as_ref().and_then(|d| d.windows.as_ref()) {
            Some(w) => w.iter().map(|&[center, half_width]| ModeWindow { center, half_width }).collect(),
            None => self.spec.modes().iter().map(|m| ModeWindow::default_for(m.amplitude())).collect(),
        }
    }

    pub fn grid(&self) -> Vec<usize> {
        match self.config.observables.distribution.as_ref().and_then(|d| d.grid.clone()) {
            Some(g) => g,
            None => self.windows().iter().map(|w| w.min_grid()).collect(),
        }
    }

    pub fn distribution_times(&self) -> Vec<f64> {
        self.config.observables.distribution.as_ref().map(|d| d.times.clone()).unwrap_or_default()
    }

    /// Sample times shared by all engines.
    pub fn sample_times(&self) -> Vec<f64> {
        let steps = (self.integration.t_final / self.integration.dt).round() as usize;
        (0..=steps)
            .step_by(self.integration.sample_stride)
            .map(|i| i as f64 * self.integration.dt)
            .collect()
    }

    /// Output directory with the environment override applied.
    pub fn output_dir(&self) -> PathBuf {
        resolve_output(&self.config.output.directory)
    }
}

/// Places relative output directories under `$LIGHTMATTER_OUTPUT_ROOT` when set.
pub fn resolve_output(dir: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() && dir.is_relative() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| bad(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// SHA-256 of the canonical JSON form of every semantic field; the
    /// output section and the sweep table are excluded.
    pub fn semantic_hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        c.sweep.clear();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn validate(&self) -> Result<Validated, CliError> {
        if self.format_version != FORMAT_VERSION {
            return Err(bad(format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let e = &self.engines;
        if !(e.variational || e.semiclassical || e.oracle) {
            return Err(bad("no engine enabled; set at least one of engines.variational, engines.semiclassical, engines.oracle"));
        }
        let spec = self.model.build()?;
        let psi0: Vec<C64> = match self.model.initial_state() {
            Some(v) => v.iter().map(|&[re, im]| C64::new(re, im)).collect(),
            None => {
                let mut v = vec![C64::ZERO; spec.dim()];
                v[0] = C64::ONE;
                v
            }
        };
        if psi0.len() != spec.dim() {
            return Err(bad(format!("initial_state has {} entries, model needs {}", psi0.len(), spec.dim())));
        }
        let norm: f64 = psi0.iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(bad(format!("initial_state is not normalized (norm² = {norm})")));
        }
        if self.ansatz.multiplicity == 0 {
            return Err(bad("ansatz.multiplicity must be >= 1"));
        }
        if !(self.ansatz.init_offset >= 0.0 && self.ansatz.init_offset.is_finite()) {
            return Err(bad("ansatz.init_offset must be >= 0"));
        }
        let i = &self.integration;
        let integration = IntegrationConfig {
            dt: i.dt,
            t_final: i.t_final,
            norm_tolerance: i.norm_tolerance,
            sample_stride: i.sample_stride,
            reg: self.ansatz.reg,
            step_drift_limit: (i.step_drift_limit > 0.0).then_some(i.step_drift_limit),
            max_refinements: i.max_refinements,
        };
        integration.validate().map_err(|e| bad(format!("integration: {e}")))?;
        for f in &self.output.formats {
            if f != "csv" && f != "json" {
                return Err(bad(format!("unknown output format {f:?}")));
            }
        }
        let validated = Validated { config: self.clone(), spec, psi0, integration, hash: self.semantic_hash() };
        if let Some(d) = &self.observables.distribution {
            let times = validated.sample_times();
            for &t in &d.times {
                if !times.iter().any(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0)) {
                    return Err(bad(format!("distribution time {t} is not on the sample grid")));
                }
            }
            let nm = validated.spec.num_modes();
            if d.windows.as_ref().is_some_and(|w| w.len() != nm) || d.grid.as_ref().is_some_and(|g| g.len() != nm) {
                return Err(bad(format!("distribution windows and grid need one entry per mode ({nm})")));
            }
            for (w, g) in validated.windows().iter().zip(validated.grid()) {
                if g < w.min_grid() {
                    return Err(bad(format!("distribution grid {g} is below 4W+1 = {}", w.min_grid())));
                }
            }
        }
        if let Some(c) = &self.oracle.cutoffs {
            if c.len() != validated.spec.num_modes() {
                return Err(bad("oracle.cutoffs needs one entry per mode"));
            }
        }
        Ok(validated)
    }
}

/// Sets a dotted key (e.g. `model.mean_photons`) in a TOML document.
pub fn set_dotted(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| bad(format!("empty sweep key {key:?}")))?;
    let mut table = doc;
    for p in parts {
        table = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| bad(format!("sweep key {key:?}: {p} is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}
