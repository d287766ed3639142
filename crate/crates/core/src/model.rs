//! Model specifications for a finite-dimensional quantum system coupled to
//! N bosonic modes, and the pieces of the displaced interaction-frame
//! Hamiltonian used by every solver.
//!
//! The full Hamiltonian is
//!
//! ```text
//! H = H_S + Σ_k ω_k b_k†b_k + Σ_k (g_k/2)(b_k† V_k + b_k V_k†)
//! ```
//!
//! and every mode starts in the coherent state |α_k⟩ with
//! α_k = |α_k| e^{-iφ_k}. After moving to the interaction picture of the free
//! field and displacing by α⃗, the Hamiltonian splits into a classically driven
//! system part H_S(t) and a residual quantized coupling of strength g_k.

use crate::error::{invalid, Error, Result};
use crate::{CMatrix, C64, I};

/// Largest number of qubits accepted by [`build_dicke`].
pub const DEFAULT_MAX_QUBITS: usize = 8;

const HERMITIAN_TOL: f64 = 1e-12;

/// Whether a coupling operator is Hermitian (counter-rotating terms kept) or
/// a lowering-type operator (rotating-wave approximation).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingKind {
    Rwa,
    Hermitian,
}

/// One bosonic mode and its coupling to the system.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpec {
    frequency: f64,
    coupling: f64,
    amplitude: f64,
    phase: f64,
    operator: CMatrix,
    kind: CouplingKind,
}

impl ModeSpec {
    pub fn new(
        frequency: f64,
        coupling: f64,
        amplitude: f64,
        phase: f64,
        operator: CMatrix,
    ) -> Result<Self> {
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(invalid(format!("mode frequency must be > 0, got {frequency}")));
        }
        if !(coupling.is_finite() && coupling >= 0.0) {
            return Err(invalid(format!("coupling must be >= 0, got {coupling}")));
        }
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(invalid(format!("|alpha| must be >= 0, got {amplitude}")));
        }
        if !phase.is_finite() {
            return Err(invalid("phase must be finite"));
        }
        if !operator.is_square() {
            return Err(invalid("coupling operator must be square"));
        }
        if !(coupling * amplitude).is_finite() {
            return Err(invalid("Rabi frequency g|alpha| is not finite"));
        }
        let kind = if is_hermitian(&operator, HERMITIAN_TOL) {
            CouplingKind::Hermitian
        } else {
            CouplingKind::Rwa
        };
        Ok(Self {
            frequency,
            coupling,
            amplitude,
            phase: phase.rem_euclid(std::f64::consts::TAU),
            operator,
            kind,
        })
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    /// Bare coupling constant g_k.
    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    /// Modulus |α_k| of the initial coherent amplitude.
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Initial mean photon number |α_k|².
    pub fn mean_photons(&self) -> f64 {
        self.amplitude * self.amplitude
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    /// Complex coherent amplitude α_k = |α_k| e^{-iφ_k}.
    pub fn alpha(&self) -> C64 {
        C64::from_polar(self.amplitude, -self.phase)
    }

    /// Rabi frequency Ω_k = g_k |α_k|.
    pub fn rabi_frequency(&self) -> f64 {
        self.coupling * self.amplitude
    }

    pub fn operator(&self) -> &CMatrix {
        &self.operator
    }

    pub fn kind(&self) -> CouplingKind {
        self.kind
    }
}

/// Converts a (Ω, |α|) parameterization into the bare coupling g = Ω/|α|.
pub fn coupling_from_rabi(rabi_frequency: f64, amplitude: f64) -> Result<f64> {
    if rabi_frequency == 0.0 {
        return Ok(0.0);
    }
    if !(amplitude > 0.0) {
        return Err(invalid("a nonzero Rabi frequency needs |alpha| > 0"));
    }
    Ok(rabi_frequency / amplitude)
}

/// System Hamiltonian, basis labels and modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    system_hamiltonian: CMatrix,
    modes: Vec<ModeSpec>,
    labels: Vec<String>,
}

impl ModelSpec {
    pub fn new(system_hamiltonian: CMatrix, modes: Vec<ModeSpec>, labels: Vec<String>) -> Result<Self> {
        let dim = system_hamiltonian.nrows();
        if dim == 0 || !system_hamiltonian.is_square() {
            return Err(invalid("system Hamiltonian must be a non-empty square matrix"));
        }
        let scale = system_hamiltonian.iter().map(|z| z.norm()).fold(1.0, f64::max);
        if !is_hermitian(&system_hamiltonian, HERMITIAN_TOL * scale) {
            return Err(invalid("system Hamiltonian is not Hermitian"));
        }
        if modes.is_empty() {
            return Err(invalid("at least one mode is required"));
        }
        if let Some(k) = modes.iter().position(|m| m.operator.nrows() != dim) {
            return Err(invalid(format!(
                "mode {k} operator dimension {} does not match system dimension {dim}",
                modes[k].operator.nrows()
            )));
        }
        if labels.len() != dim {
            return Err(invalid(format!("expected {dim} basis labels, got {}", labels.len())));
        }
        Ok(Self {
            system_hamiltonian,
            modes,
            labels,
        })
    }

    /// System dimension N_S.
    pub fn dim(&self) -> usize {
        self.system_hamiltonian.nrows()
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn system_hamiltonian(&self) -> &CMatrix {
        &self.system_hamiltonian
    }

    pub fn modes(&self) -> &[ModeSpec] {
        &self.modes
    }

    pub fn mode(&self, k: usize) -> &ModeSpec {
        &self.modes[k]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// True when every coupling operator is lowering-type.
    pub fn is_rwa(&self) -> bool {
        self.modes.iter().all(|m| m.kind == CouplingKind::Rwa)
    }
}

fn check_frequency(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be > 0, got {value}")))
    }
}

fn sigma_z() -> CMatrix {
    // basis (|1> ground, |2> excited): sigma_z = |2><2| - |1><1|
    CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::new(-1.0, 0.0), C64::new(1.0, 0.0)]))
}

fn sigma_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[C64::ZERO, C64::ONE, C64::ONE, C64::ZERO])
}

fn sigma_minus() -> CMatrix {
    // |1><2|
    CMatrix::from_row_slice(2, 2, &[C64::ZERO, C64::ONE, C64::ZERO, C64::ZERO])
}

fn qubit_labels() -> Vec<String> {
    vec!["1".into(), "2".into()]
}

/// Jaynes–Cummings model: H_S = (ω₀/2)σ_z, interaction (g/2)(bσ₊ + b†σ₋).
pub fn build_jc(omega0: f64, omega: f64, coupling: f64, amplitude: f64, phase: f64) -> Result<ModelSpec> {
    check_frequency("omega0", omega0)?;
    check_frequency("omega", omega)?;
    let mode = ModeSpec::new(omega, coupling, amplitude, phase, sigma_minus())?;
    ModelSpec::new(sigma_z() * C64::from(omega0 / 2.0), vec![mode], qubit_labels())
}

/// Quantum Rabi model: H_S = (ω₀/2)σ_z, interaction (g/2)(b + b†)σ_x.
pub fn build_rabi(omega0: f64, omega: f64, coupling: f64, amplitude: f64, phase: f64) -> Result<ModelSpec> {
    build_multimode_rabi(omega0, &[MultimodeEntry::new(omega, coupling, amplitude, phase)])
}

/// Per-mode parameters for [`build_multimode_rabi`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultimodeEntry {
    pub frequency: f64,
    pub coupling: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl MultimodeEntry {
    pub fn new(frequency: f64, coupling: f64, amplitude: f64, phase: f64) -> Self {
        Self {
            frequency,
            coupling,
            amplitude,
            phase,
        }
    }
}

/// A two-level system coupled through σ_x to several modes.
pub fn build_multimode_rabi(omega0: f64, entries: &[MultimodeEntry]) -> Result<ModelSpec> {
    check_frequency("omega0", omega0)?;
    if entries.is_empty() {
        return Err(invalid("mode list is empty"));
    }
    let modes = entries
        .iter()
        .map(|e| ModeSpec::new(e.frequency, e.coupling, e.amplitude, e.phase, sigma_x()))
        .collect::<Result<Vec<_>>>()?;
    ModelSpec::new(sigma_z() * C64::from(omega0 / 2.0), modes, qubit_labels())
}

/// Dicke model with one mode and `omega0s.len()` qubits of possibly
/// different transition frequencies.
///
/// Qubit j is the j-th Kronecker factor, most significant first, so basis
/// index 0 is the all-ground state. The interaction is (g/2)(b + b†)Σ_j σ_{x,j}.
pub fn build_dicke(omega0s: &[f64], omega: f64, coupling: f64, amplitude: f64, phase: f64) -> Result<ModelSpec> {
    build_dicke_with_capacity(omega0s, omega, coupling, amplitude, phase, DEFAULT_MAX_QUBITS)
}

pub fn build_dicke_with_capacity(
    omega0s: &[f64],
    omega: f64,
    coupling: f64,
    amplitude: f64,
    phase: f64,
    max_qubits: usize,
) -> Result<ModelSpec> {
    let nq = omega0s.len();
    if nq == 0 {
        return Err(invalid("Dicke model needs at least one qubit"));
    }
    if nq > max_qubits {
        return Err(Error::Capacity {
            what: "qubits",
            requested: nq,
            limit: max_qubits,
        });
    }
    for &w in omega0s {
        check_frequency("omega0", w)?;
    }
    check_frequency("omega", omega)?;

    let dim = 1usize << nq;
    let mut h_s = CMatrix::zeros(dim, dim);
    let mut v = CMatrix::zeros(dim, dim);
    for (j, &w0) in omega0s.iter().enumerate() {
        h_s += embed(&(sigma_z() * C64::from(w0 / 2.0)), j, nq);
        v += embed(&sigma_x(), j, nq);
    }
    let labels = (0..dim)
        .map(|s| {
            (0..nq)
                .map(|j| if (s >> (nq - 1 - j)) & 1 == 1 { '2' } else { '1' })
                .collect::<String>()
        })
        .collect();
    let mode = ModeSpec::new(omega, coupling, amplitude, phase, v)?;
    ModelSpec::new(h_s, vec![mode], labels)
}

/// I ⊗ ... ⊗ op ⊗ ... ⊗ I with `op` at qubit `site` (site 0 most significant).
fn embed(op: &CMatrix, site: usize, nq: usize) -> CMatrix {
    let mut out = CMatrix::identity(1, 1);
    for j in 0..nq {
        let factor = if j == site { op.clone() } else { CMatrix::identity(2, 2) };
        out = out.kronecker(&factor);
    }
    out
}

/// Semiclassical driven Hamiltonian
/// H_S(t) = H_S + Σ_k (Ω_k/2)[V_k e^{i(ω_k t+φ_k)} + V_k† e^{-i(ω_k t+φ_k)}].
pub fn driven_system_hamiltonian(spec: &ModelSpec, t: f64) -> CMatrix {
    let mut h = spec.system_hamiltonian.clone();
    for mode in &spec.modes {
        let rabi = mode.rabi_frequency();
        if rabi == 0.0 {
            continue;
        }
        let phase = (I * (mode.frequency * t + mode.phase)).exp() * (rabi / 2.0);
        let v = &mode.operator;
        for r in 0..h.nrows() {
            for c in 0..h.ncols() {
                h[(r, c)] += phase * v[(r, c)] + phase.conj() * v[(c, r)].conj();
            }
        }
    }
    h
}

/// Residual quantized coupling of the displaced frame: for each mode the
/// phase factor c_k = (g_k/2) e^{iω_k t} and the operator V_k, so that the
/// interaction reads Σ_k [c_k* V_k† b_k + c_k V_k b_k†].
pub fn residual_couplings(spec: &ModelSpec, t: f64) -> Vec<(C64, &CMatrix)> {
    spec.modes
        .iter()
        .map(|m| ((I * (m.frequency * t)).exp() * (m.coupling / 2.0), &m.operator))
        .collect()
}

pub(crate) fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    (0..n).all(|r| (0..n).all(|c| (m[(r, c)] - m[(c, r)].conj()).norm() <= tol))
}
