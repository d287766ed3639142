//! Exact propagation in a truncated Fock space, used as ground truth at
//! small photon numbers.
//!
//! Basis ordering: the system index is the slowest, followed by the photon
//! numbers of modes 0, 1, …; each mode k spans 0..=n_max,k.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::model::ModelSpec;
use crate::observables::{ln_factorial, poisson_pmf, ModeWindow, PhotonDistribution};
use crate::record::TrajectoryRecord;
use crate::{CMatrix, CVector, C64, I};

/// Default cap on the total Hilbert-space dimension.
pub const DEFAULT_MAX_DIM: usize = 200_000;
/// Largest dimension propagated by full diagonalization.
pub const DEFAULT_DENSE_LIMIT: usize = 10_000;
/// Default tail tolerance of the initial coherent state.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-10;

/// Truncation and propagation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FockConfig {
    /// Photon cutoff n_max per mode.
    pub cutoffs: Vec<usize>,
    pub tail_tolerance: f64,
    pub max_dim: usize,
    pub dense_limit: usize,
    /// Krylov subspace dimension for the sparse path.
    pub krylov_dim: usize,
    /// Local error bound per Krylov step.
    pub krylov_tolerance: f64,
}

/// ⌈|α|² + 10|α| + 20⌉.
pub fn default_cutoff(amplitude: f64) -> usize {
    (amplitude * amplitude + 10.0 * amplitude + 20.0).ceil() as usize
}

impl FockConfig {
    /// Default cutoffs for every mode of `spec`.
    pub fn for_model(spec: &ModelSpec) -> Self {
        Self::with_cutoffs(spec.modes().iter().map(|m| default_cutoff(m.amplitude())).collect())
    }

    pub fn with_cutoffs(cutoffs: Vec<usize>) -> Self {
        Self {
            cutoffs,
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
            max_dim: DEFAULT_MAX_DIM,
            dense_limit: DEFAULT_DENSE_LIMIT,
            krylov_dim: 30,
            krylov_tolerance: 1e-12,
        }
    }

    /// Adds `extra` photons to every cutoff.
    pub fn widened(&self, extra: usize) -> Self {
        let mut out = self.clone();
        out.cutoffs.iter_mut().for_each(|c| *c += extra);
        out
    }

    /// N_S·Π(n_max,k + 1), checked against the cap.
    pub fn total_dim(&self, spec: &ModelSpec) -> Result<usize> {
        if self.cutoffs.len() != spec.num_modes() {
            return Err(invalid(format!(
                "{} cutoffs given for {} modes",
                self.cutoffs.len(),
                spec.num_modes()
            )));
        }
        let dim = self
            .cutoffs
            .iter()
            .try_fold(spec.dim(), |acc, c| acc.checked_mul(c + 1))
            .unwrap_or(usize::MAX);
        if dim > self.max_dim {
            return Err(Error::Capacity { what: "Fock-space dimension", requested: dim, limit: self.max_dim });
        }
        Ok(dim)
    }
}

/// Hermitian matrix in compressed sparse row form.
#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<C64>,
}

impl SparseHamiltonian {
    fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            cols.push(c);
            values.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { dim, row_ptr, cols, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// y = H x.
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = C64::ZERO;
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[idx] * x[self.cols[idx]];
            }
            *out = acc;
        }
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[range.clone()].binary_search(&c) {
            Ok(i) => self.values[range.start + i],
            Err(_) => C64::ZERO,
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[idx])] = self.values[idx];
            }
        }
        m
    }

    /// max |H_rc − H_cr*|.
    pub fn hermiticity_error(&self) -> f64 {
        let mut err = 0.0f64;
        for r in 0..self.dim {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[idx];
                err = err.max((self.values[idx] - self.get(c, r).conj()).norm());
            }
        }
        err
    }
}

/// Index arithmetic for the product basis.
#[derive(Debug, Clone)]
struct Basis {
    system: usize,
    cutoffs: Vec<usize>,
    strides: Vec<usize>,
    field_dim: usize,
}

impl Basis {
    fn new(system: usize, cutoffs: &[usize]) -> Self {
        let mut strides = vec![1; cutoffs.len()];
        for k in (0..cutoffs.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * (cutoffs[k + 1] + 1);
        }
        let field_dim = cutoffs.iter().map(|c| c + 1).product();
        Self { system, cutoffs: cutoffs.to_vec(), strides, field_dim }
    }

    fn photons(&self, field_index: usize, k: usize) -> usize {
        (field_index / self.strides[k]) % (self.cutoffs[k] + 1)
    }
}

/// Full truncated Hamiltonian
/// H_S⊗1 + Σ ω_k b_k†b_k + Σ (g_k/2)(b_k†V_k + b_kV_k†).
pub fn build_full_hamiltonian(spec: &ModelSpec, cfg: &FockConfig) -> Result<SparseHamiltonian> {
    let dim = cfg.total_dim(spec)?;
    let basis = Basis::new(spec.dim(), &cfg.cutoffs);
    let hs = spec.system_hamiltonian();
    let ns = spec.dim();
    let fd = basis.field_dim;
    let mut triplets = Vec::new();
    for f in 0..fd {
        let photon_energy: f64 = spec
            .modes()
            .iter()
            .enumerate()
            .map(|(k, m)| m.frequency() * basis.photons(f, k) as f64)
            .sum();
        for s in 0..ns {
            let col = s * fd + f;
            for r in 0..ns {
                let mut v = hs[(r, s)];
                if r == s {
                    v += photon_energy;
                }
                if v != C64::ZERO {
                    triplets.push((r * fd + f, col, v));
                }
            }
            for (k, mode) in spec.modes().iter().enumerate() {
                let half_g = mode.coupling() / 2.0;
                if half_g == 0.0 {
                    continue;
                }
                let nk = basis.photons(f, k);
                let op = mode.operator();
                // b†V: raises mode k
                if nk < cfg.cutoffs[k] {
                    let amp = half_g * ((nk + 1) as f64).sqrt();
                    for r in 0..ns {
                        let v = op[(r, s)];
                        if v != C64::ZERO {
                            triplets.push((r * fd + f + basis.strides[k], col, v * amp));
                        }
                    }
                }
                // bV†: lowers mode k
                if nk > 0 {
                    let amp = half_g * (nk as f64).sqrt();
                    for r in 0..ns {
                        let v = op[(s, r)].conj();
                        if v != C64::ZERO {
                            triplets.push((r * fd + f - basis.strides[k], col, v * amp));
                        }
                    }
                }
            }
        }
    }
    Ok(SparseHamiltonian::from_triplets(dim, triplets))
}

/// Coherent-state coefficients ⟨n|α⟩ for n = 0..=cutoff, evaluated in log space.
pub fn coherent_coefficients(alpha: C64, cutoff: usize) -> Vec<C64> {
    let r = alpha.norm();
    let theta = alpha.arg();
    (0..=cutoff)
        .map(|n| {
            if r == 0.0 {
                return if n == 0 { C64::ONE } else { C64::ZERO };
            }
            let ln_mag = -r * r / 2.0 + n as f64 * r.ln() - 0.5 * ln_factorial(n);
            C64::from_polar(ln_mag.exp(), n as f64 * theta)
        })
        .collect()
}

/// Poisson probability mass above `cutoff`.
pub fn coherent_tail(amplitude: f64, cutoff: usize) -> f64 {
    let mean = amplitude * amplitude;
    let mut tail = 0.0;
    let mut n = cutoff + 1;
    loop {
        let p = poisson_pmf(n, mean);
        tail += p;
        if (n as f64) > mean && p < 1e-20 * tail.max(1e-300) || p == 0.0 && (n as f64) > mean {
            break;
        }
        n += 1;
    }
    tail
}

/// |ψ0⟩ ⊗ |α⃗⟩ in the truncated basis; refuses cutoffs with too much tail mass.
pub fn initial_vector(spec: &ModelSpec, psi0: &[C64], cfg: &FockConfig) -> Result<CVector> {
    let dim = cfg.total_dim(spec)?;
    if psi0.len() != spec.dim() {
        return Err(invalid(format!("initial state has length {}, expected {}", psi0.len(), spec.dim())));
    }
    for (k, mode) in spec.modes().iter().enumerate() {
        let tail = coherent_tail(mode.amplitude(), cfg.cutoffs[k]);
        if tail > cfg.tail_tolerance {
            return Err(Error::TailMass { mode: k, tail, tolerance: cfg.tail_tolerance });
        }
    }
    let per_mode: Vec<Vec<C64>> = spec
        .modes()
        .iter()
        .zip(&cfg.cutoffs)
        .map(|(m, &c)| coherent_coefficients(m.alpha(), c))
        .collect();
    let basis = Basis::new(spec.dim(), &cfg.cutoffs);
    let mut field = vec![C64::ONE; basis.field_dim];
    for (f, v) in field.iter_mut().enumerate() {
        for (k, coeffs) in per_mode.iter().enumerate() {
            *v *= coeffs[basis.photons(f, k)];
        }
    }
    let mut out = CVector::zeros(dim);
    for (s, &a) in psi0.iter().enumerate() {
        for (f, &v) in field.iter().enumerate() {
            out[s * basis.field_dim + f] = a * v;
        }
    }
    Ok(out)
}

/// Observables of one exact state.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactObservables {
    pub populations: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub norm: f64,
}

fn observe(spec: &ModelSpec, basis: &Basis, psi: &[C64]) -> ExactObservables {
    let nm = spec.num_modes();
    let mut populations = vec![0.0; basis.system];
    let mut first = vec![0.0; nm];
    let mut second = vec![0.0; nm];
    let mut norm = 0.0;
    for s in 0..basis.system {
        for f in 0..basis.field_dim {
            let p = psi[s * basis.field_dim + f].norm_sqr();
            if p == 0.0 {
                continue;
            }
            populations[s] += p;
            norm += p;
            for k in 0..nm {
                let n = basis.photons(f, k) as f64;
                first[k] += p * n;
                second[k] += p * n * n;
            }
        }
    }
    let variance = first.iter().zip(&second).map(|(m1, m2)| m2 - m1 * m1).collect();
    ExactObservables { populations, mean: first, variance, norm }
}

fn distribution(spec: &ModelSpec, basis: &Basis, psi: &[C64], windows: &[ModeWindow], time: f64) -> Result<PhotonDistribution> {
    let nm = spec.num_modes();
    let total: usize = windows.iter().map(|w| w.len()).product();
    let mut probs = vec![0.0; total];
    for s in 0..basis.system {
        'field: for f in 0..basis.field_dim {
            let mut idx = 0;
            for k in 0..nm {
                let n = basis.photons(f, k);
                let w = windows[k];
                if n < w.lower() || n > w.upper() {
                    continue 'field;
                }
                idx = idx * w.len() + (n - w.lower());
            }
            probs[idx] += psi[s * basis.field_dim + f].norm_sqr();
        }
    }
    PhotonDistribution::from_probabilities(time, windows.to_vec(), probs)
}

/// Output of [`propagate_exact`].
#[derive(Debug, Clone)]
pub struct ExactTrajectory {
    /// Columns P_1.., dn_k, dvar_k, norm_error.
    pub record: TrajectoryRecord,
    pub distributions: Vec<PhotonDistribution>,
    pub final_state: CVector,
    pub dim: usize,
}

/// What to sample during exact propagation.
#[derive(Debug, Clone, Default)]
pub struct ExactRequest {
    pub times: Vec<f64>,
    /// Times at which p(n⃗) is recorded; each must be on `times`.
    pub distribution_times: Vec<f64>,
    /// Windows for the distributions; defaults follow the initial amplitudes.
    pub windows: Option<Vec<ModeWindow>>,
}

enum Propagator {
    Dense { vectors: CMatrix, energies: Vec<f64>, projected: CVector },
    Krylov { hamiltonian: SparseHamiltonian, state: Vec<C64>, time: f64 },
}

/// Propagates |ψ0⟩⊗|α⃗⟩ exactly and samples observables on `request.times`.
pub fn propagate_exact(spec: &ModelSpec, psi0: &[C64], cfg: &FockConfig, request: &ExactRequest) -> Result<ExactTrajectory> {
    let times = &request.times;
    if times.is_empty() {
        return Err(invalid("at least one sample time is required"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) || times[0] < 0.0 {
        return Err(invalid("sample times must be non-negative and increasing"));
    }
    let mut dist_index = Vec::with_capacity(request.distribution_times.len());
    for &t in &request.distribution_times {
        let i = times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
            .ok_or_else(|| {
                let nearest = times.iter().copied().min_by(|a, b| (a - t).abs().total_cmp(&(b - t).abs())).unwrap();
                Error::OffGrid { requested: t, nearest }
            })?;
        dist_index.push(i);
    }
    let windows = request
        .windows
        .clone()
        .unwrap_or_else(|| spec.modes().iter().map(|m| ModeWindow::default_for(m.amplitude())).collect());
    if windows.len() != spec.num_modes() {
        return Err(invalid("one distribution window per mode is required"));
    }

    let psi_init = initial_vector(spec, psi0, cfg)?;
    let basis = Basis::new(spec.dim(), &cfg.cutoffs);
    let hamiltonian = build_full_hamiltonian(spec, cfg)?;
    let dim = hamiltonian.dim();
    let mut prop = if dim <= cfg.dense_limit {
        let eig = SymmetricEigen::new(hamiltonian.to_dense());
        let projected = eig.eigenvectors.ad_mul(&psi_init);
        Propagator::Dense { vectors: eig.eigenvectors, energies: eig.eigenvalues.iter().copied().collect(), projected }
    } else {
        Propagator::Krylov { hamiltonian, state: psi_init.iter().copied().collect(), time: 0.0 }
    };

    let mut names: Vec<String> = spec.labels().iter().map(|l| format!("P_{l}")).collect();
    for k in 0..spec.num_modes() {
        names.push(format!("dn_{}", k + 1));
        names.push(format!("dvar_{}", k + 1));
    }
    names.push("norm_error".into());
    let mut record = TrajectoryRecord::new(names);
    let mut distributions = Vec::new();
    let mut row = Vec::new();
    let mut psi = vec![C64::ZERO; dim];
    for (i, &t) in times.iter().enumerate() {
        match &mut prop {
            Propagator::Dense { vectors, energies, projected } => {
                let phased = CVector::from_iterator(
                    dim,
                    projected.iter().zip(energies.iter()).map(|(c, &e)| c * (-I * e * t).exp()),
                );
                let v = &*vectors * phased;
                psi.copy_from_slice(v.as_slice());
            }
            Propagator::Krylov { hamiltonian, state, time } => {
                krylov_advance(hamiltonian, state, t - *time, cfg.krylov_dim, cfg.krylov_tolerance)?;
                *time = t;
                psi.copy_from_slice(state);
            }
        }
        if psi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { time: t });
        }
        let obs = observe(spec, &basis, &psi);
        row.clear();
        row.extend_from_slice(&obs.populations);
        for (k, mode) in spec.modes().iter().enumerate() {
            row.push(obs.mean[k] - mode.mean_photons());
            row.push(obs.variance[k] - mode.mean_photons());
        }
        row.push(obs.norm - 1.0);
        record.push(t, &row)?;
        if dist_index.contains(&i) {
            distributions.push(distribution(spec, &basis, &psi, &windows, t)?);
        }
    }
    record.metadata.insert("engine".into(), "exact".into());
    record.metadata.insert("dimension".into(), dim.to_string());
    Ok(ExactTrajectory { record, distributions, final_state: CVector::from_vec(psi), dim })
}

/// Observables of an arbitrary state vector in the truncated basis.
pub fn exact_observables(spec: &ModelSpec, cfg: &FockConfig, psi: &[C64]) -> Result<ExactObservables> {
    let dim = cfg.total_dim(spec)?;
    if psi.len() != dim {
        return Err(invalid("state length does not match the truncated basis"));
    }
    Ok(observe(spec, &Basis::new(spec.dim(), &cfg.cutoffs), psi))
}

/// ψ ← e^{−iHτ}ψ with adaptive Lanczos steps.
fn krylov_advance(h: &SparseHamiltonian, psi: &mut [C64], tau: f64, m_max: usize, tol: f64) -> Result<()> {
    let mut remaining = tau;
    let mut dt = tau;
    while remaining > 1e-15 * tau.max(1.0) {
        dt = dt.min(remaining);
        match krylov_step(h, psi, dt, m_max)? {
            Some((next, err)) if err <= tol => {
                psi.copy_from_slice(&next);
                remaining -= dt;
                if err < tol / 100.0 {
                    dt *= 1.5;
                }
            }
            _ => {
                dt /= 2.0;
                if dt < 1e-12 {
                    return Err(invalid("Krylov step size underflow"));
                }
            }
        }
    }
    Ok(())
}

fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// One Lanczos exponential step; returns the new state and an error estimate,
/// or `None` when the basis could not be built.
fn krylov_step(h: &SparseHamiltonian, psi: &[C64], dt: f64, m_max: usize) -> Result<Option<(Vec<C64>, f64)>> {
    let n = psi.len();
    let beta0 = dotc(psi, psi).re.sqrt();
    if beta0 == 0.0 {
        return Ok(Some((psi.to_vec(), 0.0)));
    }
    let m_max = m_max.min(n).max(1);
    let mut basis: Vec<Vec<C64>> = vec![psi.iter().map(|z| z / beta0).collect()];
    let mut alpha = Vec::with_capacity(m_max);
    let mut beta = Vec::with_capacity(m_max);
    let mut w = vec![C64::ZERO; n];
    let mut breakdown = false;
    for j in 0..m_max {
        h.apply(&basis[j], &mut w);
        let a = dotc(&basis[j], &w).re;
        alpha.push(a);
        // full reorthogonalization, two passes
        for _ in 0..2 {
            for v in &basis {
                let c = dotc(v, &w);
                w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = dotc(&w, &w).re.sqrt();
        beta.push(b);
        if b < 1e-13 * beta0.max(1.0) {
            breakdown = true;
            break;
        }
        if j + 1 < m_max {
            basis.push(w.iter().map(|z| z / b).collect());
        }
    }
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    // c = Q e^{-iΛdt} Qᵀ e_1
    let coeffs: DVector<C64> = DVector::from_iterator(
        m,
        (0..m).map(|r| {
            (0..m)
                .map(|s| eig.eigenvectors[(r, s)] * eig.eigenvectors[(0, s)] * (-I * eig.eigenvalues[s] * dt).exp())
                .sum::<C64>()
        }),
    );
    let err = if breakdown { 0.0 } else { beta0 * beta[m - 1] * coeffs[m - 1].norm() };
    if !err.is_finite() {
        return Ok(None);
    }
    let mut out = vec![C64::ZERO; n];
    for (v, c) in basis.iter().zip(coeffs.iter()) {
        let c = c * beta0;
        out.iter_mut().zip(v).for_each(|(o, x)| *o += c * x);
    }
    Ok(Some((out, err)))
}

/// Closed-form exact dynamics of the single-mode RWA model from the ground
/// state, using the invariant two-dimensional blocks {|1,n⟩, |2,n−1⟩}.
#[derive(Debug, Clone)]
pub struct JcBlockOracle {
    detuning: f64,
    coupling: f64,
    mean: f64,
    /// (n, p_n) with p_n above 1e-18.
    weights: Vec<(f64, f64)>,
}

impl JcBlockOracle {
    pub fn new(omega0: f64, omega: f64, coupling: f64, amplitude: f64) -> Self {
        let mean = amplitude * amplitude;
        let lo = (mean - 12.0 * amplitude - 40.0).max(0.0) as usize;
        let hi = (mean + 12.0 * amplitude + 40.0).ceil() as usize;
        let weights = (lo..=hi)
            .map(|n| (n as f64, poisson_pmf(n, mean)))
            .filter(|&(_, p)| p > 1e-18)
            .collect();
        Self { detuning: omega0 - omega, coupling, mean, weights }
    }

    fn block_excitation(&self, n: f64, t: f64) -> f64 {
        let coupling2 = self.coupling * self.coupling * n;
        let rr2 = coupling2 + self.detuning * self.detuning;
        if rr2 == 0.0 {
            return 0.0;
        }
        let s = (rr2.sqrt() * t / 2.0).sin();
        coupling2 / rr2 * s * s
    }

    /// (P_2, Δn, Δσ²) at time t.
    pub fn at(&self, t: f64) -> (f64, f64, f64) {
        let mut p2 = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for &(n, p) in &self.weights {
            let q = self.block_excitation(n, t);
            let c = n - self.mean;
            p2 += p * q;
            m1 += p * (c - q);
            m2 += p * (c * c - 2.0 * c * q + q);
        }
        let var = m2 - m1 * m1;
        (p2, -p2, var - self.mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_jc, build_rabi};
    use nalgebra::SymmetricEigen;

    fn ground() -> [C64; 2] {
        [C64::ONE, C64::ZERO]
    }

    #[test]
    fn decoupled_spectrum() {
        let spec = build_jc(1.0, 0.7, 0.0, 0.0, 0.0).unwrap();
        let h = build_full_hamiltonian(&spec, &FockConfig::with_cutoffs(vec![4])).unwrap();
        let mut e: Vec<f64> = SymmetricEigen::new(h.to_dense()).eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        let mut expect: Vec<f64> = [-0.5, 0.5].iter().flat_map(|s| (0..=4).map(move |m| s + 0.7 * m as f64)).collect();
        expect.sort_by(f64::total_cmp);
        for (a, b) in e.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let spec = build_rabi(1.0, 1.0, 0.2, 2.0, 0.3).unwrap();
        let h = build_full_hamiltonian(&spec, &FockConfig::with_cutoffs(vec![30])).unwrap();
        assert!(h.hermiticity_error() < 1e-12);
        assert_eq!(h.dim(), 62);
    }

    #[test]
    fn capacity_error() {
        let spec = build_rabi(1.0, 1.0, 0.2, 2.0, 0.0).unwrap();
        let mut cfg = FockConfig::with_cutoffs(vec![1000]);
        cfg.max_dim = 1000;
        assert!(matches!(build_full_hamiltonian(&spec, &cfg), Err(Error::Capacity { .. })));
    }

    #[test]
    fn tail_violation_is_reported() {
        let spec = build_rabi(1.0, 1.0, 0.2, 3.0, 0.0).unwrap();
        let cfg = FockConfig::with_cutoffs(vec![10]);
        assert!(matches!(initial_vector(&spec, &ground(), &cfg), Err(Error::TailMass { .. })));
        assert!(initial_vector(&spec, &ground(), &FockConfig::for_model(&spec)).is_ok());
    }

    #[test]
    fn coherent_coefficients_are_normalized() {
        let c = coherent_coefficients(C64::from_polar(4.0, -0.4), 120);
        let norm: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-13);
        let mean: f64 = c.iter().enumerate().map(|(n, z)| n as f64 * z.norm_sqr()).sum();
        assert!((mean - 16.0).abs() < 1e-11);
        // ⟨n|α⟩ phase is n·arg α
        assert!((c[3].arg() - (-1.2)).abs() < 1e-12);
    }

    #[test]
    fn free_field_keeps_photon_number() {
        let spec = build_jc(1.0, 0.8, 0.0, 2.0, 0.0).unwrap();
        let cfg = FockConfig::for_model(&spec);
        let req = ExactRequest { times: vec![0.0, 1.0, 7.5], ..Default::default() };
        let run = propagate_exact(&spec, &ground(), &cfg, &req).unwrap();
        for &d in run.record.column("dn_1").unwrap() {
            assert!(d.abs() < 1e-10);
        }
    }

    #[test]
    fn krylov_matches_spectral() {
        let spec = build_rabi(1.0, 1.0, 0.3, 1.5, 0.0).unwrap();
        let dense = FockConfig::for_model(&spec);
        let mut sparse = dense.clone();
        sparse.dense_limit = 0;
        let req = ExactRequest { times: vec![0.0, 0.5, 3.0, 10.0], ..Default::default() };
        let a = propagate_exact(&spec, &ground(), &dense, &req).unwrap();
        let b = propagate_exact(&spec, &ground(), &sparse, &req).unwrap();
        let diff = (&a.final_state - &b.final_state).norm();
        assert!(diff < 1e-9, "{diff}");
        assert!(b.record.column("norm_error").unwrap().iter().all(|e| e.abs() < 1e-10));
    }

    #[test]
    fn block_oracle_matches_truncated_propagation() {
        let spec = build_jc(1.0, 0.9, 0.25, 2.0, 0.0).unwrap();
        let cfg = FockConfig::for_model(&spec);
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.75).collect();
        let run = propagate_exact(&spec, &ground(), &cfg, &ExactRequest { times: times.clone(), ..Default::default() }).unwrap();
        let oracle = JcBlockOracle::new(1.0, 0.9, 0.25, 2.0);
        for (i, &t) in times.iter().enumerate() {
            let (p2, dn, dv) = oracle.at(t);
            assert!((run.record.column("P_2").unwrap()[i] - p2).abs() < 1e-10);
            assert!((run.record.column("dn_1").unwrap()[i] - dn).abs() < 1e-10);
            assert!((run.record.column("dvar_1").unwrap()[i] - dv).abs() < 1e-9);
        }
    }

    #[test]
    fn distribution_off_grid_refused() {
        let spec = build_rabi(1.0, 1.0, 0.2, 1.0, 0.0).unwrap();
        let req = ExactRequest { times: vec![0.0, 1.0], distribution_times: vec![0.5], windows: None };
        assert!(matches!(
            propagate_exact(&spec, &ground(), &FockConfig::for_model(&spec), &req),
            Err(Error::OffGrid { .. })
        ));
    }
}
