//! Classically driven system dynamics and the field response derived from
//! it, valid when g_k → 0 at fixed Ω_k = g_k|α_k|.
//!
//! The double time integrals in the field variance and in the O(g²)
//! population correction are evaluated with running trapezoidal
//! accumulators, so a full trajectory costs O(T).

use crate::error::{invalid, Error, Result};
use crate::model::{driven_system_hamiltonian, ModelSpec};
use crate::{CMatrix, CVector, C64, I};

/// Unitarity drift ‖U†U − 1‖_max that aborts propagation.
pub const UNITARITY_ABORT: f64 = 1e-6;

/// Propagator U_S(t) on a uniform grid t_i = i·h.
#[derive(Debug, Clone)]
pub struct PropagatorSeries {
    step: f64,
    times: Vec<f64>,
    propagators: Vec<CMatrix>,
}

fn unitarity_drift(u: &CMatrix) -> f64 {
    let d = u.ad_mul(u) - CMatrix::identity(u.nrows(), u.ncols());
    d.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Integrates U̇_S = −iH_S(t)U_S with classic RK4 on the grid 0, h, …, t_final.
pub fn propagate_us(spec: &ModelSpec, t_final: f64, h: f64) -> Result<PropagatorSeries> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(invalid(format!("step must be positive, got {h}")));
    }
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(invalid(format!("final time must be non-negative, got {t_final}")));
    }
    let steps = (t_final / h).round() as usize;
    if (steps as f64 * h - t_final).abs() > 1e-9 * t_final.max(1.0) {
        return Err(invalid(format!("final time {t_final} is not a multiple of the step {h}")));
    }
    let n = spec.dim();
    let mut u = CMatrix::identity(n, n);
    let mut times = Vec::with_capacity(steps + 1);
    let mut propagators = Vec::with_capacity(steps + 1);
    times.push(0.0);
    propagators.push(u.clone());
    let rhs = |t: f64, u: &CMatrix| -> CMatrix { driven_system_hamiltonian(spec, t) * u * (-I) };
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = rhs(t, &u);
        let k2 = rhs(t + h / 2.0, &(&u + &k1 * C64::from(h / 2.0)));
        let k3 = rhs(t + h / 2.0, &(&u + &k2 * C64::from(h / 2.0)));
        let k4 = rhs(t + h, &(&u + &k3 * C64::from(h)));
        u += (k1 + (k2 + k3) * C64::from(2.0) + k4) * C64::from(h / 6.0);
        let t_next = (i + 1) as f64 * h;
        if u.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { time: t_next });
        }
        let drift = unitarity_drift(&u);
        if drift > UNITARITY_ABORT {
            return Err(Error::UnitarityDrift { time: t_next, drift });
        }
        times.push(t_next);
        propagators.push(u.clone());
    }
    Ok(PropagatorSeries { step: h, times, propagators })
}

impl PropagatorSeries {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn propagator(&self, i: usize) -> &CMatrix {
        &self.propagators[i]
    }

    pub fn propagators(&self) -> &[CMatrix] {
        &self.propagators
    }

    /// Largest ‖U†U − 1‖_max over the stored propagators.
    pub fn max_unitarity_drift(&self) -> f64 {
        self.propagators.iter().map(unitarity_drift).fold(0.0, f64::max)
    }

    /// Grid index of `t`; off-grid times are refused rather than interpolated.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let raw = (t / self.step).round();
        let idx = (raw.max(0.0) as usize).min(self.times.len() - 1);
        let nearest = self.times[idx];
        if (nearest - t).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(Error::OffGrid { requested: t, nearest });
        }
        Ok(idx)
    }
}

fn check_psi(spec: &ModelSpec, psi0: &[C64]) -> Result<CVector> {
    if psi0.len() != spec.dim() {
        return Err(invalid(format!("initial state has length {}, expected {}", psi0.len(), spec.dim())));
    }
    Ok(CVector::from_column_slice(psi0))
}

/// P_j^sc(t) = |⟨j|U_S(t)ψ0⟩|².
pub fn population_sc(series: &PropagatorSeries, psi0: &[C64], j: usize, t: f64) -> Result<f64> {
    let i = series.index_of(t)?;
    if j >= psi0.len() || psi0.len() != series.propagators[i].nrows() {
        return Err(invalid(format!("basis index {j} or state length {} out of range", psi0.len())));
    }
    let psi = CVector::from_column_slice(psi0);
    let amp: C64 = series.propagators[i].row(j).iter().zip(psi.iter()).map(|(u, p)| u * p).sum();
    Ok(amp.norm_sqr())
}

/// All populations P_j^sc on the full grid, one vector per basis state.
pub fn populations_sc(series: &PropagatorSeries, psi0: &[C64]) -> Vec<Vec<f64>> {
    let psi = CVector::from_column_slice(psi0);
    let n = psi.len();
    let mut out = vec![Vec::with_capacity(series.len()); n];
    for u in &series.propagators {
        let phi = u * &psi;
        for (col, z) in out.iter_mut().zip(phi.iter()) {
            col.push(z.norm_sqr());
        }
    }
    out
}

/// Semiclassical field response of every mode and O(g²) population
/// correction on the full grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldResponse {
    pub times: Vec<f64>,
    /// Δn_k(t_i), indexed `[k][i]`.
    pub delta_n: Vec<Vec<f64>>,
    /// Δσ²_k(t_i), indexed `[k][i]`.
    pub delta_variance: Vec<Vec<f64>>,
    /// P_j^qc(t_i), indexed `[j][i]`.
    pub population_correction: Vec<Vec<f64>>,
}

/// Running trapezoid: returns the integral after adding the new sample.
struct Trapezoid<T> {
    h: f64,
    last: Option<T>,
    total: T,
}

impl Trapezoid<C64> {
    fn scalar(h: f64) -> Self {
        Self { h, last: None, total: C64::ZERO }
    }

    fn push(&mut self, v: C64) -> C64 {
        if let Some(prev) = self.last {
            self.total += (prev + v) * (self.h / 2.0);
        }
        self.last = Some(v);
        self.total
    }
}

impl Trapezoid<CVector> {
    fn vector(h: f64, n: usize) -> Self {
        Self { h, last: None, total: CVector::zeros(n) }
    }

    fn push(&mut self, v: CVector) -> &CVector {
        if let Some(prev) = &self.last {
            self.total += (prev + &v) * C64::from(self.h / 2.0);
        }
        self.last = Some(v);
        &self.total
    }
}

/// Evaluates Δn_k, Δσ²_k and P_j^qc along the series up to grid index `last`.
///
/// With w_k(τ) = Ṽ_k(τ)ψ0, Ṽ_k = U_S†V_kU_S and u_k(t) = ∫₀ᵗ e^{iω_kτ} w_k dτ:
///
/// * Δn_k = −Ω_k Re ∫ i⟨Ṽ_k⟩ e^{i(ω_kτ+φ_k)} dτ
/// * Δσ²_k = Δn_k − Δn_k² + (Ω_k²/2)‖u_k‖² − Ω_k² Re e^{2iφ_k} ∫ e^{iω_kτ}⟨ψ0|Ṽ_k u_k⟩ dτ
/// * P_j^qc = Σ_k (g_k²/4)|⟨j|U_S u_k⟩|² − (g_k²/2) Re ⟨j|U_Sψ0⟩* ⟨j|U_S K_k⟩,
///   K_k(t) = ∫ e^{−iω_kτ} Ṽ_k† u_k dτ.
fn response_until(series: &PropagatorSeries, spec: &ModelSpec, psi0: &[C64], last: usize) -> Result<FieldResponse> {
    let psi = check_psi(spec, psi0)?;
    if series.propagators[0].nrows() != spec.dim() {
        return Err(invalid("propagator dimension does not match the model"));
    }
    let h = series.step;
    let n = spec.dim();
    let nm = spec.num_modes();
    let len = last + 1;
    let mut delta_n = vec![Vec::with_capacity(len); nm];
    let mut delta_variance = vec![Vec::with_capacity(len); nm];
    let mut correction = vec![vec![0.0; len]; n];

    for (k, mode) in spec.modes().iter().enumerate() {
        let (omega, phi, rabi, g) = (mode.frequency(), mode.phase(), mode.rabi_frequency(), mode.coupling());
        let v = mode.operator();
        let mut dn_acc = Trapezoid::scalar(h);
        let mut cross_acc = Trapezoid::scalar(h);
        let mut u_acc = Trapezoid::vector(h, n);
        let mut k_acc = Trapezoid::vector(h, n);
        let rotation = (2.0 * I * phi).exp();
        for i in 0..len {
            let tau = series.times[i];
            let us = &series.propagators[i];
            let phi_t = us * &psi;
            // w = Ṽψ0 and ⟨Ṽ⟩ = ⟨ψ(τ)|V|ψ(τ)⟩
            let v_phi = v * &phi_t;
            let w = us.ad_mul(&v_phi);
            let mean_v = phi_t.dotc(&v_phi);
            let dn = -rabi * dn_acc.push(I * mean_v * (I * (omega * tau + phi)).exp()).re;
            let u = u_acc.push(w * (I * omega * tau).exp()).clone();
            // ⟨ψ0|Ṽ|u⟩ = ⟨ψ(τ)|V U_S u⟩ and Ṽ†u = U_S† V† U_S u
            let us_u = us * &u;
            let cross = cross_acc.push(phi_t.dotc(&(v * &us_u)) * (I * omega * tau).exp());
            let kk = k_acc.push(us.ad_mul(&v.ad_mul(&us_u)) * (-I * omega * tau).exp()).clone();
            let var = dn - dn * dn + 0.5 * rabi * rabi * u.norm_squared() - rabi * rabi * (rotation * cross).re;
            delta_n[k].push(dn);
            delta_variance[k].push(var);

            let us_k = us * &kk;
            for j in 0..n {
                correction[j][i] += 0.25 * g * g * us_u[j].norm_sqr() - 0.5 * g * g * (phi_t[j].conj() * us_k[j]).re;
            }
        }
    }
    Ok(FieldResponse {
        times: series.times[..len].to_vec(),
        delta_n,
        delta_variance,
        population_correction: correction,
    })
}

/// Field response on the whole grid.
pub fn field_response(series: &PropagatorSeries, spec: &ModelSpec, psi0: &[C64]) -> Result<FieldResponse> {
    response_until(series, spec, psi0, series.len() - 1)
}

fn check_mode(spec: &ModelSpec, k: usize) -> Result<()> {
    if k >= spec.num_modes() {
        return Err(invalid(format!("mode index {k} out of range")));
    }
    Ok(())
}

/// Δn_k^sc(t).
pub fn delta_n_sc(series: &PropagatorSeries, spec: &ModelSpec, psi0: &[C64], k: usize, t: f64) -> Result<f64> {
    check_mode(spec, k)?;
    let i = series.index_of(t)?;
    Ok(response_until(series, spec, psi0, i)?.delta_n[k][i])
}

/// Δσ²_k^sc(t).
pub fn delta_var_sc(series: &PropagatorSeries, spec: &ModelSpec, psi0: &[C64], k: usize, t: f64) -> Result<f64> {
    check_mode(spec, k)?;
    let i = series.index_of(t)?;
    Ok(response_until(series, spec, psi0, i)?.delta_variance[k][i])
}

/// O(g²) correction P_j^qc(t) for an arbitrary model.
pub fn second_order_correction(series: &PropagatorSeries, spec: &ModelSpec, psi0: &[C64], j: usize, t: f64) -> Result<f64> {
    if j >= spec.dim() {
        return Err(invalid(format!("basis index {j} out of range")));
    }
    let i = series.index_of(t)?;
    Ok(response_until(series, spec, psi0, i)?.population_correction[j][i])
}

fn rabi_and_detuning(omega0: f64, omega: f64, rabi: f64) -> (f64, f64) {
    let delta = omega0 - omega;
    (delta, (rabi * rabi + delta * delta).sqrt())
}

/// Closed-form driven two-level propagator in the basis {|1⟩ lower, |2⟩ upper}.
pub fn jc_analytic_us(omega0: f64, omega: f64, rabi: f64, t: f64) -> CMatrix {
    let (delta, rr) = rabi_and_detuning(omega0, omega, rabi);
    let (s, c) = (rr * t / 2.0).sin_cos();
    let (nz, nx) = if rr == 0.0 { (0.0, 0.0) } else { (delta / rr, rabi / rr) };
    // σ_z = diag(−1, 1) in this basis
    let inner = CMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(c, s * nz),
            C64::new(0.0, -s * nx),
            C64::new(0.0, -s * nx),
            C64::new(c, -s * nz),
        ],
    );
    let rot = CMatrix::from_diagonal(&CVector::from_vec(vec![
        (I * omega * t / 2.0).exp(),
        (-I * omega * t / 2.0).exp(),
    ]));
    rot * inner
}

/// Excited-state population (Ω²/Ω_R²) sin²(Ω_R t/2) from the ground state.
pub fn jc_population(omega0: f64, omega: f64, rabi: f64, t: f64) -> f64 {
    let (_, rr) = rabi_and_detuning(omega0, omega, rabi);
    if rr == 0.0 {
        return 0.0;
    }
    let s = (rr * t / 2.0).sin();
    rabi * rabi / (rr * rr) * s * s
}

/// Δn(t) = −P_2^sc(t).
pub fn jc_delta_n(omega0: f64, omega: f64, rabi: f64, t: f64) -> f64 {
    -jc_population(omega0, omega, rabi, t)
}

/// Closed-form Δσ²(t) for the driven two-level system.
pub fn jc_delta_variance(omega0: f64, omega: f64, rabi: f64, t: f64) -> f64 {
    let (delta, rr) = rabi_and_detuning(omega0, omega, rabi);
    if rr == 0.0 {
        return 0.0;
    }
    let s = (rr * t / 2.0).sin();
    let o2 = rabi * rabi;
    let r4 = rr.powi(4);
    (o2 - delta * delta) * o2 / r4 * s * s - o2 * o2 / r4 * s.powi(4) - o2 * o2 * t / (2.0 * rr.powi(3)) * (rr * t).sin()
}

/// O(g²) excited-state population correction in closed form.
pub fn jc_second_order_correction(omega0: f64, omega: f64, rabi: f64, g: f64, t: f64) -> f64 {
    let (delta, rr) = rabi_and_detuning(omega0, omega, rabi);
    if rr == 0.0 {
        return 0.0;
    }
    let o2 = rabi * rabi;
    let d2 = delta * delta;
    let s = (rr * t / 2.0).sin();
    g * g * o2 / (4.0 * rr.powi(4))
        * (o2 * t * t / 4.0 * (rr * t).cos() + (4.0 * d2 - o2) / (4.0 * rr) * t * (rr * t).sin()
            - 4.0 * d2 / (rr * rr) * s * s)
}

/// Time t_c = |α|/Ω beyond which g²t² ≳ 1 and the semiclassical picture fails.
pub fn crossover_time(rabi: f64, amplitude: f64) -> Result<f64> {
    if rabi == 0.0 {
        return Err(Error::Undefined("crossover time requires a non-zero Rabi frequency".into()));
    }
    if !rabi.is_finite() || !amplitude.is_finite() || amplitude < 0.0 {
        return Err(invalid("Rabi frequency and amplitude must be finite, amplitude non-negative"));
    }
    Ok(amplitude / rabi.abs())
}
