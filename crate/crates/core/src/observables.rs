//! System populations and field statistics of a multi-D2 state, with the
//! displacement by α⃗ undone so that field quantities refer to the
//! laboratory-frame photon numbers.
//!
//! Field moments follow from the moment-generating function
//! G(χ⃗) = ⟨e^{iΣχ_k b_k†b_k}⟩, which for the ansatz is a double sum over
//! branches of Gaussian-type exponentials. Mean and variance are reported as
//! normalized expectation values and in the centered form
//! Δn = n − |α|², Δσ² = σ² − |α|², which never forms |α|⁴-sized intermediates.

use std::f64::consts::TAU;

use crate::ansatz::{log_overlap_matrix, overlap_matrix, DavydovState};
use crate::error::{invalid, Result};
use crate::model::ModelSpec;
use crate::{CMatrix, C64, I};

/// Window mass below which a distribution is flagged as truncated.
pub const MASS_WARNING_THRESHOLD: f64 = 0.999;

/// P_j = Σ_{l,n} A*_{lj} S_{ln} A_{nj}; `j` is a 0-based basis index.
pub fn population(state: &DavydovState, j: usize) -> f64 {
    population_with(&overlap_matrix(state), state, j)
}

/// [`population`] with a precomputed overlap matrix.
pub fn population_with(overlap: &CMatrix, state: &DavydovState, j: usize) -> f64 {
    assert!(j < state.system_dim(), "basis index {j} out of range");
    let a = &state.amplitudes;
    let m = state.multiplicity();
    let mut total = C64::ZERO;
    for l in 0..m {
        for n in 0..m {
            total += a[(l, j)].conj() * overlap[(l, n)] * a[(n, j)];
        }
    }
    total.re
}

/// Overlap matrix, exposed for callers that evaluate many populations.
pub fn branch_weights(state: &DavydovState) -> CMatrix {
    overlap_matrix(state)
}

/// w_{ln} = Σ_j A*_{lj} A_{nj}.
fn amplitude_products(state: &DavydovState) -> CMatrix {
    let a = &state.amplitudes;
    let m = state.multiplicity();
    CMatrix::from_fn(m, m, |l, n| {
        a.row(l).iter().zip(a.row(n).iter()).map(|(x, y)| x.conj() * y).sum()
    })
}

fn check_mode(spec: &ModelSpec, state: &DavydovState, k: usize) {
    assert!(k < spec.num_modes() && k < state.num_modes(), "mode index {k} out of range");
}

/// Shifted field amplitudes β_{nk} = α_k + f_{nk}.
fn shifted(state: &DavydovState, spec: &ModelSpec) -> CMatrix {
    let m = state.multiplicity();
    CMatrix::from_fn(m, spec.num_modes(), |n, k| spec.mode(k).alpha() + state.displacements[(n, k)])
}

/// G(χ⃗) = Σ_{n,l,j} A*_{lj} S_{ln} A_{nj} exp[Σ_k (e^{iχ_k} − 1)(α_k* + f*_{lk})(α_k + f_{nk})].
pub fn generating_function(state: &DavydovState, spec: &ModelSpec, chi: &[f64]) -> Result<C64> {
    if chi.len() != spec.num_modes() || state.num_modes() != spec.num_modes() {
        return Err(invalid(format!("expected {} phases, got {}", spec.num_modes(), chi.len())));
    }
    let log_s = log_overlap_matrix(&state.displacements);
    let w = amplitude_products(state);
    let beta = shifted(state, spec);
    let factors: Vec<C64> = chi.iter().map(|&x| (I * x).exp() - 1.0).collect();
    let m = state.multiplicity();
    let mut total = C64::ZERO;
    for l in 0..m {
        for n in 0..m {
            let mut exponent = log_s[(l, n)];
            for (k, fk) in factors.iter().enumerate() {
                exponent += fk * beta[(l, k)].conj() * beta[(n, k)];
            }
            total += w[(l, n)] * exponent.exp();
        }
    }
    Ok(total)
}

/// Photon-number moments of every mode at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMoments {
    pub time: f64,
    /// n_k − |α_k|².
    pub delta_mean: Vec<f64>,
    /// σ²_k − |α_k|².
    pub delta_variance: Vec<f64>,
    initial_mean: Vec<f64>,
}

impl FieldMoments {
    /// Mean photon number n_k.
    pub fn mean(&self, k: usize) -> f64 {
        self.initial_mean[k] + self.delta_mean[k]
    }

    /// Photon-number variance σ²_k.
    pub fn variance(&self, k: usize) -> f64 {
        self.initial_mean[k] + self.delta_variance[k]
    }

    /// (Δn_k, Δσ²_k) per mode.
    pub fn changes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.delta_mean.iter().copied().zip(self.delta_variance.iter().copied())
    }
}

/// Mean and variance changes for all modes.
pub fn field_moments(state: &DavydovState, spec: &ModelSpec) -> FieldMoments {
    let s = overlap_matrix(state);
    let w = amplitude_products(state);
    let m = state.multiplicity();
    let c = CMatrix::from_fn(m, m, |l, n| w[(l, n)] * s[(l, n)]);
    let norm: f64 = c.iter().sum::<C64>().re;
    let f = &state.displacements;
    let mut delta_mean = Vec::with_capacity(spec.num_modes());
    let mut delta_variance = Vec::with_capacity(spec.num_modes());
    for k in 0..spec.num_modes() {
        let alpha = spec.mode(k).alpha();
        // z_{ln} = |α|² + y_{ln}
        let mut y1 = C64::ZERO;
        let mut y2 = C64::ZERO;
        for l in 0..m {
            for n in 0..m {
                let y = alpha.conj() * f[(n, k)] + alpha * f[(l, k)].conj() + f[(l, k)].conj() * f[(n, k)];
                y1 += c[(l, n)] * y;
                y2 += c[(l, n)] * y * y;
            }
        }
        let y1 = y1.re / norm;
        let y2 = y2.re / norm;
        delta_mean.push(y1);
        delta_variance.push(y1 + y2 - y1 * y1);
    }
    FieldMoments {
        time: state.time,
        delta_mean,
        delta_variance,
        initial_mean: spec.modes().iter().map(|m| m.mean_photons()).collect(),
    }
}

/// Mean photon number n_k (normalized expectation value).
pub fn mean_photon(state: &DavydovState, spec: &ModelSpec, k: usize) -> f64 {
    check_mode(spec, state, k);
    field_moments(state, spec).mean(k)
}

/// Photon-number variance σ²_k.
pub fn photon_variance(state: &DavydovState, spec: &ModelSpec, k: usize) -> f64 {
    check_mode(spec, state, k);
    field_moments(state, spec).variance(k)
}

/// Δn_k = n_k − |α_k|².
pub fn delta_n(state: &DavydovState, spec: &ModelSpec, k: usize) -> f64 {
    check_mode(spec, state, k);
    field_moments(state, spec).delta_mean[k]
}

/// Δσ²_k = σ²_k − |α_k|².
pub fn delta_variance(state: &DavydovState, spec: &ModelSpec, k: usize) -> f64 {
    check_mode(spec, state, k);
    field_moments(state, spec).delta_variance[k]
}

/// Photon-number window of one mode: n ∈ [max(0, center − half_width), center + half_width].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeWindow {
    pub center: usize,
    pub half_width: usize,
}

impl ModeWindow {
    /// Centered on round(|α|²) with half-width 8⌈|α|⌉ + 32.
    pub fn default_for(amplitude: f64) -> Self {
        Self {
            center: (amplitude * amplitude).round() as usize,
            half_width: 8 * amplitude.ceil() as usize + 32,
        }
    }

    pub fn lower(&self) -> usize {
        self.center.saturating_sub(self.half_width)
    }

    pub fn upper(&self) -> usize {
        self.center + self.half_width
    }

    pub fn len(&self) -> usize {
        self.upper() - self.lower() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Smallest χ-grid that keeps aliased copies out of the window.
    pub fn min_grid(&self) -> usize {
        4 * self.half_width + 1
    }
}

/// p(n⃗, t) on a rectangular photon-number window.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonDistribution {
    pub time: f64,
    pub windows: Vec<ModeWindow>,
    /// Row-major over modes, mode 0 slowest.
    pub probabilities: Vec<f64>,
    /// Σ p over the window.
    pub mass: f64,
    /// Set when the window mass falls below [`MASS_WARNING_THRESHOLD`].
    pub mass_warning: bool,
}

impl PhotonDistribution {
    fn from_parts(time: f64, windows: Vec<ModeWindow>, probabilities: Vec<f64>) -> Self {
        let mass: f64 = probabilities.iter().sum();
        Self {
            time,
            windows,
            probabilities,
            mass,
            mass_warning: mass < MASS_WARNING_THRESHOLD,
        }
    }

    fn flat_index(&self, n: &[usize]) -> Option<usize> {
        if n.len() != self.windows.len() {
            return None;
        }
        let mut idx = 0;
        for (w, &nk) in self.windows.iter().zip(n) {
            if nk < w.lower() || nk > w.upper() {
                return None;
            }
            idx = idx * w.len() + (nk - w.lower());
        }
        Some(idx)
    }

    /// p(n⃗); zero outside the window.
    pub fn get(&self, n: &[usize]) -> f64 {
        self.flat_index(n).map_or(0.0, |i| self.probabilities[i])
    }

    /// Photon-number tuple of flat index `i`.
    pub fn photon_numbers(&self, mut i: usize) -> Vec<usize> {
        let mut out = vec![0; self.windows.len()];
        for (k, w) in self.windows.iter().enumerate().rev() {
            out[k] = w.lower() + i % w.len();
            i /= w.len();
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        self.probabilities.iter().enumerate().map(|(i, &p)| (self.photon_numbers(i), p))
    }

    /// Builds a distribution from explicit probabilities (used by the oracle).
    pub fn from_probabilities(time: f64, windows: Vec<ModeWindow>, probabilities: Vec<f64>) -> Result<Self> {
        let expected: usize = windows.iter().map(|w| w.len()).product();
        if probabilities.len() != expected {
            return Err(invalid(format!("expected {expected} probabilities, got {}", probabilities.len())));
        }
        Ok(Self::from_parts(time, windows, probabilities))
    }

    /// Product of Poisson distributions with means |α_k|² on the same window.
    pub fn poisson_product(time: f64, windows: Vec<ModeWindow>, means: &[f64]) -> Result<Self> {
        if means.len() != windows.len() {
            return Err(invalid("one mean per mode is required"));
        }
        let marginals: Vec<Vec<f64>> = windows
            .iter()
            .zip(means)
            .map(|(w, &mu)| (w.lower()..=w.upper()).map(|n| poisson_pmf(n, mu)).collect())
            .collect();
        let total: usize = windows.iter().map(|w| w.len()).product();
        let mut probs = vec![1.0; total];
        let mut stride = total;
        for (w, marg) in windows.iter().zip(&marginals) {
            stride /= w.len();
            for (i, p) in probs.iter_mut().enumerate() {
                *p *= marg[(i / stride) % w.len()];
            }
        }
        Ok(Self::from_parts(time, windows, probs))
    }

    /// ½ Σ |p − q| over the union of both windows.
    pub fn total_variation(&self, other: &Self) -> f64 {
        let mut sum = 0.0;
        for (n, p) in self.iter() {
            sum += (p - other.get(&n)).abs();
        }
        for (n, q) in other.iter() {
            if self.flat_index(&n).is_none() {
                sum += q.abs();
            }
        }
        sum / 2.0
    }

    /// max |p − q| over the union of both windows.
    pub fn max_abs_difference(&self, other: &Self) -> f64 {
        let a = self.iter().map(|(n, p)| (p - other.get(&n)).abs()).fold(0.0, f64::max);
        let b = other.iter().map(|(n, q)| (q - self.get(&n)).abs()).fold(0.0, f64::max);
        a.max(b)
    }
}

/// Poisson probability evaluated in log space.
pub fn poisson_pmf(n: usize, mean: f64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 * mean.ln() - mean - ln_factorial(n)).exp()
}

pub(crate) fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Photon-number distribution from uniform trapezoidal quadrature of
/// p(n⃗) = (2π)^{-N} ∫ G(χ⃗) e^{-iχ⃗·n⃗} dχ⃗ on a χ-grid of `grid[k]` points per
/// mode. The phase e^{-iχ_k c_k} of each window center is folded into the
/// exponent of G, so only small offsets n − c appear in the transform.
pub fn photon_distribution(
    state: &DavydovState,
    spec: &ModelSpec,
    windows: &[ModeWindow],
    grid: &[usize],
) -> Result<PhotonDistribution> {
    let nm = spec.num_modes();
    if windows.len() != nm || grid.len() != nm || state.num_modes() != nm {
        return Err(invalid(format!("expected one window and one grid size per mode ({nm})")));
    }
    for (w, &g) in windows.iter().zip(grid) {
        if g < w.min_grid() {
            return Err(invalid(format!("grid of {g} points is below 4W+1 = {}", w.min_grid())));
        }
    }
    let m = state.multiplicity();
    let log_s = log_overlap_matrix(&state.displacements);
    let w = amplitude_products(state);
    let beta = shifted(state, spec);
    let pairs: Vec<(C64, C64, Vec<C64>)> = (0..m)
        .flat_map(|l| (0..m).map(move |n| (l, n)))
        .filter(|&(l, n)| w[(l, n)] != C64::ZERO)
        .map(|(l, n)| {
            let z = (0..nm).map(|k| beta[(l, k)].conj() * beta[(n, k)]).collect();
            (w[(l, n)], log_s[(l, n)], z)
        })
        .collect();

    // Per-mode tables of e^{iχ} − 1 and the centering phase −iχ c.
    let tables: Vec<Vec<(C64, C64)>> = windows
        .iter()
        .zip(grid)
        .map(|(win, &len)| {
            (0..len)
                .map(|j| {
                    let chi = TAU * j as f64 / len as f64;
                    ((I * chi).exp() - 1.0, -I * chi * win.center as f64)
                })
                .collect()
        })
        .collect();

    let total: usize = grid.iter().product();
    let mut values = Vec::with_capacity(total);
    let mut idx = vec![0usize; nm];
    for _ in 0..total {
        let mut g = C64::ZERO;
        for (weight, ls, z) in &pairs {
            let mut exponent = *ls;
            for k in 0..nm {
                let (fac, shift) = tables[k][idx[k]];
                exponent += fac * z[k] + shift;
            }
            g += weight * exponent.exp();
        }
        values.push(g);
        for k in (0..nm).rev() {
            idx[k] += 1;
            if idx[k] < grid[k] {
                break;
            }
            idx[k] = 0;
        }
    }

    // Separable inverse transform, one axis at a time.
    let mut shape = grid.to_vec();
    let mut data = values;
    for axis in 0..nm {
        let win = windows[axis];
        let len = grid[axis];
        let offsets: Vec<i64> = (win.lower()..=win.upper()).map(|n| n as i64 - win.center as i64).collect();
        let twiddle: Vec<Vec<C64>> = offsets
            .iter()
            .map(|&o| {
                (0..len)
                    .map(|j| (-I * (TAU * ((j as i64 * o).rem_euclid(len as i64)) as f64 / len as f64)).exp())
                    .collect()
            })
            .collect();
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out = vec![C64::ZERO; outer * offsets.len() * inner];
        for o in 0..outer {
            for (r, tw) in twiddle.iter().enumerate() {
                for i in 0..inner {
                    let mut acc = C64::ZERO;
                    for (j, t) in tw.iter().enumerate() {
                        acc += data[(o * len + j) * inner + i] * t;
                    }
                    out[(o * offsets.len() + r) * inner + i] = acc / len as f64;
                }
            }
        }
        shape[axis] = offsets.len();
        data = out;
    }
    let probabilities = data.into_iter().map(|z| z.re).collect();
    Ok(PhotonDistribution::from_parts(state.time, windows.to_vec(), probabilities))
}

/// [`photon_distribution`] with default windows and 4W+1 grids.
pub fn photon_distribution_default(state: &DavydovState, spec: &ModelSpec) -> Result<PhotonDistribution> {
    let windows: Vec<ModeWindow> = spec.modes().iter().map(|m| ModeWindow::default_for(m.amplitude())).collect();
    let grid: Vec<usize> = windows.iter().map(|w| w.min_grid()).collect();
    photon_distribution(state, spec, &windows, &grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::initial_state;
    use crate::model::{build_jc, build_rabi};
    use approx::assert_abs_diff_eq;

    #[test]
    fn initial_ground_state_populations() {
        let spec = build_jc(1.0, 1.0, 0.1, 3.0, 0.0).unwrap();
        let st = initial_state(&spec, &[C64::ONE, C64::ZERO], 2, 3).unwrap();
        assert_eq!(population(&st, 0), 1.0);
        assert_eq!(population(&st, 1), 0.0);
    }

    #[test]
    fn generating_function_of_coherent_state() {
        let spec = build_rabi(1.0, 1.0, 0.2, 2.5, 0.7).unwrap();
        let st = initial_state(&spec, &[C64::ONE, C64::ZERO], 1, 0).unwrap();
        assert_eq!(generating_function(&st, &spec, &[0.0]).unwrap(), C64::ONE);
        for &chi in &[0.3, 1.7, 4.0] {
            let g = generating_function(&st, &spec, &[chi]).unwrap();
            let expect = (((I * chi).exp() - 1.0) * 6.25).exp();
            assert!((g - expect).norm() < 1e-13);
        }
        assert!(generating_function(&st, &spec, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn coherent_moments_are_poissonian() {
        let spec = build_rabi(1.0, 1.0, 0.2, 3.0, 0.0).unwrap();
        let st = initial_state(&spec, &[C64::ONE, C64::ZERO], 1, 0).unwrap();
        assert_abs_diff_eq!(mean_photon(&st, &spec, 0), 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(photon_variance(&st, &spec, 0), 9.0, epsilon = 1e-12);
        assert_eq!(delta_n(&st, &spec, 0), 0.0);
        assert_eq!(delta_variance(&st, &spec, 0), 0.0);
    }

    #[test]
    fn vacuum_distribution() {
        let spec = build_rabi(1.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        let st = initial_state(&spec, &[C64::ONE, C64::ZERO], 1, 0).unwrap();
        let p = photon_distribution_default(&st, &spec).unwrap();
        assert_abs_diff_eq!(p.get(&[0]), 1.0, epsilon = 1e-12);
        assert!(p.probabilities[1..].iter().all(|x| x.abs() < 1e-12));
        assert!(!p.mass_warning);
    }

    #[test]
    fn coherent_distribution_is_poisson() {
        let alpha = 1e3f64.sqrt();
        let spec = build_jc(1.0, 1.0, 0.5 / alpha, alpha, 0.0).unwrap();
        let st = initial_state(&spec, &[C64::ONE, C64::ZERO], 1, 0).unwrap();
        let p = photon_distribution_default(&st, &spec).unwrap();
        let q = PhotonDistribution::poisson_product(0.0, p.windows.clone(), &[1e3]).unwrap();
        assert!(p.max_abs_difference(&q) < 1e-12);
        // integer mean: p(μ−1) = p(μ)
        assert_abs_diff_eq!(p.get(&[999]), p.get(&[1000]), epsilon = 1e-14);
        assert_abs_diff_eq!(p.mass, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn grid_below_nyquist_is_rejected() {
        let spec = build_rabi(1.0, 1.0, 0.1, 2.0, 0.0).unwrap();
        let st = initial_state(&spec, &[C64::ONE, C64::ZERO], 1, 0).unwrap();
        let w = ModeWindow::default_for(2.0);
        assert!(photon_distribution(&st, &spec, &[w], &[w.min_grid() - 1]).is_err());
    }

    #[test]
    fn window_bounds() {
        let w = ModeWindow::default_for(5f64.sqrt());
        assert_eq!(w.center, 5);
        assert_eq!(w.half_width, 56);
        assert_eq!(w.lower(), 0);
        assert_eq!(w.upper(), 61);
    }
}
