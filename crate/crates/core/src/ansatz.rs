//! Multi-Davydov D2 trial state and its Dirac–Frenkel equations of motion.
//!
//! The trial state in the displaced interaction frame is
//!
//! ```text
//! |D⟩ = Σ_{n=1}^{M} Σ_{j=1}^{N_S} A_{nj} |j⟩ |f_n⟩
//! ```
//!
//! with multimode coherent states |f_n⟩ = exp(Σ_k f_{nk} b_k† − h.c.)|0⟩.
//! Projecting the Schrödinger residual onto the tangent space gives a linear
//! system for the reduced amplitude velocities a_{nj} and the displacement
//! velocities ḟ_{nk}. Its coefficient matrix is the Gram matrix of the tangent
//! vectors, hence Hermitian positive semidefinite; it becomes singular when
//! branches coalesce or carry no amplitude, which is why the solve is
//! regularized.

use nalgebra::linalg::{Cholesky, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::model::{driven_system_hamiltonian, residual_couplings, ModelSpec};
use crate::{CMatrix, CVector, C64, I};

/// Default magnitude of the random displacement offsets given to the
/// initially empty branches.
pub const DEFAULT_INIT_OFFSET: f64 = 1e-3;

/// Default relative Tikhonov shift, in units of max |matrix element|.
pub const DEFAULT_REGULARIZATION: f64 = 1e-10;

/// Largest relative shift tried before the solve is declared singular.
pub const MAX_REGULARIZATION: f64 = 1e-6;

/// Relative residual ‖Gx − b‖/‖b‖ above which a regularized solve is rejected.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-6;

/// Variational parameters of the multi-D2 ansatz at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DavydovState {
    /// A, M × N_S.
    pub amplitudes: CMatrix,
    /// F, M × N.
    pub displacements: CMatrix,
    pub time: f64,
}

impl DavydovState {
    pub fn new(amplitudes: CMatrix, displacements: CMatrix, time: f64) -> Result<Self> {
        if amplitudes.nrows() == 0 || amplitudes.nrows() != displacements.nrows() {
            return Err(invalid(format!(
                "amplitude rows ({}) and displacement rows ({}) must match and be nonzero",
                amplitudes.nrows(),
                displacements.nrows()
            )));
        }
        Ok(Self {
            amplitudes,
            displacements,
            time,
        })
    }

    /// Number of coherent-state branches M.
    pub fn multiplicity(&self) -> usize {
        self.amplitudes.nrows()
    }

    pub fn system_dim(&self) -> usize {
        self.amplitudes.ncols()
    }

    pub fn num_modes(&self) -> usize {
        self.displacements.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes.iter().chain(self.displacements.iter()).all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn check_dims(&self, spec: &ModelSpec) -> Result<()> {
        if self.system_dim() != spec.dim() || self.num_modes() != spec.num_modes() {
            return Err(invalid(format!(
                "state is {}x({} system, {} modes) but model has {} system levels and {} modes",
                self.multiplicity(),
                self.system_dim(),
                self.num_modes(),
                spec.dim(),
                spec.num_modes()
            )));
        }
        Ok(())
    }
}

/// Initial ansatz for |ψ0⟩ ⊗ |0⟩ in the displaced frame.
pub fn initial_state(spec: &ModelSpec, psi0: &[C64], multiplicity: usize, seed: u64) -> Result<DavydovState> {
    initial_state_with_offset(spec, psi0, multiplicity, seed, DEFAULT_INIT_OFFSET)
}

/// Branch 0 carries ψ0 at the field vacuum; the remaining branches start with
/// zero amplitude and displacements of magnitude `offset` in random
/// directions drawn from a generator seeded by `seed`.
pub fn initial_state_with_offset(
    spec: &ModelSpec,
    psi0: &[C64],
    multiplicity: usize,
    seed: u64,
    offset: f64,
) -> Result<DavydovState> {
    if multiplicity == 0 {
        return Err(invalid("multiplicity M must be >= 1"));
    }
    if psi0.len() != spec.dim() {
        return Err(invalid(format!("psi0 has length {} but N_S = {}", psi0.len(), spec.dim())));
    }
    let norm: f64 = psi0.iter().map(|z| z.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(invalid(format!("psi0 is not normalized (norm^2 = {norm})")));
    }
    if !(offset.is_finite() && offset >= 0.0) {
        return Err(invalid("initial displacement offset must be >= 0"));
    }
    let n_modes = spec.num_modes();
    let mut amplitudes = CMatrix::zeros(multiplicity, spec.dim());
    for (j, &z) in psi0.iter().enumerate() {
        amplitudes[(0, j)] = z;
    }
    let mut displacements = CMatrix::zeros(multiplicity, n_modes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in 1..multiplicity {
        for k in 0..n_modes {
            let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            displacements[(n, k)] = C64::from_polar(offset, theta);
        }
    }
    DavydovState::new(amplitudes, displacements, 0.0)
}

/// Exponent of the coherent-state overlap,
/// ln S_{ln} = Σ_k (f*_{lk} f_{nk} − |f_{lk}|²/2 − |f_{nk}|²/2).
pub fn log_overlap_matrix(displacements: &CMatrix) -> CMatrix {
    let m = displacements.nrows();
    let half_sq: Vec<f64> = (0..m)
        .map(|n| displacements.row(n).iter().map(|z| z.norm_sqr()).sum::<f64>() / 2.0)
        .collect();
    CMatrix::from_fn(m, m, |l, n| {
        let cross: C64 = displacements
            .row(l)
            .iter()
            .zip(displacements.row(n).iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        cross - half_sq[l] - half_sq[n]
    })
}

/// Overlap matrix S_{ln} = ⟨f_l|f_n⟩ of the branch coherent states.
pub fn overlap_matrix(state: &DavydovState) -> CMatrix {
    log_overlap_matrix(&state.displacements).map(|z| z.exp())
}

/// ⟨D|D⟩ = Σ_{l,n,j} A*_{lj} S_{ln} A_{nj}.
pub fn norm(state: &DavydovState) -> f64 {
    let s = overlap_matrix(state);
    let a = &state.amplitudes;
    let mut total = C64::ZERO;
    for l in 0..state.multiplicity() {
        for n in 0..state.multiplicity() {
            let w: C64 = a.row(l).iter().zip(a.row(n).iter()).map(|(x, y)| x.conj() * y).sum();
            total += w * s[(l, n)];
        }
    }
    total.re
}

/// The linear system i·G·x = b of the equations of motion, with the unknown
/// vector x stacking (a_1, …, a_{N_S}, Ḟ).
///
/// Layout: the a_j block occupies indices `j*M .. (j+1)*M`; ḟ_{np} sits at
/// `M*N_S + n*N + p`.
#[derive(Debug, Clone)]
pub struct EomSystem {
    pub time: f64,
    /// Hermitian coefficient (Gram) matrix G.
    pub matrix: CMatrix,
    /// Right-hand side (I_1, …, I_{N_S}, I_f).
    pub rhs: CVector,
    amplitudes: CMatrix,
    displacements: CMatrix,
}

impl EomSystem {
    pub fn multiplicity(&self) -> usize {
        self.amplitudes.nrows()
    }

    pub fn system_dim(&self) -> usize {
        self.amplitudes.ncols()
    }

    pub fn num_modes(&self) -> usize {
        self.displacements.ncols()
    }

    /// Maximum deviation of the coefficient matrix from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        let g = &self.matrix;
        let n = g.nrows();
        let mut worst = 0.0f64;
        for r in 0..n {
            for c in r..n {
                worst = worst.max((g[(r, c)] - g[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// Residual ‖G x − (−i b)‖ of a candidate solution vector.
    pub fn residual(&self, x: &CVector) -> f64 {
        (&self.matrix * x + &self.rhs * I).norm()
    }
}

/// Assembles the block matrix equation at `state.time`.
pub fn assemble_eom(state: &DavydovState, spec: &ModelSpec) -> Result<EomSystem> {
    state.check_dims(spec)?;
    let m = state.multiplicity();
    let ns = state.system_dim();
    let nm = state.num_modes();
    let a = &state.amplitudes;
    let f = &state.displacements;
    let s = overlap_matrix(state);
    let t = state.time;

    let h_t = driven_system_hamiltonian(spec, t);
    let couplings = residual_couplings(spec, t);

    // Per-branch system vectors: H_S(t) A_n, c_p* V_p† A_n, c_p V_p A_n.
    let branch = |n: usize| CVector::from_iterator(ns, a.row(n).iter().copied());
    let mut h_a = Vec::with_capacity(m);
    let mut vdag_a = vec![Vec::with_capacity(nm); m];
    let mut v_a = vec![Vec::with_capacity(nm); m];
    for n in 0..m {
        let an = branch(n);
        h_a.push(&h_t * &an);
        for (c, v) in &couplings {
            vdag_a[n].push(v.ad_mul(&an) * c.conj());
            v_a[n].push(*v * &an * *c);
        }
    }
    // w_{ln} = Σ_j A*_{lj} A_{nj}
    let w = CMatrix::from_fn(m, m, |l, n| {
        a.row(l).iter().zip(a.row(n).iter()).map(|(x, y)| x.conj() * y).sum()
    });

    let off = m * ns;
    let dim = off + m * nm;
    let mut g = CMatrix::zeros(dim, dim);
    let mut rhs = CVector::zeros(dim);

    for l in 0..m {
        for n in 0..m {
            let sln = s[(l, n)];
            // S blocks on the diagonal.
            for j in 0..ns {
                g[(j * m + l, j * m + n)] = sln;
            }
            // C^(j) and its adjoint block.
            for j in 0..ns {
                for p in 0..nm {
                    g[(j * m + l, off + n * nm + p)] = a[(n, j)] * sln * f[(l, p)].conj();
                    g[(off + l * nm + p, j * m + n)] = a[(l, j)].conj() * sln * f[(n, p)];
                }
            }
            // D block.
            let wsln = w[(l, n)] * sln;
            for k in 0..nm {
                for p in 0..nm {
                    let delta = if k == p { C64::ONE } else { C64::ZERO };
                    g[(off + l * nm + k, off + n * nm + p)] = wsln * (delta + f[(l, p)].conj() * f[(n, k)]);
                }
            }
        }
    }

    for l in 0..m {
        for n in 0..m {
            let sln = s[(l, n)];
            // ⟨j|⟨f_l| H' |i⟩|f_n⟩ A_{ni} as a vector over j.
            let mut proj = h_a[n].clone();
            for p in 0..nm {
                proj += &vdag_a[n][p] * f[(n, p)] + &v_a[n][p] * f[(l, p)].conj();
            }
            for j in 0..ns {
                rhs[j * m + l] += proj[j] * sln;
            }
            // Σ_j A*_{lj} ⟨j|⟨f_l| b_k H' |D⟩ contributions from branch n.
            let al = a.row(l);
            let dot = |v: &CVector| -> C64 { al.iter().zip(v.iter()).map(|(x, y)| x.conj() * y).sum() };
            let h_term = dot(&h_a[n]);
            let vdag_terms: Vec<C64> = (0..nm).map(|p| dot(&vdag_a[n][p])).collect();
            let v_terms: Vec<C64> = (0..nm).map(|p| dot(&v_a[n][p])).collect();
            let vdag_f: C64 = (0..nm).map(|p| vdag_terms[p] * f[(n, p)]).sum();
            let v_fl: C64 = (0..nm).map(|p| v_terms[p] * f[(l, p)].conj()).sum();
            for k in 0..nm {
                let fnk = f[(n, k)];
                let val = (h_term + vdag_f + v_fl) * fnk + v_terms[k];
                rhs[off + l * nm + k] += val * sln;
            }
        }
    }

    Ok(EomSystem {
        time: t,
        matrix: g,
        rhs,
        amplitudes: a.clone(),
        displacements: f.clone(),
    })
}

/// Time derivatives of the variational parameters.
#[derive(Debug, Clone)]
pub struct StateDerivative {
    /// Ȧ, M × N_S.
    pub amplitudes: CMatrix,
    /// Ḟ, M × N.
    pub displacements: CMatrix,
    /// Reduced velocities a_{nj}, M × N_S.
    pub reduced: CMatrix,
    /// Relative Tikhonov shift that was finally used.
    pub regularization: f64,
    /// ‖G x + i b‖ / ‖b‖ of the accepted solution.
    pub relative_residual: f64,
}

/// Solves G x = −i b with a Tikhonov shift, escalating the shift tenfold up
/// to [`MAX_REGULARIZATION`] when the factorization fails or the residual is
/// too large, and then recovers Ȧ from the reduced velocities.
///
/// G is first equilibrated to unit diagonal, so the shift `reg` is relative to
/// every diagonal entry rather than to the largest one; branches with large
/// amplitudes otherwise swamp the small but physical directions of the rest.
pub fn solve_eom(eom: &EomSystem, reg: f64) -> Result<StateDerivative> {
    if !(reg.is_finite() && reg >= 0.0) {
        return Err(invalid("regularization must be >= 0"));
    }
    let dim = eom.matrix.nrows();
    let b = &eom.rhs * (-I);
    let b_norm = b.norm();
    let scale = eom.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let threshold = SOLVE_RESIDUAL_TOL * b_norm.max(1e-300) + 1e-14 * scale;
    // Jacobi scaling; empty rows (zero-amplitude branches) are left unscaled.
    let d: Vec<f64> = (0..dim)
        .map(|i| {
            let g = eom.matrix[(i, i)].re;
            if g > 1e-300 { 1.0 / g.sqrt() } else { 1.0 }
        })
        .collect();
    let scaled = CMatrix::from_fn(dim, dim, |r, c| eom.matrix[(r, c)] * (d[r] * d[c]));
    let scaled_b = CVector::from_fn(dim, |r, _| b[r] * d[r]);

    let mut rel = reg;
    let mut best: Option<(CVector, f64)> = None;
    loop {
        let shifted = &scaled + CMatrix::identity(dim, dim) * C64::from(rel);
        let y = match Cholesky::new(shifted.clone()) {
            Some(chol) => Some(chol.solve(&scaled_b)),
            None => shifted.lu().solve(&scaled_b),
        };
        if let Some(y) = y {
            let x = CVector::from_fn(dim, |r, _| y[r] * d[r]);
            let finite = x.iter().all(|z| z.re.is_finite() && z.im.is_finite());
            if finite {
                let residual = (&eom.matrix * &x - &b).norm();
                if residual <= threshold {
                    return Ok(finish(eom, &x, rel, residual / b_norm.max(f64::MIN_POSITIVE)));
                }
                if best.as_ref().is_none_or(|(_, r)| residual < *r) {
                    best = Some((x, residual));
                }
            }
        }
        if rel >= MAX_REGULARIZATION {
            break;
        }
        rel = if rel == 0.0 { DEFAULT_REGULARIZATION } else { (rel * 10.0).min(MAX_REGULARIZATION) };
    }
    let residual = best.map(|(_, r)| r).unwrap_or(f64::INFINITY);
    Err(Error::SingularSystem {
        time: eom.time,
        residual,
        condition: condition_estimate(&eom.matrix),
    })
}

fn finish(eom: &EomSystem, x: &CVector, rel: f64, relative_residual: f64) -> StateDerivative {
    let m = eom.multiplicity();
    let ns = eom.system_dim();
    let nm = eom.num_modes();
    let off = m * ns;
    let reduced = CMatrix::from_fn(m, ns, |n, j| x[j * m + n]);
    let fdot = CMatrix::from_fn(m, nm, |n, p| x[off + n * nm + p]);
    let f = &eom.displacements;
    let mut adot = reduced.clone();
    for n in 0..m {
        // Ȧ = a + ½ A Σ_p (ḟ f* + f ḟ*) = a + A Re Σ_p ḟ f*
        let growth: f64 = (0..nm).map(|p| (fdot[(n, p)] * f[(n, p)].conj()).re).sum();
        for j in 0..ns {
            adot[(n, j)] += eom.amplitudes[(n, j)] * growth;
        }
    }
    StateDerivative {
        amplitudes: adot,
        displacements: fdot,
        reduced,
        regularization: rel,
        relative_residual,
    }
}

/// Ratio of extreme eigenvalue magnitudes of a Hermitian matrix.
pub fn condition_estimate(matrix: &CMatrix) -> f64 {
    let eig = SymmetricEigen::new(matrix.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Residuals of the projected equations of motion for a given derivative:
/// ⟨j|⟨f_l|[i∂_t − H']|D⟩ and Σ_j A*_{lj}⟨j|⟨f_l| b_k [i∂_t − H']|D⟩,
/// evaluated directly from the coherent-state algebra rather than from the
/// assembled matrix.
pub fn projected_residuals(state: &DavydovState, spec: &ModelSpec, deriv: &StateDerivative) -> Result<CVector> {
    let eom = assemble_eom(state, spec)?;
    let m = state.multiplicity();
    let ns = state.system_dim();
    let nm = state.num_modes();
    let a = &state.amplitudes;
    let f = &state.displacements;
    let s = overlap_matrix(state);
    let fdot = &deriv.displacements;
    // reduced velocity from Ȧ directly, independent of the solver's x
    let mut red = deriv.amplitudes.clone();
    for n in 0..m {
        let growth: f64 = (0..nm).map(|p| (fdot[(n, p)] * f[(n, p)].conj()).re).sum();
        for j in 0..ns {
            red[(n, j)] -= a[(n, j)] * growth;
        }
    }
    let off = m * ns;
    let mut out = CVector::zeros(off + m * nm);
    for l in 0..m {
        for j in 0..ns {
            let mut lhs = C64::ZERO;
            for n in 0..m {
                let fl_fdot: C64 = (0..nm).map(|p| f[(l, p)].conj() * fdot[(n, p)]).sum();
                lhs += (red[(n, j)] + a[(n, j)] * fl_fdot) * s[(l, n)];
            }
            out[j * m + l] = I * lhs - eom.rhs[j * m + l];
        }
        for k in 0..nm {
            let mut lhs = C64::ZERO;
            for n in 0..m {
                let sln = s[(l, n)];
                for j in 0..ns {
                    let alj = a[(l, j)].conj();
                    let mut inner = red[(n, j)] * f[(n, k)];
                    for p in 0..nm {
                        let delta = if k == p { C64::ONE } else { C64::ZERO };
                        inner += a[(n, j)] * (delta + f[(l, p)].conj() * f[(n, k)]) * fdot[(n, p)];
                    }
                    lhs += alj * inner * sln;
                }
            }
            out[off + l * nm + k] = I * lhs - eom.rhs[off + l * nm + k];
        }
    }
    Ok(out)
}
