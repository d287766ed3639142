//! Cross-checks of the coherent-state algebra against explicit state vectors in
//! a truncated Fock space.

use lightmatter_core::ansatz::{assemble_eom, norm, overlap_matrix, solve_eom};
use lightmatter_core::model::{
    build_dicke, build_jc, build_multimode_rabi, build_rabi, driven_system_hamiltonian, residual_couplings,
    MultimodeEntry,
};
use lightmatter_core::observables::{
    field_moments, generating_function, photon_distribution, population, ModeWindow,
};
use lightmatter_core::oracle::{coherent_coefficients, exact_observables, FockConfig};
use lightmatter_core::{CMatrix, CVector, DavydovState, ModelSpec, C64};
use proptest::prelude::*;

/// Row-major Fock index helpers with mode 0 slowest.
struct Fock {
    ns: usize,
    cut: Vec<usize>,
    field: usize,
}

impl Fock {
    fn new(ns: usize, cut: &[usize]) -> Self {
        Self { ns, cut: cut.to_vec(), field: cut.iter().map(|c| c + 1).product() }
    }

    fn dim(&self) -> usize {
        self.ns * self.field
    }

    fn photons(&self, mut f: usize) -> Vec<usize> {
        let mut n = vec![0; self.cut.len()];
        for k in (0..self.cut.len()).rev() {
            n[k] = f % (self.cut[k] + 1);
            f /= self.cut[k] + 1;
        }
        n
    }

    fn index(&self, n: &[usize]) -> usize {
        n.iter().zip(&self.cut).fold(0, |acc, (&x, &c)| acc * (c + 1) + x)
    }

    /// Product coherent state ⊗_k |β_k⟩.
    fn coherent(&self, beta: &[C64]) -> Vec<C64> {
        let coeffs: Vec<Vec<C64>> = beta.iter().zip(&self.cut).map(|(&b, &c)| coherent_coefficients(b, c)).collect();
        (0..self.field)
            .map(|f| self.photons(f).iter().enumerate().map(|(k, &n)| coeffs[k][n]).product())
            .collect()
    }

    /// Σ_n Σ_j A_nj e^{iθ_n}|j⟩⊗|β_n⟩ with β_n = shift + f_n.
    fn state(&self, a: &CMatrix, f: &CMatrix, shift: &[C64]) -> CVector {
        let mut out = CVector::zeros(self.dim());
        for n in 0..a.nrows() {
            let beta: Vec<C64> = (0..f.ncols()).map(|k| shift[k] + f[(n, k)]).collect();
            // D(α)|f⟩ = exp[(α f* − α* f)/2] |α + f⟩
            let phase: C64 = (0..f.ncols())
                .map(|k| (shift[k] * f[(n, k)].conj() - shift[k].conj() * f[(n, k)]) / 2.0)
                .sum::<C64>()
                .exp();
            let field = self.coherent(&beta);
            for j in 0..self.ns {
                let amp = a[(n, j)] * phase;
                for (x, v) in field.iter().enumerate() {
                    out[j * self.field + x] += amp * v;
                }
            }
        }
        out
    }

    /// Displaced-frame generator H_S(t) + Σ_k [c_k* V_k† b_k + c_k V_k b_k†].
    fn hamiltonian(&self, spec: &ModelSpec, t: f64) -> CMatrix {
        let d = self.dim();
        let mut h = CMatrix::zeros(d, d);
        let hs = driven_system_hamiltonian(spec, t);
        for x in 0..self.field {
            for i in 0..self.ns {
                for j in 0..self.ns {
                    h[(i * self.field + x, j * self.field + x)] += hs[(i, j)];
                }
            }
        }
        for (k, (c, v)) in residual_couplings(spec, t).into_iter().enumerate() {
            for x in 0..self.field {
                let n = self.photons(x);
                if n[k] == self.cut[k] {
                    continue;
                }
                let mut up = n.clone();
                up[k] += 1;
                let y = self.index(&up);
                let amp = ((n[k] + 1) as f64).sqrt();
                for i in 0..self.ns {
                    for j in 0..self.ns {
                        // c V ⊗ b†: |x⟩ → |y⟩
                        h[(i * self.field + y, j * self.field + x)] += c * v[(i, j)] * amp;
                        // c* V† ⊗ b: |y⟩ → |x⟩
                        h[(i * self.field + x, j * self.field + y)] += c.conj() * v[(j, i)].conj() * amp;
                    }
                }
            }
        }
        h
    }
}

fn random_state(seed: u64, m: usize, ns: usize, nm: usize, fmax: f64, t: f64) -> DavydovState {
    // small deterministic generator so the cases do not depend on the crate's RNG
    let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = move || {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((x >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let mut a = CMatrix::from_fn(m, ns, |_, _| C64::new(next(), next()));
    let f = CMatrix::from_fn(m, nm, |_, _| C64::new(next(), next()) * fmax);
    let st = DavydovState::new(a.clone(), f.clone(), t).unwrap();
    a /= C64::from(norm(&st).sqrt());
    DavydovState::new(a, f, t).unwrap()
}

fn models() -> Vec<(&'static str, ModelSpec, Vec<usize>)> {
    vec![
        ("jc", build_jc(1.0, 0.9, 0.3, 1.5, 0.4).unwrap(), vec![30]),
        ("rabi", build_rabi(1.0, 1.1, 0.2, 2.0, -0.3).unwrap(), vec![30]),
        (
            "two-mode",
            build_multimode_rabi(1.0, &[MultimodeEntry::new(0.64, 0.1, 1.0, 0.0), MultimodeEntry::new(0.84, 0.2, 0.5, 1.0)])
                .unwrap(),
            vec![16, 16],
        ),
        ("dicke", build_dicke(&[1.0, 1.3], 1.0, 0.25, 1.2, 0.0).unwrap(), vec![30]),
    ]
}

#[test]
fn tdvp_residual_vanishes_on_every_tangent_vector() {
    for (name, spec, cut) in models() {
        let fock = Fock::new(spec.dim(), &cut);
        let h_full = fock.hamiltonian(&spec, 0.7);
        let zero = vec![C64::ZERO; spec.num_modes()];
        for seed in 0..3 {
            let st = random_state(seed, 3, spec.dim(), spec.num_modes(), 0.6, 0.7);
            let eom = assemble_eom(&st, &spec).unwrap();
            let d = solve_eom(&eom, 0.0).unwrap();
            let psi = fock.state(&st.amplitudes, &st.displacements, &zero);
            let eps = 1e-5;
            let plus = fock.state(
                &(&st.amplitudes + &d.amplitudes * C64::from(eps)),
                &(&st.displacements + &d.displacements * C64::from(eps)),
                &zero,
            );
            let minus = fock.state(
                &(&st.amplitudes - &d.amplitudes * C64::from(eps)),
                &(&st.displacements - &d.displacements * C64::from(eps)),
                &zero,
            );
            let dot = (plus - minus) / C64::from(2.0 * eps);
            let hpsi = &h_full * &psi;
            let defect = dot * C64::new(0.0, 1.0) - &hpsi;
            let scale = hpsi.norm();
            let m = st.multiplicity();
            let mut worst = 0.0f64;
            // amplitude tangents |j⟩|f_n⟩
            for n in 0..m {
                for j in 0..spec.dim() {
                    let mut e = CMatrix::zeros(m, spec.dim());
                    e[(n, j)] = C64::ONE;
                    let t = fock.state(&e, &st.displacements, &zero);
                    worst = worst.max(t.dotc(&defect).norm());
                }
            }
            // displacement tangents: holomorphic derivative by finite differences
            for n in 0..m {
                for k in 0..spec.num_modes() {
                    let shifted = |dz: C64| {
                        let mut f = st.displacements.clone();
                        f[(n, k)] += dz;
                        fock.state(&st.amplitudes, &f, &zero)
                    };
                    let h = 1e-6;
                    let dx = (shifted(C64::new(h, 0.0)) - shifted(C64::new(-h, 0.0))) / C64::from(2.0 * h);
                    let dy = (shifted(C64::new(0.0, h)) - shifted(C64::new(0.0, -h))) / C64::from(2.0 * h);
                    let t = (dx - dy * C64::new(0.0, 1.0)) / C64::from(2.0);
                    worst = worst.max(t.dotc(&defect).norm());
                }
            }
            assert!(worst < 1e-6 * scale, "{name} seed {seed}: residual {worst:.3e} vs scale {scale:.3e}");
        }
    }
}

#[test]
fn distribution_matches_fock_probabilities() {
    let spec = build_rabi(1.0, 1.0, 0.2, 2.5, 0.3).unwrap();
    let cut = [60];
    let fock = Fock::new(2, &cut);
    let st = random_state(11, 3, 2, 1, 0.8, 0.0);
    let alpha = [spec.mode(0).alpha()];
    let psi = fock.state(&st.amplitudes, &st.displacements, &alpha);
    let w = ModeWindow { center: 6, half_width: 40 };
    let d = photon_distribution(&st, &spec, &[w], &[w.min_grid()]).unwrap();
    for n in w.lower()..=w.upper().min(cut[0]) {
        let p: f64 = (0..2).map(|j| psi[j * fock.field + n].norm_sqr()).sum();
        assert!((d.get(&[n]) - p).abs() < 1e-12, "n = {n}: {} vs {p}", d.get(&[n]));
    }
    assert!((d.mass - 1.0).abs() < 1e-10);
}

#[test]
fn two_mode_distribution_matches_fock_probabilities() {
    let spec =
        build_multimode_rabi(1.0, &[MultimodeEntry::new(0.6, 0.1, 1.2, 0.0), MultimodeEntry::new(0.8, 0.1, 0.7, 0.5)])
            .unwrap();
    let cut = [25, 25];
    let fock = Fock::new(2, &cut);
    let st = random_state(5, 2, 2, 2, 0.5, 0.0);
    let alpha: Vec<C64> = spec.modes().iter().map(|m| m.alpha()).collect();
    let psi = fock.state(&st.amplitudes, &st.displacements, &alpha);
    let ws = [ModeWindow { center: 1, half_width: 20 }, ModeWindow { center: 1, half_width: 20 }];
    let d = photon_distribution(&st, &spec, &ws, &[ws[0].min_grid(), ws[1].min_grid()]).unwrap();
    let mut worst = 0.0f64;
    for n1 in 0..=21 {
        for n2 in 0..=21 {
            let x = fock.index(&[n1, n2]);
            let p: f64 = (0..2).map(|j| psi[j * fock.field + x].norm_sqr()).sum();
            worst = worst.max((d.get(&[n1, n2]) - p).abs());
        }
    }
    assert!(worst < 1e-12, "{worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn moments_and_populations_match_fock_space(seed in 0u64..1000, amp in 0.0f64..2.0, phase in -3.0f64..3.0) {
        let spec = build_jc(1.0, 1.0, 0.1, amp, phase).unwrap();
        let cut = 70usize;
        let fock = Fock::new(2, &[cut]);
        let st = random_state(seed, 3, 2, 1, 1.0, 0.0);
        let psi = fock.state(&st.amplitudes, &st.displacements, &[spec.mode(0).alpha()]);
        let ex = exact_observables(&spec, &FockConfig::with_cutoffs(vec![cut]), psi.as_slice()).unwrap();
        prop_assert!((ex.norm - 1.0).abs() < 1e-10);
        let mom = field_moments(&st, &spec);
        prop_assert!((mom.mean(0) - ex.mean[0]).abs() < 1e-9, "mean {} vs {}", mom.mean(0), ex.mean[0]);
        prop_assert!((mom.variance(0) - ex.variance[0]).abs() < 1e-8, "var {} vs {}", mom.variance(0), ex.variance[0]);
        for j in 0..2 {
            prop_assert!((population(&st, j) - ex.populations[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn overlap_is_hermitian_positive_with_unit_diagonal(seed in 0u64..10_000, m in 1usize..6, fmax in 0.0f64..3.0) {
        let st = random_state(seed, m, 2, 2, fmax, 0.0);
        let s = overlap_matrix(&st);
        for l in 0..m {
            prop_assert!((s[(l, l)] - C64::ONE).norm() < 1e-14);
            for n in 0..m {
                prop_assert!((s[(l, n)] - s[(n, l)].conj()).norm() < 1e-14);
                prop_assert!(s[(l, n)].norm() <= 1.0 + 1e-14);
            }
        }
        let eig = nalgebra::SymmetricEigen::new(s).eigenvalues;
        prop_assert!(eig.iter().all(|&e| e > -1e-12));
    }

    #[test]
    fn eom_matrix_is_hermitian_positive(seed in 0u64..10_000, m in 1usize..5, t in 0.0f64..50.0) {
        for (_, spec, _) in models() {
            let st = random_state(seed, m, spec.dim(), spec.num_modes(), 1.0, t);
            let eom = assemble_eom(&st, &spec).unwrap();
            let scale = eom.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max);
            prop_assert!(eom.hermiticity_error() <= 1e-13 * scale);
            let eig = nalgebra::SymmetricEigen::new(eom.matrix.clone()).eigenvalues;
            prop_assert!(eig.iter().all(|&e| e > -1e-10 * scale));
        }
    }

    #[test]
    fn generating_function_derivatives_give_moments(seed in 0u64..1000, amp in 0.5f64..4.0) {
        let spec = build_rabi(1.0, 1.0, 0.1, amp, 0.2).unwrap();
        let st = random_state(seed, 2, 2, 1, 0.7, 0.0);
        let g0 = generating_function(&st, &spec, &[0.0]).unwrap();
        prop_assert!((g0 - C64::ONE).norm() < 1e-12);
        // G(χ) = ⟨e^{iχn}⟩: −i G'(0) = ⟨n⟩, −G''(0) = ⟨n²⟩
        let h = 1e-4;
        let gp = generating_function(&st, &spec, &[h]).unwrap();
        let gm = generating_function(&st, &spec, &[-h]).unwrap();
        let n1 = ((gp - gm) / (2.0 * h) * C64::new(0.0, -1.0)).re;
        let n2 = -((gp + gm - 2.0 * g0) / (h * h)).re;
        let mom = field_moments(&st, &spec);
        let mean = mom.mean(0);
        let var = mom.variance(0);
        prop_assert!((n1 - mean).abs() < 1e-6 * mean.max(1.0), "{n1} vs {mean}");
        prop_assert!((n2 - (var + mean * mean)).abs() < 1e-3 * (var + mean * mean).max(1.0));
    }
}
