//! Shared fixtures for the engine benchmarks.

use lightmatter_core::ansatz::initial_state_with_offset;
use lightmatter_core::model::{build_jc, build_multimode_rabi, build_rabi, MultimodeEntry};
use lightmatter_core::{DavydovState, ModelSpec, C64};

pub const GROUND: [C64; 2] = [C64::ONE, C64::ZERO];

/// Resonant JC model with Ω = 0.5 and the given mean photon number.
pub fn jc(mean_photons: f64) -> ModelSpec {
    let amp = mean_photons.sqrt();
    build_jc(1.0, 1.0, 0.5 / amp, amp, 0.0).expect("valid JC parameters")
}

/// Ultrastrong Rabi model, g = 0.2, |α|² = 5.
pub fn rabi_ultrastrong() -> ModelSpec {
    build_rabi(1.0, 1.0, 0.2, 5f64.sqrt(), 0.0).expect("valid Rabi parameters")
}

/// Two-mode Rabi model with g = 0.06 and |α_k|² = 25.
pub fn two_mode() -> ModelSpec {
    let entry = |w| MultimodeEntry::new(w, 0.06, 5.0, 0.0);
    build_multimode_rabi(1.0, &[entry(0.6449), entry(0.8449)]).expect("valid two-mode parameters")
}

/// Ground-state ansatz with `m` branches spread at distance 0.3.
pub fn state(spec: &ModelSpec, m: usize) -> DavydovState {
    initial_state_with_offset(spec, &GROUND, m, 1, 0.3).expect("valid initial state")
}
