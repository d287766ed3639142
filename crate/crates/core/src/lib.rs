//! Light-matter dynamics with coherent-state fields of arbitrary mean photon
//! number.
//!
//! Three engines share one model description ([`ModelSpec`]):
//!
//! * the multi-Davydov D2 variational solver ([`ansatz`], [`integrator`],
//!   [`observables`]), which works in the displaced interaction frame where
//!   the initial field is the vacuum;
//! * the semiclassical solver ([`semiclassical`]), which propagates the
//!   classically driven system and derives the field response from it;
//! * the truncated-Fock exact oracle ([`oracle`]) for small photon numbers.
//!
//! Units: ħ = 1 and all energies are in units of the first transition
//! frequency ω₀.

pub mod ansatz;
pub mod error;
pub mod integrator;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod record;
pub mod semiclassical;

pub use ansatz::{DavydovState, EomSystem, StateDerivative};
pub use error::{Error, Result};
pub use integrator::{IntegrationConfig, Observer};
pub use model::{CouplingKind, ModeSpec, ModelSpec};
pub use observables::{FieldMoments, PhotonDistribution};
pub use oracle::FockConfig;
pub use record::TrajectoryRecord;
pub use semiclassical::PropagatorSeries;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;

/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;

pub(crate) const I: C64 = C64::new(0.0, 1.0);
