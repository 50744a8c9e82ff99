//! Quasi-periodic grand-ensemble potentials on `Z^d`, finite-volume one-
//! and two-particle tight-binding Hamiltonians, and Monte Carlo checks of
//! eigenvalue-concentration (Wegner-type) bounds.
//!
//! The numerical core (torus dynamics, the potential, matrix assembly and
//! the eigensolver) is generic over [`Real`] (`f32` or `f64`). The
//! aliases below pin `f64`, which is what the experiments use.

pub mod dm;
pub mod error;
pub mod lattice;
pub mod randelette;
pub mod rng;
pub mod scalar;
pub mod spectral;
pub mod stats;
pub mod torus;
pub mod wegner;

pub use error::{Error, Result};
pub use scalar::Real;

pub type TorusPoint = torus::TorusPoint<f64>;
pub type ShiftAction = torus::ShiftAction<f64>;
pub type CoefficientSchedule = randelette::CoefficientSchedule<f64>;
pub type RandeletteField<S = randelette::ThetaSample> = randelette::RandeletteField<f64, S>;
pub type InteractionSpec = lattice::InteractionSpec<f64>;
pub type HamiltonianMatrix = lattice::HamiltonianMatrix<f64>;
pub type Spectrum = spectral::Spectrum<f64>;

pub use lattice::{Site, SitePair, TwoParticleCube};
pub use randelette::ThetaSample;
pub use stats::ConcentrationEstimate;
pub use torus::{DyadicCubeIndex, LatticeCube};
pub use wegner::{Mode, WegnerExperimentConfig};
