//! Numerical laboratory for damped second-order evolution equations
//! `w'' + A w + B B* w' = 0`, instantiated on the 1D Dirichlet wave
//! equation in a spectral (eigenfunction) basis.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the
//! `*F64` aliases below fix the scalar to double precision, which is what
//! every tolerance in the test suites is calibrated for.

// `!(x > 0)` is how NaN gets rejected along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod decay;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod lemma;
pub mod linalg;
pub mod nonlinear;
pub mod observability;
pub mod quadrature;
pub mod rate;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SpectralOperatorF64 = spectral::SpectralOperator<f64>;
pub type DampingMapF64 = spectral::DampingMap<f64>;
pub type DampingProfileF64 = spectral::DampingProfile<f64>;
pub type StatePairF64 = spectral::StatePair<f64>;
pub type GraphNormsF64 = spectral::GraphNorms<f64>;
pub type EnergyTraceF64 = dynamics::EnergyTrace<f64>;
pub type TrajectoryF64 = dynamics::Trajectory<f64>;
pub type RateFunctionF64 = rate::RateFunction<f64>;
pub type GramianF64 = observability::Gramian<f64>;
pub type SampledHF64 = lemma::SampledH<f64>;
pub type NonlinearDampingF64 = nonlinear::NonlinearDamping<f64>;

pub type SpectralOperatorF32 = spectral::SpectralOperator<f32>;
pub type StatePairF32 = spectral::StatePair<f32>;
pub type RateFunctionF32 = rate::RateFunction<f32>;
