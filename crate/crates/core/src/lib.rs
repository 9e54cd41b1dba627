//! Brownian ratchets on the unit circle: potentials, closed-form tilting
//! results and numerical Fokker–Planck solvers for one- and two-state models.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_form;
pub mod error;
pub mod grid;
pub mod inequality;
pub mod linalg;
pub mod multistate;
pub mod potentials;
pub mod quadrature;
pub mod regimes;
pub mod small_diffusion;
pub mod solver;
pub mod spline;

pub use closed_form::{ClosedFormCoeffs, Sign, VelocityReport};
pub use error::{RatchetError, Result};
pub use grid::GridFunction;
pub use multistate::{MultiStateDensity, MultiStateSystem, RateField, SignCase, TransportSign};
pub use potentials::{BasePotential, ForceField, ForceProtocol, ForceSegment, TiltProtocol, TiltSegment};
pub use solver::{PeriodicOrbit, SolverConfig};
