//! Reservoir domain model, state-space assembly (`V ẋ = T x + B u`) and the
//! implicit finite-volume reference simulator.
//!
//! Everything inside this crate works in SI units. Field units (psi, days,
//! millidarcy, centipoise) are accepted only at the configuration boundary,
//! see [`units`] and [`config`].

pub mod config;
pub mod error;
pub mod fv;
pub mod model;
pub mod parr;
pub mod report;
pub mod schedule;
pub mod sparse;
pub mod statespace;
pub mod trajectory;
pub mod units;

pub use error::{Error, Result};
pub use fv::{simulate, solve_spd, step, well_rates, SolveStats, SolverConfig, SolverMethod};
pub use model::{ControlKind, Grid, ReservoirModel, RockFluid, Violation, WellSpec};
pub use schedule::ControlSchedule;
pub use sparse::CsrMatrix;
pub use statespace::{face_transmissibility, peaceman_pi, FaceAxis, StateSpaceSystem};
pub use trajectory::{Provenance, Trajectory};
pub use units::{to_si, from_si, Unit};
