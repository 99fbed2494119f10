//! Trajectory tracking for an underactuated surface vessel with a
//! barrier-function safety filter.
//!
//! A backstepping controller written in polar coordinates produces a nominal
//! input `tau_ref`. It has singular points: where the course is perpendicular
//! to the line of sight, and where surge speed reaches zero. A small quadratic
//! program finds the least correction `X` that keeps the closed loop away
//! from both, and the vessel is driven with `tau_ref + X`.
//!
//! Modules, bottom up:
//!
//! * [`vessel`]: plant model and RK4 integrator
//! * [`transforms`]: polar coordinates, their rates, jerk filter
//! * [`controller`]: reference controller and Lyapunov monitor
//! * [`cbf`]: barrier constraint rows
//! * [`qp`]: closed-form two-variable QP
//! * [`harness`]: reference trajectory, closed-loop simulation, events

pub mod cbf;
pub mod controller;
pub mod error;
pub mod harness;
pub mod qp;
pub mod transforms;
pub mod vessel;

pub use cbf::{Branch, CbfParams, ConstraintSet};
pub use controller::{ErrorState, Gains, ReferencePoint};
pub use error::{Error, Result, SingularPoint};
pub use harness::{Mode, Outcome, ScenarioConfig, SimLog, SimRecord, TrajectorySpec};
pub use qp::{HalfPlane, QpSolution, QpStatus};
pub use transforms::{FilterState, PolarBundle};
pub use vessel::{ControlInput, StateDerivative, VesselParams, VesselState};
