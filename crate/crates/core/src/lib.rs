//! Simulation laboratory for nonlinear-PI disturbance-observer (N-PI-DOB)
//! motion control of surface-mounted permanent-magnet synchronous motors.
//!
//! The crate is organised around the cascade that makes up the controller:
//!
//! - [`plant`] — continuous-time electro-mechanical SPMSM model in the
//!   stationary αβ frame plus a fixed-step RK4 integrator; the "truth" side
//!   of every simulation.
//! - [`signals`] — velocity references, load-torque profiles and inverter
//!   voltage-error models.
//! - [`outer_loop`] — torque modulation (position/velocity controller +
//!   current reference generation) and the N-PI-DOB that estimates load
//!   torque.
//! - [`inner_loop`] — per-axis N-PI disturbance observers, the
//!   Lyapunov-redesign current controller and voltage-reference synthesis.
//! - [`stability`] — numerical certificates: 2×2 Lyapunov solves, decay-rate
//!   bounds (γ*), finite-time entry bounds and Hurwitz checks.
//! - [`harness`] — the closed-loop scheduler, CSV trajectory logging,
//!   metrics, error-dynamics consistency diagnostics and comparative runs.
//! - [`config`] — loading, validation and serialization of all parameters.

pub mod config;
pub mod harness;
pub mod inner_loop;
pub mod outer_loop;
pub mod plant;
pub mod signals;
pub mod stability;

/// A state update produced a non-finite value (diverging loop or bad gains).
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("state became non-finite")]
pub struct NonFiniteState;

pub use config::{load_config, ControllerVariant, GainSet, MotorParams, Scenario, TimingConfig};
pub use harness::{run_scenario, LogRecord, RunMetrics};
pub use plant::{MotorState, PlantInputs};
pub use stability::{LoopKind, Matrix2, StabilityQuery, StabilityReport};
