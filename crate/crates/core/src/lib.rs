//! Exact stochastic simulation and analysis of SIR/SEIR epidemics spreading
//! in a supercritical linear birth-death population.
//!
//! * [`model`]: parameters, state and the event table
//! * [`theory`]: reproduction numbers, Malthusian parameters, extinction
//!   probabilities, equilibria, scenario classification
//! * [`ssa`]: exact event-driven simulation, including the sandwich coupling
//! * [`ode`]: the deterministic fluid limit of the proportion process
//! * [`ensemble`]: reproducible Monte Carlo ensembles (parallel with the
//!   `parallel` feature)
//! * [`io`]: run specifications and CSV/JSON output

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod error;
pub mod io;
pub mod model;
pub mod ode;
pub mod rng;
pub mod ssa;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
pub use model::{EventKind, ModelParams, PopulationState, Variant};
pub use ode::{OdeSolution, ScaledState};
pub use ssa::{SimConfig, Terminal, Trajectory};
pub use theory::{Scenario, TheorySummary};
