//! Damping Hamiltonian dynamics with state-dependent, non-local velocity
//! collisions.
//!
//! The process moves along `x' = v, v' = -gamma v - grad U(x)` and, at rate
//! `J(x, v)`, replaces its velocity by a fresh draw from a radial density.
//! This crate simulates the single chain and a Markovian coupling of two
//! copies (synchronous flow, refined basic / reflection jump coupling), builds
//! the explicit contraction constants, and checks the analytic ingredients
//! (Lyapunov drift, overlap constants, generator identities) numerically.
//!
//! Layout:
//! - [`model`]: densities, potentials, jump rates and the coupling primitives.
//! - [`flow`]: the deterministic damped flow (closed form or RK4).
//! - [`pdmp`]: thinning-based simulation of one chain.
//! - [`coupling`]: simulation of the coupled pair.
//! - [`ergodicity`]: parameters, drift certificates, probes and contraction.

pub mod coupling;
pub mod ergodicity;
pub mod error;
pub mod flow;
pub mod linalg;
pub mod model;
pub mod pdmp;
pub mod rng;
pub mod stats;

pub use coupling::{
    coalescence_time, coupled_simulate, Branch, CoupledEvent, CoupledEventLog, CoupledState,
    JumpCoupling,
};
pub use ergodicity::{CouplingParams, DriftReport, Lyapunov};
pub use error::{Error, Result};
pub use flow::{FlowIntegrator, FlowMethod};
pub use model::{Density, DensityKind, JumpRate, ModelSpec, PhaseState, Potential};
pub use pdmp::{simulate, EventLog, JumpEvent};
pub use rng::{Stream, StreamId};
pub use stats::Estimate;
