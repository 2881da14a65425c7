//! Simulation library for a circuit-QED double NOON state protocol.
//!
//! Two flux qutrits, each dispersively coupled to a pair of detuned cavity
//! modes, are driven through an N+2-step pulse/interaction schedule that
//! leaves the four cavities in (|NN00> + |00NN>)/sqrt(2). This crate builds
//! the Hamiltonians, compiles the schedule, propagates states with unitary,
//! dense-Lindblad, or Monte-Carlo wave-function engines, and models the
//! four-mode interferometer used for phase readout.
//!
//! Module map:
//! - [`hilbert`]: truncated Fock spaces, sparse operators, states.
//! - [`device`]: physical parameters, derived quantities, collapse channels.
//! - [`hamiltonian`]: interaction/pulse/Bell/crosstalk Hamiltonian builders.
//! - [`analytic`]: closed-form effective dynamics and the ideal state ladder.
//! - [`schedule`]: protocol timeline compilation and the timing budget.
//! - [`solver`]: propagation engines and the fidelity functional.
//! - [`interferometer`]: beam-splitter network and phase-error analysis.
//! - [`sweep`]: parameter sweeps with deterministic CSV/report emission.

pub mod analytic;
pub mod device;
pub mod error;
pub mod hamiltonian;
pub mod hilbert;
pub mod interferometer;
pub mod schedule;
pub mod smallmat;
pub mod solver;
pub mod sweep;

pub use error::{Result, SimError};
