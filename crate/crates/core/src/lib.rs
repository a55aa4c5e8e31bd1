//! Linear bosonic network solver and closed-form noise analytics for
//! amplifiers with a phase-sensitive coherent-feedback loop.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! function of its inputs; file formats, the netlist language and the
//! command-line front end live in the `cfamp` companion crate.
//!
//! Conventions used throughout:
//!
//! * quadrature `X = a + a†`, so a vacuum mode has `⟨ΔX²⟩ = 1`;
//! * `G` is the amplitude gain of the amplifier, `g = √(G² − 1)`;
//! * `T` is the transmissivity of the output tap, `L` the power loss in the
//!   feedback path and `φ` the feedback phase.
#![no_std]

extern crate alloc;

pub mod analytics;
pub mod bogoliubov;
mod error;
pub mod experiments;
mod linalg;
pub mod network;
pub mod oracles;

pub use error::{Error, NetworkIssue, Result};
pub use num_complex::Complex64;

/// Singularity tolerance on the loop denominator magnitude.
pub const EPS_OSC: f64 = 1e-9;
