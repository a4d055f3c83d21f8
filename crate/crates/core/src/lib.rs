//! Simulation and verification toolkit for the discrete nonlinear Schrödinger
//! equation on periodic boxes of `Z^d`.

pub mod cli;
pub mod convergence;
pub mod dynamics;
pub mod hopping;
pub mod lattice;
pub mod observables;
pub mod sampling;
