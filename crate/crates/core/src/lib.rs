//! Synthesis, optimization and resource estimation of Hamiltonian-simulation circuits
//! for the periodic random-field Heisenberg chain.

pub mod circuit;
pub mod cli;
pub mod gadgets;
pub mod model;
pub mod optim;
pub mod pf;
pub mod qsp;
pub mod selectv;
pub mod sim;
pub mod ts;
