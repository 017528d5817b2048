//! Reduction chain from 3-SAT through Quadratic Congruences and the
//! Multiple-Residue problem to 2-stage stochastic integer programs.
//!
//! Every layer carries a witness map and a verifier, so a satisfying
//! assignment can be pushed through the whole chain and checked at each
//! step. Small instances can also be solved by independent brute-force
//! oracles.

pub mod formats;
pub mod ilp;
pub mod mrd;
pub mod numtheory;
pub mod pipeline;
pub mod qc;
pub mod sat;
