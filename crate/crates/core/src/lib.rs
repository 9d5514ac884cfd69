//! Monitored, noisy, symmetric random circuits.
//!
//! Generates measurement records of brickwork circuits with a strong
//! U(1)⋊Z2 (or U(1)) symmetry, infers the hidden charge with an optimal
//! pure-state decoder and a noisy tensor-network decoder, and measures the
//! Rényi-2 fidelity correlator of the dephased dynamics.

pub mod circuit;
pub mod cli;
pub mod decoders;
pub mod density;
pub mod error;
pub mod mps;
pub mod oracle;
pub mod rng;
pub mod runner;
pub mod statevector;
pub mod stats;
pub mod swssb;
pub mod symmetry;
pub mod u1;

pub use error::{Error, Result};
