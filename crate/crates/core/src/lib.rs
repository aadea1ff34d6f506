//! Simulation and numerical-verification toolkit for mean-field interacting
//! nonlinear Hawkes processes.
//!
//! The crate simulates finite networks of self-exciting units, solves the
//! deterministic large-population limit, builds the Volterra resolvent
//! machinery behind the Gaussian fluctuation limit, samples those limit
//! processes, constructs the second-order Cox approximation, and ships a
//! statistical harness that verifies the law-of-large-numbers and
//! central-limit behaviour at desk scale.

pub mod cox;
pub mod error;
pub mod events;
pub mod fluct;
pub mod grid;
pub mod limit;
pub mod model;
pub mod output;
pub mod seed;
pub mod sim;
pub mod stats;
pub mod volterra;

pub use error::{Error, Result};
