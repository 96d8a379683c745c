//! Proportional response dynamics in Fisher markets with CES utilities.
//!
//! The crate evaluates the potential Φ whose mirror-descent structure explains
//! proportional response, runs the (damped) dynamics, computes reference
//! equilibria, and checks every convergence bound against real trajectories.

pub mod bregman;
pub mod dynamics;
pub mod eg_bridge;
pub mod equilibrium;
pub mod error;
pub mod market;
pub mod potential;
pub mod rates;

pub use error::{Error, Result};
pub use market::{Block, Buyer, Market, SpendingState, UtilityClass};
