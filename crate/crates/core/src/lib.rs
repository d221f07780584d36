//! Risk-controlled hedging of lattice-driven contingent claims.
//!
//! The crate builds recombining binomial event trees ([`lattice`]), defines
//! the products and hedging assets on them ([`market`]), solves node-level
//! linear programs with an in-crate simplex and exact parametric analysis
//! ([`simplex`]), runs backward dynamic programming for several risk-control
//! strategies ([`hedging`]) and validates strategies by Monte Carlo replay
//! ([`backtest`]).

pub mod simplex;
pub mod lattice;
pub mod market;
pub mod hedging;
pub mod backtest;
