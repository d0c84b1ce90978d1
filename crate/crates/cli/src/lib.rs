//! Operator commands for the federated learning toolkit.

pub mod config;
pub mod run;
