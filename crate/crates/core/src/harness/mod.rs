//! Scenario configuration, closed-loop simulation, traces and metrics.

pub mod analyze;
pub mod config;
pub mod metrics;
pub mod operator;
pub mod sim;
pub mod trace;
