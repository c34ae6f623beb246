//! Experiment runner for the phaselock estimation library: flat key = value
//! configs, dispatch onto the core estimators/simulators, and CSV tables
//! with analytic-vs-empirical summaries.

pub mod config;
pub mod experiments;
pub mod table;
