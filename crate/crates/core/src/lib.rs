//! Quantum-limited optical phase tracking and linear-Gaussian estimation.
//!
//! The crate simulates continuous-time linear-Gaussian messages carried on
//! the phase of an optical field, tracks them with homodyne phase-locked
//! loops, and evaluates the full estimation stack around them:
//!
//! - [`model`] / [`sim`]: state-space models (Ornstein-Uhlenbeck and
//!   Wiener-process phases, the radiation-pressure-driven oscillator) and
//!   seeded Euler-Maruyama trajectory generation;
//! - [`kalman`]: the Kalman-Bucy filter, its variance (Riccati) equation,
//!   steady states, and the analytic scalar solutions;
//! - [`smooth`]: fixed-interval smoothing via Bryson-Frazier and the
//!   two-filter (forward/backward information) combination;
//! - [`spectral`]: Wiener filtering in the frequency domain: spectral
//!   factorization, loop-filter synthesis, mean-square-error quadratures,
//!   and the anticausal post-loop smoothing filter;
//! - [`pll`]: closed-loop homodyne phase-locked loop simulation with
//!   nonlinear, linearized and canonical (sawtooth) discriminators, Monte
//!   Carlo aggregation and cycle-slip detection;
//! - [`oscillator`]: position/momentum estimation of a probed mechanical
//!   oscillator, including the smoothing uncertainty product that drops
//!   below the filtering bound.

pub mod error;
pub mod kalman;
pub mod linalg;
pub mod model;
pub mod oscillator;
pub mod sim;
pub mod smooth;
pub mod pll;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{LinearModel, PhysicalParams, TimeGrid};
