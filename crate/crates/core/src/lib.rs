//! Estimation, control and sensor scheduling for a scalar plant closed over
//! a bandwidth-limited channel with a fixed transmission delay.
//!
//! A controller applies `u = L·x̂` where `x̂` comes from a Kalman-type
//! estimator fed by delayed, noisy observations. One sensor per slot may
//! transmit; the schedulers decide which. [`analytics`] gives the exact
//! mean-square estimation error for any realised age/noise history, which the
//! planning schedulers minimise over a sliding window.

pub mod analytics;
pub mod config;
pub mod estimator;
pub mod harness;
pub mod history;
pub mod lqg;
pub mod plant;
pub mod scheduler;
pub mod traffic;

pub use config::{PolicyKind, ScenarioConfig, SensorSpec, SystemParams};
