//! Simulator and policy laboratory for dynamic function splitting in a
//! solar-powered disaggregated RAN: one CU and several DUs, each with a
//! panel and a battery, paying for on-grid energy under a time-of-use tariff.
//!
//! The crate provides the energy and cost model ([`domain`]), traffic and
//! solar inputs ([`traffic`], [`solar`]), the hourly environment ([`env`]),
//! tabular Q-learning and SARSA agents ([`agents`]), static baselines
//! ([`policy`]), an exact small-instance optimum ([`oracle`]) and the
//! experiment driver behind the CLI ([`scenario`], [`harness`]).

pub mod agents;
pub mod domain;
pub mod env;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod scenario;
pub mod solar;
pub mod stats;
pub mod traffic;

pub use error::{Error, ErrorCategory, Result};
