//! Discrete-time simulation and dispatch learning for a fleet that carries
//! pooled passengers and multi-hop goods.
//!
//! The crate is organised bottom-up:
//!
//! - [`geo`]: zone lattice, lattice routing and hop-zone designation
//! - [`demand`]: request generation, trip-record ingestion and forecasting
//! - [`fleet`]: vehicle lifecycle and capacity accounting
//! - [`hopplan`]: recursive hop-trip planning for goods
//! - [`matching`]: greedy request-to-vehicle assignment
//! - [`reward`]: global objective components and per-agent reward
//! - [`dispatch`]: state encoding and double deep Q-learning
//! - [`engine`]: the per-tick simulation loop and event log
//! - [`metrics`]: evaluation metrics computed from episode logs
//! - [`config`] and [`experiment`]: experiment configuration and runners

pub mod config;
pub mod demand;
pub mod dispatch;
pub mod engine;
pub mod experiment;
pub mod fleet;
pub mod geo;
pub mod hopplan;
pub mod matching;
pub mod metrics;
pub mod reward;

pub use geo::{EtaModel, GridWorld, TravelEstimate, ZoneId};
