//! Reliability-aware, QoS-probing routing for wireless mesh networks, together with the
//! discrete-event simulator used to evaluate it.

pub mod error;
pub mod experiments;
pub mod link_metrics;
pub mod mpr;
pub mod network;
pub mod qos;
pub mod routing;
pub mod sim;

pub use error::SimError;
