//! Discrete-event engine, topology, and medium.

pub mod engine;
pub mod medium;
pub mod topology;

pub use engine::{Engine, SimEvent, SimTime};
pub use medium::{
    DeliveryOutcome, LossCause, LossModel, Medium, MediumCounters, MediumModel, PhyTimings,
};
pub use topology::{build_topology, NodeId, NodeRecord, Position, Role, Topology, TopologyConfig};
