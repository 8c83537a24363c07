use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("causality violation: event at {requested} scheduled with clock at {clock}")]
    CausalityViolation { requested: f64, clock: f64 },

    #[error("disconnected topology: {0}")]
    DisconnectedTopology(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("path must contain at least one link")]
    EmptyPath,

    #[error("probe failure: no probe reached the destination")]
    ProbeFailure,

    #[error("source and destination must differ")]
    SameEndpoints,

    #[error("unknown sweep axis `{0}` (expected one of n_sources, data_rate, n_flows, selfish_fraction)")]
    UnknownAxis(String),

    #[error("unknown protocol variant `{0}` (expected one of proposed, no-mpr, no-circular, flood-baseline)")]
    UnknownVariant(String),
}
