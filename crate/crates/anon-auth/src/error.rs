use thiserror::Error;

/// Failures raised by key generation and the three-round exchange.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuthError {
    #[error("parameter generation failed after {attempts} attempts")]
    ParameterGeneration { attempts: usize },

    #[error("invalid group parameters: {0}")]
    InvalidGroup(&'static str),

    #[error("trapdoor input out of range: {0}")]
    TrapdoorRange(&'static str),

    #[error("value is not an element of the order-q subgroup")]
    NotInSubgroup,

    #[error("combining input length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("combining block width must be a positive even number of bits, got {0}")]
    BlockWidth(usize),

    #[error("value does not fit in the {0}-bit combining domain")]
    DomainOverflow(usize),

    #[error("signer index {index} is outside a ring of {ring_size}")]
    SignerNotInRing { index: usize, ring_size: usize },

    #[error("ring must contain at least one member")]
    EmptyRing,

    #[error("malformed signature: {0}")]
    Malformed(&'static str),

    #[error("ring equation does not close; signature rejected")]
    RingEquationMismatch,

    #[error("server confirmation hash mismatch")]
    ConfirmationMismatch,
}
