//! Anonymous authentication for mesh clients.
//!
//! A client proves membership of a set of users (a ring) to an authentication server
//! without revealing which member it is, and both sides end up with a shared session key.
//! Each ring member has its own discrete-log group; the ring signature closes a keyed
//! combining chain over trapdoor-function outputs, only one of which needed the
//! corresponding private key.

pub mod combine;
pub mod error;
pub mod group;
pub mod hash;
pub mod protocol;
pub mod trapdoor;
pub mod wire;

pub use error::AuthError;
pub use group::{GroupParams, SecurityProfile};
pub use protocol::{
    client_confirm_round3, server_verify_round2, sign_round1, ClientSession, RingSignature,
    ServerKeyMaterial, ServerPublic, ServerResponse, ServerSession, SessionKey,
    DEFAULT_BLOCK_BITS,
};
pub use trapdoor::{
    invert_with_nonce, keygen_user, trapdoor_forward, trapdoor_invert, UserKeyMaterial,
    UserPublicKey,
};
pub use wire::{decode_signature, encode_signature};
