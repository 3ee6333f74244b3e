//! Types shared by the coordinator, clients and verifiers: op codes, keys,
//! checksums, setup packets, chain state, messages and their encodings.

mod checksum;
mod mac;
mod message;
mod opcode;
mod types;
pub mod wire;

use thiserror::Error;
use uuid::Uuid;

pub use checksum::{
    commit, data_checksum, sha3, step_digest, step_digest_with, verify_commitment, DataChecksum,
    Digest, HashMode, Salt, SALT_LEN,
};
pub use mac::{
    mac_tag, mac_verify, AuthenticationError, MacKey, SequenceWindow, Tag, MAC_KEY_LEN, TAG_LEN,
};
pub use message::{AbortNotice, AbortReason, DigestEvidence, Message, MessageKind};
pub use opcode::OpCode;
pub use types::{
    BroadcastPacket, CciMatrix, CciRecord, ChainState, ChannelKeys, ClientEnvelope, ConsensusKey,
    ObfuscationKey, Party, PriorityMap, ProtocolParams, StepChecksum,
};

use crate::field::FieldError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("obfuscation scalar must be nonzero")]
    ZeroLambda,
    #[error("key bound to {0} contains a zero element")]
    ZeroKeyElement(OpCode),
    #[error("duplicate client uuid {0}")]
    DuplicateUuid(Uuid),
    #[error("payload of client {0} differs in length or modulus")]
    PayloadShape(Uuid),
    #[error("client contribution index is empty")]
    EmptyCci,
    #[error("priorities do not form a permutation of 1..=N")]
    NotAPermutation,
    #[error("envelope {0}: obfuscated vector does not match payload and keys")]
    EnvelopeMismatch(u32),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}
