//! Protocol messages and their binary bodies.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::checksum::{Digest, Salt};
use super::types::{BroadcastPacket, ClientEnvelope, Party};
use super::wire::{Reader, WireError, Writer};
use crate::field::{FieldVector, Modulus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    SetupEnvelope,
    Packet,
    RelayState,
    RetryRequest,
    Abort,
    Release,
    Opening,
}

impl MessageKind {
    pub fn to_byte(self) -> u8 {
        self as u8
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        use MessageKind::*;
        [
            SetupEnvelope,
            Packet,
            RelayState,
            RetryRequest,
            Abort,
            Release,
            Opening,
        ]
        .get(b as usize)
        .copied()
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MessageKind::SetupEnvelope => "SETUP_ENVELOPE",
            MessageKind::Packet => "PACKET",
            MessageKind::RelayState => "RELAY_STATE",
            MessageKind::RetryRequest => "RETRY_REQUEST",
            MessageKind::Abort => "ABORT",
            MessageKind::Release => "RELEASE",
            MessageKind::Opening => "OPENING",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    ChecksumMismatch,
    AuthFailure,
    Timeout,
    DataChecksumFailure,
    /// An opening did not match its setup commitment.
    CommitmentMismatch,
}

impl AbortReason {
    fn to_byte(self) -> u8 {
        self as u8
    }

    fn from_byte(b: u8) -> Option<Self> {
        use AbortReason::*;
        [
            ChecksumMismatch,
            AuthFailure,
            Timeout,
            DataChecksumFailure,
            CommitmentMismatch,
        ]
        .get(b as usize)
        .copied()
    }
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AbortReason::ChecksumMismatch => "checksum_mismatch",
            AbortReason::AuthFailure => "auth_failure",
            AbortReason::Timeout => "timeout",
            AbortReason::DataChecksumFailure => "data_checksum_failure",
            AbortReason::CommitmentMismatch => "commitment_mismatch",
        };
        f.write_str(s)
    }
}

/// Expected and recomputed digests backing an abort.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestEvidence {
    #[serde(with = "hex_digest")]
    pub expected: Digest,
    #[serde(with = "hex_digest")]
    pub recomputed: Digest,
}

/// Posted to the bulletin board to halt the protocol.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortNotice {
    pub issuer: Party,
    /// Chain position (or client priority, for opening failures) the check
    /// failed at.
    pub failed_step: u32,
    pub reason: AbortReason,
    pub evidence: Option<DigestEvidence>,
}

impl AbortNotice {
    fn write(&self, w: &mut Writer) {
        w.u32(self.issuer.wire_id())
            .u32(self.failed_step)
            .u8(self.reason.to_byte());
        match &self.evidence {
            Some(e) => w.u8(1).bytes(&e.expected).bytes(&e.recomputed),
            None => w.u8(0),
        };
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let issuer = Party::from_wire_id(r.u32("issuer")?);
        let failed_step = r.u32("failed step")?;
        let b = r.u8("reason")?;
        let reason = AbortReason::from_byte(b).ok_or_else(|| WireError::invalid("reason", b))?;
        let evidence = if r.bool("evidence flag")? {
            Some(DigestEvidence {
                expected: r.array("expected digest")?,
                recomputed: r.array("recomputed digest")?,
            })
        } else {
            None
        };
        Ok(AbortNotice {
            issuer,
            failed_step,
            reason,
            evidence,
        })
    }
}

/// Message bodies exchanged over authenticated channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    SetupEnvelope(Box<ClientEnvelope>),
    Packet(Box<BroadcastPacket>),
    RelayState {
        position: u32,
        state: FieldVector,
    },
    RetryRequest {
        position: u32,
    },
    Abort(AbortNotice),
    Release {
        state: FieldVector,
    },
    Opening {
        priority: u32,
        obfuscated: FieldVector,
        salt: Salt,
    },
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::SetupEnvelope(_) => MessageKind::SetupEnvelope,
            Message::Packet(_) => MessageKind::Packet,
            Message::RelayState { .. } => MessageKind::RelayState,
            Message::RetryRequest { .. } => MessageKind::RetryRequest,
            Message::Abort(_) => MessageKind::Abort,
            Message::Release { .. } => MessageKind::Release,
            Message::Opening { .. } => MessageKind::Opening,
        }
    }

    /// Body bytes, excluding the kind byte carried in the frame header.
    pub fn encode_body(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Message::SetupEnvelope(env) => {
                w.bytes(&env.to_bytes());
            }
            Message::Packet(p) => {
                w.bytes(&p.to_bytes());
            }
            Message::RelayState { position, state } => {
                w.u32(*position).vector(state);
            }
            Message::RetryRequest { position } => {
                w.u32(*position);
            }
            Message::Abort(notice) => notice.write(&mut w),
            Message::Release { state } => {
                w.vector(state);
            }
            Message::Opening {
                priority,
                obfuscated,
                salt,
            } => {
                w.u32(*priority).vector(obfuscated).bytes(salt);
            }
        }
        w.finish()
    }

    pub fn decode_body(
        kind: MessageKind,
        body: &[u8],
        modulus: Modulus,
    ) -> Result<Message, WireError> {
        let mut r = Reader::new(body);
        let msg = match kind {
            MessageKind::SetupEnvelope => {
                return Ok(Message::SetupEnvelope(Box::new(
                    ClientEnvelope::from_bytes(body)?,
                )));
            }
            MessageKind::Packet => {
                return Ok(Message::Packet(Box::new(BroadcastPacket::from_bytes(
                    body,
                )?)))
            }
            MessageKind::RelayState => Message::RelayState {
                position: r.u32("position")?,
                state: r.vector(modulus)?,
            },
            MessageKind::RetryRequest => Message::RetryRequest {
                position: r.u32("position")?,
            },
            MessageKind::Abort => Message::Abort(AbortNotice::read(&mut r)?),
            MessageKind::Release => Message::Release {
                state: r.vector(modulus)?,
            },
            MessageKind::Opening => Message::Opening {
                priority: r.u32("priority")?,
                obfuscated: r.vector(modulus)?,
                salt: r.array("salt")?,
            },
        };
        r.finish()?;
        Ok(msg)
    }
}

mod hex_digest {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        let hex: String = d.iter().map(|b| format!("{b:02x}")).collect();
        s.serialize_str(&hex)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 64 {
            return Err(serde::de::Error::custom("digest must be 64 hex characters"));
        }
        let mut out = [0u8; 32];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot =
                u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(serde::de::Error::custom)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relay_body_size_is_four_plus_eight_d() {
        let m = Modulus::MERSENNE_61;
        for d in [1usize, 8, 784] {
            let msg = Message::RelayState {
                position: 3,
                state: FieldVector::zeros(m, d).unwrap(),
            };
            // 4-byte position + 4-byte count + 8 bytes per element.
            assert_eq!(msg.encode_body().len(), 4 + 4 + 8 * d);
        }
    }

    #[test]
    fn bodies_roundtrip() {
        let m = Modulus::new(97).unwrap();
        let v = FieldVector::new(m, vec![1, 2, 3]).unwrap();
        let msgs = [
            Message::RelayState {
                position: 2,
                state: v.clone(),
            },
            Message::RetryRequest { position: 2 },
            Message::Release { state: v.clone() },
            Message::Opening {
                priority: 4,
                obfuscated: v,
                salt: [9; 16],
            },
            Message::Abort(AbortNotice {
                issuer: Party::Client(3),
                failed_step: 3,
                reason: AbortReason::ChecksumMismatch,
                evidence: Some(DigestEvidence {
                    expected: [1; 32],
                    recomputed: [2; 32],
                }),
            }),
            Message::Abort(AbortNotice {
                issuer: Party::Board,
                failed_step: 0,
                reason: AbortReason::Timeout,
                evidence: None,
            }),
        ];
        for msg in msgs {
            let back = Message::decode_body(msg.kind(), &msg.encode_body(), m).unwrap();
            assert_eq!(back, msg);
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let m = Modulus::new(97).unwrap();
        let mut body = Message::RetryRequest { position: 1 }.encode_body();
        body.push(0);
        assert!(Message::decode_body(MessageKind::RetryRequest, &body, m).is_err());
    }

    #[test]
    fn evidence_serializes_as_hex() {
        let e = DigestEvidence {
            expected: [0xab; 32],
            recomputed: [0; 32],
        };
        let json = serde_json::to_string(&e).unwrap();
        assert!(json.contains(&"ab".repeat(32)));
        let back: DigestEvidence = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
    }
}
