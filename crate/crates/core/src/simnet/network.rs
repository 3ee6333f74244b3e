//! Authenticated point-to-point channels.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::coordinator::KeyRing;
use crate::field::Modulus;
use crate::protocol::wire::WireError;
use crate::protocol::{
    mac_tag, mac_verify, AuthenticationError, MacKey, Message, MessageKind, Party, SequenceWindow,
    Tag, TAG_LEN,
};

/// kind (1) + from (4) + to (4) + seq (8) + round (4) + body length (4) + tag (16).
pub const HEADER_LEN: usize = 1 + 4 + 4 + 8 + 4 + 4 + TAG_LEN;

/// A message as it travels on a channel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub kind: MessageKind,
    pub from: Party,
    pub to: Party,
    pub seq: u64,
    pub round: u32,
    pub body: Vec<u8>,
    pub tag: Tag,
}

impl Frame {
    /// Bytes covered by the tag besides sender and sequence number.
    fn authenticated(kind: MessageKind, to: Party, round: u32, body: &[u8]) -> Vec<u8> {
        let mut m = Vec::with_capacity(9 + body.len());
        m.push(kind.to_byte());
        m.extend_from_slice(&to.wire_id().to_le_bytes());
        m.extend_from_slice(&round.to_le_bytes());
        m.extend_from_slice(body);
        m
    }

    pub fn seal(
        key: &MacKey,
        from: Party,
        to: Party,
        seq: u64,
        round: u32,
        msg: &Message,
    ) -> Frame {
        Frame::seal_body(key, from, to, seq, round, msg.kind(), msg.encode_body())
    }

    /// Seals an already encoded body.
    pub fn seal_body(
        key: &MacKey,
        from: Party,
        to: Party,
        seq: u64,
        round: u32,
        kind: MessageKind,
        body: Vec<u8>,
    ) -> Frame {
        let tag = mac_tag(
            key,
            from.wire_id(),
            seq,
            &Frame::authenticated(kind, to, round, &body),
        );
        Frame {
            kind,
            from,
            to,
            seq,
            round,
            body,
            tag,
        }
    }

    pub fn verify(&self, key: &MacKey) -> Result<(), AuthenticationError> {
        let m = Frame::authenticated(self.kind, self.to, self.round, &self.body);
        mac_verify(key, self.from.wire_id(), self.seq, &m, &self.tag)
    }

    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.body.len()
    }

    /// Flips one bit of the body, as a faulty link would.
    pub fn corrupt(&mut self, salt: u64) {
        if self.body.is_empty() {
            self.tag[0] ^= 1;
        } else {
            let i = (salt % self.body.len() as u64) as usize;
            self.body[i] ^= 1 << (salt % 8);
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeliveryError {
    #[error("no channel between {0} and {1}")]
    NoChannel(Party, Party),
    #[error(transparent)]
    Auth(#[from] AuthenticationError),
    #[error("authentic frame failed to decode: {0}")]
    Malformed(#[from] WireError),
}

/// Routes frames between parties, checking tags and sequence numbers on
/// receipt. Frames that fail either check never reach protocol logic.
#[derive(Debug)]
pub struct Network {
    keyring: KeyRing,
    modulus: Modulus,
    next_seq: BTreeMap<Party, u64>,
    windows: BTreeMap<Party, SequenceWindow>,
    bytes_sent: u64,
    frames_sent: u64,
}

impl Network {
    pub fn new(keyring: KeyRing, modulus: Modulus) -> Self {
        Network {
            keyring,
            modulus,
            next_seq: BTreeMap::new(),
            windows: BTreeMap::new(),
            bytes_sent: 0,
            frames_sent: 0,
        }
    }

    pub fn key(&self, a: Party, b: Party) -> Option<&MacKey> {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let idx = |i: u32| (i as usize).checked_sub(1);
        match (lo, hi) {
            (Party::Coordinator, Party::Client(i)) => {
                idx(i).and_then(|i| self.keyring.coordinator.get(i))
            }
            (Party::Client(i), Party::Board) => idx(i).and_then(|i| self.keyring.board.get(i)),
            (Party::Client(i), Party::Client(j)) if j == i + 1 => {
                idx(i).and_then(|i| self.keyring.links.get(i))
            }
            _ => None,
        }
    }

    /// Tags `msg` with the next sequence number of `from`.
    pub fn seal(
        &mut self,
        from: Party,
        to: Party,
        round: u32,
        msg: &Message,
    ) -> Result<Frame, DeliveryError> {
        self.seal_body(from, to, round, msg.kind(), msg.encode_body())
    }

    pub fn seal_body(
        &mut self,
        from: Party,
        to: Party,
        round: u32,
        kind: MessageKind,
        body: Vec<u8>,
    ) -> Result<Frame, DeliveryError> {
        let key = self
            .key(from, to)
            .ok_or(DeliveryError::NoChannel(from, to))?
            .clone();
        let seq = self.next_seq.entry(from).or_insert(0);
        *seq += 1;
        let frame = Frame::seal_body(&key, from, to, *seq, round, kind, body);
        self.bytes_sent += frame.wire_len() as u64;
        self.frames_sent += 1;
        Ok(frame)
    }

    /// Verifies and decodes a frame at its recipient.
    pub fn deliver(&mut self, frame: &Frame) -> Result<Message, DeliveryError> {
        let key = self
            .key(frame.from, frame.to)
            .ok_or(DeliveryError::NoChannel(frame.from, frame.to))?;
        frame.verify(key)?;
        let window = self.windows.entry(frame.to).or_default();
        window.check(frame.from.wire_id(), frame.seq)?;
        let msg = Message::decode_body(frame.kind, &frame.body, self.modulus)?;
        window.accept(frame.from.wire_id(), frame.seq)?;
        Ok(msg)
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    pub fn frames_sent(&self) -> u64 {
        self.frames_sent
    }
}
