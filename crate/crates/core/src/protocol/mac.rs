//! Keyed-hash message authentication for channel traffic.
//!
//! `tag = SHA3-256(key || sender_id || seq || message)[..16]`. SHA3 is not
//! subject to length extension, so the plain prefix-keyed construction is a
//! sound MAC.

use std::collections::BTreeMap;
use std::fmt;

use sha3::{Digest as _, Sha3_256};
use thiserror::Error;
use zeroize::{Zeroize, ZeroizeOnDrop};

pub const MAC_KEY_LEN: usize = 32;
pub const TAG_LEN: usize = 16;

pub type Tag = [u8; TAG_LEN];

#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct MacKey([u8; MAC_KEY_LEN]);

impl MacKey {
    pub fn from_bytes(bytes: [u8; MAC_KEY_LEN]) -> Self {
        MacKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; MAC_KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for MacKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MacKey(..)")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuthenticationError {
    #[error("tag mismatch for message from sender {sender} seq {seq}")]
    BadTag { sender: u32, seq: u64 },
    #[error("stale sequence number {seq} from sender {sender} (last accepted {last})")]
    Replay { sender: u32, seq: u64, last: u64 },
}

pub fn mac_tag(key: &MacKey, sender: u32, seq: u64, message: &[u8]) -> Tag {
    let mut h = Sha3_256::new();
    h.update(key.0);
    h.update(sender.to_le_bytes());
    h.update(seq.to_le_bytes());
    h.update(message);
    let full: [u8; 32] = h.finalize().into();
    full[..TAG_LEN].try_into().expect("tag length")
}

pub fn mac_verify(
    key: &MacKey,
    sender: u32,
    seq: u64,
    message: &[u8],
    tag: &Tag,
) -> Result<(), AuthenticationError> {
    let expect = mac_tag(key, sender, seq, message);
    let diff = expect
        .iter()
        .zip(tag)
        .fold(0u8, |acc, (a, b)| acc | (a ^ b));
    if diff == 0 {
        Ok(())
    } else {
        Err(AuthenticationError::BadTag { sender, seq })
    }
}

/// Per-sender monotone sequence check. A message is accepted only if its
/// sequence number is strictly greater than the last accepted one.
#[derive(Clone, Debug, Default)]
pub struct SequenceWindow {
    last: BTreeMap<u32, u64>,
}

impl SequenceWindow {
    pub fn new() -> Self {
        SequenceWindow::default()
    }

    pub fn check(&self, sender: u32, seq: u64) -> Result<(), AuthenticationError> {
        match self.last.get(&sender) {
            Some(&last) if seq <= last => Err(AuthenticationError::Replay { sender, seq, last }),
            _ => Ok(()),
        }
    }

    pub fn accept(&mut self, sender: u32, seq: u64) -> Result<(), AuthenticationError> {
        self.check(sender, seq)?;
        self.last.insert(sender, seq);
        Ok(())
    }
}
