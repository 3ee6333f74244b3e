//! Append-only bulletin board and release verification.

use serde::Serialize;

use crate::field::FieldVector;
use crate::metrics::{self, Phase};
use crate::protocol::{
    data_checksum, step_digest_with, verify_commitment, AbortNotice, AbortReason, BroadcastPacket,
    DataChecksum, DigestEvidence, Party, Salt,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BoardPost {
    Release {
        state: FieldVector,
    },
    Opening {
        priority: u32,
        obfuscated: FieldVector,
        salt: Salt,
    },
    Abort(AbortNotice),
    Accept,
}

impl BoardPost {
    pub fn label(&self) -> &'static str {
        match self {
            BoardPost::Release { .. } => "release",
            BoardPost::Opening { .. } => "opening",
            BoardPost::Abort(_) => "abort",
            BoardPost::Accept => "accept",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoardEntry {
    pub round: u32,
    pub author: Party,
    pub post: BoardPost,
}

/// Summary of a board entry for transcripts; never carries vectors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoardRecord {
    pub round: u32,
    pub author: Party,
    pub entry: &'static str,
}

#[derive(Clone, Debug, Default)]
pub struct BulletinBoard {
    entries: Vec<BoardEntry>,
}

impl BulletinBoard {
    pub fn new() -> Self {
        BulletinBoard::default()
    }

    /// Appends an entry and returns its index.
    pub fn post(&mut self, round: u32, author: Party, post: BoardPost) -> usize {
        self.entries.push(BoardEntry {
            round,
            author,
            post,
        });
        self.entries.len() - 1
    }

    pub fn entries(&self) -> &[BoardEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The first abort notice, if any.
    pub fn abort_notice(&self) -> Option<&AbortNotice> {
        self.entries.iter().find_map(|e| match &e.post {
            BoardPost::Abort(n) => Some(n),
            _ => None,
        })
    }

    pub fn release(&self) -> Option<&FieldVector> {
        self.entries.iter().find_map(|e| match &e.post {
            BoardPost::Release { state } => Some(state),
            _ => None,
        })
    }

    /// The first opening posted for `priority`.
    pub fn opening(&self, priority: u32) -> Option<(&FieldVector, &Salt)> {
        self.entries.iter().find_map(|e| match &e.post {
            BoardPost::Opening {
                priority: p,
                obfuscated,
                salt,
            } if *p == priority => Some((obfuscated, salt)),
            _ => None,
        })
    }
}

fn board_abort(
    failed_step: u32,
    reason: AbortReason,
    evidence: Option<DigestEvidence>,
) -> AbortNotice {
    AbortNotice {
        issuer: Party::Board,
        failed_step,
        reason,
        evidence,
    }
}

/// Checks the released state against the last step checksum, verifies every
/// opening against its commitment and requires the data checksum to be exact.
pub fn board_verify(
    board: &BulletinBoard,
    packet: &BroadcastPacket,
) -> Result<DataChecksum, AbortNotice> {
    let n = packet.params.n_clients;
    let released = board
        .release()
        .ok_or_else(|| board_abort(n, AbortReason::Timeout, None))?;

    let expected = packet
        .step_checksum(n)
        .expect("packet shape checked")
        .digest;
    let recomputed = step_digest_with(released, packet.params.hash_mode());
    if recomputed != expected {
        return Err(board_abort(
            n,
            AbortReason::ChecksumMismatch,
            Some(DigestEvidence {
                expected,
                recomputed,
            }),
        ));
    }

    let _phase = metrics::enter(Phase::Checksum);
    let mut sum =
        FieldVector::zeros(released.modulus(), released.len()).expect("dimension at least one");
    for priority in 1..=n {
        let obfuscated = match &packet.obfuscated {
            Some(lo) => &lo[priority as usize - 1],
            None => {
                let (o, salt) = board
                    .opening(priority)
                    .ok_or_else(|| board_abort(priority, AbortReason::Timeout, None))?;
                let commitment = packet.commitment(priority).expect("packet shape checked");
                if !verify_commitment(commitment, o, salt) {
                    return Err(board_abort(priority, AbortReason::CommitmentMismatch, None));
                }
                o
            }
        };
        sum.add_assign(obfuscated)
            .map_err(|_| board_abort(priority, AbortReason::CommitmentMismatch, None))?;
    }

    let checksum = data_checksum(&sum, released).expect("shapes agree");
    if checksum.is_exact() {
        Ok(checksum)
    } else {
        Err(board_abort(n, AbortReason::DataChecksumFailure, None))
    }
}
