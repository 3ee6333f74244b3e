//! Run transcripts and their JSON-lines export.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::time::Duration;

use serde::{Serialize, Serializer};

use super::board::BoardRecord;
use crate::metrics::{FieldOps, OpCount, Phase};
use crate::protocol::{AbortNotice, MessageKind, Party};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Aborted(AbortNotice),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    Sent {
        from: Party,
        to: Party,
        message: MessageKind,
        seq: u64,
        bytes: usize,
    },
    /// A frame failed authentication and was dropped.
    Rejected {
        from: Party,
        to: Party,
        message: MessageKind,
        seq: u64,
        error: String,
    },
    /// A fault flipped a bit of the frame in transit.
    Corrupted {
        from: Party,
        to: Party,
        seq: u64,
    },
    TimedOut {
        waiting: Party,
        on: Party,
    },
    Validated {
        by: Party,
        position: u32,
    },
    RetryRequested {
        by: Party,
        to: Party,
        attempt: u32,
    },
    Posted {
        author: Party,
        entry: &'static str,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Event {
    pub round: u32,
    pub tick: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

fn ops_by_phase<S: Serializer>(ops: &FieldOps, s: S) -> Result<S::Ok, S::Error> {
    let map: BTreeMap<&str, OpCount> = Phase::ALL
        .iter()
        .map(|p| (p.name(), ops.phase(*p)))
        .collect();
    map.serialize(s)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RetryCount {
    pub requester: Party,
    pub count: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub frames: u64,
    pub bytes: u64,
    /// Size of one relay frame (header plus body), when any was sent.
    pub relay_frame_bytes: Option<u64>,
    /// Bytes sent from client `i` to its successor (the board for the last
    /// client), at index `i - 1`.
    pub link_bytes: Vec<u64>,
    pub retries: Vec<RetryCount>,
    #[serde(serialize_with = "ops_by_phase")]
    pub field_ops: FieldOps,
    pub ticks: u64,
}

impl Counters {
    pub fn total_retries(&self) -> u32 {
        self.retries.iter().map(|r| r.count).sum()
    }

    pub fn retries_of(&self, requester: Party) -> u32 {
        self.retries
            .iter()
            .find(|r| r.requester == requester)
            .map_or(0, |r| r.count)
    }
}

/// Wall-clock measurements. Excluded from exports so that transcripts stay
/// byte-identical across runs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Timings {
    /// From the first relay round to the verdict.
    pub relay: Duration,
    /// Decrypt and validate time per client, by priority.
    pub steps: Vec<Duration>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunTranscript {
    pub outcome: Outcome,
    /// Scheduler rounds used, counting the setup round.
    pub rounds: u32,
    pub events: Vec<Event>,
    pub board: Vec<BoardRecord>,
    pub counters: Counters,
    #[serde(skip)]
    pub timings: Timings,
}

#[derive(Serialize)]
struct Summary<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    #[serde(flatten)]
    outcome: &'a Outcome,
    rounds: u32,
    board: &'a [BoardRecord],
    counters: &'a Counters,
}

impl RunTranscript {
    pub fn is_success(&self) -> bool {
        self.outcome == Outcome::Success
    }

    pub fn abort_notice(&self) -> Option<&AbortNotice> {
        match &self.outcome {
            Outcome::Aborted(n) => Some(n),
            Outcome::Success => None,
        }
    }

    /// One JSON object per event, then a summary record.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        let summary = Summary {
            kind: "summary",
            outcome: &self.outcome,
            rounds: self.rounds,
            board: &self.board,
            counters: &self.counters,
        };
        serde_json::to_writer(&mut w, &summary)?;
        w.write_all(b"\n")
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        self.write_jsonl(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("serde_json emits UTF-8")
    }
}
