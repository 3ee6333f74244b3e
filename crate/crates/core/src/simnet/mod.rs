//! Deterministic round-based simulation of one protocol run.
//!
//! Round 0 delivers envelopes and the packet. In round `i` (1..=N) client `i`
//! receives the chain state, removes its layer and validates it; retries
//! happen inside the round. Round `N + 1` carries the release, the openings
//! and board verification. Time is virtual: every delivery costs
//! `latency_ticks`, every missed message `timeout_ticks`.

mod board;
mod fault;
mod network;
mod transcript;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use board::{board_verify, BoardEntry, BoardPost, BoardRecord, BulletinBoard};
pub use fault::{inject, Behavior, FaultPlan, PlanError};
pub use network::{DeliveryError, Frame, Network, HEADER_LEN};
pub use transcript::{Counters, Event, EventKind, Outcome, RetryCount, RunTranscript, Timings};

use crate::client::{ClientError, ClientNode, StepVerdict};
use crate::coordinator::SetupOutput;
use crate::field::{FieldVector, SeededGenerator};
use crate::metrics;
use crate::protocol::{
    step_digest_with, AbortNotice, AbortReason, ChainState, DigestEvidence, Message, MessageKind,
    Party,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub latency_ticks: u64,
    /// How long a receiver waits for a message before counting a failed attempt.
    pub timeout_ticks: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            latency_ticks: 1,
            timeout_ticks: 100,
        }
    }
}

/// Why an attempt to obtain a message failed.
type Failure = (AbortReason, Option<DigestEvidence>);

/// One protocol run over a finished setup.
pub struct Simulation<'a> {
    setup: &'a SetupOutput,
    plan: FaultPlan,
    config: SimConfig,
    net: Network,
    board: BulletinBoard,
    nodes: Vec<ClientNode>,
    /// What each client last emitted; re-sent verbatim on retry requests.
    outbox: Vec<Option<ChainState>>,
    transient_left: BTreeMap<u32, u32>,
    rng: SeededGenerator,
    events: Vec<Event>,
    round: u32,
    tick: u64,
    link_bytes: Vec<u64>,
    relay_frame_bytes: Option<u64>,
    retries: Vec<RetryCount>,
    steps: Vec<Duration>,
}

impl<'a> Simulation<'a> {
    pub fn new(
        setup: &'a SetupOutput,
        plan: FaultPlan,
        config: SimConfig,
    ) -> Result<Self, PlanError> {
        let params = setup.params();
        plan.validate(params)?;
        let n = params.n_clients as usize;
        let transient_left = plan
            .behaviors
            .iter()
            .filter_map(|(&p, b)| match b {
                Behavior::TransientCorrupt { count } => Some((p, *count)),
                _ => None,
            })
            .collect();
        let rng = SeededGenerator::from_label("cppdd-faults", plan.seed);
        Ok(Simulation {
            setup,
            plan,
            config,
            net: Network::new(setup.keyring.clone(), params.modulus),
            board: BulletinBoard::new(),
            nodes: Vec::with_capacity(n),
            outbox: vec![None; n + 1],
            transient_left,
            rng,
            events: Vec::new(),
            round: 0,
            tick: 0,
            link_bytes: vec![0; n],
            relay_frame_bytes: None,
            retries: Vec::new(),
            steps: Vec::with_capacity(n),
        })
    }

    pub fn nodes(&self) -> &[ClientNode] {
        &self.nodes
    }

    pub fn board(&self) -> &BulletinBoard {
        &self.board
    }

    /// Each client's unmasked payload, by priority. Fails unless the run
    /// succeeded.
    pub fn recover(&self) -> Result<Vec<FieldVector>, ClientError> {
        self.nodes.iter().map(ClientNode::deobfuscate).collect()
    }

    fn n(&self) -> u32 {
        self.setup.params().n_clients
    }

    fn log(&mut self, kind: EventKind) {
        self.events.push(Event {
            round: self.round,
            tick: self.tick,
            kind,
        });
    }

    fn sent(&mut self, frame: &Frame) {
        self.log(EventKind::Sent {
            from: frame.from,
            to: frame.to,
            message: frame.kind,
            seq: frame.seq,
            bytes: frame.wire_len(),
        });
    }

    fn seal(&mut self, from: Party, to: Party, msg: &Message) -> Frame {
        let frame = self
            .net
            .seal(from, to, self.round, msg)
            .expect("channel dealt at setup");
        self.sent(&frame);
        frame
    }

    /// Applies transient link faults of `sender`, then delivers.
    fn transmit(&mut self, sender: u32, mut frame: Frame) -> Result<Message, Failure> {
        if let Some(left) = self.transient_left.get_mut(&sender).filter(|l| **l > 0) {
            *left -= 1;
            frame.corrupt(frame.seq.wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 7);
            self.log(EventKind::Corrupted {
                from: frame.from,
                to: frame.to,
                seq: frame.seq,
            });
        }
        self.tick += self.config.latency_ticks;
        self.net.deliver(&frame).map_err(|e| {
            self.log(EventKind::Rejected {
                from: frame.from,
                to: frame.to,
                message: frame.kind,
                seq: frame.seq,
                error: e.to_string(),
            });
            (AbortReason::AuthFailure, None)
        })
    }

    fn time_out(&mut self, waiting: Party, on: Party) -> Failure {
        self.tick += self.config.timeout_ticks;
        self.log(EventKind::TimedOut { waiting, on });
        (AbortReason::Timeout, None)
    }

    fn request_retry(&mut self, by: Party, to: Party, attempt: u32) {
        let position = match to {
            Party::Client(j) => j,
            _ => 0,
        };
        let frame = self.seal(by, to, &Message::RetryRequest { position });
        // The predecessor acts on the request by re-sending; the request itself
        // is authenticated like any other frame.
        let _ = self.net.deliver(&frame);
        self.log(EventKind::RetryRequested { by, to, attempt });
        match self.retries.iter_mut().find(|r| r.requester == by) {
            Some(r) => r.count += 1,
            None => self.retries.push(RetryCount {
                requester: by,
                count: 1,
            }),
        }
    }

    /// Sends client `sender`'s last output to its successor.
    fn relay_from(&mut self, sender: u32) -> Result<ChainState, Failure> {
        let to = Party::Client(sender + 1);
        let Some(out) = self.outbox[sender as usize].clone() else {
            return Err(self.time_out(to, Party::Client(sender)));
        };
        let msg = Message::RelayState {
            position: out.position,
            state: out.state,
        };
        let frame = self.seal(Party::Client(sender), to, &msg);
        let len = frame.wire_len() as u64;
        self.link_bytes[sender as usize - 1] += len;
        self.relay_frame_bytes = Some(len);
        match self.transmit(sender, frame)? {
            Message::RelayState { position, state } => Ok(ChainState {
                state,
                position,
                producer: Party::Client(sender),
                round: self.round,
            }),
            _ => unreachable!("relay frames decode as relay state"),
        }
    }

    fn setup_round(&mut self) {
        let packet_body = Message::Packet(Box::new(self.setup.packet.clone())).encode_body();
        for env in &self.setup.envelopes {
            let to = Party::Client(env.priority());
            let frame = self.seal(
                Party::Coordinator,
                to,
                &Message::SetupEnvelope(Box::new(env.clone())),
            );
            let Ok(Message::SetupEnvelope(envelope)) = self.net.deliver(&frame) else {
                unreachable!("setup frames are delivered intact")
            };
            let frame = self
                .net
                .seal_body(
                    Party::Coordinator,
                    to,
                    0,
                    MessageKind::Packet,
                    packet_body.clone(),
                )
                .expect("coordinator channel");
            self.sent(&frame);
            let Ok(Message::Packet(packet)) = self.net.deliver(&frame) else {
                unreachable!("setup frames are delivered intact")
            };
            let mut node =
                ClientNode::new(*envelope, Arc::new(*packet)).expect("envelope matches packet");
            node.start().expect("fresh node");
            self.nodes.push(node);
        }
        self.tick += self.config.latency_ticks;
    }

    /// Client `i` obtains, decrypts and validates its input, then emits.
    fn relay_round(&mut self, i: u32) -> Result<(), AbortNotice> {
        self.round = i;
        let idx = i as usize - 1;
        let behavior = self.plan.behavior(i).clone();
        let start = Instant::now();
        let incoming = loop {
            let received = if i == 1 {
                Ok(ChainState::initial(self.nodes[0].packet()))
            } else {
                self.relay_from(i - 1)
            };
            let node = &mut self.nodes[idx];
            let (verdict, state) = match received {
                Err((reason, evidence)) => (node.fail_attempt(reason, evidence), None),
                Ok(state) => {
                    let verdict = match node.decrypt_step(&state, i) {
                        Err(_) => node.fail_attempt(AbortReason::ChecksumMismatch, None),
                        Ok(_) if behavior.is_corrupted() => {
                            node.skip_validation().expect("state applied");
                            StepVerdict::Validated
                        }
                        Ok(_) => node.validate_step().expect("state applied"),
                    };
                    (verdict, Some(state))
                }
            };
            match verdict {
                StepVerdict::Validated => break state.expect("validated states were received"),
                StepVerdict::RequestRetry { attempt } => {
                    self.request_retry(Party::Client(i), Party::Client(i - 1), attempt)
                }
                StepVerdict::Abort(notice) => {
                    self.steps.push(start.elapsed());
                    return Err(notice);
                }
            }
        };
        self.steps.push(start.elapsed());
        self.log(EventKind::Validated {
            by: Party::Client(i),
            position: i,
        });

        let node = &mut self.nodes[idx];
        let honest = if node.is_last() {
            let state = node.release_final().expect("validated");
            ChainState {
                state,
                ..node.state().expect("validated").clone()
            }
        } else {
            node.relay().expect("validated")
        };
        let envelope = self.nodes[idx].envelope().clone();
        self.outbox[i as usize] = inject(&behavior, &incoming, honest, &envelope, &mut self.rng);
        Ok(())
    }

    /// Release, openings and board verification.
    fn release_round(&mut self) -> Result<(), AbortNotice> {
        let n = self.n();
        self.round = n + 1;
        let packet = &self.setup.packet;
        let expected = packet
            .step_checksum(n)
            .expect("packet shape checked")
            .digest;
        let mode = packet.params.hash_mode();
        let tau = packet.params.tau;

        let mut attempts = 0;
        let released = loop {
            let result = match self.outbox[n as usize].clone() {
                None => Err(self.time_out(Party::Board, Party::Client(n))),
                Some(out) => {
                    let frame = self.seal(
                        Party::Client(n),
                        Party::Board,
                        &Message::Release { state: out.state },
                    );
                    self.link_bytes[n as usize - 1] += frame.wire_len() as u64;
                    match self.transmit(n, frame) {
                        Ok(Message::Release { state }) => {
                            let recomputed = step_digest_with(&state, mode);
                            if recomputed == expected {
                                Ok(state)
                            } else {
                                Err((
                                    AbortReason::ChecksumMismatch,
                                    Some(DigestEvidence {
                                        expected,
                                        recomputed,
                                    }),
                                ))
                            }
                        }
                        Ok(_) => unreachable!("release frames decode as release"),
                        Err(f) => Err(f),
                    }
                }
            };
            match result {
                Ok(state) => break state,
                Err(_) if attempts < tau => {
                    attempts += 1;
                    self.request_retry(Party::Board, Party::Client(n), attempts);
                }
                Err((reason, evidence)) => {
                    return Err(AbortNotice {
                        issuer: Party::Board,
                        failed_step: n,
                        reason,
                        evidence,
                    })
                }
            }
        };
        self.post(Party::Client(n), BoardPost::Release { state: released });

        if !self.setup.packet.params.broadcast_lo {
            let mut missing = None;
            for idx in 0..self.nodes.len() {
                let priority = idx as u32 + 1;
                if self.plan.behavior(priority) == &Behavior::WithholdOpening {
                    missing.get_or_insert(priority);
                    continue;
                }
                let (priority, obfuscated, salt) = self.nodes[idx].opening().expect("relayed");
                let msg = Message::Opening {
                    priority,
                    obfuscated,
                    salt,
                };
                let frame = self.seal(Party::Client(priority), Party::Board, &msg);
                self.tick += self.config.latency_ticks;
                if let Ok(Message::Opening {
                    priority,
                    obfuscated,
                    salt,
                }) = self.net.deliver(&frame)
                {
                    self.post(
                        Party::Client(priority),
                        BoardPost::Opening {
                            priority,
                            obfuscated,
                            salt,
                        },
                    );
                }
            }
            if let Some(p) = missing {
                self.time_out(Party::Board, Party::Client(p));
            }
        }

        board_verify(&self.board, &self.setup.packet)?;
        self.post(Party::Board, BoardPost::Accept);
        for node in &mut self.nodes {
            node.accept_release().expect("every node relayed");
        }
        Ok(())
    }

    fn post(&mut self, author: Party, post: BoardPost) {
        let entry = post.label();
        self.board.post(self.round, author, post);
        self.log(EventKind::Posted { author, entry });
    }

    fn abort(&mut self, notice: AbortNotice) {
        if let Party::Client(i) = notice.issuer {
            let frame = self.seal(
                Party::Client(i),
                Party::Board,
                &Message::Abort(notice.clone()),
            );
            self.tick += self.config.latency_ticks;
            let _ = self.net.deliver(&frame);
        }
        self.post(notice.issuer, BoardPost::Abort(notice));
        for node in &mut self.nodes {
            node.abort();
        }
    }

    /// Executes every round and returns the transcript.
    pub fn run(&mut self) -> RunTranscript {
        let before = metrics::snapshot();
        self.setup_round();
        let start = Instant::now();
        let mut result = Ok(());
        for i in 1..=self.n() {
            result = self.relay_round(i);
            if result.is_err() {
                break;
            }
        }
        let result = result.and_then(|()| self.release_round());
        let outcome = match result {
            Ok(()) => Outcome::Success,
            Err(notice) => {
                self.abort(notice.clone());
                Outcome::Aborted(notice)
            }
        };
        let relay = start.elapsed();

        RunTranscript {
            outcome,
            rounds: self.round + 1,
            events: std::mem::take(&mut self.events),
            board: self
                .board
                .entries()
                .iter()
                .map(|e| BoardRecord {
                    round: e.round,
                    author: e.author,
                    entry: e.post.label(),
                })
                .collect(),
            counters: Counters {
                frames: self.net.frames_sent(),
                bytes: self.net.bytes_sent(),
                relay_frame_bytes: self.relay_frame_bytes,
                link_bytes: self.link_bytes.clone(),
                retries: self.retries.clone(),
                field_ops: metrics::snapshot().since(&before),
                ticks: self.tick,
            },
            timings: Timings {
                relay,
                steps: std::mem::take(&mut self.steps),
            },
        }
    }
}

/// Runs one protocol instance under `plan`.
pub fn run(
    setup: &SetupOutput,
    plan: &FaultPlan,
    config: &SimConfig,
) -> Result<RunTranscript, PlanError> {
    Ok(Simulation::new(setup, plan.clone(), *config)?.run())
}
