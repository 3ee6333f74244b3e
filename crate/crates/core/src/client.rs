//! Client relay state machine.
//!
//! Each client removes exactly one layer from the state handed over by its
//! predecessor, checks the result against the published step checksum and
//! passes it on. The last client posts the fully decrypted state to the
//! board. A client only unmasks its own payload once the board has accepted
//! the release.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;
use zeroize::Zeroize;

use crate::field::{FieldError, FieldVector, FixedPointCodec};
use crate::metrics::{self, Phase};
use crate::protocol::{
    step_digest_with, AbortNotice, AbortReason, BroadcastPacket, ChainState, ClientEnvelope,
    DigestEvidence, Party, Salt,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ClientPhase {
    Idle,
    AwaitState,
    Applied,
    Validated,
    /// Output handed on: to the successor, or to the board for the last client.
    Relayed,
    Released,
    Aborted,
}

impl fmt::Display for ClientPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("expected chain state at position {expected}, got {got}")]
    ProtocolOrder { expected: u32, got: u32 },
    #[error("cannot {action} in phase {phase}")]
    InvalidTransition {
        phase: ClientPhase,
        action: &'static str,
    },
    #[error("envelope was issued for a different broadcast packet")]
    PacketMismatch,
    #[error("run aborted; payload suppressed")]
    SuppressedByAbort,
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Outcome of checking one received state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepVerdict {
    Validated,
    /// Ask the predecessor to send again. `attempt` counts retries so far.
    RequestRetry {
        attempt: u32,
    },
    Abort(AbortNotice),
}

#[derive(Debug)]
pub struct ClientNode {
    envelope: ClientEnvelope,
    packet: Arc<BroadcastPacket>,
    phase: ClientPhase,
    retries: u32,
    state: Option<ChainState>,
}

impl ClientNode {
    pub fn new(
        envelope: ClientEnvelope,
        packet: Arc<BroadcastPacket>,
    ) -> Result<Self, ClientError> {
        if *envelope.packet_digest() != packet.digest() {
            return Err(ClientError::PacketMismatch);
        }
        Ok(ClientNode {
            envelope,
            packet,
            phase: ClientPhase::Idle,
            retries: 0,
            state: None,
        })
    }

    pub fn priority(&self) -> u32 {
        self.envelope.priority()
    }

    pub fn party(&self) -> Party {
        Party::Client(self.priority())
    }

    pub fn is_last(&self) -> bool {
        self.priority() == self.packet.params.n_clients
    }

    pub fn phase(&self) -> ClientPhase {
        self.phase
    }

    pub fn retries(&self) -> u32 {
        self.retries
    }

    pub fn envelope(&self) -> &ClientEnvelope {
        &self.envelope
    }

    pub fn packet(&self) -> &BroadcastPacket {
        &self.packet
    }

    /// The state after this client's layer, once applied.
    pub fn state(&self) -> Option<&ChainState> {
        self.state.as_ref()
    }

    fn expect_phase(
        &self,
        allowed: &[ClientPhase],
        action: &'static str,
    ) -> Result<(), ClientError> {
        if allowed.contains(&self.phase) {
            Ok(())
        } else {
            Err(ClientError::InvalidTransition {
                phase: self.phase,
                action,
            })
        }
    }

    /// Setup material received; start waiting for the chain state.
    pub fn start(&mut self) -> Result<(), ClientError> {
        self.expect_phase(&[ClientPhase::Idle], "start")?;
        self.phase = ClientPhase::AwaitState;
        Ok(())
    }

    /// Removes this client's layer from the predecessor's state.
    pub fn decrypt_step(
        &mut self,
        incoming: &ChainState,
        round: u32,
    ) -> Result<&ChainState, ClientError> {
        self.expect_phase(&[ClientPhase::AwaitState], "decrypt")?;
        let expected = self.priority() - 1;
        if incoming.position != expected {
            return Err(ClientError::ProtocolOrder {
                expected,
                got: incoming.position,
            });
        }
        let key = self.envelope.consensus_key();
        let mut state = incoming.state.clone();
        {
            let _phase = metrics::enter(Phase::Decrypt);
            state.apply_in_place(key.key(), key.op())?;
        }
        self.phase = ClientPhase::Applied;
        Ok(self.state.insert(ChainState {
            state,
            position: expected + 1,
            producer: self.party(),
            round,
        }))
    }

    /// Compares the new state's digest with the published step checksum.
    pub fn validate_step(&mut self) -> Result<StepVerdict, ClientError> {
        self.expect_phase(&[ClientPhase::Applied], "validate")?;
        let state = self.state.as_ref().expect("applied state present");
        let expected = self
            .packet
            .step_checksum(state.position)
            .expect("packet shape checked")
            .digest;
        let recomputed = step_digest_with(&state.state, self.packet.params.hash_mode());
        if recomputed == expected {
            self.phase = ClientPhase::Validated;
            return Ok(StepVerdict::Validated);
        }
        Ok(self.fail_attempt(
            AbortReason::ChecksumMismatch,
            Some(DigestEvidence {
                expected,
                recomputed,
            }),
        ))
    }

    /// Registers a failed delivery attempt (bad digest, bad MAC or timeout).
    /// Retries until the budget `tau` is spent, then aborts.
    pub fn fail_attempt(
        &mut self,
        reason: AbortReason,
        evidence: Option<DigestEvidence>,
    ) -> StepVerdict {
        if self.retries < self.packet.params.tau {
            self.retries += 1;
            self.state = None;
            self.phase = ClientPhase::AwaitState;
            return StepVerdict::RequestRetry {
                attempt: self.retries,
            };
        }
        let notice = AbortNotice {
            issuer: self.party(),
            failed_step: self.priority(),
            reason,
            evidence,
        };
        self.abort();
        StepVerdict::Abort(notice)
    }

    /// Corrupted nodes relay without checking.
    pub fn skip_validation(&mut self) -> Result<(), ClientError> {
        self.expect_phase(&[ClientPhase::Applied], "skip validation")?;
        self.phase = ClientPhase::Validated;
        Ok(())
    }

    /// Hands the validated state to the successor.
    pub fn relay(&mut self) -> Result<ChainState, ClientError> {
        self.expect_phase(&[ClientPhase::Validated], "relay")?;
        if self.is_last() {
            return Err(ClientError::InvalidTransition {
                phase: self.phase,
                action: "relay from the last position",
            });
        }
        self.phase = ClientPhase::Relayed;
        Ok(self.state.clone().expect("validated state present"))
    }

    /// Last client only: the fully decrypted state for the board.
    pub fn release_final(&mut self) -> Result<FieldVector, ClientError> {
        self.expect_phase(&[ClientPhase::Validated], "release")?;
        if !self.is_last() {
            return Err(ClientError::InvalidTransition {
                phase: self.phase,
                action: "release before the last position",
            });
        }
        self.phase = ClientPhase::Relayed;
        Ok(self
            .state
            .as_ref()
            .expect("validated state present")
            .state
            .clone())
    }

    /// `(priority, O_i, salt)` for the board, once the final state is posted.
    pub fn opening(&self) -> Result<(u32, FieldVector, Salt), ClientError> {
        self.expect_phase(&[ClientPhase::Relayed], "open")?;
        Ok((
            self.priority(),
            self.envelope.obfuscated().clone(),
            *self.envelope.salt(),
        ))
    }

    /// The board accepted the release.
    pub fn accept_release(&mut self) -> Result<(), ClientError> {
        self.expect_phase(&[ClientPhase::Relayed], "accept release")?;
        self.phase = ClientPhase::Released;
        Ok(())
    }

    /// Enters the terminal abort phase and wipes all secrets.
    pub fn abort(&mut self) {
        self.phase = ClientPhase::Aborted;
        if let Some(s) = self.state.as_mut() {
            s.state.zeroize();
        }
        self.state = None;
        self.envelope.wipe();
    }

    /// `D_i = (O_i - r_i) * lambda_i^{-1}`; only after a successful release.
    pub fn deobfuscate(&self) -> Result<FieldVector, ClientError> {
        match self.phase {
            ClientPhase::Released => {}
            ClientPhase::Aborted => return Err(ClientError::SuppressedByAbort),
            phase => {
                return Err(ClientError::InvalidTransition {
                    phase,
                    action: "deobfuscate",
                })
            }
        }
        Ok(deobfuscate(&self.envelope)?)
    }

    pub fn recover(&self, codec: &FixedPointCodec) -> Result<Vec<f64>, ClientError> {
        Ok(codec.decode_vector(&self.deobfuscate()?))
    }
}

/// Unmasks an envelope's obfuscated payload.
pub fn deobfuscate(envelope: &ClientEnvelope) -> Result<FieldVector, FieldError> {
    let _phase = metrics::enter(Phase::Deobfuscate);
    let key = envelope.obfuscation_key();
    envelope
        .obfuscated()
        .sub(key.r())?
        .scale(key.lambda().inv()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordinator::{run_setup, SetupMode, SetupOutput};
    use crate::field::{FieldElement, Modulus};
    use crate::protocol::{
        CciMatrix, CciRecord, ChannelKeys, ConsensusKey, MacKey, ObfuscationKey, OpCode,
        PriorityMap, ProtocolParams, StepChecksum,
    };
    use uuid::Uuid;

    fn m97() -> Modulus {
        Modulus::new(97).unwrap()
    }

    fn v97(xs: &[u64]) -> FieldVector {
        FieldVector::new(m97(), xs.to_vec()).unwrap()
    }

    fn keys() -> ChannelKeys {
        ChannelKeys {
            coordinator: MacKey::from_bytes([1; 32]),
            board: MacKey::from_bytes([2; 32]),
            predecessor: None,
            successor: None,
        }
    }

    fn hash_le(x: u64) -> [u8; 32] {
        use sha3::Digest as _;
        sha3::Sha3_256::digest(x.to_le_bytes()).into()
    }

    /// The two-client chain over p = 97 with hand-computed values.
    fn worked_example() -> (Arc<BroadcastPacket>, Vec<ClientEnvelope>) {
        let cci = CciMatrix::new(vec![
            CciRecord {
                uuid: Uuid::from_u128(1),
                payload: v97(&[10]),
            },
            CciRecord {
                uuid: Uuid::from_u128(2),
                payload: v97(&[5]),
            },
        ]);
        let packet = BroadcastPacket {
            locked: v97(&[31]),
            step_checksums: vec![
                StepChecksum {
                    index: 1,
                    digest: hash_le(38),
                },
                StepChecksum {
                    index: 2,
                    digest: hash_le(55),
                },
            ],
            priority_map: PriorityMap::identity(&cci).unwrap(),
            commitments: vec![[0; 32]; 2],
            params: ProtocolParams {
                n_clients: 2,
                dim: 1,
                modulus: m97(),
                scale_bits: 2,
                tau: 3,
                broadcast_lo: false,
                hash_full_vector: false,
            },
            obfuscated: None,
        };
        let digest = packet.digest();
        let fe = |x| FieldElement::new(x, m97()).unwrap();
        // O_1 = 3 * 10 + 5 = 35, O_2 = 2 * 5 + 10 = 20.
        let e1 = ClientEnvelope::new(
            1,
            ConsensusKey::new(v97(&[7]), OpCode::Add).unwrap(),
            ObfuscationKey::new(fe(3), v97(&[5])).unwrap(),
            v97(&[35]),
            [0; 16],
            keys(),
            digest,
            &v97(&[10]),
        )
        .unwrap();
        let e2 = ClientEnvelope::new(
            2,
            ConsensusKey::new(v97(&[4]), OpCode::Mul).unwrap(),
            ObfuscationKey::new(fe(2), v97(&[10])).unwrap(),
            v97(&[20]),
            [0; 16],
            keys(),
            digest,
            &v97(&[5]),
        )
        .unwrap();
        (Arc::new(packet), vec![e1, e2])
    }

    #[test]
    fn worked_chain_decrypts_by_hand() {
        let (packet, envs) = worked_example();
        let mut c1 = ClientNode::new(envs[0].clone(), packet.clone()).unwrap();
        let mut c2 = ClientNode::new(envs[1].clone(), packet.clone()).unwrap();
        c1.start().unwrap();
        c2.start().unwrap();

        let s1 = c1.decrypt_step(&ChainState::initial(&packet), 1).unwrap();
        assert_eq!(s1.state, v97(&[38]));
        assert_eq!(c1.validate_step().unwrap(), StepVerdict::Validated);
        let s1 = c1.relay().unwrap();

        let s2 = c2.decrypt_step(&s1, 2).unwrap();
        assert_eq!(s2.state, v97(&[55]));
        assert_eq!(c2.validate_step().unwrap(), StepVerdict::Validated);
        assert_eq!(c2.release_final().unwrap(), v97(&[55]));

        for c in [&mut c1, &mut c2] {
            c.accept_release().unwrap();
        }
        // (35 - 5) * inv(3) = 30 * 65 mod 97 = 10
        assert_eq!(c1.deobfuscate().unwrap(), v97(&[10]));
        assert_eq!(c2.deobfuscate().unwrap(), v97(&[5]));
        assert_eq!(c1.retries(), 0);
    }

    #[test]
    fn identity_layer_leaves_state() {
        let (packet, envs) = worked_example();
        let mut env = envs[0].clone();
        env = ClientEnvelope::new(
            1,
            ConsensusKey::new(v97(&[0]), OpCode::Add).unwrap(),
            env.obfuscation_key().clone(),
            env.obfuscated().clone(),
            [0; 16],
            keys(),
            *env.packet_digest(),
            &v97(&[10]),
        )
        .unwrap();
        let mut c = ClientNode::new(env, packet.clone()).unwrap();
        c.start().unwrap();
        assert_eq!(
            c.decrypt_step(&ChainState::initial(&packet), 1)
                .unwrap()
                .state,
            v97(&[31])
        );
    }

    #[test]
    fn deobfuscate_identity_keys() {
        let m = m97();
        let env = ClientEnvelope::new(
            1,
            ConsensusKey::new(v97(&[1]), OpCode::Mul).unwrap(),
            ObfuscationKey::new(FieldElement::one(m), v97(&[0, 0])).unwrap(),
            v97(&[17, 4]),
            [0; 16],
            keys(),
            [0; 32],
            &v97(&[17, 4]),
        )
        .unwrap();
        assert_eq!(deobfuscate(&env).unwrap(), v97(&[17, 4]));
    }

    #[test]
    fn position_mismatch_is_an_order_error() {
        let (packet, envs) = worked_example();
        let mut c2 = ClientNode::new(envs[1].clone(), packet.clone()).unwrap();
        c2.start().unwrap();
        assert_eq!(
            c2.decrypt_step(&ChainState::initial(&packet), 1)
                .unwrap_err(),
            ClientError::ProtocolOrder {
                expected: 1,
                got: 0
            }
        );
    }

    #[test]
    fn tampered_state_retries_then_aborts() {
        let (packet, envs) = worked_example();
        let mut c1 = ClientNode::new(envs[0].clone(), packet.clone()).unwrap();
        c1.start().unwrap();
        let mut bad = ChainState::initial(&packet);
        bad.state = v97(&[32]);
        for attempt in 1..=3 {
            c1.decrypt_step(&bad, 1).unwrap();
            assert_eq!(
                c1.validate_step().unwrap(),
                StepVerdict::RequestRetry { attempt }
            );
        }
        c1.decrypt_step(&bad, 1).unwrap();
        let StepVerdict::Abort(notice) = c1.validate_step().unwrap() else {
            panic!("expected abort");
        };
        assert_eq!(notice.issuer, Party::Client(1));
        assert_eq!(notice.reason, AbortReason::ChecksumMismatch);
        let ev = notice.evidence.unwrap();
        assert_eq!(ev.expected, hash_le(38));
        assert_eq!(ev.recomputed, hash_le(39));
        assert_eq!(c1.retries(), 3);
        assert_eq!(c1.phase(), ClientPhase::Aborted);
        assert_eq!(
            c1.deobfuscate().unwrap_err(),
            ClientError::SuppressedByAbort
        );
        assert!(c1.envelope().obfuscated().is_zero());
    }

    #[test]
    fn transient_fault_clears_on_retry() {
        let (packet, envs) = worked_example();
        let mut c1 = ClientNode::new(envs[0].clone(), packet.clone()).unwrap();
        c1.start().unwrap();
        assert_eq!(
            c1.fail_attempt(AbortReason::AuthFailure, None),
            StepVerdict::RequestRetry { attempt: 1 }
        );
        c1.decrypt_step(&ChainState::initial(&packet), 1).unwrap();
        assert_eq!(c1.validate_step().unwrap(), StepVerdict::Validated);
        assert_eq!(c1.retries(), 1);
    }

    #[test]
    fn transitions_are_enforced() {
        let (packet, envs) = worked_example();
        let mut c1 = ClientNode::new(envs[0].clone(), packet.clone()).unwrap();
        assert!(c1.decrypt_step(&ChainState::initial(&packet), 1).is_err());
        assert!(c1.validate_step().is_err());
        assert!(c1.opening().is_err());
        c1.start().unwrap();
        c1.decrypt_step(&ChainState::initial(&packet), 1).unwrap();
        assert!(c1.release_final().is_err());
        c1.validate_step().unwrap();
        assert!(c1.release_final().is_err());
        c1.relay().unwrap();
        assert!(matches!(
            c1.deobfuscate(),
            Err(ClientError::InvalidTransition {
                phase: ClientPhase::Relayed,
                ..
            })
        ));
        assert_eq!(c1.opening().unwrap().1, v97(&[35]));
    }

    #[test]
    fn foreign_packet_rejected() {
        let (packet, envs) = worked_example();
        let mut other = (*packet).clone();
        other.locked = v97(&[30]);
        assert_eq!(
            ClientNode::new(envs[0].clone(), Arc::new(other)).unwrap_err(),
            ClientError::PacketMismatch
        );
    }

    fn random_setup(n: u32, d: u32, seed: u64) -> SetupOutput {
        let m = Modulus::MERSENNE_61;
        let mut rng = crate::field::SeededGenerator::from_label("payloads", seed);
        let cci = CciMatrix::new(
            (0..n)
                .map(|i| CciRecord {
                    uuid: Uuid::from_u128(i as u128 + 1),
                    payload: crate::field::sample_vector(&mut rng, m, d as usize, false).unwrap(),
                })
                .collect(),
        );
        let params = ProtocolParams {
            n_clients: n,
            dim: d,
            modulus: m,
            scale_bits: 20,
            tau: 3,
            broadcast_lo: false,
            hash_full_vector: false,
        };
        run_setup(
            params,
            &cci,
            PriorityMap::identity(&cci).unwrap(),
            seed,
            SetupMode::Audit,
        )
        .unwrap()
    }

    #[test]
    fn relay_recovers_every_payload() {
        let setup = random_setup(9, 6, 11);
        let audit = setup.audit.clone().unwrap();
        let packet = Arc::new(setup.packet.clone());
        let mut nodes: Vec<_> = setup
            .envelopes
            .iter()
            .map(|e| ClientNode::new(e.clone(), packet.clone()).unwrap())
            .collect();
        let mut state = ChainState::initial(&packet);
        for (i, node) in nodes.iter_mut().enumerate() {
            node.start().unwrap();
            node.decrypt_step(&state, i as u32 + 1).unwrap();
            assert_eq!(node.validate_step().unwrap(), StepVerdict::Validated);
            assert_eq!(node.state().unwrap().state, audit.chain[i + 1]);
            if node.is_last() {
                assert_eq!(&node.release_final().unwrap(), audit.obfuscated_sum());
            } else {
                state = node.relay().unwrap();
            }
        }
        for (node, payload) in nodes.iter_mut().zip(&audit.payloads) {
            node.accept_release().unwrap();
            assert_eq!(&node.deobfuscate().unwrap(), payload);
        }
    }
}
