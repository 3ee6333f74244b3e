use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use uuid::Uuid;
use zeroize::Zeroize;

use super::checksum::{self, Digest, HashMode, Salt, SALT_LEN};
use super::mac::MacKey;
use super::wire::{Reader, WireError, Writer};
use super::{OpCode, ProtocolError};
use crate::field::{FieldElement, FieldVector, Modulus};

/// A protocol participant. Client priorities are 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Coordinator,
    Client(u32),
    Board,
}

impl Party {
    /// Identifier bound into MAC tags.
    pub fn wire_id(self) -> u32 {
        match self {
            Party::Coordinator => 0,
            Party::Client(i) => i,
            Party::Board => u32::MAX,
        }
    }

    pub fn from_wire_id(id: u32) -> Party {
        match id {
            0 => Party::Coordinator,
            u32::MAX => Party::Board,
            i => Party::Client(i),
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Coordinator => f.write_str("coordinator"),
            Party::Client(i) => write!(f, "client-{i}"),
            Party::Board => f.write_str("board"),
        }
    }
}

/// Public parameters shared by every participant of one protocol instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n_clients: u32,
    pub dim: u32,
    pub modulus: Modulus,
    pub scale_bits: u32,
    /// Retry budget per relay step.
    pub tau: u32,
    /// Publish all `O_i` in the packet instead of opening commitments after release.
    pub broadcast_lo: bool,
    pub hash_full_vector: bool,
}

impl ProtocolParams {
    pub const DEFAULT_TAU: u32 = 3;

    pub fn hash_mode(&self) -> HashMode {
        HashMode::from_flag(self.hash_full_vector)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.n_clients == 0 {
            return Err(ProtocolError::InvalidParams(
                "n_clients must be at least 1".into(),
            ));
        }
        if self.dim == 0 {
            return Err(ProtocolError::InvalidParams(
                "dim must be at least 1".into(),
            ));
        }
        crate::field::FixedPointCodec::new(self.scale_bits, self.modulus)
            .map_err(|e| ProtocolError::InvalidParams(e.to_string()))?;
        Ok(())
    }

    fn write(&self, w: &mut Writer) {
        let flags = u8::from(self.broadcast_lo) | (u8::from(self.hash_full_vector) << 1);
        w.u32(self.n_clients)
            .u32(self.dim)
            .u64(self.modulus.value())
            .u32(self.scale_bits)
            .u32(self.tau)
            .u8(flags);
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let n_clients = r.u32("n_clients")?;
        let dim = r.u32("dim")?;
        let modulus = Modulus::new(r.u64("modulus")?)?;
        let scale_bits = r.u32("scale_bits")?;
        let tau = r.u32("tau")?;
        let flags = r.u8("flags")?;
        if flags > 0b11 {
            return Err(WireError::invalid("flags", flags));
        }
        Ok(ProtocolParams {
            n_clients,
            dim,
            modulus,
            scale_bits,
            tau,
            broadcast_lo: flags & 1 != 0,
            hash_full_vector: flags & 2 != 0,
        })
    }
}

/// Affine mask `x -> lambda * x + r` with `lambda != 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObfuscationKey {
    lambda: FieldElement,
    r: FieldVector,
}

impl ObfuscationKey {
    pub fn new(lambda: FieldElement, r: FieldVector) -> Result<Self, ProtocolError> {
        if lambda.is_zero() {
            return Err(ProtocolError::ZeroLambda);
        }
        if lambda.modulus() != r.modulus() {
            return Err(ProtocolError::Field(
                crate::field::FieldError::ModulusMismatch(
                    lambda.modulus().value(),
                    r.modulus().value(),
                ),
            ));
        }
        Ok(ObfuscationKey { lambda, r })
    }

    pub fn lambda(&self) -> FieldElement {
        self.lambda
    }

    pub fn r(&self) -> &FieldVector {
        &self.r
    }
}

impl Zeroize for ObfuscationKey {
    fn zeroize(&mut self) {
        self.lambda = FieldElement::one(self.lambda.modulus());
        self.r.zeroize();
    }
}

/// Per-client layer key together with the op it is bound to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConsensusKey {
    k: FieldVector,
    op: OpCode,
}

impl ConsensusKey {
    pub fn new(k: FieldVector, op: OpCode) -> Result<Self, ProtocolError> {
        if op.is_multiplicative() && k.as_slice().contains(&0) {
            return Err(ProtocolError::ZeroKeyElement(op));
        }
        Ok(ConsensusKey { k, op })
    }

    pub fn key(&self) -> &FieldVector {
        &self.k
    }

    pub fn op(&self) -> OpCode {
        self.op
    }
}

impl Zeroize for ConsensusKey {
    fn zeroize(&mut self) {
        self.k.zeroize();
    }
}

/// Expected digest of the chain state after `index` decryption layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepChecksum {
    pub index: u32,
    pub digest: Digest,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CciRecord {
    pub uuid: Uuid,
    pub payload: FieldVector,
}

/// Client contribution index: one row per client, pairing its UUID with its
/// confidential payload.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CciMatrix {
    pub records: Vec<CciRecord>,
}

impl CciMatrix {
    pub fn new(records: Vec<CciRecord>) -> Self {
        CciMatrix { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// UUIDs distinct, payloads of equal length and modulus.
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let first = self.records.first().ok_or(ProtocolError::EmptyCci)?;
        let mut seen = BTreeSet::new();
        for rec in &self.records {
            if !seen.insert(rec.uuid) {
                return Err(ProtocolError::DuplicateUuid(rec.uuid));
            }
            if rec.payload.len() != first.payload.len()
                || rec.payload.modulus() != first.payload.modulus()
            {
                return Err(ProtocolError::PayloadShape(rec.uuid));
            }
        }
        Ok(())
    }
}

/// The bijection from priority to client UUID. `order[i - 1]` is the UUID of
/// the priority-`i` client.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PriorityMap {
    order: Vec<Uuid>,
}

impl PriorityMap {
    pub fn new(order: Vec<Uuid>) -> Result<Self, ProtocolError> {
        let mut seen = BTreeSet::new();
        for u in &order {
            if !seen.insert(*u) {
                return Err(ProtocolError::DuplicateUuid(*u));
            }
        }
        if order.is_empty() {
            return Err(ProtocolError::EmptyCci);
        }
        Ok(PriorityMap { order })
    }

    /// Builds the map from a permutation: row `r` of `cci` gets priority
    /// `priorities[r]`.
    pub fn from_permutation(cci: &CciMatrix, priorities: &[u32]) -> Result<Self, ProtocolError> {
        let n = cci.len();
        if priorities.len() != n {
            return Err(ProtocolError::NotAPermutation);
        }
        let mut order = vec![None; n];
        for (rec, &p) in cci.records.iter().zip(priorities) {
            let slot = (p as usize)
                .checked_sub(1)
                .and_then(|i| order.get_mut(i))
                .ok_or(ProtocolError::NotAPermutation)?;
            if slot.replace(rec.uuid).is_some() {
                return Err(ProtocolError::NotAPermutation);
            }
        }
        PriorityMap::new(order.into_iter().map(|u| u.expect("filled")).collect())
    }

    pub fn identity(cci: &CciMatrix) -> Result<Self, ProtocolError> {
        PriorityMap::new(cci.records.iter().map(|r| r.uuid).collect())
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn uuid_of(&self, priority: u32) -> Option<Uuid> {
        (priority as usize)
            .checked_sub(1)
            .and_then(|i| self.order.get(i))
            .copied()
    }

    pub fn priority_of(&self, uuid: &Uuid) -> Option<u32> {
        self.order
            .iter()
            .position(|u| u == uuid)
            .map(|i| i as u32 + 1)
    }

    pub fn ordered_uuids(&self) -> &[Uuid] {
        &self.order
    }
}

/// Public output of setup.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BroadcastPacket {
    /// Consensus-locked vector, the starting state of the relay chain.
    pub locked: FieldVector,
    /// Step checksums for chain positions `1..=N`, in order.
    pub step_checksums: Vec<StepChecksum>,
    pub priority_map: PriorityMap,
    /// Salted commitments to each `O_i`, ordered by priority.
    pub commitments: Vec<Digest>,
    pub params: ProtocolParams,
    /// All `O_i` in priority order; present only with `broadcast_lo`.
    pub obfuscated: Option<Vec<FieldVector>>,
}

impl BroadcastPacket {
    pub fn step_checksum(&self, position: u32) -> Option<&StepChecksum> {
        (position as usize)
            .checked_sub(1)
            .and_then(|i| self.step_checksums.get(i))
    }

    pub fn commitment(&self, priority: u32) -> Option<&Digest> {
        (priority as usize)
            .checked_sub(1)
            .and_then(|i| self.commitments.get(i))
    }

    pub fn digest(&self) -> Digest {
        checksum::sha3(&self.to_bytes())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::document();
        w.field(|f| {
            f.vector(&self.locked);
        });
        w.field(|f| {
            f.u32(self.step_checksums.len() as u32);
            for s in &self.step_checksums {
                f.u32(s.index).bytes(&s.digest);
            }
        });
        w.field(|f| {
            f.u32(self.priority_map.len() as u32);
            for u in self.priority_map.ordered_uuids() {
                f.bytes(u.as_bytes());
            }
        });
        w.field(|f| {
            f.u32(self.commitments.len() as u32);
            for c in &self.commitments {
                f.bytes(c);
            }
        });
        w.field(|f| self.params.write(f));
        w.field(|f| {
            let lo = self.obfuscated.as_deref().unwrap_or(&[]);
            f.u32(lo.len() as u32);
            for o in lo {
                f.vector(o);
            }
        });
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::document(bytes)?;
        let mut locked = r.field("locked")?;
        let mut sigma = r.field("step_checksums")?;
        let mut prio = r.field("priority_map")?;
        let mut comm = r.field("commitments")?;
        let mut params_r = r.field("params")?;
        let mut lo = r.field("obfuscated")?;
        r.finish()?;

        let params = ProtocolParams::read(&mut params_r)?;
        params_r.finish()?;
        let m = params.modulus;

        let locked_v = locked.vector(m)?;
        locked.finish()?;

        let count = sigma.u32("step checksum count")?;
        let step_checksums = (0..count)
            .map(|_| {
                Ok(StepChecksum {
                    index: sigma.u32("step index")?,
                    digest: sigma.array("step digest")?,
                })
            })
            .collect::<Result<Vec<_>, WireError>>()?;
        sigma.finish()?;

        let count = prio.u32("priority count")?;
        let order = (0..count)
            .map(|_| Ok(Uuid::from_bytes(prio.array("uuid")?)))
            .collect::<Result<Vec<_>, WireError>>()?;
        prio.finish()?;
        let priority_map =
            PriorityMap::new(order).map_err(|e| WireError::invalid("priority_map", e))?;

        let count = comm.u32("commitment count")?;
        let commitments = (0..count)
            .map(|_| comm.array("commitment"))
            .collect::<Result<Vec<_>, WireError>>()?;
        comm.finish()?;

        let count = lo.u32("obfuscated count")?;
        let obfuscated_v = (0..count)
            .map(|_| lo.vector(m))
            .collect::<Result<Vec<_>, _>>()?;
        lo.finish()?;
        let obfuscated = params.broadcast_lo.then_some(obfuscated_v);

        let packet = BroadcastPacket {
            locked: locked_v,
            step_checksums,
            priority_map,
            commitments,
            params,
            obfuscated,
        };
        packet
            .check_shape()
            .map_err(|e| WireError::invalid("packet", e))?;
        Ok(packet)
    }

    /// Counts and lengths agree with the parameters.
    pub fn check_shape(&self) -> Result<(), ProtocolError> {
        let n = self.params.n_clients as usize;
        let d = self.params.dim as usize;
        let bad = |what: &str| {
            Err(ProtocolError::InvalidParams(format!(
                "packet {what} inconsistent with params"
            )))
        };
        if self.locked.len() != d || self.locked.modulus() != self.params.modulus {
            return bad("locked vector");
        }
        if self.step_checksums.len() != n
            || self
                .step_checksums
                .iter()
                .enumerate()
                .any(|(i, s)| s.index as usize != i + 1)
        {
            return bad("step checksums");
        }
        if self.priority_map.len() != n || self.commitments.len() != n {
            return bad("client count");
        }
        match &self.obfuscated {
            Some(lo) if lo.len() != n || lo.iter().any(|o| o.len() != d) => bad("obfuscated list"),
            Some(_) if !self.params.broadcast_lo => bad("obfuscated list"),
            None if self.params.broadcast_lo => bad("obfuscated list"),
            _ => Ok(()),
        }
    }
}

/// MAC keys a client shares with the parties it talks to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelKeys {
    pub coordinator: MacKey,
    pub board: MacKey,
    pub predecessor: Option<MacKey>,
    pub successor: Option<MacKey>,
}

/// Private setup material for a single client.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientEnvelope {
    priority: u32,
    consensus: ConsensusKey,
    obfuscation: ObfuscationKey,
    obfuscated: FieldVector,
    salt: Salt,
    keys: ChannelKeys,
    packet_digest: Digest,
}

impl ClientEnvelope {
    /// Assembles an envelope, checking `O_i = lambda_i * D_i + r_i` against
    /// the payload it was derived from. The payload is not retained.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        priority: u32,
        consensus: ConsensusKey,
        obfuscation: ObfuscationKey,
        obfuscated: FieldVector,
        salt: Salt,
        keys: ChannelKeys,
        packet_digest: Digest,
        payload: &FieldVector,
    ) -> Result<Self, ProtocolError> {
        let expect = payload.scale(obfuscation.lambda())?.add(obfuscation.r())?;
        if expect != obfuscated {
            return Err(ProtocolError::EnvelopeMismatch(priority));
        }
        Ok(ClientEnvelope {
            priority,
            consensus,
            obfuscation,
            obfuscated,
            salt,
            keys,
            packet_digest,
        })
    }

    pub fn priority(&self) -> u32 {
        self.priority
    }

    pub fn theta(&self) -> OpCode {
        self.consensus.op()
    }

    pub fn consensus_key(&self) -> &ConsensusKey {
        &self.consensus
    }

    pub fn obfuscation_key(&self) -> &ObfuscationKey {
        &self.obfuscation
    }

    pub fn obfuscated(&self) -> &FieldVector {
        &self.obfuscated
    }

    pub fn salt(&self) -> &Salt {
        &self.salt
    }

    pub fn keys(&self) -> &ChannelKeys {
        &self.keys
    }

    pub fn packet_digest(&self) -> &Digest {
        &self.packet_digest
    }

    pub fn modulus(&self) -> Modulus {
        self.obfuscated.modulus()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::document();
        w.field(|f| {
            f.u32(self.priority);
        });
        w.field(|f| {
            f.u64(self.modulus().value());
        });
        w.field(|f| {
            f.u8(self.consensus.op().to_byte());
        });
        w.field(|f| {
            f.vector(self.consensus.key());
        });
        w.field(|f| {
            f.u64(self.obfuscation.lambda().value());
        });
        w.field(|f| {
            f.vector(self.obfuscation.r());
        });
        w.field(|f| {
            f.vector(&self.obfuscated);
        });
        w.field(|f| {
            f.bytes(&self.salt);
        });
        w.field(|f| {
            f.bytes(self.keys.coordinator.as_bytes());
            f.bytes(self.keys.board.as_bytes());
            for k in [&self.keys.predecessor, &self.keys.successor] {
                match k {
                    Some(k) => f.u8(1).bytes(k.as_bytes()),
                    None => f.u8(0),
                };
            }
        });
        w.field(|f| {
            f.bytes(&self.packet_digest);
        });
        w.finish()
    }

    /// Decodes an envelope. The affine relation cannot be rechecked here
    /// (the payload is gone), so only structural invariants are enforced.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::document(bytes)?;
        let priority = {
            let mut f = r.field("priority")?;
            let v = f.u32("priority")?;
            f.finish()?;
            v
        };
        let modulus = {
            let mut f = r.field("modulus")?;
            let v = Modulus::new(f.u64("modulus")?)?;
            f.finish()?;
            v
        };
        let op = {
            let mut f = r.field("theta")?;
            let b = f.u8("theta")?;
            f.finish()?;
            OpCode::from_byte(b).ok_or_else(|| WireError::invalid("theta", b))?
        };
        let mut vector_field = |what: &'static str| -> Result<FieldVector, WireError> {
            let mut f = r.field(what)?;
            let v = f.vector(modulus)?;
            f.finish()?;
            Ok(v)
        };
        let k = vector_field("consensus key")?;
        let lambda = {
            let mut f = r.field("lambda")?;
            let v = f.element(modulus, "lambda")?;
            f.finish()?;
            v
        };
        let mut vector_field = |what: &'static str| -> Result<FieldVector, WireError> {
            let mut f = r.field(what)?;
            let v = f.vector(modulus)?;
            f.finish()?;
            Ok(v)
        };
        let rvec = vector_field("mask")?;
        let obfuscated = vector_field("obfuscated")?;
        let salt = {
            let mut f = r.field("salt")?;
            let v: [u8; SALT_LEN] = f.array("salt")?;
            f.finish()?;
            v
        };
        let keys = {
            let mut f = r.field("channel keys")?;
            let coordinator = MacKey::from_bytes(f.array("coordinator key")?);
            let board = MacKey::from_bytes(f.array("board key")?);
            let mut optional = || -> Result<Option<MacKey>, WireError> {
                Ok(if f.bool("key present")? {
                    Some(MacKey::from_bytes(f.array("link key")?))
                } else {
                    None
                })
            };
            let predecessor = optional()?;
            let successor = optional()?;
            f.finish()?;
            ChannelKeys {
                coordinator,
                board,
                predecessor,
                successor,
            }
        };
        let packet_digest = {
            let mut f = r.field("packet digest")?;
            let v: Digest = f.array("packet digest")?;
            f.finish()?;
            v
        };
        r.finish()?;

        let consensus =
            ConsensusKey::new(k, op).map_err(|e| WireError::invalid("consensus key", e))?;
        let obfuscation = ObfuscationKey::new(lambda, rvec)
            .map_err(|e| WireError::invalid("obfuscation key", e))?;
        if consensus.key().len() != obfuscated.len() || obfuscation.r().len() != obfuscated.len() {
            return Err(WireError::invalid("envelope", "vector lengths differ"));
        }
        Ok(ClientEnvelope {
            priority,
            consensus,
            obfuscation,
            obfuscated,
            salt,
            keys,
            packet_digest,
        })
    }

    /// Overwrites key material and masked payload.
    pub fn wipe(&mut self) {
        self.consensus.zeroize();
        self.obfuscation.zeroize();
        self.obfuscated.zeroize();
        self.salt.zeroize();
    }
}

/// The chain state in flight: `state` has had `position` decryption layers
/// removed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainState {
    pub state: FieldVector,
    pub position: u32,
    pub producer: Party,
    pub round: u32,
}

impl ChainState {
    pub fn initial(packet: &BroadcastPacket) -> Self {
        ChainState {
            state: packet.locked.clone(),
            position: 0,
            producer: Party::Coordinator,
            round: 0,
        }
    }
}
