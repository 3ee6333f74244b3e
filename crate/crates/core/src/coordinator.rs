//! Offline setup: organize, keygen, obfuscate, encrypt, form lists.
//!
//! The coordinator runs once, hands every client its envelope, publishes the
//! broadcast packet and then retires. In [`SetupMode::Production`] all
//! secrets are wiped before [`run_setup`] returns; [`SetupMode::Audit`]
//! keeps the payloads and intermediate chain states for test oracles.

use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;
use zeroize::Zeroize;

use crate::field::{
    sample_element, sample_vector, FieldError, FieldVector, Modulus, SeededGenerator,
};
use crate::metrics::{self, FieldOps, Phase};
use crate::protocol::{
    commit, step_digest_with, BroadcastPacket, CciMatrix, ChannelKeys, ClientEnvelope,
    ConsensusKey, Digest, HashMode, MacKey, ObfuscationKey, OpCode, PriorityMap, ProtocolError,
    ProtocolParams, Salt, StepChecksum, MAC_KEY_LEN, SALT_LEN,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetupError {
    #[error("uuid {0} has no priority")]
    Unprioritized(Uuid),
    #[error("priority map names uuid {0}, which is not in the contribution index")]
    UnknownUuid(Uuid),
    #[error("{what}: expected {expected}, got {got}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// JSON setup configuration. Protocols built from it use `p = 2^61 - 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupConfig {
    pub n_clients: u32,
    pub dim: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_scale_bits")]
    pub scale_bits: u32,
    #[serde(default = "default_tau")]
    pub tau: u32,
    #[serde(default)]
    pub broadcast_lo: bool,
    #[serde(default)]
    pub hash_full_vector: bool,
}

fn default_scale_bits() -> u32 {
    crate::field::FixedPointCodec::DEFAULT_SCALE_BITS
}

fn default_tau() -> u32 {
    ProtocolParams::DEFAULT_TAU
}

impl SetupConfig {
    pub fn params(&self) -> Result<ProtocolParams, ProtocolError> {
        let params = ProtocolParams {
            n_clients: self.n_clients,
            dim: self.dim,
            modulus: Modulus::MERSENNE_61,
            scale_bits: self.scale_bits,
            tau: self.tau,
            broadcast_lo: self.broadcast_lo,
            hash_full_vector: self.hash_full_vector,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SetupMode {
    #[default]
    Production,
    Audit,
}

/// Secret key tables, indexed by `priority - 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyMaterial {
    pub obfuscation: Vec<ObfuscationKey>,
    pub consensus: Vec<ConsensusKey>,
}

impl KeyMaterial {
    pub fn theta(&self) -> Vec<OpCode> {
        self.consensus.iter().map(ConsensusKey::op).collect()
    }
}

impl Zeroize for KeyMaterial {
    fn zeroize(&mut self) {
        self.obfuscation.iter_mut().for_each(Zeroize::zeroize);
        self.consensus.iter_mut().for_each(Zeroize::zeroize);
    }
}

/// Result of the layered encryption pass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encryption {
    pub locked: FieldVector,
    pub step_checksums: Vec<StepChecksum>,
    /// `chain[j]` is the state after `j` decryption layers: `chain[0]` is the
    /// locked vector, `chain[N]` the sum of the obfuscated payloads.
    pub chain: Vec<FieldVector>,
}

/// Ground truth kept in audit mode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditLog {
    /// Encoded payloads in priority order.
    pub payloads: Vec<FieldVector>,
    pub obfuscated: Vec<FieldVector>,
    pub chain: Vec<FieldVector>,
    pub keys: KeyMaterial,
}

impl AuditLog {
    pub fn obfuscated_sum(&self) -> &FieldVector {
        self.chain.last().expect("chain holds N + 1 states")
    }
}

/// MAC keys for every channel of the instance. `links[i - 1]` joins client
/// `i` and client `i + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyRing {
    pub coordinator: Vec<MacKey>,
    pub board: Vec<MacKey>,
    pub links: Vec<MacKey>,
}

impl KeyRing {
    pub fn channel_keys(&self, priority: u32) -> ChannelKeys {
        let i = priority as usize - 1;
        ChannelKeys {
            coordinator: self.coordinator[i].clone(),
            board: self.board[i].clone(),
            predecessor: i.checked_sub(1).map(|p| self.links[p].clone()),
            successor: self.links.get(i).cloned(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SetupOutput {
    pub packet: BroadcastPacket,
    /// Envelopes in priority order.
    pub envelopes: Vec<ClientEnvelope>,
    pub keyring: KeyRing,
    /// Field operations spent during setup, by phase.
    pub ops: FieldOps,
    pub audit: Option<AuditLog>,
}

impl SetupOutput {
    pub fn params(&self) -> &ProtocolParams {
        &self.packet.params
    }

    pub fn envelope(&self, priority: u32) -> Option<&ClientEnvelope> {
        (priority as usize)
            .checked_sub(1)
            .and_then(|i| self.envelopes.get(i))
    }
}

/// Reorders payloads so that index `i - 1` holds the priority-`i` payload.
pub fn organize(cci: &CciMatrix, priorities: &PriorityMap) -> Result<Vec<FieldVector>, SetupError> {
    cci.validate()?;
    if priorities.len() != cci.len() {
        let missing = cci
            .records
            .iter()
            .find(|r| priorities.priority_of(&r.uuid).is_none())
            .map(|r| r.uuid);
        return match missing {
            Some(u) => Err(SetupError::Unprioritized(u)),
            None => Err(SetupError::CountMismatch {
                what: "priority map entries",
                expected: cci.len(),
                got: priorities.len(),
            }),
        };
    }
    priorities
        .ordered_uuids()
        .iter()
        .map(|u| {
            cci.records
                .iter()
                .find(|r| r.uuid == *u)
                .map(|r| r.payload.clone())
                .ok_or(SetupError::UnknownUuid(*u))
        })
        .collect()
}

/// Draws one client's keys: op code, consensus key, then `lambda` and `r`.
fn client_keys<R: RngCore + ?Sized>(
    rng: &mut R,
    modulus: Modulus,
    dim: usize,
) -> Result<(ObfuscationKey, ConsensusKey), SetupError> {
    let op = OpCode::ALL[(rng.next_u64() & 3) as usize];
    let k = sample_vector(rng, modulus, dim, op.is_multiplicative())?;
    let consensus = ConsensusKey::new(k, op)?;
    let lambda = sample_element(rng, modulus, true);
    let r = sample_vector(rng, modulus, dim, false)?;
    Ok((ObfuscationKey::new(lambda, r)?, consensus))
}

/// Samples key material for `n` clients, one generator stream per client.
pub fn keygen(
    n: usize,
    dim: usize,
    modulus: Modulus,
    master: &SeededGenerator,
) -> Result<KeyMaterial, SetupError> {
    let mut keys = KeyMaterial {
        obfuscation: Vec::with_capacity(n),
        consensus: Vec::with_capacity(n),
    };
    for i in 0..n {
        let mut rng = master.derive("client-keys", i as u64 + 1);
        let (o, c) = client_keys(&mut rng, modulus, dim)?;
        keys.obfuscation.push(o);
        keys.consensus.push(c);
    }
    Ok(keys)
}

/// `O_i = lambda_i * D_i + r_i` for every client.
pub fn obfuscate(
    payloads: &[FieldVector],
    keys: &[ObfuscationKey],
) -> Result<Vec<FieldVector>, SetupError> {
    if payloads.len() != keys.len() {
        return Err(SetupError::CountMismatch {
            what: "obfuscation keys",
            expected: payloads.len(),
            got: keys.len(),
        });
    }
    let _phase = metrics::enter(Phase::Obfuscate);
    payloads
        .iter()
        .zip(keys)
        .map(|(d, k)| Ok(d.scale(k.lambda())?.add(k.r())?))
        .collect()
}

/// Sums the obfuscated payloads, then wraps the sum in complementary layers
/// from priority `N` down to 1, recording the step checksum before each layer.
pub fn encrypt(
    obfuscated: &[FieldVector],
    keys: &[ConsensusKey],
    mode: HashMode,
) -> Result<Encryption, SetupError> {
    let first = obfuscated.first().ok_or(ProtocolError::EmptyCci)?;
    if keys.len() != obfuscated.len() {
        return Err(SetupError::CountMismatch {
            what: "consensus keys",
            expected: obfuscated.len(),
            got: keys.len(),
        });
    }
    let n = obfuscated.len();

    let mut state = FieldVector::zeros(first.modulus(), first.len())?;
    {
        let _phase = metrics::enter(Phase::Aggregate);
        for o in obfuscated {
            state.add_assign(o)?;
        }
    }

    let mut chain = vec![None; n + 1];
    let mut digests = vec![[0u8; 32]; n];
    let _phase = metrics::enter(Phase::Encrypt);
    for i in (1..=n).rev() {
        digests[i - 1] = step_digest_with(&state, mode);
        chain[i] = Some(state.clone());
        let key = &keys[i - 1];
        state.apply_in_place(key.key(), key.op().complement())?;
    }
    chain[0] = Some(state.clone());

    Ok(Encryption {
        locked: state,
        step_checksums: digests
            .into_iter()
            .enumerate()
            .map(|(i, digest)| StepChecksum {
                index: i as u32 + 1,
                digest,
            })
            .collect(),
        chain: chain
            .into_iter()
            .map(|s| s.expect("every position filled"))
            .collect(),
    })
}

fn mac_key(master: &SeededGenerator, label: &str, index: u64) -> MacKey {
    let mut bytes = [0u8; MAC_KEY_LEN];
    master.derive(label, index).fill_bytes(&mut bytes);
    MacKey::from_bytes(bytes)
}

/// Deals one MAC key per client for coordinator and board channels, and one
/// per adjacent pair on the chain.
pub fn deal_channel_keys(n: usize, master: &SeededGenerator) -> KeyRing {
    let per_client = |label| (1..=n as u64).map(|i| mac_key(master, label, i)).collect();
    KeyRing {
        coordinator: per_client("mac-coordinator"),
        board: per_client("mac-board"),
        links: (1..n as u64)
            .map(|i| mac_key(master, "mac-link", i))
            .collect(),
    }
}

fn salts(n: usize, master: &SeededGenerator) -> Vec<Salt> {
    (1..=n as u64)
        .map(|i| {
            let mut s = [0u8; SALT_LEN];
            master.derive("commitment-salt", i).fill_bytes(&mut s);
            s
        })
        .collect()
}

/// Everything `form_lists` needs; the payloads are only used to check the
/// envelopes.
pub struct ListInputs<'a> {
    pub params: ProtocolParams,
    pub priority_map: PriorityMap,
    pub payloads: &'a [FieldVector],
    pub obfuscated: &'a [FieldVector],
    pub keys: &'a KeyMaterial,
    pub encryption: &'a Encryption,
    pub salts: &'a [Salt],
    pub keyring: &'a KeyRing,
}

/// Assembles the broadcast packet and per-client envelopes.
pub fn form_lists(
    inputs: ListInputs<'_>,
) -> Result<(BroadcastPacket, Vec<ClientEnvelope>), SetupError> {
    let commitments: Vec<Digest> = inputs
        .obfuscated
        .iter()
        .zip(inputs.salts)
        .map(|(o, s)| commit(o, s))
        .collect();
    let packet = BroadcastPacket {
        locked: inputs.encryption.locked.clone(),
        step_checksums: inputs.encryption.step_checksums.clone(),
        priority_map: inputs.priority_map,
        commitments,
        params: inputs.params,
        obfuscated: inputs
            .params
            .broadcast_lo
            .then(|| inputs.obfuscated.to_vec()),
    };
    packet.check_shape()?;
    let packet_digest = packet.digest();

    // The envelope constructor re-derives O_i; keep that out of the phase counts.
    let _phase = metrics::enter(Phase::Other);
    let envelopes = (0..inputs.payloads.len())
        .map(|i| {
            let priority = i as u32 + 1;
            ClientEnvelope::new(
                priority,
                inputs.keys.consensus[i].clone(),
                inputs.keys.obfuscation[i].clone(),
                inputs.obfuscated[i].clone(),
                inputs.salts[i],
                inputs.keyring.channel_keys(priority),
                packet_digest,
                &inputs.payloads[i],
            )
            .map_err(SetupError::from)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((packet, envelopes))
}

/// Runs all five setup phases. Key material is drawn from a generator seeded
/// with `seed`; `priorities` fixes the relay order.
pub fn run_setup(
    params: ProtocolParams,
    cci: &CciMatrix,
    priorities: PriorityMap,
    seed: u64,
    mode: SetupMode,
) -> Result<SetupOutput, SetupError> {
    params.validate()?;
    let n = params.n_clients as usize;
    let d = params.dim as usize;
    if cci.len() != n {
        return Err(SetupError::CountMismatch {
            what: "contribution index rows",
            expected: n,
            got: cci.len(),
        });
    }
    if let Some(rec) = cci
        .records
        .iter()
        .find(|r| r.payload.len() != d || r.payload.modulus() != params.modulus)
    {
        return Err(ProtocolError::PayloadShape(rec.uuid).into());
    }

    let before = metrics::snapshot();
    let master = SeededGenerator::from_label("cppdd-setup", seed);

    let mut payloads = organize(cci, &priorities)?;
    let mut keys = keygen(n, d, params.modulus, &master)?;
    let mut obfuscated = obfuscate(&payloads, &keys.obfuscation)?;
    let mut encryption = encrypt(&obfuscated, &keys.consensus, params.hash_mode())?;
    let keyring = deal_channel_keys(n, &master);
    let mut salts = salts(n, &master);

    let (packet, envelopes) = form_lists(ListInputs {
        params,
        priority_map: priorities,
        payloads: &payloads,
        obfuscated: &obfuscated,
        keys: &keys,
        encryption: &encryption,
        salts: &salts,
        keyring: &keyring,
    })?;
    let ops = metrics::snapshot().since(&before);

    let audit = match mode {
        SetupMode::Audit => Some(AuditLog {
            payloads,
            obfuscated,
            chain: encryption.chain,
            keys,
        }),
        SetupMode::Production => {
            payloads.iter_mut().for_each(Zeroize::zeroize);
            obfuscated.iter_mut().for_each(Zeroize::zeroize);
            encryption.chain.iter_mut().for_each(Zeroize::zeroize);
            keys.zeroize();
            salts.zeroize();
            None
        }
    };

    Ok(SetupOutput {
        packet,
        envelopes,
        keyring,
        ops,
        audit,
    })
}
