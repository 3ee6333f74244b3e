//! Declarative adversary and fault plans.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{sample_vector, FieldVector, SeededGenerator};
use crate::protocol::{ChainState, ClientEnvelope, ProtocolParams};

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "behavior", rename_all = "snake_case")]
pub enum Behavior {
    #[default]
    Honest,
    /// Adds `delta` to the first `delta.len()` elements of the outgoing state.
    TamperState { delta: Vec<u64> },
    /// Applies the layer with a random key instead of its own.
    WrongKey,
    /// Applies the complementary op instead of its own.
    WrongOp,
    /// Never sends its relay state (or release).
    Withhold,
    /// The first `count` relay or release transmissions arrive with a flipped
    /// bit. The node itself is honest.
    TransientCorrupt { count: u32 },
    /// Relays honestly but never posts its opening.
    WithholdOpening,
}

impl Behavior {
    /// Corrupted nodes skip validation and never raise aborts.
    pub fn is_corrupted(&self) -> bool {
        !matches!(self, Behavior::Honest | Behavior::TransientCorrupt { .. })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("plan names priority {0}, outside 1..={1}")]
    UnknownPriority(u32, u32),
    #[error("tamper delta at priority {0} is longer than the dimension")]
    DeltaTooLong(u32),
}

/// Behaviors by client priority; unnamed clients are honest.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FaultPlan {
    #[serde(default)]
    pub behaviors: BTreeMap<u32, Behavior>,
    #[serde(default)]
    pub seed: u64,
}

impl FaultPlan {
    pub fn honest() -> Self {
        FaultPlan::default()
    }

    pub fn with(mut self, priority: u32, behavior: Behavior) -> Self {
        self.behaviors.insert(priority, behavior);
        self
    }

    pub fn behavior(&self, priority: u32) -> &Behavior {
        static HONEST: Behavior = Behavior::Honest;
        self.behaviors.get(&priority).unwrap_or(&HONEST)
    }

    pub fn corrupted(&self) -> BTreeSet<u32> {
        self.behaviors
            .iter()
            .filter(|(_, b)| b.is_corrupted())
            .map(|(&p, _)| p)
            .collect()
    }

    pub fn validate(&self, params: &ProtocolParams) -> Result<(), PlanError> {
        for (&p, b) in &self.behaviors {
            if p == 0 || p > params.n_clients {
                return Err(PlanError::UnknownPriority(p, params.n_clients));
            }
            if let Behavior::TamperState { delta } = b {
                if delta.len() > params.dim as usize {
                    return Err(PlanError::DeltaTooLong(p));
                }
            }
        }
        Ok(())
    }
}

/// Produces what a node with `behavior` actually emits, given the state it
/// received and its honest output. `None` means nothing is sent.
pub fn inject(
    behavior: &Behavior,
    incoming: &ChainState,
    honest: ChainState,
    envelope: &ClientEnvelope,
    rng: &mut SeededGenerator,
) -> Option<ChainState> {
    let relayed = |state| ChainState {
        state,
        ..honest.clone()
    };
    match behavior {
        Behavior::Honest | Behavior::TransientCorrupt { .. } | Behavior::WithholdOpening => {
            Some(honest)
        }
        Behavior::Withhold => None,
        Behavior::TamperState { delta } => {
            let m = honest.state.modulus();
            let mut full = vec![0u64; honest.state.len()];
            for (slot, &x) in full.iter_mut().zip(delta) {
                *slot = m.reduce(x);
            }
            let delta = FieldVector::new(m, full).expect("reduced and non-empty");
            let tampered = honest.state.add(&delta).expect("same shape");
            Some(relayed(tampered))
        }
        Behavior::WrongKey => {
            let k = envelope.consensus_key();
            let m = incoming.state.modulus();
            let fake = sample_vector(rng, m, incoming.state.len(), k.op().is_multiplicative())
                .expect("non-empty");
            Some(relayed(
                crate::field::vec_apply(&incoming.state, &fake, k.op()).expect("same shape"),
            ))
        }
        Behavior::WrongOp => {
            let k = envelope.consensus_key();
            Some(relayed(
                crate::field::vec_apply(&incoming.state, k.key(), k.op().complement())
                    .expect("same shape"),
            ))
        }
    }
}
