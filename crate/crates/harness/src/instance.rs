//! Builds one protocol instance from a configuration and a seed.

use cppdd_core::coordinator::{run_setup, SetupMode, SetupOutput};
use cppdd_core::field::SeededGenerator;
use cppdd_core::protocol::{PriorityMap, ProtocolParams};
use rand::seq::SliceRandom;
use rand::RngCore;

use crate::config::PayloadSource;
use crate::payloads::{load_payloads, Payloads};
use crate::HarnessError;

pub struct Instance {
    pub payloads: Payloads,
    /// `priorities[r]` is the priority assigned to payload row `r`.
    pub priorities: Vec<u32>,
    pub setup: SetupOutput,
}

impl Instance {
    /// Payload row of the client with `priority`.
    pub fn row_of(&self, priority: u32) -> usize {
        self.priorities
            .iter()
            .position(|&p| p == priority)
            .expect("priorities form a permutation")
    }
}

/// A seed for trial `trial` of shape `(n, dim)`, independent across labels.
pub fn trial_seed(base: u64, label: &str, n: u32, dim: u32, trial: u64) -> u64 {
    SeededGenerator::from_label(label, base)
        .derive(&format!("{n}x{dim}"), trial)
        .next_u64()
}

/// Loads payloads, shuffles priorities and runs setup, all from `seed`.
pub fn build_instance(
    params: ProtocolParams,
    source: &PayloadSource,
    seed: u64,
    mode: SetupMode,
) -> Result<Instance, HarnessError> {
    let n = params.n_clients as usize;
    let codec = cppdd_core::field::FixedPointCodec::new(params.scale_bits, params.modulus)?;
    let payloads = load_payloads(source, n, params.dim as usize, &codec, seed)?;
    let mut priorities: Vec<u32> = (1..=params.n_clients).collect();
    priorities.shuffle(&mut SeededGenerator::from_label("priorities", seed));
    let map = PriorityMap::from_permutation(&payloads.cci, &priorities)?;
    let setup = run_setup(params, &payloads.cci, map, seed, mode)?;
    Ok(Instance {
        payloads,
        priorities,
        setup,
    })
}
