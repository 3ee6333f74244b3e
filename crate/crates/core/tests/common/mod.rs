#![allow(dead_code)]

use cppdd_core::coordinator::{run_setup, SetupMode, SetupOutput};
use cppdd_core::field::{sample_vector, Modulus, SeededGenerator};
use cppdd_core::protocol::{CciMatrix, CciRecord, PriorityMap, ProtocolParams};
use uuid::Uuid;

pub fn params(n: u32, d: u32) -> ProtocolParams {
    ProtocolParams {
        n_clients: n,
        dim: d,
        modulus: Modulus::MERSENNE_61,
        scale_bits: 20,
        tau: 3,
        broadcast_lo: false,
        hash_full_vector: false,
    }
}

pub fn random_cci(n: u32, d: u32, seed: u64) -> CciMatrix {
    let mut rng = SeededGenerator::from_label("test-payloads", seed);
    CciMatrix::new(
        (0..n)
            .map(|i| CciRecord {
                uuid: Uuid::from_u128(((seed as u128) << 32) | (i as u128 + 1)),
                payload: sample_vector(&mut rng, Modulus::MERSENNE_61, d as usize, false).unwrap(),
            })
            .collect(),
    )
}

pub fn setup_with(params: ProtocolParams, seed: u64) -> SetupOutput {
    let cci = random_cci(params.n_clients, params.dim, seed);
    let prio = PriorityMap::identity(&cci).unwrap();
    run_setup(params, &cci, prio, seed, SetupMode::Audit).unwrap()
}

pub fn setup(n: u32, d: u32, seed: u64) -> SetupOutput {
    setup_with(params(n, d), seed)
}
