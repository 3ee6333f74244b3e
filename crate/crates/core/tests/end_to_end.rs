mod common;

use cppdd_core::field::{vec_apply, FieldVector};
use cppdd_core::protocol::{data_checksum, step_digest};
use cppdd_core::simnet::{run, FaultPlan, SimConfig, Simulation};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// Honest setup plus relay: the chain ends at the sum of the obfuscated
    /// payloads, every step digest matches, the data checksum is exact and
    /// every client recovers its own payload.
    #[test]
    fn honest_runs_satisfy_all_correctness_clauses(n in 1u32..=20, d in 1u32..=16, seed in any::<u64>()) {
        let s = common::setup(n, d, seed);
        let audit = s.audit.as_ref().unwrap();

        // Oracle: the plain sum of the audit's obfuscated payloads.
        let m = s.params().modulus;
        let mut sum = vec![0u128; d as usize];
        for o in &audit.obfuscated {
            for (acc, &x) in sum.iter_mut().zip(o.as_slice()) {
                *acc += x as u128;
            }
        }
        let sum = FieldVector::new(m, sum.iter().map(|&x| (x % m.value() as u128) as u64).collect()).unwrap();

        let mut state = s.packet.locked.clone();
        for (i, env) in s.envelopes.iter().enumerate() {
            let k = env.consensus_key();
            state = vec_apply(&state, k.key(), k.op()).unwrap();
            prop_assert_eq!(step_digest(&state), s.packet.step_checksums[i].digest);
        }
        prop_assert_eq!(&state, &sum);

        let dc = data_checksum(&sum, &state).unwrap();
        prop_assert!(dc.ratios.as_slice().iter().all(|&r| r == 1));
        prop_assert_eq!(dc.sum_check.value(), d as u64);

        let mut sim = Simulation::new(&s, FaultPlan::honest(), SimConfig::default()).unwrap();
        let t = sim.run();
        prop_assert!(t.is_success());
        prop_assert_eq!(t.rounds, n + 2);
        prop_assert_eq!(&sim.recover().unwrap(), &audit.payloads);
    }
}

#[test]
fn production_setup_keeps_no_ground_truth() {
    let cci = common::random_cci(3, 2, 1);
    let prio = cppdd_core::protocol::PriorityMap::identity(&cci).unwrap();
    let s = cppdd_core::coordinator::run_setup(
        common::params(3, 2),
        &cci,
        prio,
        1,
        cppdd_core::coordinator::SetupMode::Production,
    )
    .unwrap();
    assert!(s.audit.is_none());
    let t = run(&s, &FaultPlan::honest(), &SimConfig::default()).unwrap();
    assert!(t.is_success());
}
