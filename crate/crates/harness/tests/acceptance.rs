//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cppdd_core::client::ClientPhase;
use cppdd_core::coordinator::{keygen, obfuscate, SetupMode};
use cppdd_core::field::{
    vec_apply, FieldElement, FieldVector, FixedPointCodec, Modulus, SeededGenerator,
};
use cppdd_core::protocol::{
    mac_tag, mac_verify, step_digest, step_digest_with, HashMode, MacKey, OpCode,
};
use cppdd_core::simnet::{Behavior, FaultPlan, SimConfig, Simulation};
use cppdd_harness::experiments::{accounting, correctness, detection, recovery, scalability};
use cppdd_harness::instance::{build_instance, trial_seed};
use cppdd_harness::stats::chi_square_uniform;
use cppdd_harness::{ExperimentConfig, ExperimentKind, PayloadSource};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

const CORRECTNESS_BUDGET: Duration = Duration::from_secs(60);
const DETECTION_BUDGET: Duration = Duration::from_secs(120);
const DETECTION_TRIALS: u32 = 1000;
const LOCALITY_N: u32 = 10;
const LOCALITY_TRIALS_PER_POSITION: u64 = 20;
const ROUND_NS: [u32; 4] = [1, 5, 50, 500];
const SCALABILITY_TRIALS: u32 = 5;
const MAX_RETRIES_TESTED: u32 = 6;
const RECOVERY_BOUND: f64 = 9.5367431640625e-7; // 2^-20
const PROPERTY_CASES: u32 = 1000;
const CHI_KEYS: usize = 10_000;
const CHI_BUCKETS: usize = 16;
const CHI_MIN_P: f64 = 0.01;
/// kind, from, to, seq, round, body length, tag; then position and vector length.
const RELAY_OVERHEAD: u64 = 1 + 4 + 4 + 8 + 4 + 4 + 16 + 4 + 4;

type Verdict = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Verdict);

fn defaults(kind: ExperimentKind) -> ExperimentConfig {
    ExperimentConfig::defaults(kind)
}

fn sample_digits() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/sample_digits.csv")
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn c1_correctness() -> Verdict {
    let cfg = defaults(ExperimentKind::Correctness);
    let (result, took) = timed(|| correctness::run(&cfg));
    let result = result.map_err(|e| e.to_string())?;
    let good = result.rows.iter().filter(|r| r.is_correct()).count();
    let total = result.rows.len();
    let expected = cfg.shapes().len() * cfg.trials as usize;
    Ok((
        good == total && total == expected && took < CORRECTNESS_BUDGET,
        format!(
            "{good}/{total} instances over {} shapes in {:.1}s",
            cfg.shapes().len(),
            took.as_secs_f64()
        ),
    ))
}

fn c2_detection() -> Verdict {
    let mut cfg = defaults(ExperimentKind::Detection);
    cfg.trials = DETECTION_TRIALS;
    let (result, took) = timed(|| detection::run(&cfg));
    let result = result.map_err(|e| e.to_string())?;
    let tampered = result.tampered().count();
    let caught = result.tampered().filter(|r| r.detected).count();
    let honest = result.honest().count();
    let false_aborts = result.honest().filter(|r| r.detected).count();
    Ok((
        tampered == DETECTION_TRIALS as usize
            && caught == tampered
            && honest == DETECTION_TRIALS as usize
            && false_aborts == 0
            && took < DETECTION_BUDGET,
        format!(
            "{caught}/{tampered} tampered runs aborted, {false_aborts}/{honest} honest runs aborted, {:.1}s",
            took.as_secs_f64()
        ),
    ))
}

fn c3_locality() -> Verdict {
    let cfg = defaults(ExperimentKind::Detection);
    let dim = 16;
    let mut misses = Vec::new();
    for j in 1..=LOCALITY_N {
        for trial in 0..LOCALITY_TRIALS_PER_POSITION {
            let seed = trial_seed(1, "locality", j, dim, trial);
            let inst = build_instance(
                cfg.params(LOCALITY_N, dim),
                &PayloadSource::Synthetic,
                seed,
                SetupMode::Production,
            )
            .map_err(|e| e.to_string())?;
            let mut rng = SeededGenerator::from_label("locality-delta", seed);
            let delta = detection::sum_changing_delta(&mut rng, Modulus::MERSENNE_61, dim as usize);
            let plan = FaultPlan::honest().with(j, Behavior::TamperState { delta });
            let t = Simulation::new(&inst.setup, plan, SimConfig::default())
                .map_err(|e| e.to_string())?
                .run();
            let issuer = t.abort_notice().map(|a| a.issuer);
            if issuer != Some(detection::expected_detector(j, LOCALITY_N)) {
                misses.push(format!("j={j}: {issuer:?}"));
            }
        }
    }
    let total = LOCALITY_N as u64 * LOCALITY_TRIALS_PER_POSITION;
    Ok((
        misses.is_empty(),
        format!(
            "{}/{total} aborts raised by client j+1 (board for j=N) {}",
            total - misses.len() as u64,
            misses.join(", ")
        ),
    ))
}

fn c4_rounds() -> Verdict {
    let cfg = defaults(ExperimentKind::Correctness);
    let mut seen = Vec::new();
    let mut ok = true;
    for n in ROUND_NS {
        let inst = build_instance(
            cfg.params(n, 8),
            &PayloadSource::Synthetic,
            u64::from(n),
            SetupMode::Production,
        )
        .map_err(|e| e.to_string())?;
        let t = Simulation::new(&inst.setup, FaultPlan::honest(), SimConfig::default())
            .map_err(|e| e.to_string())?
            .run();
        ok &= t.is_success() && t.rounds == n + 2;
        seen.push(format!("N={n}: {}", t.rounds));
    }
    Ok((ok, format!("rounds {} (expected N+2)", seen.join(", "))))
}

fn c5_scalability() -> Verdict {
    let mut cfg = defaults(ExperimentKind::Scalability);
    cfg.trials = SCALABILITY_TRIALS;
    let result = scalability::run(&cfg).map_err(|e| e.to_string())?;
    let fit = result.fit(784).ok_or("no fit")?;
    let spread = result.step_spread(784);
    let at_500 = result
        .rows
        .iter()
        .find(|r| r.n == 500)
        .map_or(f64::NAN, |r| r.total_ms);
    let all_ok = result
        .trials
        .iter()
        .all(|t| t.success && t.rounds == t.n + 2);
    Ok((
        all_ok && fit.r_squared >= scalability::MIN_R_SQUARED && spread < scalability::MAX_STEP_SPREAD,
        format!(
            "R^2 {:.4} (min {}), per-client spread {spread:.3}x (max {}x); N=500 median {at_500:.2} ms vs reference {} ms (not asserted)",
            fit.r_squared,
            scalability::MIN_R_SQUARED,
            scalability::MAX_STEP_SPREAD,
            scalability::REFERENCE_MS_AT_500
        ),
    ))
}

fn c6_accounting() -> Verdict {
    let cfg = defaults(ExperimentKind::Accounting);
    let result = accounting::run(&cfg).map_err(|e| e.to_string())?;
    let (lo, hi) = accounting::RATIO_BAND;
    let mut problems = Vec::new();
    for r in &result.rows {
        if !(lo..=hi).contains(&r.ratio) {
            problems.push(format!("N={} D={} ratio {}", r.n, r.dim, r.ratio));
        }
        if r.obfuscate != 2 * r.nd() {
            problems.push(format!("N={} D={} obfuscate {}", r.n, r.dim, r.obfuscate));
        }
    }
    for dim in &cfg.dims {
        let mut sizes: Vec<u64> = result
            .rows
            .iter()
            .filter(|r| r.dim == *dim)
            .filter_map(|r| r.relay_frame_bytes)
            .collect();
        sizes.dedup();
        if sizes != [RELAY_OVERHEAD + 8 * u64::from(*dim)] {
            problems.push(format!("D={dim} relay sizes {sizes:?}"));
        }
    }
    let ratios: Vec<f64> = result.rows.iter().map(|r| r.ratio).collect();
    Ok((
        problems.is_empty(),
        format!(
            "{} shapes; layer/4ND in [{:.3}, {:.3}]; obfuscation 2ND; relay = {} + 8D bytes {}",
            result.rows.len(),
            ratios.iter().copied().fold(f64::MAX, f64::min),
            ratios.iter().copied().fold(f64::MIN, f64::max),
            RELAY_OVERHEAD,
            problems.join("; ")
        ),
    ))
}

fn c7_retry() -> Verdict {
    let cfg = defaults(ExperimentKind::Correctness);
    let n = 5;
    let mut ok = true;
    let mut seen = Vec::new();
    // A middle relay link and the release link to the board.
    for position in [2, n] {
        for k in 0..=MAX_RETRIES_TESTED {
            let inst = build_instance(
                cfg.params(n, 8),
                &PayloadSource::Synthetic,
                u64::from(k),
                SetupMode::Production,
            )
            .map_err(|e| e.to_string())?;
            let plan = FaultPlan::honest().with(position, Behavior::TransientCorrupt { count: k });
            let t = Simulation::new(&inst.setup, plan, SimConfig::default())
                .map_err(|e| e.to_string())?
                .run();
            let retries = t.counters.total_retries();
            let pass = if k <= cfg.tau {
                t.is_success() && retries == k
            } else {
                !t.is_success()
            };
            ok &= pass;
            let verdict = if t.is_success() { "ok" } else { "abort" };
            seen.push(format!("j={position} k={k}:{verdict}/{retries}"));
        }
    }
    Ok((ok, format!("tau={}; {}", cfg.tau, seen.join(" "))))
}

fn c8_recovery() -> Verdict {
    let mut cfg = defaults(ExperimentKind::Recovery);
    cfg.payload = PayloadSource::Csv(sample_digits());
    let result = recovery::run(&cfg).map_err(|e| e.to_string())?;
    let max = result.max_error();
    Ok((
        result.aborted.is_empty() && result.rows.len() == 10 && max <= RECOVERY_BOUND,
        format!(
            "max abs error {max:.3e} over {} clients (bound {RECOVERY_BOUND:.3e})",
            result.rows.len()
        ),
    ))
}

fn run_property<S: Strategy>(
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases: PROPERTY_CASES,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&strategy, test)
        .map_err(|e| format!("{name}: {e}"))
}

fn c9_properties() -> Verdict {
    const P: u64 = cppdd_core::field::MERSENNE_61;
    let m = Modulus::MERSENNE_61;
    let mut failures = Vec::new();
    let mut record = |r: Result<(), String>| {
        if let Err(e) = r {
            failures.push(e);
        }
    };

    record(run_property(
        "inverse op",
        (1usize..32)
            .prop_flat_map(|d| {
                (
                    prop::collection::vec(0..P, d),
                    prop::collection::vec(1..P, d),
                )
            })
            .prop_flat_map(|vk| (Just(vk), prop::sample::select(OpCode::ALL.to_vec()))),
        |((v, k), op)| {
            let v = FieldVector::new(m, v).unwrap();
            let k = FieldVector::new(m, k).unwrap();
            let there = vec_apply(&v, &k, op).unwrap();
            prop_assert_eq!(vec_apply(&there, &k, op.complement()).unwrap(), v);
            Ok(())
        },
    ));
    record(run_property("field inverse", 1..P, |a| {
        let a = FieldElement::new(a, m).unwrap();
        prop_assert_eq!(a.mul(a.inv().unwrap()).unwrap().value(), 1);
        Ok(())
    }));
    record(run_property("codec round trip", 0.0f64..=1.0, |x| {
        let c = FixedPointCodec::new(20, m).unwrap();
        prop_assert!((c.decode(c.encode(x, m).unwrap()) - x).abs() <= 2f64.powi(-21));
        Ok(())
    }));
    record(run_property(
        "checksum determinism",
        prop::collection::vec(0..P, 1..64),
        |v| {
            let a = FieldVector::new(m, v.clone()).unwrap();
            let b = FieldVector::new(m, v).unwrap();
            prop_assert_eq!(step_digest(&a), step_digest(&b));
            prop_assert_eq!(
                step_digest_with(&a, HashMode::FullVector),
                step_digest_with(&b, HashMode::FullVector)
            );
            Ok(())
        },
    ));
    record(run_property(
        "mac flip",
        (
            any::<[u8; 32]>(),
            prop::collection::vec(any::<u8>(), 1..128),
            any::<u64>(),
            any::<usize>(),
        ),
        |(key, msg, seq, bit)| {
            let key = MacKey::from_bytes(key);
            let tag = mac_tag(&key, 3, seq, &msg);
            prop_assert!(mac_verify(&key, 3, seq, &msg, &tag).is_ok());
            let mut flipped = msg.clone();
            let b = bit % (flipped.len() * 8);
            flipped[b / 8] ^= 1 << (b % 8);
            prop_assert!(mac_verify(&key, 3, seq, &flipped, &tag).is_err());
            Ok(())
        },
    ));
    let behavior = prop_oneof![
        Just(Behavior::Honest),
        (1u64..1000).prop_map(|x| Behavior::TamperState { delta: vec![x] }),
        Just(Behavior::WrongKey),
        Just(Behavior::WrongOp),
        Just(Behavior::Withhold),
        (0u32..6).prop_map(|count| Behavior::TransientCorrupt { count }),
        Just(Behavior::WithholdOpening),
    ];
    let cfg = defaults(ExperimentKind::Correctness);
    record(run_property(
        "all or nothing",
        (
            1u32..=6,
            1u32..=4,
            any::<u64>(),
            prop::collection::vec((1u32..=6, behavior), 0..3),
        ),
        |(n, d, seed, faults)| {
            let inst = build_instance(
                cfg.params(n, d),
                &PayloadSource::Synthetic,
                seed,
                SetupMode::Production,
            )
            .unwrap();
            let mut plan = FaultPlan {
                seed,
                ..FaultPlan::honest()
            };
            for (p, b) in faults.into_iter().filter(|(p, _)| *p <= n) {
                plan = plan.with(p, b);
            }
            let mut sim = Simulation::new(&inst.setup, plan, SimConfig::default()).unwrap();
            let t = sim.run();
            let phases: Vec<_> = sim.nodes().iter().map(|c| c.phase()).collect();
            if t.is_success() {
                prop_assert!(phases.iter().all(|&p| p == ClientPhase::Released));
                for (i, payload) in sim.recover().unwrap().iter().enumerate() {
                    prop_assert_eq!(
                        payload,
                        &inst.payloads.cci.records[inst.row_of(i as u32 + 1)].payload
                    );
                }
            } else {
                prop_assert!(phases.iter().all(|&p| p == ClientPhase::Aborted));
                prop_assert!(sim.nodes().iter().all(|c| c.deobfuscate().is_err()));
            }
            Ok(())
        },
    ));

    Ok((
        failures.is_empty(),
        format!(
            "6 suites x {PROPERTY_CASES} cases; {} failing {}",
            failures.len(),
            failures.join("; ")
        ),
    ))
}

fn c10_uniformity() -> Verdict {
    let m = Modulus::MERSENNE_61;
    let p = m.value();
    let payload = FieldVector::new(m, vec![1 << 19]).map_err(|e| e.to_string())?;
    let keys = keygen(
        CHI_KEYS,
        1,
        m,
        &SeededGenerator::from_label("uniformity", 0),
    )
    .map_err(|e| e.to_string())?;
    let masked =
        obfuscate(&vec![payload; CHI_KEYS], &keys.obfuscation).map_err(|e| e.to_string())?;
    let mut counts = [0u64; CHI_BUCKETS];
    for o in &masked {
        counts[(u128::from(o.as_slice()[0]) * CHI_BUCKETS as u128 / u128::from(p)) as usize] += 1;
    }
    let chi = chi_square_uniform(&counts);
    Ok((
        chi.p_value > CHI_MIN_P,
        format!(
            "chi^2 = {:.2} on {} dof, p = {:.4} (min {CHI_MIN_P}) over {CHI_KEYS} keys",
            chi.statistic, chi.dof, chi.p_value
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1 correctness", c1_correctness),
        ("2 detection", c2_detection),
        ("3 locality", c3_locality),
        ("4 round count", c4_rounds),
        ("5 scalability", c5_scalability),
        ("6 accounting", c6_accounting),
        ("7 retry budget", c7_retry),
        ("8 recovery", c8_recovery),
        ("9 properties", c9_properties),
        ("10 uniformity", c10_uniformity),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let (passed, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        println!(
            "{} criterion {name}: {detail}",
            if passed { "PASS" } else { "FAIL" }
        );
        failed += usize::from(!passed);
    }
    println!("acceptance: {}/10 passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
