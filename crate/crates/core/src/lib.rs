//! Unanimous-release aggregation over a prime field.
//!
//! A one-shot coordinator masks each client's payload, sums the masked
//! payloads and locks the sum under `N` invertible element-wise layers, one
//! per client, applied in reverse priority order. Clients then remove their
//! layer one after another, checking a published digest after every step.
//! Any deviation aborts the whole run before anyone can unmask.
//!
//! * [`field`]: prime-field arithmetic, fixed-point codec, seeded sampling.
//! * [`protocol`]: shared types, checksums, MACs and wire encodings.
//! * [`coordinator`]: the offline setup phases.
//! * [`client`]: the per-client relay state machine.
//! * [`simnet`]: deterministic network, bulletin board and fault injection.
//! * [`metrics`]: logical field-operation counters.

pub mod client;
pub mod coordinator;
pub mod field;
pub mod metrics;
pub mod protocol;
pub mod simnet;
