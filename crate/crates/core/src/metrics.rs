//! Logical field-operation counters.
//!
//! Every vector operation in [`crate::field`] reports how many additions,
//! multiplications and inversions it performed. Counts are attributed to the
//! protocol phase that is current on the calling thread, which lets the
//! experiment harness produce per-phase breakdowns without threading a
//! counter object through every call.
//!
//! Counters are thread-local. A simulation trial runs entirely on one thread,
//! so trials executed on parallel workers never mix their counts.

use std::cell::{Cell, RefCell};
use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

/// Protocol phase that field operations are attributed to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Obfuscate,
    Aggregate,
    Encrypt,
    Decrypt,
    Deobfuscate,
    /// Step digests, data checksums and commitment work.
    Checksum,
    Other,
}

impl Phase {
    pub const ALL: [Phase; 7] = [
        Phase::Obfuscate,
        Phase::Aggregate,
        Phase::Encrypt,
        Phase::Decrypt,
        Phase::Deobfuscate,
        Phase::Checksum,
        Phase::Other,
    ];

    /// Phases whose arithmetic makes up the protocol layers proper. Checksum
    /// bookkeeping is reported separately.
    pub const LAYERS: [Phase; 5] = [
        Phase::Obfuscate,
        Phase::Aggregate,
        Phase::Encrypt,
        Phase::Decrypt,
        Phase::Deobfuscate,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Obfuscate => "obfuscate",
            Phase::Aggregate => "aggregate",
            Phase::Encrypt => "encrypt",
            Phase::Decrypt => "decrypt",
            Phase::Deobfuscate => "deobfuscate",
            Phase::Checksum => "checksum",
            Phase::Other => "other",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Operation counts for a single phase. Subtractions count as additions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    pub adds: u64,
    pub muls: u64,
    pub invs: u64,
}

impl OpCount {
    /// Additions plus multiplications. Inversions are tracked on their own.
    pub fn arithmetic(&self) -> u64 {
        self.adds + self.muls
    }
}

impl Add for OpCount {
    type Output = OpCount;

    fn add(self, rhs: OpCount) -> OpCount {
        OpCount {
            adds: self.adds + rhs.adds,
            muls: self.muls + rhs.muls,
            invs: self.invs + rhs.invs,
        }
    }
}

impl AddAssign for OpCount {
    fn add_assign(&mut self, rhs: OpCount) {
        *self = *self + rhs;
    }
}

/// Snapshot of all per-phase counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldOps {
    per_phase: [OpCount; 7],
}

impl FieldOps {
    pub fn phase(&self, phase: Phase) -> OpCount {
        self.per_phase[phase.index()]
    }

    /// Sum of arithmetic operations across the layer phases.
    pub fn layer_total(&self) -> u64 {
        Phase::LAYERS
            .iter()
            .map(|p| self.phase(*p).arithmetic())
            .sum()
    }

    pub fn total(&self) -> OpCount {
        self.per_phase
            .iter()
            .fold(OpCount::default(), |acc, c| acc + *c)
    }

    /// Counts accumulated since `earlier`.
    pub fn since(&self, earlier: &FieldOps) -> FieldOps {
        let mut out = FieldOps::default();
        for (i, slot) in out.per_phase.iter_mut().enumerate() {
            let a = self.per_phase[i];
            let b = earlier.per_phase[i];
            *slot = OpCount {
                adds: a.adds - b.adds,
                muls: a.muls - b.muls,
                invs: a.invs - b.invs,
            };
        }
        out
    }
}

impl Add for FieldOps {
    type Output = FieldOps;

    fn add(mut self, rhs: FieldOps) -> FieldOps {
        for (slot, other) in self.per_phase.iter_mut().zip(rhs.per_phase) {
            *slot += other;
        }
        self
    }
}

thread_local! {
    static COUNTERS: RefCell<FieldOps> = RefCell::new(FieldOps::default());
    static CURRENT: Cell<Phase> = const { Cell::new(Phase::Other) };
}

pub(crate) fn record(adds: u64, muls: u64, invs: u64) {
    let phase = CURRENT.with(|c| c.get());
    COUNTERS.with(|c| {
        let mut c = c.borrow_mut();
        let slot = &mut c.per_phase[phase.index()];
        slot.adds += adds;
        slot.muls += muls;
        slot.invs += invs;
    });
}

/// Current counter values on this thread.
pub fn snapshot() -> FieldOps {
    COUNTERS.with(|c| *c.borrow())
}

/// Zeroes this thread's counters.
pub fn reset() {
    COUNTERS.with(|c| *c.borrow_mut() = FieldOps::default());
}

/// Attributes operations to `phase` until the guard is dropped, then restores
/// the previous phase.
#[must_use = "the phase reverts when the guard is dropped"]
pub struct PhaseGuard {
    previous: Phase,
}

pub fn enter(phase: Phase) -> PhaseGuard {
    let previous = CURRENT.with(|c| c.replace(phase));
    PhaseGuard { previous }
}

impl Drop for PhaseGuard {
    fn drop(&mut self) {
        CURRENT.with(|c| c.set(self.previous));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_attributes_and_restores() {
        reset();
        {
            let _g = enter(Phase::Encrypt);
            record(3, 2, 1);
            {
                let _inner = enter(Phase::Checksum);
                record(5, 0, 0);
            }
            record(1, 0, 0);
        }
        record(0, 7, 0);
        let s = snapshot();
        assert_eq!(
            s.phase(Phase::Encrypt),
            OpCount {
                adds: 4,
                muls: 2,
                invs: 1
            }
        );
        assert_eq!(s.phase(Phase::Checksum).adds, 5);
        assert_eq!(s.phase(Phase::Other).muls, 7);
        assert_eq!(s.layer_total(), 6);
    }

    #[test]
    fn since_subtracts() {
        reset();
        let before = snapshot();
        let _g = enter(Phase::Decrypt);
        record(10, 10, 0);
        let delta = snapshot().since(&before);
        assert_eq!(delta.phase(Phase::Decrypt).arithmetic(), 20);
    }
}
