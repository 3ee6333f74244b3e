use rand_core::{RngCore, SeedableRng};
use sha3::{Digest, Sha3_256};

use super::{FieldElement, FieldError, FieldVector, Modulus};

/// Counter-mode generator: block `i` is `SHA3-256(seed || i_le)`, consumed as
/// four little-endian `u64` words. Output depends only on the seed, so it is
/// reproducible across runs and platforms.
#[derive(Clone, Debug)]
pub struct SeededGenerator {
    seed: [u8; 32],
    counter: u64,
    block: [u8; 32],
    offset: usize,
}

impl SeededGenerator {
    pub fn from_seed_bytes(seed: [u8; 32]) -> Self {
        SeededGenerator {
            seed,
            counter: 0,
            block: [0; 32],
            offset: 32,
        }
    }

    /// Seeds from a labelled 64-bit value, e.g. a configuration seed.
    pub fn from_label(label: &str, seed: u64) -> Self {
        let mut h = Sha3_256::new();
        h.update(label.as_bytes());
        h.update([0u8]);
        h.update(seed.to_le_bytes());
        SeededGenerator::from_seed_bytes(h.finalize().into())
    }

    /// Independent child stream identified by `(label, index)`.
    pub fn derive(&self, label: &str, index: u64) -> SeededGenerator {
        let mut h = Sha3_256::new();
        h.update(label.as_bytes());
        h.update([0u8]);
        h.update(self.seed);
        h.update(index.to_le_bytes());
        SeededGenerator::from_seed_bytes(h.finalize().into())
    }

    fn refill(&mut self) {
        let mut h = Sha3_256::new();
        h.update(self.seed);
        h.update(self.counter.to_le_bytes());
        self.block = h.finalize().into();
        self.counter += 1;
        self.offset = 0;
    }
}

impl RngCore for SeededGenerator {
    fn next_u32(&mut self) -> u32 {
        self.next_u64() as u32
    }

    fn next_u64(&mut self) -> u64 {
        let mut buf = [0u8; 8];
        self.fill_bytes(&mut buf);
        u64::from_le_bytes(buf)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        let mut written = 0;
        while written < dst.len() {
            if self.offset == 32 {
                self.refill();
            }
            let n = (32 - self.offset).min(dst.len() - written);
            dst[written..written + n].copy_from_slice(&self.block[self.offset..self.offset + n]);
            self.offset += n;
            written += n;
        }
    }
}

impl SeedableRng for SeededGenerator {
    type Seed = [u8; 32];

    fn from_seed(seed: Self::Seed) -> Self {
        SeededGenerator::from_seed_bytes(seed)
    }
}

/// Uniform element of `F_p` (or `F_p^*` when `nonzero`), by rejection
/// sampling on masked 64-bit draws.
pub fn sample_element<R: RngCore + ?Sized>(
    rng: &mut R,
    modulus: Modulus,
    nonzero: bool,
) -> FieldElement {
    let p = modulus.value();
    let mask = u64::MAX >> (64 - modulus.bits());
    loop {
        let x = rng.next_u64() & mask;
        if x < p && !(nonzero && x == 0) {
            return FieldElement::new(x, modulus).expect("sampled below p");
        }
    }
}

pub fn sample_vector<R: RngCore + ?Sized>(
    rng: &mut R,
    modulus: Modulus,
    len: usize,
    nonzero: bool,
) -> Result<FieldVector, FieldError> {
    let elems = (0..len)
        .map(|_| sample_element(rng, modulus, nonzero).value())
        .collect();
    FieldVector::new(modulus, elems)
}
