//! Step digests, data checksums and payload commitments.

use serde::{Deserialize, Serialize};
use sha3::{Digest as _, Sha3_256};

use crate::field::{FieldElement, FieldError, FieldVector};
use crate::metrics::{self, Phase};

pub type Digest = [u8; 32];

/// What the step digest covers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum HashMode {
    /// `H(enc(sum_d L_d))`. Blind to tampering that preserves the element sum.
    #[default]
    ScalarSum,
    /// `H(enc(L))` over the whole canonical vector encoding.
    FullVector,
}

impl HashMode {
    pub fn from_flag(hash_full_vector: bool) -> Self {
        if hash_full_vector {
            HashMode::FullVector
        } else {
            HashMode::ScalarSum
        }
    }
}

pub fn sha3(bytes: &[u8]) -> Digest {
    Sha3_256::digest(bytes).into()
}

/// SHA3-256 over the 8-byte little-endian encoding of `sum_d L_d mod p`.
pub fn step_digest(state: &FieldVector) -> Digest {
    step_digest_with(state, HashMode::ScalarSum)
}

pub fn step_digest_with(state: &FieldVector, mode: HashMode) -> Digest {
    let _phase = metrics::enter(Phase::Checksum);
    match mode {
        HashMode::ScalarSum => sha3(&state.sum().to_le_bytes()),
        HashMode::FullVector => sha3(&state.to_bytes()),
    }
}

/// Per-dimension ratios `(sum_i O_i)_d / L_d` and their sum.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataChecksum {
    pub ratios: FieldVector,
    pub sum_check: FieldElement,
}

impl DataChecksum {
    /// Every ratio is one and the ratios sum to `D mod p`.
    pub fn is_exact(&self) -> bool {
        let m = self.ratios.modulus();
        let d = FieldElement::from_u64(self.ratios.len() as u64, m);
        self.ratios.iter().all(|r| r.value() == 1) && self.sum_check == d
    }

    /// Dimensions whose ratio differs from one.
    pub fn failing_dimensions(&self) -> Vec<usize> {
        self.ratios
            .iter()
            .enumerate()
            .filter(|(_, r)| r.value() != 1)
            .map(|(d, _)| d)
            .collect()
    }
}

/// Computes the data checksum. A zero denominator yields ratio 1 when the
/// numerator is also zero and 0 otherwise.
pub fn data_checksum(
    obfuscated_sum: &FieldVector,
    final_state: &FieldVector,
) -> Result<DataChecksum, FieldError> {
    if obfuscated_sum.modulus() != final_state.modulus() {
        return Err(FieldError::ModulusMismatch(
            obfuscated_sum.modulus().value(),
            final_state.modulus().value(),
        ));
    }
    if obfuscated_sum.len() != final_state.len() {
        return Err(FieldError::LengthMismatch(
            obfuscated_sum.len(),
            final_state.len(),
        ));
    }
    let _phase = metrics::enter(Phase::Checksum);
    let m = final_state.modulus();
    let nonzero: Vec<usize> = (0..final_state.len())
        .filter(|&d| final_state.as_slice()[d] != 0)
        .collect();
    let mut inverses: Vec<u64> = nonzero.iter().map(|&d| final_state.as_slice()[d]).collect();
    m.batch_inv(&mut inverses)?;
    metrics::record(0, nonzero.len() as u64, nonzero.len() as u64);

    let num = obfuscated_sum.as_slice();
    let mut ratios = vec![0u64; final_state.len()];
    for (slot, &d) in nonzero.iter().enumerate() {
        ratios[d] = m.mul(num[d], inverses[slot]);
    }
    for (d, r) in ratios.iter_mut().enumerate() {
        if final_state.as_slice()[d] == 0 {
            *r = u64::from(num[d] == 0);
        }
    }
    let ratios = FieldVector::new(m, ratios)?;
    let sum_check = ratios.sum();
    Ok(DataChecksum { ratios, sum_check })
}

pub const SALT_LEN: usize = 16;
pub type Salt = [u8; SALT_LEN];

/// Salted commitment `SHA3-256(salt || enc(O_i))`.
pub fn commit(obfuscated: &FieldVector, salt: &Salt) -> Digest {
    let mut h = Sha3_256::new();
    h.update(salt);
    h.update(obfuscated.to_bytes());
    h.finalize().into()
}

pub fn verify_commitment(commitment: &Digest, obfuscated: &FieldVector, salt: &Salt) -> bool {
    commit(obfuscated, salt) == *commitment
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Modulus;

    fn p97() -> Modulus {
        Modulus::new(97).unwrap()
    }

    fn v97(xs: &[u64]) -> FieldVector {
        FieldVector::new(p97(), xs.to_vec()).unwrap()
    }

    #[test]
    fn step_digest_hashes_sum_bytes() {
        let expect: Digest = Sha3_256::digest([0x37, 0, 0, 0, 0, 0, 0, 0]).into();
        assert_eq!(step_digest(&v97(&[55])), expect);
        // 30 + 25 = 55 as well.
        assert_eq!(step_digest(&v97(&[30, 25])), expect);
        assert_eq!(step_digest(&v97(&[0, 0, 0])), sha3(&[0; 8]));
    }

    #[test]
    fn sha3_known_answer() {
        // SHA3-256 of the empty string.
        assert_eq!(
            hex::encode(sha3(b"")),
            "a7ffc6f8bf1ed76651c14756a061d662f580ff4de43b49fa82d80a4b80f8434a"
        );
    }

    #[test]
    fn full_vector_mode_separates_equal_sums() {
        let a = v97(&[30, 25]);
        let b = v97(&[25, 30]);
        assert_eq!(step_digest(&a), step_digest(&b));
        assert_ne!(
            step_digest_with(&a, HashMode::FullVector),
            step_digest_with(&b, HashMode::FullVector)
        );
    }

    #[test]
    fn data_checksum_examples() {
        let c = data_checksum(&v97(&[55]), &v97(&[55])).unwrap();
        assert_eq!(c.ratios.as_slice(), &[1]);
        assert_eq!(c.sum_check.value(), 1);
        assert!(c.is_exact());

        let c = data_checksum(&v97(&[0]), &v97(&[0])).unwrap();
        assert_eq!(c.ratios.as_slice(), &[1]);
        assert!(c.is_exact());

        let c = data_checksum(&v97(&[7]), &v97(&[0])).unwrap();
        assert_eq!(c.ratios.as_slice(), &[0]);

        // inv(20) mod 97 = 34, 10 * 34 mod 97 = 49.
        assert_eq!((20 * 34) % 97, 1);
        let c = data_checksum(&v97(&[10]), &v97(&[20])).unwrap();
        assert_eq!(c.ratios.as_slice(), &[49]);
        assert!(!c.is_exact());
        assert_eq!(c.failing_dimensions(), vec![0]);
    }

    #[test]
    fn data_checksum_sum_check_is_dimension() {
        let v = v97(&[3, 0, 96, 12]);
        let c = data_checksum(&v, &v).unwrap();
        assert_eq!(c.sum_check.value(), 4);
        assert!(c.is_exact());
    }

    #[test]
    fn data_checksum_length_mismatch() {
        assert!(data_checksum(&v97(&[1, 2]), &v97(&[1])).is_err());
    }

    #[test]
    fn commitment_binds_value_and_salt() {
        let o = v97(&[35, 2]);
        let salt = [7u8; SALT_LEN];
        let c = commit(&o, &salt);
        assert!(verify_commitment(&c, &o, &salt));
        assert!(!verify_commitment(&c, &v97(&[35, 3]), &salt));
        assert!(!verify_commitment(&c, &o, &[8u8; SALT_LEN]));
    }
}
