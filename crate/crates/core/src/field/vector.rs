use std::fmt;

use zeroize::Zeroize;

use super::{FieldElement, FieldError, Modulus};
use crate::metrics;
use crate::protocol::OpCode;

/// Fixed-length vector over `F_p`. Carries payloads, masks, keys and chain
/// states. Elements are stored as canonical `u64` representatives.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FieldVector {
    modulus: Modulus,
    elems: Vec<u64>,
}

impl FieldVector {
    pub fn new(modulus: Modulus, elems: Vec<u64>) -> Result<Self, FieldError> {
        if elems.is_empty() {
            return Err(FieldError::EmptyVector);
        }
        if let Some(&value) = elems.iter().find(|&&v| v >= modulus.value()) {
            return Err(FieldError::NonCanonical {
                value,
                modulus: modulus.value(),
            });
        }
        Ok(FieldVector { modulus, elems })
    }

    /// Builds a vector by reducing each value mod `p`.
    pub fn from_reduced(
        modulus: Modulus,
        elems: impl IntoIterator<Item = u64>,
    ) -> Result<Self, FieldError> {
        FieldVector::new(
            modulus,
            elems.into_iter().map(|v| modulus.reduce(v)).collect(),
        )
    }

    pub fn from_elements(elems: &[FieldElement]) -> Result<Self, FieldError> {
        let first = elems.first().ok_or(FieldError::EmptyVector)?;
        let modulus = first.modulus();
        let mut out = Vec::with_capacity(elems.len());
        for e in elems {
            if e.modulus() != modulus {
                return Err(FieldError::ModulusMismatch(
                    modulus.value(),
                    e.modulus().value(),
                ));
            }
            out.push(e.value());
        }
        Ok(FieldVector {
            modulus,
            elems: out,
        })
    }

    pub fn zeros(modulus: Modulus, len: usize) -> Result<Self, FieldError> {
        FieldVector::new(modulus, vec![0; len])
    }

    pub fn filled(modulus: Modulus, len: usize, value: u64) -> Result<Self, FieldError> {
        FieldVector::new(modulus, vec![value; len])
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn modulus(&self) -> Modulus {
        self.modulus
    }

    pub fn get(&self, index: usize) -> Option<FieldElement> {
        self.elems.get(index).map(|&value| FieldElement {
            value,
            modulus: self.modulus,
        })
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.elems
    }

    pub fn iter(&self) -> impl Iterator<Item = FieldElement> + '_ {
        self.elems.iter().map(|&value| FieldElement {
            value,
            modulus: self.modulus,
        })
    }

    fn check(&self, other: &FieldVector) -> Result<(), FieldError> {
        if self.modulus != other.modulus {
            return Err(FieldError::ModulusMismatch(
                self.modulus.value(),
                other.modulus.value(),
            ));
        }
        if self.len() != other.len() {
            return Err(FieldError::LengthMismatch(self.len(), other.len()));
        }
        Ok(())
    }

    /// Applies `op` element-wise with `key` on the right, in place.
    pub fn apply_in_place(&mut self, key: &FieldVector, op: OpCode) -> Result<(), FieldError> {
        self.check(key)?;
        let m = self.modulus;
        let d = self.len() as u64;
        match op {
            OpCode::Add => {
                for (x, &k) in self.elems.iter_mut().zip(&key.elems) {
                    *x = m.add(*x, k);
                }
                metrics::record(d, 0, 0);
            }
            OpCode::Sub => {
                for (x, &k) in self.elems.iter_mut().zip(&key.elems) {
                    *x = m.sub(*x, k);
                }
                metrics::record(d, 0, 0);
            }
            OpCode::Mul => {
                for (x, &k) in self.elems.iter_mut().zip(&key.elems) {
                    *x = m.mul(*x, k);
                }
                metrics::record(0, d, 0);
            }
            OpCode::Div => {
                let mut inverses = key.elems.clone();
                m.batch_inv(&mut inverses)?;
                for (x, k) in self.elems.iter_mut().zip(inverses) {
                    *x = m.mul(*x, k);
                }
                // Logical cost: one inversion and one multiplication per element.
                metrics::record(0, d, d);
            }
        }
        Ok(())
    }

    pub fn add(&self, other: &FieldVector) -> Result<FieldVector, FieldError> {
        vec_apply(self, other, OpCode::Add)
    }

    pub fn sub(&self, other: &FieldVector) -> Result<FieldVector, FieldError> {
        vec_apply(self, other, OpCode::Sub)
    }

    pub fn add_assign(&mut self, other: &FieldVector) -> Result<(), FieldError> {
        self.apply_in_place(other, OpCode::Add)
    }

    /// Multiplies every element by the scalar `s`.
    pub fn scale(&self, s: FieldElement) -> Result<FieldVector, FieldError> {
        if s.modulus() != self.modulus {
            return Err(FieldError::ModulusMismatch(
                self.modulus.value(),
                s.modulus().value(),
            ));
        }
        let m = self.modulus;
        let elems = self.elems.iter().map(|&x| m.mul(x, s.value())).collect();
        metrics::record(0, self.len() as u64, 0);
        Ok(FieldVector { modulus: m, elems })
    }

    /// Sum of all elements mod `p`.
    pub fn sum(&self) -> FieldElement {
        let m = self.modulus;
        let value = self.elems.iter().fold(0, |acc, &x| m.add(acc, x));
        metrics::record(self.len() as u64, 0, 0);
        FieldElement { value, modulus: m }
    }

    pub fn is_zero(&self) -> bool {
        self.elems.iter().all(|&x| x == 0)
    }

    /// Canonical encoding: 4-byte little-endian element count followed by each
    /// element as 8 little-endian bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_bytes(&mut out);
        out
    }

    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.elems.len() as u32).to_le_bytes());
        for x in &self.elems {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }

    pub fn encoded_len(&self) -> usize {
        4 + 8 * self.elems.len()
    }

    /// Decodes the canonical encoding, returning the vector and the number of
    /// bytes consumed.
    pub fn read_bytes(modulus: Modulus, bytes: &[u8]) -> Result<(FieldVector, usize), FieldError> {
        let count = bytes
            .get(..4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
            .ok_or(FieldError::EmptyVector)?;
        let end = 4 + count * 8;
        let body = bytes.get(4..end).ok_or(FieldError::LengthMismatch(
            count,
            (bytes.len().saturating_sub(4)) / 8,
        ))?;
        let elems = body
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((FieldVector::new(modulus, elems)?, end))
    }
}

/// Element-wise `v op k`; division multiplies by the modular inverse.
pub fn vec_apply(v: &FieldVector, k: &FieldVector, op: OpCode) -> Result<FieldVector, FieldError> {
    let mut out = v.clone();
    out.apply_in_place(k, op)?;
    Ok(out)
}

impl Zeroize for FieldVector {
    fn zeroize(&mut self) {
        self.elems.zeroize();
    }
}

impl fmt::Debug for FieldVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "FieldVector(p={}, [", self.modulus)?;
        for (i, x) in self.elems.iter().take(SHOWN).enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{x}")?;
        }
        if self.elems.len() > SHOWN {
            write!(f, ", ... {} more", self.elems.len() - SHOWN)?;
        }
        f.write_str("])")
    }
}
