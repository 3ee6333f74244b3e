//! Arithmetic in a prime field `F_p` with a 64-bit-word modulus.
//!
//! Deployments use the Mersenne prime `2^61 - 1`; smaller primes are accepted
//! so that worked examples (e.g. `p = 97`) can be checked by hand.

mod codec;
mod sampling;
mod vector;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use codec::FixedPointCodec;
pub use sampling::{sample_element, sample_vector, SeededGenerator};
pub use vector::{vec_apply, FieldVector};

use crate::metrics;

/// `2^61 - 1`.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("modulus mismatch: {0} vs {1}")]
    ModulusMismatch(u64, u64),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("field vectors must have at least one element")]
    EmptyVector,
    #[error("value {value} is not a canonical representative mod {modulus}")]
    NonCanonical { value: u64, modulus: u64 },
    #[error("modulus {0} is not a prime below 2^63")]
    InvalidModulus(u64),
    #[error("real value {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("scale of {0} bits is not representable under this modulus")]
    InvalidScale(u32),
}

/// A prime modulus below `2^63`, so that the sum of two canonical
/// representatives never overflows a `u64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct Modulus(u64);

impl Modulus {
    pub const MERSENNE_61: Modulus = Modulus(MERSENNE_61);

    pub fn new(p: u64) -> Result<Self, FieldError> {
        if p >= 1 << 63 || !is_prime(p) {
            return Err(FieldError::InvalidModulus(p));
        }
        Ok(Modulus(p))
    }

    #[inline]
    pub fn value(self) -> u64 {
        self.0
    }

    /// Number of bits needed to represent `p - 1`.
    pub fn bits(self) -> u32 {
        64 - (self.0 - 1).leading_zeros()
    }

    #[inline]
    pub fn reduce(self, x: u64) -> u64 {
        x % self.0
    }

    #[inline]
    pub(crate) fn add(self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.0 {
            s - self.0
        } else {
            s
        }
    }

    #[inline]
    pub(crate) fn sub(self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.0 - b
        }
    }

    #[inline]
    pub(crate) fn neg(self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.0 - a
        }
    }

    #[inline]
    pub(crate) fn mul(self, a: u64, b: u64) -> u64 {
        let wide = a as u128 * b as u128;
        if self.0 == MERSENNE_61 {
            // 2^61 = 1 (mod p): fold the high bits onto the low bits twice.
            let folded = (wide & MERSENNE_61 as u128) + (wide >> 61);
            let folded = ((folded & MERSENNE_61 as u128) + (folded >> 61)) as u64;
            if folded >= MERSENNE_61 {
                folded - MERSENNE_61
            } else {
                folded
            }
        } else {
            (wide % self.0 as u128) as u64
        }
    }

    pub(crate) fn pow(self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.0;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse by the extended Euclidean algorithm.
    pub(crate) fn inv(self, a: u64) -> Result<u64, FieldError> {
        if a == 0 {
            return Err(FieldError::ZeroInverse);
        }
        let (mut r0, mut r1) = (self.0 as i128, a as i128);
        let (mut t0, mut t1) = (0i128, 1i128);
        while r1 != 0 {
            let q = r0 / r1;
            (r0, r1) = (r1, r0 - q * r1);
            (t0, t1) = (t1, t0 - q * t1);
        }
        debug_assert_eq!(r0, 1);
        Ok(t0.rem_euclid(self.0 as i128) as u64)
    }

    /// Inverts every element of `values` in place with a single field
    /// inversion (Montgomery's trick). Fails without modifying anything if any
    /// element is zero.
    pub(crate) fn batch_inv(self, values: &mut [u64]) -> Result<(), FieldError> {
        if values.contains(&0) {
            return Err(FieldError::ZeroInverse);
        }
        let mut prefix = Vec::with_capacity(values.len());
        let mut acc = 1u64;
        for &v in values.iter() {
            prefix.push(acc);
            acc = self.mul(acc, v);
        }
        let mut inv = self.inv(acc)?;
        for (v, before) in values.iter_mut().zip(prefix).rev() {
            let orig = *v;
            *v = self.mul(inv, before);
            inv = self.mul(inv, orig);
        }
        Ok(())
    }
}

impl TryFrom<u64> for Modulus {
    type Error = FieldError;

    fn try_from(p: u64) -> Result<Self, Self::Error> {
        Modulus::new(p)
    }
}

impl From<Modulus> for u64 {
    fn from(m: Modulus) -> u64 {
        m.0
    }
}

impl Default for Modulus {
    fn default() -> Self {
        Modulus::MERSENNE_61
    }
}

impl fmt::Display for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Deterministic Miller-Rabin; these bases are exact for all 64-bit inputs.
fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for p in BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mulmod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mulmod(acc, b);
            }
            b = mulmod(b, b);
            e >>= 1;
        }
        acc
    };
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for a in BASES {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Canonical representative of `F_p` tagged with its modulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u64,
    modulus: Modulus,
}

#[allow(clippy::should_implement_trait)]
impl FieldElement {
    pub fn new(value: u64, modulus: Modulus) -> Result<Self, FieldError> {
        if value >= modulus.value() {
            return Err(FieldError::NonCanonical {
                value,
                modulus: modulus.value(),
            });
        }
        Ok(FieldElement { value, modulus })
    }

    /// Reduces an arbitrary `u64` into the field.
    pub fn from_u64(value: u64, modulus: Modulus) -> Self {
        FieldElement {
            value: modulus.reduce(value),
            modulus,
        }
    }

    pub fn zero(modulus: Modulus) -> Self {
        FieldElement { value: 0, modulus }
    }

    pub fn one(modulus: Modulus) -> Self {
        FieldElement {
            value: 1 % modulus.value(),
            modulus,
        }
    }

    #[inline]
    pub fn value(self) -> u64 {
        self.value
    }

    #[inline]
    pub fn modulus(self) -> Modulus {
        self.modulus
    }

    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    fn check(self, other: FieldElement) -> Result<Modulus, FieldError> {
        if self.modulus != other.modulus {
            return Err(FieldError::ModulusMismatch(
                self.modulus.value(),
                other.modulus.value(),
            ));
        }
        Ok(self.modulus)
    }

    pub fn add(self, other: FieldElement) -> Result<Self, FieldError> {
        let m = self.check(other)?;
        metrics::record(1, 0, 0);
        Ok(FieldElement {
            value: m.add(self.value, other.value),
            modulus: m,
        })
    }

    pub fn sub(self, other: FieldElement) -> Result<Self, FieldError> {
        let m = self.check(other)?;
        metrics::record(1, 0, 0);
        Ok(FieldElement {
            value: m.sub(self.value, other.value),
            modulus: m,
        })
    }

    pub fn mul(self, other: FieldElement) -> Result<Self, FieldError> {
        let m = self.check(other)?;
        metrics::record(0, 1, 0);
        Ok(FieldElement {
            value: m.mul(self.value, other.value),
            modulus: m,
        })
    }

    /// Multiplication by the inverse of `other`.
    pub fn div(self, other: FieldElement) -> Result<Self, FieldError> {
        self.mul(other.inv()?)
    }

    pub fn neg(self) -> Self {
        FieldElement {
            value: self.modulus.neg(self.value),
            modulus: self.modulus,
        }
    }

    pub fn inv(self) -> Result<Self, FieldError> {
        let value = self.modulus.inv(self.value)?;
        metrics::record(0, 0, 1);
        Ok(FieldElement {
            value,
            modulus: self.modulus,
        })
    }

    pub fn pow(self, exp: u64) -> Self {
        FieldElement {
            value: self.modulus.pow(self.value, exp),
            modulus: self.modulus,
        }
    }

    /// 8-byte little-endian canonical encoding.
    pub fn to_le_bytes(self) -> [u8; 8] {
        self.value.to_le_bytes()
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.value.fmt(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p97() -> Modulus {
        Modulus::new(97).unwrap()
    }

    fn fe(v: u64) -> FieldElement {
        FieldElement::new(v, p97()).unwrap()
    }

    /// Brute-force inverse: the unique `x` with `a * x = 1 mod p`.
    fn brute_inverse(a: u64, p: u64) -> u64 {
        (1..p).find(|x| (a * x) % p == 1).unwrap()
    }

    #[test]
    fn addition_examples() {
        assert_eq!(fe(55).add(fe(7)).unwrap().value(), 62);
        assert_eq!(fe(55).add(fe(7)).unwrap().value(), 62);
        for x in 0..97 {
            assert_eq!(fe(0).add(fe(x)).unwrap(), fe(x));
        }
        assert_eq!(fe(96).add(fe(1)).unwrap().value(), 0);
    }

    #[test]
    fn modulus_mismatch_is_rejected() {
        let a = fe(3);
        let b = FieldElement::new(3, Modulus::new(101).unwrap()).unwrap();
        assert_eq!(a.add(b), Err(FieldError::ModulusMismatch(97, 101)));
        assert!(a.mul(b).is_err());
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(brute_inverse(3, 97), 65);
        assert_eq!(brute_inverse(4, 97), 73);
        assert_eq!(fe(3).inv().unwrap().value(), 65);
        assert_eq!(fe(4).inv().unwrap().value(), 73);
        assert_eq!(fe(1).inv().unwrap().value(), 1);
        assert_eq!(fe(0).inv(), Err(FieldError::ZeroInverse));
    }

    #[test]
    fn inverse_matches_brute_force_everywhere_mod_97() {
        for a in 1..97 {
            assert_eq!(fe(a).inv().unwrap().value(), brute_inverse(a, 97));
        }
    }

    #[test]
    fn non_canonical_rejected() {
        assert!(FieldElement::new(97, p97()).is_err());
        assert_eq!(FieldElement::from_u64(100, p97()).value(), 3);
    }

    #[test]
    fn modulus_validation() {
        assert!(Modulus::new(MERSENNE_61).is_ok());
        assert!(Modulus::new(91).is_err());
        assert!(Modulus::new(1).is_err());
        assert!(Modulus::new(0).is_err());
        assert!(Modulus::new((1 << 61) + 1).is_err());
        // 2^64 - 59 is prime but too wide for overflow-free addition.
        assert!(Modulus::new(u64::MAX - 58).is_err());
        assert_eq!(Modulus::MERSENNE_61.bits(), 61);
        assert_eq!(p97().bits(), 7);
    }

    #[test]
    fn mersenne_reduction_agrees_with_generic() {
        let m = Modulus::MERSENNE_61;
        let cases = [
            (0, 0),
            (1, MERSENNE_61 - 1),
            (MERSENNE_61 - 1, MERSENNE_61 - 1),
            (1 << 60, 1 << 60),
            (123_456_789_012_345, 987_654_321_098_765),
        ];
        for (a, b) in cases {
            let expect = ((a as u128 * b as u128) % MERSENNE_61 as u128) as u64;
            assert_eq!(m.mul(a, b), expect);
        }
    }

    #[test]
    fn batch_inverse_rejects_zero_untouched() {
        let m = p97();
        let mut v = vec![3, 0, 4];
        assert_eq!(m.batch_inv(&mut v), Err(FieldError::ZeroInverse));
        assert_eq!(v, vec![3, 0, 4]);
        let mut v = vec![3, 4, 1, 96];
        m.batch_inv(&mut v).unwrap();
        assert_eq!(v, vec![65, 73, 1, 96]);
    }

    proptest! {
        #[test]
        fn mul_by_inverse_is_one(a in 1u64..MERSENNE_61) {
            let x = FieldElement::new(a, Modulus::MERSENNE_61).unwrap();
            prop_assert_eq!(x.mul(x.inv().unwrap()).unwrap().value(), 1);
        }

        #[test]
        fn mersenne_mul_matches_u128(a in 0u64..MERSENNE_61, b in 0u64..MERSENNE_61) {
            let expect = ((a as u128 * b as u128) % MERSENNE_61 as u128) as u64;
            prop_assert_eq!(Modulus::MERSENNE_61.mul(a, b), expect);
        }

        #[test]
        fn fermat_agrees_with_euclid(a in 1u64..MERSENNE_61) {
            let m = Modulus::MERSENNE_61;
            prop_assert_eq!(m.inv(a).unwrap(), m.pow(a, MERSENNE_61 - 2));
        }
    }
}
