use serde::{Deserialize, Serialize};

use super::{FieldElement, FieldError, FieldVector, Modulus};

/// Maps reals in `[0, 1]` onto `{0, 1, ..., 2^s}` by rounding `x * 2^s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointCodec {
    scale_bits: u32,
}

impl FixedPointCodec {
    pub const DEFAULT_SCALE_BITS: u32 = 20;
    /// Decoding divides in `f64`; above 52 bits the quotient is no longer exact.
    pub const MAX_SCALE_BITS: u32 = 52;

    /// `2^scale_bits` must stay below `p` so an encoded value never wraps.
    pub fn new(scale_bits: u32, modulus: Modulus) -> Result<Self, FieldError> {
        if scale_bits > Self::MAX_SCALE_BITS || (1u64 << scale_bits) >= modulus.value() {
            return Err(FieldError::InvalidScale(scale_bits));
        }
        Ok(FixedPointCodec { scale_bits })
    }

    pub fn scale_bits(&self) -> u32 {
        self.scale_bits
    }

    fn scale(&self) -> f64 {
        (1u64 << self.scale_bits) as f64
    }

    /// Largest decode error for inputs on or between grid points.
    pub fn resolution(&self) -> f64 {
        1.0 / self.scale()
    }

    pub fn encode(&self, x: f64, modulus: Modulus) -> Result<FieldElement, FieldError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(FieldError::OutOfRange(x));
        }
        FieldElement::new((x * self.scale()).round() as u64, modulus)
    }

    pub fn decode(&self, e: FieldElement) -> f64 {
        e.value() as f64 / self.scale()
    }

    pub fn encode_vector(&self, xs: &[f64], modulus: Modulus) -> Result<FieldVector, FieldError> {
        let elems = xs
            .iter()
            .map(|&x| self.encode(x, modulus).map(FieldElement::value))
            .collect::<Result<Vec<_>, _>>()?;
        FieldVector::new(modulus, elems)
    }

    pub fn decode_vector(&self, v: &FieldVector) -> Vec<f64> {
        v.iter().map(|e| self.decode(e)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn codec() -> FixedPointCodec {
        FixedPointCodec::new(20, Modulus::MERSENNE_61).unwrap()
    }

    #[test]
    fn examples() {
        let m = Modulus::MERSENNE_61;
        assert_eq!(codec().encode(0.5, m).unwrap().value(), 524_288);
        assert_eq!(codec().encode(0.0, m).unwrap().value(), 0);
        assert_eq!(codec().encode(1.0, m).unwrap().value(), 1_048_576);
    }

    #[test]
    fn range_errors() {
        let m = Modulus::MERSENNE_61;
        assert_eq!(codec().encode(1.5, m), Err(FieldError::OutOfRange(1.5)));
        assert!(codec().encode(-0.001, m).is_err());
        assert!(codec().encode(f64::NAN, m).is_err());
    }

    #[test]
    fn scale_must_fit_modulus() {
        let p97 = Modulus::new(97).unwrap();
        assert!(FixedPointCodec::new(6, p97).is_ok());
        assert!(FixedPointCodec::new(7, p97).is_err());
        assert!(FixedPointCodec::new(53, Modulus::MERSENNE_61).is_err());
        assert!(FixedPointCodec::new(0, p97).is_ok());
    }

    #[test]
    fn integer_scale_is_lossless_on_bits() {
        let m = Modulus::MERSENNE_61;
        let c = FixedPointCodec::new(0, m).unwrap();
        for x in [0.0, 1.0] {
            assert_eq!(c.decode(c.encode(x, m).unwrap()), x);
        }
    }

    proptest! {
        #[test]
        fn grid_points_roundtrip_exactly(i in 0u64..=(1 << 20)) {
            let m = Modulus::MERSENNE_61;
            let x = i as f64 / (1u64 << 20) as f64;
            prop_assert_eq!(codec().decode(codec().encode(x, m).unwrap()), x);
        }

        #[test]
        fn roundtrip_error_within_half_step(x in 0.0f64..=1.0) {
            let m = Modulus::MERSENNE_61;
            let err = (codec().decode(codec().encode(x, m).unwrap()) - x).abs();
            prop_assert!(err <= 0.5 * codec().resolution());
        }
    }
}
