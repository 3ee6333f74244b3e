use std::fmt;

use serde::{Deserialize, Serialize};

/// Element-wise layer operation. Division multiplies by the modular inverse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpCode {
    Add,
    Sub,
    Mul,
    Div,
}

impl OpCode {
    pub const ALL: [OpCode; 4] = [OpCode::Add, OpCode::Sub, OpCode::Mul, OpCode::Div];

    /// The operation that cancels this one.
    pub fn complement(self) -> OpCode {
        match self {
            OpCode::Add => OpCode::Sub,
            OpCode::Sub => OpCode::Add,
            OpCode::Mul => OpCode::Div,
            OpCode::Div => OpCode::Mul,
        }
    }

    /// Whether keys bound to this op must be elementwise nonzero.
    pub fn is_multiplicative(self) -> bool {
        matches!(self, OpCode::Mul | OpCode::Div)
    }

    /// Wire byte: 0..3 for `+ - * /`.
    pub fn to_byte(self) -> u8 {
        self as u8
    }

    pub fn from_byte(b: u8) -> Option<OpCode> {
        OpCode::ALL.get(b as usize).copied()
    }

    pub fn symbol(self) -> char {
        match self {
            OpCode::Add => '+',
            OpCode::Sub => '-',
            OpCode::Mul => '*',
            OpCode::Div => '/',
        }
    }
}

impl fmt::Display for OpCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_table() {
        assert_eq!(OpCode::Add.complement(), OpCode::Sub);
        assert_eq!(OpCode::Sub.complement(), OpCode::Add);
        assert_eq!(OpCode::Mul.complement(), OpCode::Div);
        assert_eq!(OpCode::Div.complement(), OpCode::Mul);
    }

    #[test]
    fn complement_is_involution() {
        for op in OpCode::ALL {
            assert_eq!(op.complement().complement(), op);
            assert_ne!(op.complement(), op);
        }
    }

    #[test]
    fn byte_codes() {
        for (i, op) in OpCode::ALL.into_iter().enumerate() {
            assert_eq!(op.to_byte(), i as u8);
            assert_eq!(OpCode::from_byte(i as u8), Some(op));
        }
        assert_eq!(OpCode::from_byte(4), None);
    }
}
