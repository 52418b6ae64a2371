//! Arithmetic modulo the Mersenne prime `2^61 - 1`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

/// The field modulus `p = 2^61 - 1`.
pub const MODULUS: u64 = (1 << 61) - 1;

/// An element of `Z/pZ`, always stored reduced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldElem(u64);

impl FieldElem {
    pub const ZERO: FieldElem = FieldElem(0);
    pub const ONE: FieldElem = FieldElem(1);

    /// Reduces an arbitrary `u64` into the field.
    pub fn new(v: u64) -> Self {
        let r = (v & MODULUS) + (v >> 61);
        FieldElem(if r >= MODULUS { r - MODULUS } else { r })
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        FieldElem(rng.gen_range(0..MODULUS))
    }
}

impl fmt::Display for FieldElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for FieldElem {
    fn from(v: u64) -> Self {
        FieldElem::new(v)
    }
}

impl Add for FieldElem {
    type Output = FieldElem;
    fn add(self, rhs: FieldElem) -> FieldElem {
        let s = self.0 + rhs.0;
        FieldElem(if s >= MODULUS { s - MODULUS } else { s })
    }
}

impl AddAssign for FieldElem {
    fn add_assign(&mut self, rhs: FieldElem) {
        *self = *self + rhs;
    }
}

impl Neg for FieldElem {
    type Output = FieldElem;
    fn neg(self) -> FieldElem {
        if self.0 == 0 {
            self
        } else {
            FieldElem(MODULUS - self.0)
        }
    }
}

impl Sub for FieldElem {
    type Output = FieldElem;
    fn sub(self, rhs: FieldElem) -> FieldElem {
        self + (-rhs)
    }
}

impl Mul for FieldElem {
    type Output = FieldElem;
    fn mul(self, rhs: FieldElem) -> FieldElem {
        let prod = self.0 as u128 * rhs.0 as u128;
        let lo = (prod as u64) & MODULUS;
        let hi = (prod >> 61) as u64;
        let r = lo + hi;
        FieldElem(if r >= MODULUS { r - MODULUS } else { r })
    }
}
