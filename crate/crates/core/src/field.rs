//! Arithmetic over a prime field `F_p`.
//!
//! Field elements are stored as `u32` residues in `[0, p)`, which is also the
//! embedding `F_p -> {0, 1, ..., p-1} ⊂ Z` used by Construction A. Primes are
//! capped at `2^15` so every product of two residues fits in a `u32`.

use std::fmt;

use crate::error::{Error, Result};

/// Largest supported modulus.
pub const MAX_PRIME: u32 = 1 << 15;

/// A validated prime modulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Prime(u32);

impl Prime {
    /// Validates `p` by trial division.
    pub fn new(p: u32) -> Result<Self> {
        if p > MAX_PRIME {
            return Err(Error::PrimeTooLarge(p));
        }
        if p < 2 {
            return Err(Error::NotPrime(p));
        }
        let mut d = 2;
        while d * d <= p {
            if p.is_multiple_of(d) {
                return Err(Error::NotPrime(p));
            }
            d += 1;
        }
        Ok(Prime(p))
    }

    #[inline]
    pub fn get(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn as_usize(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn as_i64(self) -> i64 {
        self.0 as i64
    }

    #[inline]
    pub fn add(self, a: u32, b: u32) -> u32 {
        let s = a + b;
        if s >= self.0 {
            s - self.0
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(self, a: u32, b: u32) -> u32 {
        if a >= b {
            a - b
        } else {
            a + self.0 - b
        }
    }

    #[inline]
    pub fn neg(self, a: u32) -> u32 {
        if a == 0 {
            0
        } else {
            self.0 - a
        }
    }

    #[inline]
    pub fn mul(self, a: u32, b: u32) -> u32 {
        (a * b) % self.0
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(self, a: u32) -> Result<u32> {
        let a = a % self.0;
        if a == 0 {
            return Err(Error::ZeroInverse);
        }
        Ok(self.pow(a, self.0 - 2))
    }

    pub fn pow(self, mut base: u32, mut exp: u32) -> u32 {
        let mut acc = 1 % self.0;
        base %= self.0;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Canonical residue of an arbitrary integer, in `[0, p)`.
    #[inline]
    pub fn reduce(self, v: i64) -> u32 {
        v.rem_euclid(self.0 as i64) as u32
    }

    /// Centered representative of a residue, in `(-p/2, p/2]`.
    #[inline]
    pub fn center(self, a: u32) -> i64 {
        let a = a as i64;
        let p = self.0 as i64;
        if 2 * a > p {
            a - p
        } else {
            a
        }
    }
}

impl fmt::Display for Prime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `(a + b) mod p`.
pub fn fadd(a: u32, b: u32, p: Prime) -> u32 {
    p.add(a, b)
}

/// `(a * b) mod p`.
pub fn fmul(a: u32, b: u32, p: Prime) -> u32 {
    p.mul(a, b)
}

/// Inverse of `a` modulo `p`.
pub fn finv(a: u32, p: Prime) -> Result<u32> {
    p.inv(a)
}

/// Coordinate-wise reduction of an integer vector into `[0, p)`.
pub fn mod_p(v: &[i64], p: Prime) -> FieldVec {
    FieldVec {
        elems: v.iter().map(|&x| p.reduce(x)).collect(),
        p,
    }
}

/// A vector over `F_p`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FieldVec {
    elems: Vec<u32>,
    p: Prime,
}

impl FieldVec {
    pub fn new(elems: Vec<u32>, p: Prime) -> Result<Self> {
        if let Some(&value) = elems.iter().find(|&&e| e >= p.get()) {
            return Err(Error::SymbolOutOfRange { value, p: p.get() });
        }
        Ok(FieldVec { elems, p })
    }

    pub fn zeros(len: usize, p: Prime) -> Self {
        FieldVec { elems: vec![0; len], p }
    }

    pub(crate) fn from_raw(elems: Vec<u32>, p: Prime) -> Self {
        debug_assert!(elems.iter().all(|&e| e < p.get()));
        FieldVec { elems, p }
    }

    #[inline]
    pub fn p(&self) -> Prime {
        self.p
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.elems.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[u32] {
        &self.elems
    }

    pub fn into_inner(self) -> Vec<u32> {
        self.elems
    }

    /// The image of the vector under `F_p -> {0..p-1} ⊂ Z`.
    pub fn to_integers(&self) -> Vec<i64> {
        self.elems.iter().map(|&e| e as i64).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.elems.iter().all(|&e| e == 0)
    }
}

impl std::ops::Index<usize> for FieldVec {
    type Output = u32;

    fn index(&self, i: usize) -> &u32 {
        &self.elems[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p13() -> Prime {
        Prime::new(13).unwrap()
    }

    #[test]
    fn primality() {
        assert!(Prime::new(2).is_ok());
        assert!(Prime::new(13).is_ok());
        assert!(Prime::new(32749).is_ok());
        assert!(matches!(Prime::new(1), Err(Error::NotPrime(1))));
        assert!(matches!(Prime::new(0), Err(Error::NotPrime(0))));
        assert!(matches!(Prime::new(15), Err(Error::NotPrime(15))));
        assert!(matches!(Prime::new(65537), Err(Error::PrimeTooLarge(_))));
    }

    #[test]
    fn addition() {
        let p = p13();
        assert_eq!(fadd(7, 9, p), 3);
        for x in 0..13 {
            assert_eq!(fadd(0, x, p), x);
            assert_eq!(fadd(x, p.neg(x), p), 0);
        }
    }

    #[test]
    fn inverses() {
        let p = p13();
        assert_eq!(finv(2, p).unwrap(), 7);
        assert_eq!(finv(1, p).unwrap(), 1);
        assert_eq!(finv(12, p).unwrap(), 12);
        assert!(matches!(finv(0, p), Err(Error::ZeroInverse)));
        for a in 1..13 {
            assert_eq!(fmul(a, finv(a, p).unwrap(), p), 1);
        }
    }

    #[test]
    fn reduction() {
        let p = p13();
        assert_eq!(mod_p(&[14, -1, 0], p).as_slice(), &[1, 12, 0]);
        assert_eq!(mod_p(&[26, 13], p).as_slice(), &[0, 0]);
        let c: Vec<i64> = (0..13).collect();
        assert_eq!(mod_p(&c, p).to_integers(), c);
    }

    #[test]
    fn centered_representatives() {
        let p = p13();
        assert_eq!(p.center(0), 0);
        assert_eq!(p.center(6), 6);
        assert_eq!(p.center(7), -6);
        assert_eq!(p.center(12), -1);
        let p2 = Prime::new(2).unwrap();
        assert_eq!(p2.center(1), 1);
    }

    #[test]
    fn field_vec_rejects_out_of_range() {
        assert!(FieldVec::new(vec![0, 12], p13()).is_ok());
        assert!(matches!(
            FieldVec::new(vec![13], p13()),
            Err(Error::SymbolOutOfRange { value: 13, p: 13 })
        ));
    }

    proptest! {
        #[test]
        fn field_axioms(a in 0u32..13, b in 0u32..13, c in 0u32..13) {
            let p = p13();
            prop_assert_eq!(fadd(a, b, p), fadd(b, a, p));
            prop_assert_eq!(fmul(a, b, p), fmul(b, a, p));
            prop_assert_eq!(fadd(fadd(a, b, p), c, p), fadd(a, fadd(b, c, p), p));
            prop_assert_eq!(fmul(fmul(a, b, p), c, p), fmul(a, fmul(b, c, p), p));
            prop_assert_eq!(p.sub(p.add(a, b), b), a);
            if a != 0 {
                prop_assert_eq!(finv(finv(a, p).unwrap(), p).unwrap(), a);
            }
        }

        #[test]
        fn reduction_is_periodic(v in prop::collection::vec(-1000i64..1000, 1..8),
                                 z in prop::collection::vec(-50i64..50, 8)) {
            let p = p13();
            let shifted: Vec<i64> = v.iter().zip(&z).map(|(x, k)| x + 13 * k).collect();
            prop_assert_eq!(mod_p(&v, p), mod_p(&shifted, p));
        }
    }
}
