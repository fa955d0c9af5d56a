//! Prime-field arithmetic and fixed-length vectors over `F_q`.
//!
//! Every protocol payload in this crate is a [`FieldVector`]. Elements are
//! always kept as canonical residues in `[0, q)`, so vectors can be compared,
//! hashed and counted directly by the auditor.
//!
//! Only addition and subtraction are provided; the aggregation schemes never
//! multiply.

use std::fmt;

use rand::RngCore;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("vector lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("vectors live in different fields: F_{left} vs F_{right}")]
    SpecMismatch { left: u64, right: u64 },
    #[error("cannot sum an empty collection of vectors")]
    EmptySum,
    #[error("element {value} is not a residue mod {modulus}")]
    ElementOutOfRange { value: u64, modulus: u64 },
    #[error("packed vector truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

/// Witness set that makes Miller-Rabin deterministic for every 64-bit input.
const MR_BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic primality test for `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for &p in &MR_BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &MR_BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// A prime field `F_q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldSpec {
    modulus: u64,
}

impl FieldSpec {
    pub fn new(modulus: u64) -> Result<Self, FieldError> {
        if !is_prime(modulus) {
            return Err(FieldError::NotPrime(modulus));
        }
        Ok(Self { modulus })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// Bytes used for one element on the wire: `ceil(bits(q - 1) / 8)`.
    pub fn element_bytes(&self) -> usize {
        let bits = 64 - (self.modulus - 1).leading_zeros() as usize;
        bits.div_ceil(8)
    }

    pub fn contains(&self, value: u64) -> bool {
        value < self.modulus
    }

    pub fn add(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.modulus && b < self.modulus);
        // q < 2^64 so a + b can overflow only when q > 2^63.
        let (s, carry) = a.overflowing_add(b);
        if carry || s >= self.modulus {
            s.wrapping_sub(self.modulus)
        } else {
            s
        }
    }

    pub fn sub(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.modulus && b < self.modulus);
        if a >= b {
            a - b
        } else {
            self.modulus - (b - a)
        }
    }

    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.modulus - a
        }
    }

    /// Uniform element by rejection sampling on the smallest covering power of two.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> u64 {
        let bits = 64 - (self.modulus - 1).leading_zeros();
        let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
        loop {
            let candidate = rng.next_u64() & mask;
            if candidate < self.modulus {
                return candidate;
            }
        }
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F_{}", self.modulus)
    }
}

/// A vector of canonical residues over a [`FieldSpec`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldVector {
    spec: FieldSpec,
    elems: Vec<u64>,
}

impl FieldVector {
    pub fn new(spec: FieldSpec, elems: Vec<u64>) -> Result<Self, FieldError> {
        if let Some(&value) = elems.iter().find(|&&e| !spec.contains(e)) {
            return Err(FieldError::ElementOutOfRange {
                value,
                modulus: spec.modulus,
            });
        }
        Ok(Self { spec, elems })
    }

    /// Builds a vector by reducing arbitrary integers mod `q`.
    pub fn from_reduced(spec: FieldSpec, values: impl IntoIterator<Item = u64>) -> Self {
        let elems = values.into_iter().map(|v| v % spec.modulus).collect();
        Self { spec, elems }
    }

    pub fn zeros(spec: FieldSpec, len: usize) -> Self {
        Self {
            spec,
            elems: vec![0; len],
        }
    }

    pub fn sample_uniform<R: RngCore + ?Sized>(spec: FieldSpec, len: usize, rng: &mut R) -> Self {
        let elems = (0..len).map(|_| spec.sample(rng)).collect();
        Self { spec, elems }
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn elems(&self) -> &[u64] {
        &self.elems
    }

    pub fn into_elems(self) -> Vec<u64> {
        self.elems
    }

    fn check_compatible(&self, other: &Self) -> Result<(), FieldError> {
        if self.spec != other.spec {
            return Err(FieldError::SpecMismatch {
                left: self.spec.modulus,
                right: other.spec.modulus,
            });
        }
        if self.len() != other.len() {
            return Err(FieldError::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, FieldError> {
        self.check_compatible(other)?;
        let elems = self
            .elems
            .iter()
            .zip(&other.elems)
            .map(|(&a, &b)| self.spec.add(a, b))
            .collect();
        Ok(Self { spec: self.spec, elems })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FieldError> {
        self.check_compatible(other)?;
        let elems = self
            .elems
            .iter()
            .zip(&other.elems)
            .map(|(&a, &b)| self.spec.sub(a, b))
            .collect();
        Ok(Self { spec: self.spec, elems })
    }

    /// Element-wise sum of a nonempty collection.
    pub fn sum<'a, I>(vectors: I) -> Result<Self, FieldError>
    where
        I: IntoIterator<Item = &'a FieldVector>,
    {
        let mut iter = vectors.into_iter();
        let first = iter.next().ok_or(FieldError::EmptySum)?;
        iter.try_fold(first.clone(), |acc, v| acc.add(v))
    }

    /// Appends the little-endian packing of every element to `out`.
    pub fn pack_into(&self, out: &mut Vec<u8>) {
        let width = self.spec.element_bytes();
        for &e in &self.elems {
            out.extend_from_slice(&e.to_le_bytes()[..width]);
        }
    }

    /// Reads `len` packed elements from the front of `bytes`, returning the
    /// vector and the number of bytes consumed.
    pub fn unpack(spec: FieldSpec, len: usize, bytes: &[u8]) -> Result<(Self, usize), FieldError> {
        let width = spec.element_bytes();
        let needed = width * len;
        if bytes.len() < needed {
            return Err(FieldError::Truncated {
                expected: needed,
                found: bytes.len(),
            });
        }
        let mut elems = Vec::with_capacity(len);
        for chunk in bytes[..needed].chunks_exact(width) {
            let mut buf = [0u8; 8];
            buf[..width].copy_from_slice(chunk);
            let value = u64::from_le_bytes(buf);
            if !spec.contains(value) {
                return Err(FieldError::ElementOutOfRange {
                    value,
                    modulus: spec.modulus,
                });
            }
            elems.push(value);
        }
        Ok((Self { spec, elems }, needed))
    }
}

impl fmt::Display for FieldVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, e) in self.elems.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str("]")
    }
}
