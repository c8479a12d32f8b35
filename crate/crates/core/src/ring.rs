//! Fixed-point reals embedded in the ring of integers modulo 2^64.
//!
//! Masking a ring element with a uniformly drawn element yields a uniform
//! element, so every share that leaves a party is a one-time pad of its
//! plaintext. Reals are carried as `round(x * 2^frac_bits)` in two's
//! complement; a raw product of two encodings carries `2 * frac_bits`
//! fractional bits.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use rand::{RngCore, SeedableRng, TryRngCore};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// Default number of fractional bits.
pub const DEFAULT_FRAC_BITS: u32 = 20;

/// An element of Z/2^64 Z. All arithmetic wraps.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RingElement(pub u64);

impl RingElement {
    pub const ZERO: RingElement = RingElement(0);

    #[inline]
    pub fn new(value: u64) -> Self {
        RingElement(value)
    }

    #[inline]
    pub fn value(self) -> u64 {
        self.0
    }

    /// Two's-complement reading, representative in [-2^63, 2^63).
    #[inline]
    pub fn signed(self) -> i64 {
        self.0 as i64
    }

    #[inline]
    pub fn to_le_bytes(self) -> [u8; 8] {
        self.0.to_le_bytes()
    }

    #[inline]
    pub fn from_le_bytes(bytes: [u8; 8]) -> Self {
        RingElement(u64::from_le_bytes(bytes))
    }
}

impl fmt::Debug for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R({})", self.0)
    }
}

impl fmt::Display for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u64> for RingElement {
    fn from(v: u64) -> Self {
        RingElement(v)
    }
}

impl Add for RingElement {
    type Output = RingElement;
    #[inline]
    fn add(self, rhs: RingElement) -> RingElement {
        RingElement(self.0.wrapping_add(rhs.0))
    }
}

impl Sub for RingElement {
    type Output = RingElement;
    #[inline]
    fn sub(self, rhs: RingElement) -> RingElement {
        RingElement(self.0.wrapping_sub(rhs.0))
    }
}

impl Mul for RingElement {
    type Output = RingElement;
    #[inline]
    fn mul(self, rhs: RingElement) -> RingElement {
        RingElement(self.0.wrapping_mul(rhs.0))
    }
}

impl Neg for RingElement {
    type Output = RingElement;
    #[inline]
    fn neg(self) -> RingElement {
        RingElement(self.0.wrapping_neg())
    }
}

impl AddAssign for RingElement {
    #[inline]
    fn add_assign(&mut self, rhs: RingElement) {
        *self = *self + rhs;
    }
}

impl SubAssign for RingElement {
    #[inline]
    fn sub_assign(&mut self, rhs: RingElement) {
        *self = *self - rhs;
    }
}

impl Sum for RingElement {
    fn sum<I: Iterator<Item = RingElement>>(iter: I) -> RingElement {
        iter.fold(RingElement::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a RingElement> for RingElement {
    fn sum<I: Iterator<Item = &'a RingElement>>(iter: I) -> RingElement {
        iter.copied().sum()
    }
}

/// Ring dot product `sum_d a_d * b_d`. Lengths must already agree.
#[inline]
pub fn ring_dot(a: &[RingElement], b: &[RingElement]) -> RingElement {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Fixed-point codec at a given fractional precision.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FixedPointCodec {
    frac_bits: u32,
}

impl Default for FixedPointCodec {
    fn default() -> Self {
        FixedPointCodec {
            frac_bits: DEFAULT_FRAC_BITS,
        }
    }
}

impl FixedPointCodec {
    /// Panics if `frac_bits > 31`; beyond that the real range
    /// `2^(63 - 2 frac_bits)` collapses below one. Zero fractional bits
    /// gives plain integer arithmetic.
    pub fn new(frac_bits: u32) -> Self {
        assert!(
            frac_bits <= 31,
            "frac_bits must be at most 31, got {frac_bits}"
        );
        FixedPointCodec { frac_bits }
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// Reals must satisfy `|x| < range_bound()` to be encodable.
    pub fn range_bound(&self) -> f64 {
        2f64.powi(63 - 2 * self.frac_bits as i32)
    }

    /// Largest per-feature magnitude for which an `n_f`-term dot product of
    /// encodings stays inside the signed 64-bit window.
    pub fn dot_feature_bound(&self, n_f: usize) -> f64 {
        (self.range_bound() / n_f.max(1) as f64).sqrt()
    }

    pub fn encode(&self, x: f64) -> Result<RingElement> {
        encode(x, self.frac_bits)
    }

    pub fn decode(&self, e: RingElement) -> f64 {
        decode(e, self.frac_bits)
    }

    /// Decodes a raw product (or sum of products) of two encodings.
    pub fn decode_product(&self, e: RingElement) -> f64 {
        decode(e, 2 * self.frac_bits)
    }

    /// Inverse of [`decode_product`](Self::decode_product).
    pub fn encode_product(&self, x: f64) -> Result<RingElement> {
        let scaled = (x * 2f64.powi(2 * self.frac_bits as i32)).round();
        if !scaled.is_finite() || scaled.abs() >= 2f64.powi(63) {
            return Err(Error::OutOfRange {
                value: x,
                bound: self.range_bound(),
            });
        }
        Ok(RingElement(scaled as i64 as u64))
    }

    /// Round-to-grid without leaving the reals.
    pub fn quantize(&self, x: f64) -> Result<f64> {
        Ok(self.decode(self.encode(x)?))
    }
}

/// `round(x * 2^frac_bits)` embedded in two's complement.
pub fn encode(x: f64, frac_bits: u32) -> Result<RingElement> {
    let bound = 2f64.powi(63 - 2 * frac_bits as i32);
    if !x.is_finite() || x.abs() >= bound {
        return Err(Error::OutOfRange { value: x, bound });
    }
    let scaled = (x * 2f64.powi(frac_bits as i32)).round();
    Ok(RingElement(scaled as i64 as u64))
}

/// Signed reading of `e` divided by `2^frac_bits`.
pub fn decode(e: RingElement, frac_bits: u32) -> f64 {
    e.signed() as f64 / 2f64.powi(frac_bits as i32)
}

/// Like [`decode`], but reports values whose magnitude exceeds `limit`
/// (an upstream overflow wrapped around the ring).
pub fn decode_checked(e: RingElement, frac_bits: u32, limit: f64) -> Result<f64> {
    let v = decode(e, frac_bits);
    if v.abs() >= limit {
        return Err(Error::OverflowDetected(format!(
            "decoded magnitude {v} at {frac_bits} fractional bits exceeds {limit}"
        )));
    }
    Ok(v)
}

/// Source of uniform ring elements.
///
/// One stream per protocol session per party; streams are not shared.
pub enum RingRng {
    /// Deterministic ChaCha20 stream, for reproducible sessions and tests.
    Seeded(Box<ChaCha20Rng>),
    /// Operating-system entropy.
    Os,
    /// Always yields zero. Audit hook only: disables every mask.
    Zero,
}

impl fmt::Debug for RingRng {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RingRng::Seeded(_) => f.write_str("RingRng::Seeded"),
            RingRng::Os => f.write_str("RingRng::Os"),
            RingRng::Zero => f.write_str("RingRng::Zero"),
        }
    }
}

impl RingRng {
    pub fn seeded(seed: u64) -> Self {
        RingRng::Seeded(Box::new(ChaCha20Rng::seed_from_u64(seed)))
    }

    pub fn from_seed_bytes(seed: [u8; 32]) -> Self {
        RingRng::Seeded(Box::new(ChaCha20Rng::from_seed(seed)))
    }

    pub fn os() -> Self {
        RingRng::Os
    }

    pub fn zero() -> Self {
        RingRng::Zero
    }

    pub fn sample_uniform(&mut self) -> Result<RingElement> {
        match self {
            RingRng::Seeded(rng) => Ok(RingElement(rng.next_u64())),
            RingRng::Os => rand::rngs::OsRng
                .try_next_u64()
                .map(RingElement)
                .map_err(|e| Error::EntropyUnavailable(e.to_string())),
            RingRng::Zero => Ok(RingElement::ZERO),
        }
    }

    pub fn sample_vec(&mut self, len: usize) -> Result<Vec<RingElement>> {
        (0..len).map(|_| self.sample_uniform()).collect()
    }
}
