//! Floating-point abstraction so the whole solver instantiates at single or
//! double precision.

use std::fmt;
use std::ops::{AddAssign, MulAssign, SubAssign};

use crate::params::Precision;

pub trait Scalar:
    num_traits::Float
    + AddAssign
    + SubAssign
    + MulAssign
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    const BYTES: usize;
    const PRECISION: Precision;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    /// Append the little-endian wire encoding to `out`.
    fn write_le(self, out: &mut Vec<u8>);
    /// Decode from the first `Self::BYTES` bytes of `b`.
    fn read_le(b: &[u8]) -> Self;
}

impl Scalar for f64 {
    const BYTES: usize = 8;
    const PRECISION: Precision = Precision::Dp;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline]
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    #[inline]
    fn read_le(b: &[u8]) -> Self {
        f64::from_le_bytes(b[..8].try_into().unwrap())
    }
}

impl Scalar for f32 {
    const BYTES: usize = 4;
    const PRECISION: Precision = Precision::Sp;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    #[inline]
    fn read_le(b: &[u8]) -> Self {
        f32::from_le_bytes(b[..4].try_into().unwrap())
    }
}
