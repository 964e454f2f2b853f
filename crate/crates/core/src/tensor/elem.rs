//! Scalar element types the engine runs on: f32 for training, f64 for
//! verification (finite-difference gradient checks).

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// On-disk dtype codes for the raw tensor format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    F64 = 1,
}

impl DType {
    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<DType> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }
}

pub trait Elem:
    Copy
    + Clone
    + Debug
    + Display
    + PartialOrd
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
{
    const DTYPE: DType;
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn is_finite(self) -> bool;
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn max_with(self, other: Self) -> Self;
    fn min_with(self, other: Self) -> Self;
    /// Gauss error function, used by the exact GELU.
    fn erf(self) -> Self;
    fn to_le_bytes(self) -> Vec<u8>;
    fn from_le_slice(bytes: &[u8]) -> Self;
    fn byte_width() -> usize;
}

impl Elem for f32 {
    const DTYPE: DType = DType::F32;
    const ZERO: f32 = 0.0;
    const ONE: f32 = 1.0;

    fn from_f64(v: f64) -> f32 {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
    fn abs(self) -> f32 {
        f32::abs(self)
    }
    fn sqrt(self) -> f32 {
        f32::sqrt(self)
    }
    fn exp(self) -> f32 {
        f32::exp(self)
    }
    fn powi(self, n: i32) -> f32 {
        f32::powi(self, n)
    }
    fn max_with(self, other: f32) -> f32 {
        f32::max(self, other)
    }
    fn min_with(self, other: f32) -> f32 {
        f32::min(self, other)
    }
    fn erf(self) -> f32 {
        // Route through the f64 implementation; accurate to f32 ulp.
        libm::erf(self as f64) as f32
    }
    fn to_le_bytes(self) -> Vec<u8> {
        f32::to_le_bytes(self).to_vec()
    }
    fn from_le_slice(bytes: &[u8]) -> f32 {
        f32::from_le_bytes(bytes.try_into().expect("4-byte f32"))
    }
    fn byte_width() -> usize {
        4
    }
}

impl Elem for f64 {
    const DTYPE: DType = DType::F64;
    const ZERO: f64 = 0.0;
    const ONE: f64 = 1.0;

    fn from_f64(v: f64) -> f64 {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn sqrt(self) -> f64 {
        f64::sqrt(self)
    }
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    fn powi(self, n: i32) -> f64 {
        f64::powi(self, n)
    }
    fn max_with(self, other: f64) -> f64 {
        f64::max(self, other)
    }
    fn min_with(self, other: f64) -> f64 {
        f64::min(self, other)
    }
    fn erf(self) -> f64 {
        libm::erf(self)
    }
    fn to_le_bytes(self) -> Vec<u8> {
        f64::to_le_bytes(self).to_vec()
    }
    fn from_le_slice(bytes: &[u8]) -> f64 {
        f64::from_le_bytes(bytes.try_into().expect("8-byte f64"))
    }
    fn byte_width() -> usize {
        8
    }
}
