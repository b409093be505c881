use std::fmt;

use serde::{Deserialize, Serialize};

pub const FRAC_BITS: u32 = 10;

/// Signed 16-bit fixed point with 6 integer bits (sign included) and 10
/// fractional bits. Range is [-32, 32) in steps of 2^-10. All arithmetic
/// saturates; conversions round to nearest, ties to even.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fx16(i16);

impl Fx16 {
    pub const ZERO: Fx16 = Fx16(0);
    pub const ONE: Fx16 = Fx16(1 << FRAC_BITS);
    pub const MAX: Fx16 = Fx16(i16::MAX);
    pub const MIN: Fx16 = Fx16(i16::MIN);
    pub const EPSILON: f64 = 1.0 / (1u32 << FRAC_BITS) as f64;

    pub const fn from_raw(raw: i16) -> Self {
        Self(raw)
    }

    pub const fn raw(self) -> i16 {
        self.0
    }

    pub fn from_f64(v: f64) -> Self {
        if v.is_nan() {
            return Self::ZERO;
        }
        let scaled = (v * (1u32 << FRAC_BITS) as f64).round_ties_even();
        Self(scaled.clamp(i16::MIN as f64, i16::MAX as f64) as i16)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 * Self::EPSILON
    }

    pub fn saturating_add(self, other: Fx16) -> Fx16 {
        Fx16(self.0.saturating_add(other.0))
    }

    pub fn saturating_sub(self, other: Fx16) -> Fx16 {
        Fx16(self.0.saturating_sub(other.0))
    }

    pub fn saturating_mul(self, other: Fx16) -> Fx16 {
        let wide = self.0 as i64 * other.0 as i64;
        Fx16(saturate_i16(round_shift_rne(wide, FRAC_BITS)))
    }

    pub fn relu(self) -> Fx16 {
        Fx16(self.0.max(0))
    }

    /// Pixel intensity `p` maps to `p / 256`.
    pub fn from_pixel(p: u8) -> Fx16 {
        Fx16((p as i16) << (FRAC_BITS - 8))
    }

    /// Inverse of [`Fx16::from_pixel`], rounded and clamped to [0, 255].
    pub fn to_pixel(self) -> u8 {
        round_shift_rne(self.0 as i64, FRAC_BITS - 8).clamp(0, 255) as u8
    }

    /// Transport encoding: the raw bits in the low 16 bits of a word.
    pub fn to_word(self) -> u64 {
        self.0 as u16 as u64
    }

    pub fn from_word(w: u64) -> Fx16 {
        Fx16(w as u16 as i16)
    }
}

impl fmt::Debug for Fx16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fx16({})", self.to_f64())
    }
}

impl fmt::Display for Fx16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// `v / 2^shift` rounded to nearest, ties to even.
pub fn round_shift_rne(v: i64, shift: u32) -> i64 {
    if shift == 0 {
        return v;
    }
    let q = v >> shift;
    let r = v - (q << shift);
    let half = 1i64 << (shift - 1);
    if r > half || (r == half && q & 1 == 1) {
        q + 1
    } else {
        q
    }
}

pub fn saturate_i16(v: i64) -> i16 {
    v.clamp(i16::MIN as i64, i16::MAX as i64) as i16
}
