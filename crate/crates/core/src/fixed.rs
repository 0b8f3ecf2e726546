//! Shared fixed-point arithmetic model.
//!
//! Every generated nonlinear circuit has a software twin built from the
//! functions here; circuit and twin perform the same operation sequence with
//! the same truncation rules, so they agree input-for-input at the bit level.
//! Raw values are two's-complement integers carried in `i128`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointFormat {
    pub total_bits: usize,
    pub frac_bits: usize,
    pub signed: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("total_bits {0} out of supported range 2..=64")]
    WidthOutOfRange(usize),
    #[error("frac_bits {frac} must be below total_bits {total}")]
    FracTooLarge { frac: usize, total: usize },
}

impl FixedPointFormat {
    pub fn new(total_bits: usize, frac_bits: usize) -> Result<Self, FormatError> {
        if !(2..=64).contains(&total_bits) {
            return Err(FormatError::WidthOutOfRange(total_bits));
        }
        if frac_bits >= total_bits {
            return Err(FormatError::FracTooLarge { frac: frac_bits, total: total_bits });
        }
        Ok(FixedPointFormat { total_bits, frac_bits, signed: true })
    }

    pub fn to_raw(&self, v: f64) -> i128 {
        let scaled = v * (1u128 << self.frac_bits) as f64;
        wrap(scaled.round() as i128, self.total_bits)
    }

    pub fn to_f64(&self, raw: i128) -> f64 {
        raw as f64 / (1u128 << self.frac_bits) as f64
    }

    /// One unit in the last place, as a real value.
    pub fn ulp(&self) -> f64 {
        1.0 / (1u128 << self.frac_bits) as f64
    }
}

/// Reduce to `w` bits, two's-complement signed.
pub fn wrap(v: i128, w: usize) -> i128 {
    let m = 1i128 << w;
    let r = v.rem_euclid(m);
    if r >= m / 2 {
        r - m
    } else {
        r
    }
}

/// Unsigned view of a signed raw value.
pub fn to_unsigned(v: i128, w: usize) -> u128 {
    (v.rem_euclid(1i128 << w)) as u128
}

/// Mirror of the circuit's signed fixed-point multiply: magnitudes are
/// multiplied modulo 2^(w+frac), shifted right by `frac`, truncated toward
/// zero, and the sign is reapplied.
pub fn mul_fixed(a: i128, b: i128, w: usize, frac: usize) -> i128 {
    let wm = w + frac;
    let neg = (a < 0) ^ (b < 0);
    let ma = a.unsigned_abs().rem_euclid(1u128 << wm);
    let mb = b.unsigned_abs().rem_euclid(1u128 << wm);
    let p = ma.wrapping_mul(mb) & ((1u128 << wm) - 1);
    let t = wrap((p >> frac) as i128, w);
    if neg {
        wrap(-t, w)
    } else {
        t
    }
}

/// Mirror of the circuit clamp: lower then upper bound, both inclusive
/// selections by signed comparison.
pub fn clamp(v: i128, lo: i128, hi: i128) -> i128 {
    if v < lo {
        lo
    } else if v >= hi {
        hi
    } else {
        v
    }
}

/// Piecewise-linear table: segment k covers [lo[k], lo[k+1]) with the last
/// segment open above. Coefficients are raw fixed-point values.
#[derive(Debug, Clone)]
pub struct LutTable {
    pub width: usize,
    pub frac: usize,
    pub lo: Vec<i128>,
    pub a: Vec<i128>,
    pub b: Vec<i128>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LutError {
    #[error("table needs at least one segment")]
    Empty,
    #[error("breakpoints must be strictly increasing")]
    NotIncreasing,
}

impl LutTable {
    /// Build a table interpolating `f` linearly through the breakpoints.
    /// `breakpoints` has one more entry than the resulting segment count.
    pub fn from_fn(
        f: impl Fn(f64) -> f64,
        breakpoints: &[f64],
        width: usize,
        frac: usize,
    ) -> Result<Self, LutError> {
        if breakpoints.len() < 2 {
            return Err(LutError::Empty);
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LutError::NotIncreasing);
        }
        let scale = (1u128 << frac) as f64;
        let mut lo = Vec::new();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for seg in breakpoints.windows(2) {
            let (x0, x1) = (seg[0], seg[1]);
            let (y0, y1) = (f(x0), f(x1));
            let slope = (y1 - y0) / (x1 - x0);
            let intercept = y0 - slope * x0;
            lo.push(wrap((x0 * scale).round() as i128, width));
            a.push(wrap((slope * scale).round() as i128, width));
            b.push(wrap((intercept * scale).round() as i128, width));
        }
        Ok(LutTable { width, frac, lo, a, b })
    }

    pub fn segments(&self) -> usize {
        self.lo.len()
    }

    /// Index of the active segment: the largest k >= 1 with x >= lo[k],
    /// else 0. Matches the circuit's selector network.
    pub fn segment_of(&self, x: i128) -> usize {
        let mut k = 0;
        for (i, &l) in self.lo.iter().enumerate().skip(1) {
            if x >= l {
                k = i;
            }
        }
        k
    }

    /// Software twin of the interpolation circuit: a[k]*x + b[k] with the
    /// shared multiply model.
    pub fn eval_model(&self, x: i128) -> i128 {
        let k = self.segment_of(x);
        let p = mul_fixed(self.a[k], x, self.width, self.frac);
        wrap(p + self.b[k], self.width)
    }
}

/// Geometric breakpoints covering [2^lo_exp, 2^hi_exp] with `per_octave`
/// segments per octave.
pub fn geometric_breakpoints(lo_exp: i32, hi_exp: i32, per_octave: usize) -> Vec<f64> {
    let n = ((hi_exp - lo_exp) as usize) * per_octave;
    (0..=n)
        .map(|i| 2f64.powf(lo_exp as f64 + i as f64 / per_octave as f64))
        .collect()
}

/// Uniform breakpoints over [lo, hi].
pub fn uniform_breakpoints(lo: f64, hi: f64, segments: usize) -> Vec<f64> {
    (0..=segments)
        .map(|i| lo + (hi - lo) * i as f64 / segments as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_is_twos_complement() {
        assert_eq!(wrap(255, 8), -1);
        assert_eq!(wrap(-129, 8), 127);
        assert_eq!(wrap(127, 8), 127);
    }

    #[test]
    fn mul_fixed_truncates_toward_zero() {
        // 1.5 * 1.5 = 2.25 at frac=1 -> raw 3*3=9 >> 1 = 4 (2.0)
        assert_eq!(mul_fixed(3, 3, 8, 1), 4);
        // -1.5 * 1.5 -> -4 (toward zero), not -5
        assert_eq!(mul_fixed(-3, 3, 8, 1), -4);
    }

    #[test]
    fn identity_table_is_identity() {
        let t = LutTable::from_fn(|x| x, &[-4.0, 4.0], 16, 8).unwrap();
        assert_eq!(t.segments(), 1);
        for x in [-1000i128, -1, 0, 1, 531] {
            assert_eq!(t.eval_model(x), x);
        }
    }

    #[test]
    fn segment_selection_matches_definition() {
        let t = LutTable::from_fn(|x| x, &[0.0, 1.0, 2.0, 3.0], 16, 0).unwrap();
        assert_eq!(t.segment_of(-5), 0); // below coverage falls into segment 0
        assert_eq!(t.segment_of(0), 0);
        assert_eq!(t.segment_of(1), 1);
        assert_eq!(t.segment_of(2), 2);
        assert_eq!(t.segment_of(99), 2);
    }
}
