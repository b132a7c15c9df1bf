//! Overflow-safe complex scalars stored as (mantissa, natural-log exponent).
//!
//! Theta quotients multiply values whose raw magnitudes exceed the double
//! range for modest `Im(tau)`. Every quantity that can pick up a
//! quasi-periodicity factor is therefore carried as
//! `value = mantissa * exp(exponent)` with `|mantissa|` normalized into
//! `[1, 2)` (or exactly zero). Products and quotients add and subtract
//! exponents exactly; sums align the smaller term onto the larger exponent.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const LN_2: f64 = std::f64::consts::LN_2;

/// Complex value `mantissa * exp(exponent)` with `|mantissa| in [1,2)` or 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledComplex {
    pub mantissa: Complex64,
    pub exponent: f64,
}

impl ScaledComplex {
    pub const ZERO: ScaledComplex = ScaledComplex {
        mantissa: Complex64::new(0.0, 0.0),
        exponent: 0.0,
    };

    pub const ONE: ScaledComplex = ScaledComplex {
        mantissa: Complex64::new(1.0, 0.0),
        exponent: 0.0,
    };

    /// Build from an unscaled complex number.
    pub fn from_complex(v: Complex64) -> Self {
        Self::renormalize(v, 0.0)
    }

    pub fn from_f64(v: f64) -> Self {
        Self::from_complex(Complex64::new(v, 0.0))
    }

    /// Build from a mantissa-like value and an extra log-scale factor,
    /// i.e. the number `v * exp(ln_factor)`.
    pub fn from_complex_scaled(v: Complex64, ln_factor: f64) -> Self {
        Self::renormalize(v, ln_factor)
    }

    fn renormalize(m: Complex64, e: f64) -> Self {
        let n = m.norm();
        if n == 0.0 || !n.is_finite() {
            if n == 0.0 {
                return Self::ZERO;
            }
            // Infinite or NaN mantissa: keep as-is so the caller can detect it.
            return ScaledComplex { mantissa: m, exponent: e };
        }
        // Choose k with |m| / 2^k in [1, 2).
        let k = n.log2().floor();
        let scale = (-k * LN_2).exp();
        ScaledComplex {
            mantissa: m * scale,
            exponent: e + k * LN_2,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.norm() == 0.0
    }

    /// Natural log of the magnitude; `-inf` for zero.
    pub fn ln_abs(&self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.mantissa.norm().ln() + self.exponent
        }
    }

    pub fn arg(&self) -> f64 {
        self.mantissa.arg()
    }

    /// Collapse to a plain complex number. Overflows to infinity when the
    /// exponent exceeds the double range; callers that care use `ln_abs`.
    pub fn to_complex(&self) -> Complex64 {
        self.mantissa * self.exponent.exp()
    }

    pub fn mul(&self, rhs: &ScaledComplex) -> ScaledComplex {
        Self::renormalize(self.mantissa * rhs.mantissa, self.exponent + rhs.exponent)
    }

    pub fn div(&self, rhs: &ScaledComplex) -> ScaledComplex {
        Self::renormalize(self.mantissa / rhs.mantissa, self.exponent - rhs.exponent)
    }

    pub fn recip(&self) -> ScaledComplex {
        Self::renormalize(Complex64::new(1.0, 0.0) / self.mantissa, -self.exponent)
    }

    pub fn neg(&self) -> ScaledComplex {
        ScaledComplex { mantissa: -self.mantissa, exponent: self.exponent }
    }

    /// Integer power, exact on the exponent.
    pub fn powi(&self, n: i32) -> ScaledComplex {
        if n == 0 {
            return Self::ONE;
        }
        let mut out = Self::ONE;
        let base = if n < 0 { self.recip() } else { *self };
        for _ in 0..n.unsigned_abs() {
            out = out.mul(&base);
        }
        out
    }

    /// Sum; the smaller term is aligned onto the larger exponent and
    /// underflows gracefully when the gap exceeds the double range.
    pub fn add(&self, rhs: &ScaledComplex) -> ScaledComplex {
        if self.is_zero() {
            return *rhs;
        }
        if rhs.is_zero() {
            return *self;
        }
        let (hi, lo) = if self.exponent >= rhs.exponent { (self, rhs) } else { (rhs, self) };
        let shift = (lo.exponent - hi.exponent).exp();
        Self::renormalize(hi.mantissa + lo.mantissa * shift, hi.exponent)
    }

    pub fn sub(&self, rhs: &ScaledComplex) -> ScaledComplex {
        self.add(&rhs.neg())
    }

    /// Multiply by exp(w) without materializing the exponential: the real
    /// part of w goes straight into the exponent field.
    pub fn mul_exp(&self, w: Complex64) -> ScaledComplex {
        if self.is_zero() {
            return Self::ZERO;
        }
        Self::renormalize(
            self.mantissa * Complex64::from_polar(1.0, w.im),
            self.exponent + w.re,
        )
    }

    /// Magnitude comparison without materializing either value.
    pub fn abs_gt(&self, rhs: &ScaledComplex) -> bool {
        self.ln_abs() > rhs.ln_abs()
    }

    /// Relative distance |a-b| / max(|a|, |b|), safe for huge exponents.
    pub fn rel_distance(&self, rhs: &ScaledComplex) -> f64 {
        if self.is_zero() && rhs.is_zero() {
            return 0.0;
        }
        let diff = self.sub(rhs);
        let m = self.ln_abs().max(rhs.ln_abs());
        (diff.ln_abs() - m).exp()
    }

    /// Decimal rendering `m.mmm...e+XXX` of the magnitude-and-phase form,
    /// used for the convenience field in serialized reports.
    pub fn decimal_string(&self) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        // value = mantissa * exp(exponent) = m10 * 10^p with p integer.
        let log10 = self.ln_abs() / std::f64::consts::LN_10;
        let p = log10.floor();
        let mag = 10f64.powf(log10 - p);
        let unit = self.mantissa / self.mantissa.norm();
        let m10 = unit * mag;
        format!("({:.12}{:+.12}i)e{}", m10.re, m10.im, p as i64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn normalization_keeps_value() {
        let v = c(-3.75e12, 2.5e11);
        let s = ScaledComplex::from_complex(v);
        assert!(s.mantissa.norm() >= 1.0 && s.mantissa.norm() < 2.0);
        assert!((s.to_complex() - v).norm() <= 1e-15 * v.norm());
    }

    #[test]
    fn zero_is_exact() {
        let z = ScaledComplex::from_complex(c(0.0, 0.0));
        assert!(z.is_zero());
        assert_eq!(z.exponent, 0.0);
        assert!(z.ln_abs() == f64::NEG_INFINITY);
    }

    #[test]
    fn product_adds_exponents_exactly() {
        let a = ScaledComplex::from_complex_scaled(c(1.3, 0.4), 700.0);
        let b = ScaledComplex::from_complex_scaled(c(-1.1, 0.2), 650.0);
        let p = a.mul(&b);
        // Raw doubles would overflow (e^1350); the scaled form must not.
        assert!(p.mantissa.norm().is_finite());
        assert!((p.ln_abs() - (a.ln_abs() + b.ln_abs())).abs() < 1e-9);
        let q = p.div(&b);
        assert!(q.rel_distance(&a) < 1e-14);
    }

    #[test]
    fn addition_aligns_exponents() {
        let a = ScaledComplex::from_complex(c(2.0, 0.0));
        let b = ScaledComplex::from_complex(c(3.0, 0.0));
        assert!((a.add(&b).to_complex() - c(5.0, 0.0)).norm() < 1e-15);
        // A term 10^400 below the other vanishes without poisoning the sum.
        let tiny = ScaledComplex::from_complex_scaled(c(1.0, 0.0), -1000.0);
        assert!(a.add(&tiny).rel_distance(&a) < 1e-15);
    }

    #[test]
    fn rel_distance_with_large_exponent() {
        let a = ScaledComplex::from_complex_scaled(c(1.5, 0.5), 2000.0);
        let b = a.mul(&ScaledComplex::from_f64(1.0 + 1e-9));
        let d = a.rel_distance(&b);
        assert!(d > 0.5e-9 && d < 2e-9, "d = {d}");
    }
}
