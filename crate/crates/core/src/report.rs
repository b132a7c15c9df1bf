//! Machine-readable verification reports. Scaled values serialize as
//! (mantissa, exponent) pairs plus a convenience decimal rendering, since
//! raw magnitudes routinely exceed the double range.

use crate::curve::CurvePoint;
use crate::scaled::ScaledComplex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaledValueRepr {
    pub mantissa_re: f64,
    pub mantissa_im: f64,
    pub exponent: f64,
    pub decimal: String,
}

impl From<&ScaledComplex> for ScaledValueRepr {
    fn from(v: &ScaledComplex) -> Self {
        ScaledValueRepr {
            mantissa_re: v.mantissa.re,
            mantissa_im: v.mantissa.im,
            exponent: v.exponent,
            decimal: v.decimal_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

/// One serialized sample point (x_re, x_im, sheet).
pub type SamplePointRepr = (f64, f64, i8);

pub fn sample_repr(p: &CurvePoint) -> SamplePointRepr {
    (p.x.re, p.x.im, p.sheet)
}

/// Result of one identity suite: the worst sample's two sides, the residual
/// |lhs-rhs| / max(|lhs|, |rhs|), and the pass/fail verdict at the stated
/// tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityReport {
    pub identity: String,
    pub curve_hash: String,
    pub seed: u64,
    pub samples: Vec<Vec<SamplePointRepr>>,
    pub lhs: ScaledValueRepr,
    pub rhs: ScaledValueRepr,
    pub residual: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub wall_ms: f64,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// FNV-1a hex digest used to fingerprint curve data in reports.
pub fn fnv_hex(bytes: impl IntoIterator<Item = u8>) -> String {
    let mut h = 0xcbf29ce484222325u64;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}
