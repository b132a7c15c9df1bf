//! Hyperelliptic curves, Riemann theta functions, prime forms and Szego
//! kernels, together with high-precision verification engines for the
//! determinant identities satisfied by (non-abelian) theta functions on the
//! computable stratum of rank-1 and decomposable bundles.
//!
//! The crate is organized bottom-up:
//!
//! - [`scaled`]: overflow-safe (mantissa, exponent) complex arithmetic
//! - [`poly`], [`quad`]: polynomial and quadrature utilities
//! - [`curve`]: odd-model hyperelliptic curves and period matrices
//! - [`theta`]: Riemann theta functions with characteristics
//! - [`jacobian`]: Abel-Jacobi map, Riemann vector, divisor tests
//! - [`primeform`]: the prime form E(x,y) and half-differentials
//! - [`identities`]: split bundles, Szego kernels, addition-formula engines
//! - [`kp`]: the multicomponent-KP determinant identity
//! - [`covering`]: unramified double covers and their identities
//! - [`report`]: machine-readable verification reports

pub mod covering;
pub mod curve;
pub mod error;
pub mod identities;
pub mod jacobian;
pub mod kp;
pub mod poly;
pub mod primeform;
pub mod quad;
pub mod report;
pub mod scaled;
pub mod theta;

pub use curve::{
    build_curve, continue_sheet, differential_basis, CurvePoint, Differential,
    HyperellipticCurve, PeriodData, PointKey,
};
pub use error::{Error, Result};
pub use scaled::ScaledComplex;
pub use theta::{characteristics, theta, theta_grad, Characteristic, RiemannMatrix};
