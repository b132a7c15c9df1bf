//! Riemann theta functions with half-integer characteristics.
//!
//! theta[a;b](z, tau) = sum_{n in Z^g} exp(i pi (n+a)^T tau (n+a)
//!                                        + 2 pi i (n+a)^T (z+b)).
//!
//! Evaluation first reduces z modulo the period lattice, putting the exact
//! quasi-periodicity factor into the exponent of the scaled result, then
//! sums over the integer points of the ellipsoid ||T(n+a+c)|| <= R, where
//! T is the upper Cholesky factor of pi Im(tau) and c the real lattice
//! coordinate of Im(z). The radius R comes from inverting the Gaussian tail
//! bound so the discarded mass stays below tol times the leading term, plus
//! a fixed 0.5 safety margin:
//!
//!   R^2 = d0^2 + ln( g V_g R^(g-2) / (2 det T  tol) ),   R += 0.5,
//!
//! iterated to a fixed point, with d0 the distance of the nearest lattice
//! point and V_g the unit-ball volume. Summation order is fixed (sorted
//! lattice points) for run-to-run determinism.

use crate::error::{Error, Result};
use crate::scaled::ScaledComplex;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// A validated Riemann matrix: symmetric to 1e-9 with positive definite
/// imaginary part. Caches the Cholesky factor of pi Im(tau) and the inverse
/// of Im(tau) for lattice reduction.
#[derive(Debug, Clone)]
pub struct RiemannMatrix {
    tau: DMatrix<Complex64>,
    chol_upper: DMatrix<f64>,
    im_inv: DMatrix<f64>,
}

impl RiemannMatrix {
    pub fn new(tau: DMatrix<Complex64>) -> Result<Self> {
        let g = tau.nrows();
        if g == 0 || tau.ncols() != g {
            return Err(Error::InvalidTau("matrix must be square and nonempty".into()));
        }
        let scale = tau.iter().map(|v| v.norm()).fold(0.0f64, f64::max).max(1.0);
        let mut asym = 0.0f64;
        for i in 0..g {
            for j in 0..g {
                asym = asym.max((tau[(i, j)] - tau[(j, i)]).norm());
            }
        }
        if asym > 1e-9 * scale.max(1.0) {
            return Err(Error::InvalidTau(format!("asymmetry {asym:.3e}")));
        }
        let im = DMatrix::<f64>::from_fn(g, g, |i, j| 0.5 * (tau[(i, j)].im + tau[(j, i)].im));
        let chol = nalgebra::Cholesky::new(im.scale(std::f64::consts::PI))
            .ok_or_else(|| Error::InvalidTau("Im(tau) is not positive definite".into()))?;
        let chol_upper = chol.l().transpose();
        let im_inv = im
            .try_inverse()
            .ok_or_else(|| Error::InvalidTau("Im(tau) is singular".into()))?;
        Ok(RiemannMatrix { tau, chol_upper, im_inv })
    }

    pub fn g(&self) -> usize {
        self.tau.nrows()
    }

    pub fn mat(&self) -> &DMatrix<Complex64> {
        &self.tau
    }

    pub fn im_inv(&self) -> &DMatrix<f64> {
        &self.im_inv
    }

    /// Reduce z = z_r + tau N + M with integer vectors N, M chosen so the
    /// imaginary part of z_r lies in the centered lattice cell.
    pub fn reduce(&self, z: &DVector<Complex64>) -> (DVector<Complex64>, Vec<i64>, Vec<i64>) {
        let g = self.g();
        let imz = DVector::<f64>::from_fn(g, |i, _| z[i].im);
        let coord = &self.im_inv * imz;
        let n: Vec<i64> = (0..g).map(|i| -coord[i].round() as i64).collect();
        let mut zr = z.clone();
        for i in 0..g {
            for j in 0..g {
                zr[i] += self.tau[(i, j)] * (n[j] as f64);
            }
        }
        let m: Vec<i64> = (0..g).map(|i| -zr[i].re.round() as i64).collect();
        for i in 0..g {
            zr[i] += Complex64::new(m[i] as f64, 0.0);
        }
        (zr, n, m)
    }
}

/// Half-integer theta characteristic; entries of `a`, `b` are 0 or 1 and
/// stand for 0 and 1/2.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Characteristic {
    pub a: Vec<u8>,
    pub b: Vec<u8>,
}

impl Characteristic {
    pub fn zero(g: usize) -> Self {
        Characteristic { a: vec![0; g], b: vec![0; g] }
    }

    pub fn new(a: Vec<u8>, b: Vec<u8>) -> Self {
        assert_eq!(a.len(), b.len());
        assert!(a.iter().chain(b.iter()).all(|&v| v <= 1));
        Characteristic { a, b }
    }

    /// Parity 4 a^T b mod 2: 0 = even, 1 = odd.
    pub fn parity(&self) -> u8 {
        self.a
            .iter()
            .zip(self.b.iter())
            .map(|(&x, &y)| x * y)
            .sum::<u8>()
            % 2
    }

    pub fn is_odd(&self) -> bool {
        self.parity() == 1
    }

    pub fn a_vec(&self) -> Vec<f64> {
        self.a.iter().map(|&v| v as f64 / 2.0).collect()
    }

    pub fn b_vec(&self) -> Vec<f64> {
        self.b.iter().map(|&v| v as f64 / 2.0).collect()
    }

    /// The half-period tau a + b attached to this characteristic.
    pub fn half_period(&self, rm: &RiemannMatrix) -> DVector<Complex64> {
        let g = self.a.len();
        let mut v = DVector::<Complex64>::zeros(g);
        for i in 0..g {
            for j in 0..g {
                v[i] += rm.mat()[(i, j)] * (self.a[j] as f64 / 2.0);
            }
            v[i] += Complex64::new(self.b[i] as f64 / 2.0, 0.0);
        }
        v
    }
}

/// All 2^(2g) half-integer characteristics, in lexicographic order.
pub fn characteristics(g: usize) -> Vec<Characteristic> {
    let mut out = Vec::with_capacity(1 << (2 * g));
    for bits in 0..(1u32 << (2 * g)) {
        let a: Vec<u8> = (0..g).map(|i| ((bits >> i) & 1) as u8).collect();
        let b: Vec<u8> = (0..g).map(|i| ((bits >> (g + i)) & 1) as u8).collect();
        out.push(Characteristic { a, b });
    }
    out
}

struct Ellipsoid {
    points: Vec<Vec<i64>>,
}

/// Truncation radius from the Gaussian tail bound.
fn truncation_radius(rm: &RiemannMatrix, d0: f64, tol: f64) -> Result<(f64, f64)> {
    let g = rm.g() as f64;
    let det_t: f64 = (0..rm.g()).map(|i| rm.chol_upper[(i, i)]).product();
    let vg = std::f64::consts::PI.powf(g / 2.0) / gamma_half_int(rm.g() + 2);
    let cg = g * vg / (2.0 * det_t);
    let mut r = (d0 * d0 + (1.0f64 / tol).ln() + 1.0).sqrt();
    for _ in 0..6 {
        let inner = (cg * r.powf(g - 2.0) / tol).max(std::f64::consts::E);
        r = (d0 * d0 + inner.ln()).sqrt();
    }
    r += 0.5;
    let count_estimate = vg * r.powf(g) / det_t;
    if count_estimate > 1e8 {
        return Err(Error::RadiusOverflow);
    }
    Ok((r, count_estimate))
}

/// Gamma(k/2) table for the small half-integer orders used by the radius
/// formula (k = g + 2 <= 14 covers every genus this crate meets).
fn gamma_half_int(k: usize) -> f64 {
    // Gamma(1/2) = sqrt(pi); Gamma(x+1) = x Gamma(x).
    let mut x = if k % 2 == 0 { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut arg = if k % 2 == 0 { 1.0f64 } else { 0.5 };
    while 2.0 * arg < k as f64 {
        x *= arg;
        arg += 1.0;
    }
    x
}

/// Integer points of ||T(n + s)|| <= R by recursive coordinate bounding on
/// the upper-triangular factor, sorted for deterministic summation.
fn enumerate_ellipsoid(t: &DMatrix<f64>, s: &[f64], r: f64) -> Ellipsoid {
    let g = t.nrows();
    let mut points = Vec::new();
    let mut current = vec![0i64; g];
    fn recurse(
        t: &DMatrix<f64>,
        s: &[f64],
        level: isize,
        budget2: f64,
        carry: &[f64],
        current: &mut Vec<i64>,
        points: &mut Vec<Vec<i64>>,
    ) {
        if level < 0 {
            points.push(current.clone());
            return;
        }
        let i = level as usize;
        if budget2 < 0.0 {
            return;
        }
        let tii = t[(i, i)];
        let b = budget2.sqrt();
        // carry_i = sum_{j>i} T_ij (n_j + s_j), fixed by deeper levels.
        let center = -s[i] - carry[i] / tii;
        let lo = (center - b / tii).ceil() as i64;
        let hi = (center + b / tii).floor() as i64;
        for ni in lo..=hi {
            current[i] = ni;
            let ui = tii * (ni as f64 + s[i]) + carry[i];
            let rem = budget2 - ui * ui;
            if rem < 0.0 {
                continue;
            }
            // Update carries for shallower levels.
            let mut new_carry = carry.to_vec();
            for j in 0..i {
                new_carry[j] += t[(j, i)] * (ni as f64 + s[i]);
            }
            recurse(t, s, level - 1, rem, &new_carry, current, points);
        }
    }
    let carry = vec![0.0f64; g];
    recurse(
        t,
        s,
        g as isize - 1,
        r * r,
        &carry,
        &mut current,
        &mut points,
    );
    points.sort();
    Ellipsoid { points }
}

fn reduction_log_factor(
    rm: &RiemannMatrix,
    chi: &Characteristic,
    zr: &DVector<Complex64>,
    n: &[i64],
    m: &[i64],
) -> Complex64 {
    // theta(z) = exp(2 pi i [a.M' - N'.(z_r+b) - N'.tau.N'/2]) theta(z_r)
    // with z = z_r + tau N' + M', N' = -n, m' = -m.
    let g = rm.g();
    let a = chi.a_vec();
    let b = chi.b_vec();
    let np: Vec<f64> = n.iter().map(|&v| -v as f64).collect();
    let mp: Vec<f64> = m.iter().map(|&v| -v as f64).collect();
    let mut w = Complex64::new(0.0, 0.0);
    for i in 0..g {
        w += Complex64::new(a[i] * mp[i], 0.0);
        w -= (zr[i] + Complex64::new(b[i], 0.0)) * np[i];
        for j in 0..g {
            w -= rm.mat()[(i, j)] * (0.5 * np[i] * np[j]);
        }
    }
    Complex64::new(0.0, TWO_PI) * w
}

fn lattice_shift(rm: &RiemannMatrix, chi: &Characteristic, zr: &DVector<Complex64>) -> Vec<f64> {
    // s = a + c with c = Im(tau)^{-1} Im(z_r).
    let g = rm.g();
    let imz = DVector::<f64>::from_fn(g, |i, _| zr[i].im);
    let c = rm.im_inv() * imz;
    let a = chi.a_vec();
    (0..g).map(|i| a[i] + c[i]).collect()
}

fn prepare(
    rm: &RiemannMatrix,
    chi: &Characteristic,
    zr: &DVector<Complex64>,
    tol: f64,
    extra_radius: f64,
) -> Result<Ellipsoid> {
    let g = rm.g();
    let s = lattice_shift(rm, chi, zr);
    // Distance of the nearest lattice point, for the tail bound anchor.
    let frac = DVector::<f64>::from_fn(g, |i, _| s[i] - s[i].round());
    let d0 = (&rm.chol_upper * frac).norm();
    let (r, _) = truncation_radius(rm, d0, tol)?;
    Ok(enumerate_ellipsoid(&rm.chol_upper, &s, r + extra_radius))
}

fn term_exponent(
    rm: &RiemannMatrix,
    chi: &Characteristic,
    zr: &DVector<Complex64>,
    point: &[i64],
) -> Complex64 {
    let g = rm.g();
    let a = chi.a_vec();
    let b = chi.b_vec();
    let mut w = Complex64::new(0.0, 0.0);
    for i in 0..g {
        let mi = point[i] as f64 + a[i];
        for j in 0..g {
            let mj = point[j] as f64 + a[j];
            w += rm.mat()[(i, j)] * (0.5 * mi * mj);
        }
        w += (zr[i] + Complex64::new(b[i], 0.0)) * mi;
    }
    Complex64::new(0.0, TWO_PI) * w
}

/// theta[a;b](z, tau) as a scaled complex value.
pub fn theta(
    z: &DVector<Complex64>,
    rm: &RiemannMatrix,
    chi: &Characteristic,
    tol: f64,
) -> Result<ScaledComplex> {
    assert!((1e-14..=1e-4).contains(&tol), "theta tolerance outside documented range");
    assert_eq!(z.len(), rm.g());
    let (zr, n, m) = rm.reduce(z);
    let ell = prepare(rm, chi, &zr, tol, 0.0)?;
    let mut sum = Complex64::new(0.0, 0.0);
    for p in &ell.points {
        sum += term_exponent(rm, chi, &zr, p).exp();
    }
    let lf = reduction_log_factor(rm, chi, &zr, &n, &m);
    Ok(ScaledComplex::from_complex(sum).mul_exp(lf))
}

/// Gradient of theta[a;b] in z, term-wise differentiated with one extra
/// unit of truncation radius.
pub fn theta_grad(
    z: &DVector<Complex64>,
    rm: &RiemannMatrix,
    chi: &Characteristic,
    tol: f64,
) -> Result<Vec<ScaledComplex>> {
    assert!((1e-14..=1e-4).contains(&tol), "theta tolerance outside documented range");
    let g = rm.g();
    let (zr, n, m) = rm.reduce(z);
    let ell = prepare(rm, chi, &zr, tol, 1.0)?;
    let a = chi.a_vec();
    let mut sum0 = Complex64::new(0.0, 0.0);
    let mut grad = vec![Complex64::new(0.0, 0.0); g];
    for p in &ell.points {
        let t = term_exponent(rm, chi, &zr, p).exp();
        sum0 += t;
        for k in 0..g {
            let mk = p[k] as f64 + a[k];
            grad[k] += t * Complex64::new(0.0, TWO_PI * mk);
        }
    }
    // Chain rule through the reduction: grad theta(z) =
    // exp(lf) * (grad theta(z_r) - 2 pi i N' theta(z_r)), N' = -n.
    let lf = reduction_log_factor(rm, chi, &zr, &n, &m);
    let mut out = Vec::with_capacity(g);
    for k in 0..g {
        let corr = grad[k] + sum0 * Complex64::new(0.0, TWO_PI * n[k] as f64);
        out.push(ScaledComplex::from_complex(corr).mul_exp(lf));
    }
    Ok(out)
}
