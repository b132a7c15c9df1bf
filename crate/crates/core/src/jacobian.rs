//! Abel-Jacobi map with explicit path bookkeeping, divisor classes, the
//! Riemann constant vector and theta-divisor membership tests.
//!
//! Paths run from the base point (the first branch point) along canonical
//! straight segments, perturbed around branch points by semicircular
//! detours; the inverse-square-root endpoint singularities at branch points
//! are removed by the substitution x = e + d u^2. The branch of y along a
//! path is tracked by stepwise analytic continuation and anchored so the
//! path ends on the sheet of the target point. All Abel values are cached
//! with their path record, so repeated evaluations are homotopy-consistent
//! within a run.

use crate::curve::{point_segment_distance, CurvePoint, HyperellipticCurve, PeriodData, PointKey};
use crate::error::{Error, Result};
use crate::quad::gauss_kronrod_adaptive;
use crate::scaled::ScaledComplex;
use crate::theta::{theta, Characteristic, RiemannMatrix};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::sync::Mutex;

/// Formal sum of curve points with integer multiplicities.
#[derive(Debug, Clone, Default)]
pub struct Divisor {
    pub points: Vec<(CurvePoint, i64)>,
}

impl Divisor {
    pub fn new(points: Vec<(CurvePoint, i64)>) -> Self {
        Divisor { points }
    }

    pub fn degree(&self) -> i64 {
        self.points.iter().map(|(_, m)| m).sum()
    }
}

/// Vector in C^g tagged with the degree of the underlying divisor class.
/// Comparisons are always modulo the lattice Z^g + tau Z^g.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianPoint {
    pub vec: DVector<Complex64>,
    pub degree: i64,
}

impl JacobianPoint {
    pub fn zero(g: usize) -> Self {
        JacobianPoint { vec: DVector::zeros(g), degree: 0 }
    }

    pub fn new(vec: DVector<Complex64>, degree: i64) -> Self {
        JacobianPoint { vec, degree }
    }

    pub fn add(&self, rhs: &JacobianPoint) -> JacobianPoint {
        JacobianPoint { vec: &self.vec + &rhs.vec, degree: self.degree + rhs.degree }
    }

    pub fn sub(&self, rhs: &JacobianPoint) -> JacobianPoint {
        JacobianPoint { vec: &self.vec - &rhs.vec, degree: self.degree - rhs.degree }
    }
}

/// Distance from a vector to the nearest lattice point of Z^g + tau Z^g.
pub fn lattice_distance(v: &DVector<Complex64>, rm: &RiemannMatrix) -> f64 {
    let (zr, _, _) = rm.reduce(v);
    zr.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// The Riemann constant vector for the base point, realized as the unique
/// half-period K with theta(A(D) + K) = 0 for every effective divisor D of
/// degree g-1 supported on finite branch points.
#[derive(Debug, Clone)]
pub struct RiemannVector {
    pub k: DVector<Complex64>,
    pub characteristic: Characteristic,
}

/// Verdict of a theta-divisor membership test. Magnitudes in the dead band
/// between the vanishing and the generic regime are flagged; identity
/// engines resample rather than divide by them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivisorVerdict {
    On,
    Off,
    Indeterminate,
}

impl DivisorVerdict {
    pub fn is_on(&self) -> bool {
        matches!(self, DivisorVerdict::On)
    }
}

/// Numerical tolerances threaded through every evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub theta: f64,
    pub quad: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { theta: 1e-11, quad: 1e-11 }
    }
}

/// Sampling constraints for regular point configurations.
#[derive(Debug, Clone, Copy)]
pub struct SampleConstraints {
    /// Minimum pairwise separation, in units of the curve scale.
    pub min_separation: f64,
    /// Minimum distance from branch points, in units of the curve scale.
    pub min_branch_distance: f64,
}

impl Default for SampleConstraints {
    fn default() -> Self {
        SampleConstraints { min_separation: 1e-2, min_branch_distance: 2e-2 }
    }
}

/// Curve + periods + the caches that make Abel evaluations and divisor
/// tests reproducible within a run. The caches are value-deterministic, so
/// concurrent insertion cannot change any result.
pub struct Jacobian {
    pub curve: HyperellipticCurve,
    pub periods: PeriodData,
    pub tol: Tolerances,
    abel_cache: Mutex<HashMap<PointKey, (DVector<Complex64>, Vec<Complex64>)>>,
    infinity_cache: Mutex<Option<DVector<Complex64>>>,
    theta_scale_cache: Mutex<Option<f64>>,
}

impl Jacobian {
    pub fn new(curve: HyperellipticCurve, periods: PeriodData, tol: Tolerances) -> Self {
        Jacobian {
            curve,
            periods,
            tol,
            abel_cache: Mutex::new(HashMap::new()),
            infinity_cache: Mutex::new(None),
            theta_scale_cache: Mutex::new(None),
        }
    }

    pub fn genus(&self) -> usize {
        self.curve.genus
    }

    pub fn rm(&self) -> &RiemannMatrix {
        &self.periods.tau
    }

    /// Abel map of a finite point, base point b1, canonical path. Cached.
    pub fn abel_map(&self, p: &CurvePoint) -> Result<DVector<Complex64>> {
        if p.at_infinity {
            return self.abel_infinity();
        }
        let key = p.key();
        if let Some((v, _)) = self.abel_cache.lock().unwrap().get(&key) {
            return Ok(v.clone());
        }
        let (v, path) = self.abel_map_fresh(p, 1.0)?;
        self.abel_cache
            .lock()
            .unwrap()
            .entry(key)
            .or_insert((v.clone(), path));
        Ok(v)
    }

    /// Abel map along a freshly built path; `detour_factor` scales the
    /// detour radius (used to probe homotopy consistency).
    pub fn abel_map_fresh(
        &self,
        p: &CurvePoint,
        detour_factor: f64,
    ) -> Result<(DVector<Complex64>, Vec<Complex64>)> {
        let curve = &self.curve;
        let base = curve.branch_points[0];
        let target_branch = curve.nearest_branch(p.x);
        let target_is_branch = target_branch.1 <= 1e-9 * curve.scale();
        if !target_is_branch && target_branch.1 < 1e-6 * curve.scale() {
            return Err(Error::PathDegenerate(target_branch.1));
        }
        if (p.x - base).norm() <= 1e-9 * curve.scale() {
            return Ok((DVector::zeros(curve.genus), vec![base]));
        }
        let path = self.build_path(base, p.x, detour_factor, target_is_branch)?;
        let raw = self.integrate_path(&path, target_is_branch, p)?;
        Ok((self.normalize(&raw), path))
    }

    /// Abel map of the point at infinity: finite ray plus the tail integral
    /// in the local coordinate t = x^(-1/2). Cached.
    pub fn abel_infinity(&self) -> Result<DVector<Complex64>> {
        if let Some(v) = self.infinity_cache.lock().unwrap().as_ref() {
            return Ok(v.clone());
        }
        let v = self.abel_infinity_at(1e3)?;
        *self.infinity_cache.lock().unwrap() = Some(v.clone());
        Ok(v)
    }

    /// Infinity integral with the tail switched on at radius
    /// `radius_factor * scale`; exposed for the Cauchy self-consistency test.
    pub fn abel_infinity_at(&self, radius_factor: f64) -> Result<DVector<Complex64>> {
        let curve = &self.curve;
        let g = curve.genus;
        let base = curve.branch_points[0];
        let centroid: Complex64 =
            curve.branch_points.iter().sum::<Complex64>() / curve.branch_points.len() as f64;
        let mut dir = base - centroid;
        if dir.norm() < 1e-9 * curve.scale() {
            dir = Complex64::new(-1.0, -0.3);
        }
        let dir = dir / dir.norm();
        let x_far = base + dir * (radius_factor * curve.scale());
        let path = self.build_path(base, x_far, 1.0, false)?;
        let (raw_finite, w_far) = self.integrate_path_tracked(&path, false)?;

        // Tail: with x = x_far / v^2 the integrand becomes polynomial-like,
        // w = s x_far^(g+1/2) v^(-(2g+1)) V(v), V^2 the reversed polynomial
        // q(v) = f(x_far/v^2) v^(4g+2) / x_far^(2g+1), q(0) = lead(f).
        let deg = 2 * g + 1;
        let mut qcoeffs = vec![Complex64::new(0.0, 0.0); 2 * deg + 1];
        for (k, &c) in curve.f.coeffs.iter().enumerate() {
            qcoeffs[2 * (deg - k)] += c * x_far.powu(k as u32) / x_far.powu(deg as u32);
        }
        let qt = crate::poly::Poly::new(qcoeffs);
        let sx = x_far.sqrt();
        let xg = x_far.powu(g as u32);
        let v_at_1 = qt.eval(Complex64::new(1.0, 0.0)).sqrt();
        let anchor = xg * sx * v_at_1;
        let s_raw = w_far / anchor;
        let s = if s_raw.re >= 0.0 { 1.0 } else { -1.0 };
        debug_assert!((s_raw.norm() - 1.0).abs() < 1e-6);

        // Track V from v=1 down to v=0 over phase-safe breakpoints.
        let steps = phase_safe_breakpoints(&qt, Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))?;
        let mut tracked: Vec<(Complex64, Complex64)> = vec![(Complex64::new(1.0, 0.0), v_at_1)];
        let mut wv = v_at_1;
        for v in steps.iter().rev().skip(1) {
            let cand = qt.eval(*v).sqrt();
            wv = if (cand * wv.conj()).re >= 0.0 { cand } else { -cand };
            tracked.push((*v, wv));
        }
        tracked.reverse();

        let mut tail = vec![Complex64::new(0.0, 0.0); g];
        for win in tracked.windows(2) {
            let (va, wa) = win[0];
            let (vb, _) = win[1];
            let seg = vb - va;
            let mut fint = |t: f64| {
                let v = va + seg * t;
                let cand = qt.eval(v).sqrt();
                let w = if (cand * wa.conj()).re >= 0.0 { cand } else { -cand };
                (0..g)
                    .map(|j| v.powu((2 * g - 2 - 2 * j) as u32) / w * seg)
                    .collect::<Vec<_>>()
            };
            let leg = gauss_kronrod_adaptive(&mut fint, 0.0, 1.0, self.tol.quad)?;
            for j in 0..g {
                tail[j] += leg[j];
            }
        }
        let mut raw = raw_finite;
        for j in 0..g {
            // int_{x_far}^{oo} x^j dx / w = (2/s) x_far^(j+1/2-g) int_0^1 v^(2g-2j-2)/V dv
            let factor = x_far.powu(j as u32) / xg * sx * (2.0 / s);
            raw[j] += factor * tail[j];
        }
        Ok(self.normalize(&raw))
    }

    /// Abel image of a divisor (additive over points; infinity allowed).
    pub fn abel_divisor(&self, d: &Divisor) -> Result<JacobianPoint> {
        let g = self.genus();
        let mut v = DVector::<Complex64>::zeros(g);
        for (p, m) in &d.points {
            let a = self.abel_map(p)?;
            v += a * Complex64::new(*m as f64, 0.0);
        }
        Ok(JacobianPoint::new(v, d.degree()))
    }

    fn normalize(&self, raw: &DVector<Complex64>) -> DVector<Complex64> {
        let g = self.genus();
        let c = &self.periods.normalization;
        DVector::from_fn(g, |m, _| (0..g).map(|j| c[(j, m)] * raw[j]).sum())
    }

    /// Canonical polyline from `from` to `to`: the straight segment with
    /// semicircular detours (radius 1e-3 scale * detour_factor) around any
    /// branch point that sits too close. Endpoint branch points stay in
    /// place; their singularities are handled by substitution.
    fn build_path(
        &self,
        from: Complex64,
        to: Complex64,
        detour_factor: f64,
        target_is_branch: bool,
    ) -> Result<Vec<Complex64>> {
        let curve = &self.curve;
        let r_det = 1e-3 * curve.scale() * detour_factor;
        let seg = to - from;
        let len = seg.norm();
        let dir = seg / len;
        let mut hits: Vec<(f64, Complex64)> = Vec::new();
        for e in &curve.branch_points {
            if (e - from).norm() < 1e-12 * curve.scale()
                || (e - to).norm() < 1e-12 * curve.scale()
            {
                continue;
            }
            if target_is_branch && (e - to).norm() < 2.0 * r_det {
                continue;
            }
            let t = ((e - from) * dir.conj()).re / len;
            if t <= 1e-12 || t >= 1.0 - 1e-12 {
                continue;
            }
            let d = point_segment_distance(*e, from, to);
            if d < r_det {
                hits.push((t, *e));
            }
        }
        hits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut path = vec![from];
        if target_is_branch && hits.is_empty() {
            // Both endpoints are branch points; an interior waypoint splits
            // the path into two substituted legs.
            path.push(0.5 * (from + to));
        }
        for (_, e) in hits {
            let off = (e - from) - dir * ((e - from) * dir.conj()).re;
            let nu = if off.norm() > 1e-14 * curve.scale() {
                off / off.norm()
            } else {
                dir * Complex64::new(0.0, 1.0)
            };
            let foot = e - off;
            let a = foot - dir * r_det;
            let b = foot + dir * r_det;
            let th_a = (a - e).arg();
            let th_b = (b - e).arg();
            let th_m = (-nu).arg();
            path.push(a);
            for (lo, hi) in [(th_a, th_m), (th_m, th_b)] {
                let mut d = hi - lo;
                while d > std::f64::consts::PI {
                    d -= 2.0 * std::f64::consts::PI;
                }
                while d < -std::f64::consts::PI {
                    d += 2.0 * std::f64::consts::PI;
                }
                for s in 1..=8 {
                    let th = lo + d * s as f64 / 8.0;
                    path.push(e + Complex64::new(th.cos(), th.sin()) * r_det);
                }
            }
        }
        path.push(to);
        Ok(path)
    }

    fn integrate_path(
        &self,
        path: &[Complex64],
        target_is_branch: bool,
        target: &CurvePoint,
    ) -> Result<DVector<Complex64>> {
        let (mut raw, w_end) = self.integrate_path_tracked(path, target_is_branch)?;
        if !target_is_branch {
            let y_target = self.curve.y(target);
            if (w_end * y_target.conj()).re < 0.0 {
                raw = -raw;
            }
        }
        Ok(raw)
    }

    /// Core path integral. Returns the raw monomial integrals and the
    /// tracked branch value at the last regular waypoint.
    fn integrate_path_tracked(
        &self,
        path: &[Complex64],
        target_is_branch: bool,
    ) -> Result<(DVector<Complex64>, Complex64)> {
        let curve = &self.curve;
        let g = curve.genus;
        let mut raw = DVector::<Complex64>::zeros(g);

        // First leg leaves the base branch point: substituted.
        let base = path[0];
        let x1 = path[1];
        let w1 = curve.y_principal(x1);
        raw += self.branch_leg(base, x1, w1, false)?;

        let mut w = w1;
        let last_regular = if target_is_branch { path.len() - 2 } else { path.len() - 1 };
        for i in 1..last_regular {
            let (leg, w_next) = self.regular_leg(path[i], path[i + 1], w)?;
            raw += leg;
            w = w_next;
        }
        if target_is_branch {
            let a = path[last_regular];
            let e = *path.last().unwrap();
            raw += self.branch_leg(e, a, w, true)?;
        }
        Ok((raw, w))
    }

    /// Straight leg between regular points: phase-safe breakpoints first,
    /// then Gauss-Kronrod on each step with the branch selected by
    /// continuity from the step anchor.
    fn regular_leg(
        &self,
        a: Complex64,
        b: Complex64,
        w_in: Complex64,
    ) -> Result<(DVector<Complex64>, Complex64)> {
        let curve = &self.curve;
        let g = curve.genus;
        let steps = phase_safe_breakpoints(&curve.f, a, b)?;
        let mut raw = DVector::<Complex64>::zeros(g);
        let mut w = w_in;
        for win in steps.windows(2) {
            let (xa, xb) = (win[0], win[1]);
            let seg = xb - xa;
            let w_anchor = w;
            let mut fint = |t: f64| {
                let x = xa + seg * t;
                let cand = curve.f.eval(x).sqrt();
                let wv = if (cand * w_anchor.conj()).re >= 0.0 { cand } else { -cand };
                let mut out = Vec::with_capacity(g);
                let mut xp = Complex64::new(1.0, 0.0);
                for _ in 0..g {
                    out.push(xp / wv * seg);
                    xp *= x;
                }
                out
            };
            let leg = gauss_kronrod_adaptive(&mut fint, 0.0, 1.0, self.tol.quad)?;
            for j in 0..g {
                raw[j] += leg[j];
            }
            let cand = curve.f.eval(xb).sqrt();
            w = if (cand * w_anchor.conj()).re >= 0.0 { cand } else { -cand };
        }
        Ok((raw, w))
    }

    /// Leg with a branch-point endpoint `e` and regular end `x1` carrying
    /// the matched branch value `w1`. Substituting x = e + (x1-e) u^2
    /// removes the singularity; `reversed` marks the target-side leg,
    /// traversed from x1 into e.
    fn branch_leg(
        &self,
        e: Complex64,
        x1: Complex64,
        w1: Complex64,
        reversed: bool,
    ) -> Result<DVector<Complex64>> {
        let curve = &self.curve;
        let g = curve.genus;
        let d = x1 - e;
        let lin = crate::poly::Poly::new(vec![-e, Complex64::new(1.0, 0.0)]);
        let (q, _) = curve.f.div_rem(&lin);
        // w(x(u)) = s u sqrt(d) V(u) with V = sqrt(q(x(u))), anchored at u=1.
        let sd = d.sqrt();
        let v1 = q.eval(x1).sqrt();
        let ratio = w1 / (sd * v1);
        let s = if ratio.re >= 0.0 { 1.0 } else { -1.0 };
        debug_assert!((ratio.norm() - 1.0).abs() < 1e-6);
        let steps = phase_safe_breakpoints(&q, e, x1)?;
        let mut upoints: Vec<(f64, Complex64)> = steps
            .iter()
            .map(|x| {
                let u2 = ((x - e) / d).re.max(0.0);
                (u2.sqrt(), *x)
            })
            .collect();
        upoints.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        let mut wv = v1;
        let mut anchored: Vec<(f64, Complex64)> = vec![(1.0, v1)];
        for (u, x) in upoints.iter().rev().skip(1) {
            let cand = q.eval(*x).sqrt();
            wv = if (cand * wv.conj()).re >= 0.0 { cand } else { -cand };
            anchored.push((*u, wv));
        }
        anchored.reverse();
        let mut raw = DVector::<Complex64>::zeros(g);
        for win in anchored.windows(2) {
            let (ua, wa) = win[0];
            let (ub, _) = win[1];
            let du = ub - ua;
            let mut fint = |t: f64| {
                let u = ua + du * t;
                let x = e + d * (u * u);
                let cand = q.eval(x).sqrt();
                let v = if (cand * wa.conj()).re >= 0.0 { cand } else { -cand };
                // x^j dx / w = 2 sqrt(d) x^j / (s V) du
                let pref = 2.0 * sd / (s * v) * du;
                let mut out = Vec::with_capacity(g);
                let mut xp = Complex64::new(1.0, 0.0);
                for _ in 0..g {
                    out.push(xp * pref);
                    xp *= x;
                }
                out
            };
            let leg = gauss_kronrod_adaptive(&mut fint, 0.0, 1.0, self.tol.quad)?;
            for j in 0..g {
                raw[j] += leg[j];
            }
        }
        if reversed {
            raw = -raw;
        }
        Ok(raw)
    }

    /// Median of ln|theta| over 32 seeded samples of the lattice box; the
    /// reference scale for vanishing tests. Cached.
    pub fn typical_theta_ln(&self) -> Result<f64> {
        if let Some(v) = *self.theta_scale_cache.lock().unwrap() {
            return Ok(v);
        }
        let g = self.genus();
        let rm = self.rm();
        let chi = Characteristic::zero(g);
        let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
        let mut lns = Vec::with_capacity(32);
        for _ in 0..32 {
            let z = random_box_point(rm, &mut rng);
            lns.push(theta(&z, rm, &chi, self.tol.theta)?.ln_abs());
        }
        lns.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = 0.5 * (lns[15] + lns[16]);
        *self.theta_scale_cache.lock().unwrap() = Some(med);
        Ok(med)
    }

    /// Theta-divisor membership with the dead-band policy: relative
    /// magnitude below 1e-6 is On, above 1e-4 Off, in between Indeterminate.
    pub fn divisor_verdict(&self, e: &DVector<Complex64>) -> Result<DivisorVerdict> {
        let chi = Characteristic::zero(self.genus());
        let val = theta(e, self.rm(), &chi, self.tol.theta)?;
        let rel = val.ln_abs() - self.typical_theta_ln()?;
        if rel < (1e-6f64).ln() {
            Ok(DivisorVerdict::On)
        } else if rel < (1e-4f64).ln() {
            Ok(DivisorVerdict::Indeterminate)
        } else {
            Ok(DivisorVerdict::Off)
        }
    }

    pub fn is_on_theta_divisor(&self, e: &DVector<Complex64>) -> Result<bool> {
        Ok(self.divisor_verdict(e)?.is_on())
    }

    /// Search the 2^(2g) half-periods for the Riemann constant vector.
    pub fn riemann_vector(&self) -> Result<RiemannVector> {
        let g = self.genus();
        let rm = self.rm();
        let chi0 = Characteristic::zero(g);
        let typical = self.typical_theta_ln()?;

        let mut branch_images = Vec::new();
        for k in 0..self.curve.branch_points.len() {
            branch_images.push(self.abel_map(&self.curve.branch_point(k))?);
        }

        // Test divisors: (g-1)-subsets of finite branch points; all of them
        // when few, otherwise a seeded sample of at least five.
        let subsets = k_subsets(self.curve.branch_points.len(), g - 1);
        let chosen: Vec<&Vec<usize>> = if subsets.len() <= 12 {
            subsets.iter().collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
            let mut idx: Vec<usize> = (0..subsets.len()).collect();
            for i in (1..idx.len()).rev() {
                let j = rng.gen_range(0..=i);
                idx.swap(i, j);
            }
            idx.truncate(8);
            idx.iter().map(|&i| &subsets[i]).collect()
        };

        let mut rng = ChaCha8Rng::seed_from_u64(0xFACE);
        let generic: Vec<DVector<Complex64>> =
            (0..4).map(|_| random_box_point(rm, &mut rng)).collect();

        let mut survivors = Vec::new();
        for chi in crate::theta::characteristics(g) {
            let k = chi.half_period(rm);
            let mut ok = true;
            for subset in &chosen {
                let mut z = k.clone();
                for &bi in subset.iter() {
                    z += &branch_images[bi];
                }
                let rel = theta(&z, rm, &chi0, self.tol.theta)?.ln_abs() - typical;
                if rel >= (1e-6f64).ln() {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
            let mut nonzero = 0;
            for e in &generic {
                let rel = theta(&(e + &k), rm, &chi0, self.tol.theta)?.ln_abs() - typical;
                if rel > (1e-3f64).ln() {
                    nonzero += 1;
                }
            }
            if nonzero >= 3 {
                survivors.push((chi, k));
            }
        }
        if survivors.len() != 1 {
            return Err(Error::RiemannVectorAmbiguous(survivors.len()));
        }
        let (characteristic, k) = survivors.pop().unwrap();
        Ok(RiemannVector { k, characteristic })
    }

    /// Sample 2m regular points: pairwise separated, away from branch
    /// points, and with canonical paths free of detours and homotopy walls.
    /// Deterministic per seed; 1000 rejections exhaust the budget.
    pub fn sample_regular_configuration(
        &self,
        m: usize,
        rng_seed: u64,
        constraints: &SampleConstraints,
    ) -> Result<Vec<CurvePoint>> {
        let curve = &self.curve;
        let scale = curve.scale();
        let centroid: Complex64 =
            curve.branch_points.iter().sum::<Complex64>() / curve.branch_points.len() as f64;
        let spread = curve
            .branch_points
            .iter()
            .map(|e| (e - centroid).norm())
            .fold(0.0f64, f64::max)
            .max(0.3 * scale);
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut pts: Vec<CurvePoint> = Vec::with_capacity(2 * m);
        let mut rejections = 0usize;
        let base = curve.branch_points[0];
        while pts.len() < 2 * m {
            if rejections >= 1000 {
                return Err(Error::SamplingExhausted(rejections));
            }
            let r = 1.6 * spread * rng.gen::<f64>().sqrt() + 0.05 * scale;
            let th = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
            let x = centroid + Complex64::new(r * th.cos(), r * th.sin());
            let sheet = if rng.gen::<bool>() { 1 } else { -1 };
            let mut ok = true;
            for e in &curve.branch_points {
                if (x - e).norm() < constraints.min_branch_distance * scale {
                    ok = false;
                    break;
                }
                let t = (((e - base) * (x - base).conj()).re) / (x - base).norm_sqr();
                if t > 1e-9 && t < 1.0 - 1e-9
                    && point_segment_distance(*e, base, x) < 5e-3 * scale
                {
                    ok = false;
                    break;
                }
            }
            if ok {
                for q in &pts {
                    if (x - q.x).norm() < constraints.min_separation * scale {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                pts.push(curve.point(x, sheet));
            } else {
                rejections += 1;
            }
        }
        Ok(pts)
    }

    /// True when the vector reduces to a lattice point within `tol_dist`.
    pub fn is_lattice_vector(&self, v: &DVector<Complex64>, tol_dist: f64) -> bool {
        lattice_distance(v, self.rm()) < tol_dist
    }

    /// Scaled theta value at a plain argument (characteristic 0).
    pub fn theta0(&self, z: &DVector<Complex64>) -> Result<ScaledComplex> {
        theta(z, self.rm(), &Characteristic::zero(self.genus()), self.tol.theta)
    }
}

fn random_box_point(rm: &RiemannMatrix, rng: &mut ChaCha8Rng) -> DVector<Complex64> {
    let g = rm.g();
    let u: Vec<f64> = (0..g).map(|_| rng.gen::<f64>()).collect();
    let v: Vec<f64> = (0..g).map(|_| rng.gen::<f64>()).collect();
    DVector::from_fn(g, |i, _| {
        let mut acc = Complex64::new(v[i], 0.0);
        for j in 0..g {
            acc += rm.mat()[(i, j)] * u[j];
        }
        acc
    })
}

/// Breakpoints along [a, b] such that the unwrapped phase of `p` moves by
/// less than about 1/2 radian between consecutive points. The winding is
/// bounded through the logarithmic derivative, |d arg p| <= |p'/p| |dx|;
/// a wrapped-phase test alone would miss full turns of fast-rotating
/// polynomials and silently flip square-root branches downstream.
fn phase_safe_breakpoints(
    p: &crate::poly::Poly,
    a: Complex64,
    b: Complex64,
) -> Result<Vec<Complex64>> {
    let dp = p.derivative();
    let mut out = vec![a];
    let mut t = 0.0f64;
    let len = (b - a).norm().max(1e-300);
    let mut pcur = p.eval(a);
    if pcur.norm() == 0.0 {
        return Err(Error::QuadratureNotConverged(
            "phase tracking started at a zero of the polynomial".into(),
        ));
    }
    while t < 1.0 {
        let x = a + (b - a) * t;
        let rate = (dp.eval(x) / p.eval(x)).norm().max(1e-12);
        let mut dt = (0.35 / (rate * len)).clamp(1e-10, 0.25);
        loop {
            let tn = (t + dt).min(1.0);
            let xn = a + (b - a) * tn;
            let pn = p.eval(xn);
            if pn.norm() == 0.0 {
                return Err(Error::QuadratureNotConverged(
                    "phase tracking crossed a zero of the polynomial".into(),
                ));
            }
            let ratio = pn / pcur;
            if ratio.arg().abs() > 1.2 || ratio.norm() > 6.0 || ratio.norm() < 1.0 / 6.0 {
                dt *= 0.5;
                if dt < 1e-12 {
                    return Err(Error::QuadratureNotConverged(
                        "phase tracking step underflow".into(),
                    ));
                }
                continue;
            }
            out.push(xn);
            pcur = pn;
            t = tn;
            break;
        }
    }
    Ok(out)
}

fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{build_curve, period_matrix};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn g2_jacobian() -> Jacobian {
        let coeffs: Vec<Complex64> =
            [0., 2., 0., -3., 0., 1.].iter().map(|&v| c(v, 0.)).collect();
        let cur = build_curve(&coeffs).unwrap();
        let pd = period_matrix(&cur, 1e-11).unwrap();
        Jacobian::new(cur, pd, Tolerances::default())
    }

    #[test]
    fn base_point_maps_to_zero() {
        let jac = g2_jacobian();
        let a = jac.abel_map(&jac.curve.base_point()).unwrap();
        assert!(a.norm() < 1e-12);
    }

    #[test]
    fn abel_theorem_for_x_functions() {
        // div(x - x0) = P + sigma(P) - 2 oo is principal: its Abel image
        // must reduce to a lattice point.
        let jac = g2_jacobian();
        let inf2 = jac.abel_infinity().unwrap() * c(2.0, 0.0);
        for x0 in [c(0.7, 0.9), c(-1.9, 0.4), c(0.2, -1.3)] {
            let p = jac.curve.point(x0, 1);
            let a1 = jac.abel_map(&p).unwrap();
            let a2 = jac.abel_map(&jac.curve.conjugate(&p)).unwrap();
            let v = a1 + a2 - &inf2;
            let d = lattice_distance(&v, jac.rm());
            assert!(d < 1e-6, "x0 = {x0}: distance {d}");
        }
    }

    #[test]
    fn abel_theorem_for_y() {
        // div(y) = sum of finite branch points - (2g+1) oo.
        let jac = g2_jacobian();
        let g = jac.genus();
        let mut v = DVector::<Complex64>::zeros(g);
        for k in 0..jac.curve.branch_points.len() {
            v += jac.abel_map(&jac.curve.branch_point(k)).unwrap();
        }
        v -= jac.abel_infinity().unwrap() * c(5.0, 0.0);
        let d = lattice_distance(&v, jac.rm());
        assert!(d < 1e-6, "distance {d}");
    }

    #[test]
    fn branch_points_are_half_periods() {
        let jac = g2_jacobian();
        for k in 1..jac.curve.branch_points.len() {
            let a = jac.abel_map(&jac.curve.branch_point(k)).unwrap();
            let d = lattice_distance(&(a * c(2.0, 0.0)), jac.rm());
            assert!(d < 1e-6, "branch {k}: {d}");
        }
        let inf = jac.abel_infinity().unwrap();
        let d = lattice_distance(&(inf * c(2.0, 0.0)), jac.rm());
        assert!(d < 1e-6, "infinity: {d}");
    }

    #[test]
    fn infinity_tail_cauchy_consistency() {
        let jac = g2_jacobian();
        let a = jac.abel_infinity_at(1e3).unwrap();
        let b = jac.abel_infinity_at(2e3).unwrap();
        assert!((a - b).norm() < 1e-9);
    }

    #[test]
    fn homotopy_consistency() {
        // A fresh path with a different detour radius may change the
        // homotopy class but not the class modulo periods.
        let jac = g2_jacobian();
        let p = jac.curve.point(c(0.8, 0.6), -1);
        let a = jac.abel_map(&p).unwrap();
        let (b, _) = jac.abel_map_fresh(&p, 2.0).unwrap();
        let d = lattice_distance(&(a - b), jac.rm());
        assert!(d < 1e-7, "distance {d}");
    }

    #[test]
    fn additivity_is_exact() {
        let jac = g2_jacobian();
        let p = jac.curve.point(c(0.5, 1.1), 1);
        let q = jac.curve.point(c(-0.4, 0.8), -1);
        let d = Divisor::new(vec![(p, 2), (q, -1)]);
        let v = jac.abel_divisor(&d).unwrap();
        let manual = jac.abel_map(&p).unwrap() * c(2.0, 0.0) - jac.abel_map(&q).unwrap();
        assert_eq!(d.degree(), 1);
        assert!((v.vec - manual).norm() == 0.0);
    }

    #[test]
    fn riemann_vector_g2() {
        let jac = g2_jacobian();
        let rv = jac.riemann_vector().unwrap();
        // Vanishing on a degree-(g-1) effective class.
        let a = jac.abel_map(&jac.curve.branch_point(1)).unwrap();
        let z = &a + &rv.k;
        assert!(jac.divisor_verdict(&z).unwrap().is_on());
        // Generic class is off the divisor.
        let p = jac.curve.point(c(0.9, 0.7), 1);
        let q = jac.curve.point(c(-0.2, 1.2), -1);
        let inf = jac.abel_infinity().unwrap();
        let e = jac.abel_map(&p).unwrap() + jac.abel_map(&q).unwrap() - inf * c(2.0, 0.0) + &rv.k;
        assert_eq!(jac.divisor_verdict(&e).unwrap(), DivisorVerdict::Off);
    }

    #[test]
    fn riemann_vector_g1() {
        let coeffs: Vec<Complex64> = [0., -1., 0., 1.].iter().map(|&v| c(v, 0.)).collect();
        let cur = build_curve(&coeffs).unwrap();
        let pd = period_matrix(&cur, 1e-11).unwrap();
        let jac = Jacobian::new(cur, pd, Tolerances::default());
        let rv = jac.riemann_vector().unwrap();
        // For the base at a Weierstrass point of an elliptic curve the
        // constant is the odd half period.
        assert!(rv.characteristic.is_odd());
    }

    #[test]
    fn sampler_is_deterministic_and_separated() {
        let jac = g2_jacobian();
        let cons = SampleConstraints::default();
        let a = jac.sample_regular_configuration(2, 7, &cons).unwrap();
        let b = jac.sample_regular_configuration(2, 7, &cons).unwrap();
        assert_eq!(a.len(), 4);
        for (p, q) in a.iter().zip(b.iter()) {
            assert_eq!(p.key(), q.key());
        }
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                assert!((a[i].x - a[j].x).norm() >= cons.min_separation * jac.curve.scale());
            }
        }
        let c2 = jac.sample_regular_configuration(2, 8, &cons).unwrap();
        assert!(a.iter().zip(c2.iter()).any(|(p, q)| p.key() != q.key()));
    }

    #[test]
    fn sampler_exhaustion() {
        let jac = g2_jacobian();
        let cons = SampleConstraints { min_separation: 50.0, min_branch_distance: 1e-2 };
        assert!(matches!(
            jac.sample_regular_configuration(2, 7, &cons),
            Err(Error::SamplingExhausted(_))
        ));
    }

    #[test]
    fn degenerate_target_rejected() {
        let jac = g2_jacobian();
        let near = jac.curve.branch_points[2] + c(1e-8, 0.0);
        let p = CurvePoint { x: near, sheet: 1, is_branch: false, at_infinity: false };
        assert!(matches!(jac.abel_map(&p), Err(Error::PathDegenerate(_))));
    }
}
