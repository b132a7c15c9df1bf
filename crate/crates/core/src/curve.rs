//! Hyperelliptic curves y^2 = f(x) on the odd model (deg f = 2g+1), their
//! branch data, holomorphic differentials, homology cut system and period
//! matrices.
//!
//! Homology follows the classical hyperelliptic cut pairing of the branch
//! points sorted by (Re, Im): with sorted points e_1..e_{2g+1} the cuts are
//! the segments (e_2,e_3), (e_4,e_5), ..., plus the cut joining e_1 to the
//! branch point at infinity. Cycle a_i loops around the i-th finite cut;
//! cycle b_i threads through cut i and the infinite cut, enclosing
//! e_1..e_{2i}. Collapsing those loops onto the chain of consecutive
//! segments expresses every period through the 2g elementary segment
//! integrals
//!
//!   T_k = int_{e_k}^{e_{k+1}} x^j dx / y,
//!
//! taken with one coherent branch of y along the chain:
//!
//!   A[i] = 2 T_{2i},    B[i] = 2 (T_1 + T_3 + ... + T_{2i-1})   (1-based k),
//!
//! where the b-sum runs over the gap segments only (collapsing b_i onto the
//! chain, its two arcs lie on opposite sheets, so gap contributions double
//! while cut contributions cancel), up to one global orientation sign fixed
//! by positive definiteness of Im(tau). The branch coherence signs between consecutive segments are
//! computed by analytic continuation around each branch point (clockwise
//! half-turn detours), and the segment integrals use Gauss-Chebyshev nodes,
//! which absorb the inverse-square-root endpoint singularities exactly.
//! Correctness of the whole convention is certified a posteriori: tau must
//! come out symmetric with positive definite imaginary part, and Abel-map
//! and theta-function tests downstream re-check it independently.

use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::quad::chebyshev_nodes;
use crate::theta::RiemannMatrix;
use nalgebra::DMatrix;
use num_complex::Complex64;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// A point of the curve: x-coordinate plus the sheet sign selecting
/// y = sheet * sqrt(f(x)) under the principal-branch convention, or the
/// single point at infinity of the odd model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub x: Complex64,
    pub sheet: i8,
    pub is_branch: bool,
    pub at_infinity: bool,
}

impl CurvePoint {
    pub fn infinity() -> Self {
        CurvePoint {
            x: Complex64::new(f64::INFINITY, 0.0),
            sheet: 1,
            is_branch: true,
            at_infinity: true,
        }
    }

    /// Stable cache key built from the raw bit patterns.
    pub fn key(&self) -> PointKey {
        PointKey {
            xre: self.x.re.to_bits(),
            xim: self.x.im.to_bits(),
            sheet: self.sheet,
            at_infinity: self.at_infinity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointKey {
    xre: u64,
    xim: u64,
    sheet: i8,
    at_infinity: bool,
}

impl std::fmt::Display for PointKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.at_infinity {
            write!(f, "oo")
        } else {
            write!(
                f,
                "({:.6},{:.6})[{}]",
                f64::from_bits(self.xre),
                f64::from_bits(self.xim),
                self.sheet
            )
        }
    }
}

/// Genus-g curve y^2 = f(x), deg f = 2g+1, squarefree.
#[derive(Debug, Clone)]
pub struct HyperellipticCurve {
    pub genus: usize,
    pub f: Poly,
    /// The 2g+1 finite branch points, sorted by (Re, Im); infinity is the
    /// remaining branch point of the odd model.
    pub branch_points: Vec<Complex64>,
    scale: f64,
}

/// Build a curve from the coefficients of f in ascending degree order.
pub fn build_curve(f_coeffs: &[Complex64]) -> Result<HyperellipticCurve> {
    let maxc = f_coeffs.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    let mut coeffs = f_coeffs.to_vec();
    while coeffs.len() > 1 && coeffs.last().unwrap().norm() <= 1e-14 * maxc {
        coeffs.pop();
    }
    let deg = coeffs.len().saturating_sub(1);
    if deg < 3 || deg % 2 == 0 {
        return Err(Error::WrongDegree(deg));
    }
    let genus = (deg - 1) / 2;
    let f = Poly::new(coeffs);
    let mut roots = f.roots();

    // Newton polish until the residual clears the documented threshold.
    let fp = f.derivative();
    for r in roots.iter_mut() {
        for _ in 0..8 {
            let scale_f: f64 = f
                .coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c.norm() * r.norm().max(1.0).powi(k as i32))
                .sum();
            if f.eval(*r).norm() < 1e-13 * scale_f {
                break;
            }
            let d = fp.eval(*r);
            if d.norm() == 0.0 {
                break;
            }
            *r -= f.eval(*r) / d;
        }
    }

    let scale = 1.0 + roots.iter().map(|r| r.norm()).fold(0.0f64, f64::max);
    for i in 0..roots.len() {
        for j in (i + 1)..roots.len() {
            if (roots[i] - roots[j]).norm() <= 1e-9 * scale {
                return Err(Error::NotSquarefree(i, j));
            }
        }
    }
    roots.sort_by(|a, b| {
        (a.re, a.im)
            .partial_cmp(&(b.re, b.im))
            .expect("branch points are finite")
    });
    Ok(HyperellipticCurve { genus, f, branch_points: roots, scale })
}

impl HyperellipticCurve {
    /// Characteristic length of the branch configuration.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// The Abel base point: the branch point of smallest (Re, Im).
    pub fn base_point(&self) -> CurvePoint {
        CurvePoint {
            x: self.branch_points[0],
            sheet: 1,
            is_branch: true,
            at_infinity: false,
        }
    }

    pub fn branch_point(&self, k: usize) -> CurvePoint {
        CurvePoint {
            x: self.branch_points[k],
            sheet: 1,
            is_branch: true,
            at_infinity: false,
        }
    }

    /// Principal-branch value of sqrt(f(x)).
    pub fn y_principal(&self, x: Complex64) -> Complex64 {
        self.f.eval(x).sqrt()
    }

    /// y-coordinate of a finite point.
    pub fn y(&self, p: &CurvePoint) -> Complex64 {
        if p.is_branch {
            Complex64::new(0.0, 0.0)
        } else {
            self.y_principal(p.x) * (p.sheet as f64)
        }
    }

    /// Construct a finite point on the given sheet.
    pub fn point(&self, x: Complex64, sheet: i8) -> CurvePoint {
        let is_branch = self.nearest_branch(x).1 <= 1e-9 * self.scale;
        CurvePoint { x, sheet, is_branch, at_infinity: false }
    }

    pub fn conjugate(&self, p: &CurvePoint) -> CurvePoint {
        CurvePoint { sheet: -p.sheet, ..*p }
    }

    /// Index and distance of the nearest finite branch point.
    pub fn nearest_branch(&self, x: Complex64) -> (usize, f64) {
        let mut best = (0usize, f64::INFINITY);
        for (i, e) in self.branch_points.iter().enumerate() {
            let d = (x - e).norm();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    /// Continue w = sqrt(f) along the polyline, starting from the value `w0`
    /// at the first waypoint. Steps are halved until the phase of f moves by
    /// less than pi/2 per step, so the nearer square root is unambiguous.
    pub(crate) fn continue_sqrt(
        &self,
        waypoints: &[Complex64],
        w0: Complex64,
    ) -> Result<Complex64> {
        let mut w = w0;
        for leg in waypoints.windows(2) {
            w = self.continue_sqrt_leg(leg[0], leg[1], w)?;
        }
        Ok(w)
    }

    fn continue_sqrt_leg(&self, a: Complex64, b: Complex64, w0: Complex64) -> Result<Complex64> {
        let mut t = 0.0f64;
        let mut w = w0;
        let mut x = a;
        let mut fcur = self.f.eval(a);
        let len = (b - a).norm();
        while t < 1.0 {
            // The winding of arg f along a step is bounded by
            // |dx| sum_k 1/|x - e_k|; keeping it below ~0.5 makes the
            // nearer-square-root selection unambiguous. A wrapped-phase test
            // alone would miss full turns.
            let rate: f64 = self
                .branch_points
                .iter()
                .map(|e| 1.0 / (x - e).norm().max(1e-300))
                .sum();
            let mut dt = (0.35 / (rate * len)).clamp(1e-12, 0.25);
            loop {
                let tn = (t + dt).min(1.0);
                let xn = a + (b - a) * tn;
                let fnext = self.f.eval(xn);
                if fnext.norm() == 0.0 {
                    let (index, dist) = self.nearest_branch(xn);
                    return Err(Error::PathTooCloseToBranchPoint { index, dist });
                }
                let ratio = fnext / fcur;
                // Backup check: with the rate bound in force a wrapped
                // reading beyond pi/2 means the rate grew along the step.
                if ratio.arg().abs() > std::f64::consts::FRAC_PI_2 {
                    dt *= 0.5;
                    if dt < 1e-13 {
                        let (index, dist) = self.nearest_branch(xn);
                        return Err(Error::PathTooCloseToBranchPoint { index, dist });
                    }
                    continue;
                }
                let cand = fnext.sqrt();
                w = if (cand * w.conj()).re >= 0.0 { cand } else { -cand };
                t = tn;
                x = xn;
                fcur = fnext;
                break;
            }
        }
        Ok(w)
    }
}

/// Descriptor of the basis differential x^k dx / y.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Differential {
    pub exponent: usize,
}

impl Differential {
    /// Coefficient of the differential against the trivialization dx at a
    /// finite non-branch point: x^k / y.
    pub fn eval_dx_coeff(&self, curve: &HyperellipticCurve, p: &CurvePoint) -> Result<Complex64> {
        if p.at_infinity || p.is_branch {
            return Err(Error::EvaluationAtBranchPoint);
        }
        let y = curve.y(p);
        if y.norm() == 0.0 {
            return Err(Error::EvaluationAtBranchPoint);
        }
        Ok(p.x.powu(self.exponent as u32) / y)
    }
}

/// The standard basis x^k dx/y, k = 0..g-1.
pub fn differential_basis(curve: &HyperellipticCurve) -> Vec<Differential> {
    (0..curve.genus).map(|k| Differential { exponent: k }).collect()
}

/// Track the sheet of sqrt(f) along a polyline path in the x-plane.
///
/// The path must keep a distance of 1e-6 * scale from every branch point.
pub fn continue_sheet(
    curve: &HyperellipticCurve,
    path: &[Complex64],
    start_sheet: i8,
) -> Result<i8> {
    assert!(path.len() >= 2, "path needs at least two waypoints");
    let margin = 1e-6 * curve.scale();
    for leg in path.windows(2) {
        for (index, e) in curve.branch_points.iter().enumerate() {
            let dist = point_segment_distance(*e, leg[0], leg[1]);
            if dist < margin {
                return Err(Error::PathTooCloseToBranchPoint { index, dist });
            }
        }
    }
    let w0 = curve.y_principal(path[0]) * (start_sheet as f64);
    let w_end = curve.continue_sqrt(path, w0)?;
    let principal = curve.y_principal(*path.last().unwrap());
    Ok(if (w_end * principal.conj()).re >= 0.0 { 1 } else { -1 })
}

pub(crate) fn point_segment_distance(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a) * ab.conj()).re / len2;
    let t = t.clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Periods of the unnormalized basis over the a/b cycles, the normalization
/// to dual basis, and the Riemann matrix.
#[derive(Debug, Clone)]
pub struct PeriodData {
    pub a_periods: DMatrix<Complex64>,
    pub b_periods: DMatrix<Complex64>,
    /// Column m holds the monomial coefficients of the m-th normalized
    /// differential: omega_m = sum_j normalization[(j,m)] x^j dx / y.
    pub normalization: DMatrix<Complex64>,
    pub tau: RiemannMatrix,
    pub tol: f64,
}

impl PeriodData {
    /// dx-coefficients of all normalized differentials at a point.
    pub fn normalized_dx_coeffs(
        &self,
        curve: &HyperellipticCurve,
        p: &CurvePoint,
    ) -> Result<Vec<Complex64>> {
        if p.at_infinity || p.is_branch {
            return Err(Error::EvaluationAtBranchPoint);
        }
        let y = curve.y(p);
        if y.norm() == 0.0 {
            return Err(Error::EvaluationAtBranchPoint);
        }
        let g = curve.genus;
        let mut out = Vec::with_capacity(g);
        for m in 0..g {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut xp = Complex64::new(1.0, 0.0);
            for j in 0..g {
                acc += self.normalization[(j, m)] * xp;
                xp *= p.x;
            }
            out.push(acc / y);
        }
        Ok(out)
    }
}

/// One chain segment between consecutive sorted branch points, with the
/// reduced polynomial G = f / ((x-e_k)(x-e_{k+1})) and its midpoint anchor.
struct Segment {
    mid: Complex64,
    rad: Complex64,
    gpoly: Poly,
}

impl Segment {
    fn x_of(&self, t: f64) -> Complex64 {
        self.mid + self.rad * t
    }
}

fn build_segments(curve: &HyperellipticCurve) -> Result<Vec<Segment>> {
    let e = &curve.branch_points;
    let mut segs = Vec::with_capacity(e.len() - 1);
    for k in 0..e.len() - 1 {
        let lin = Poly::from_roots(Complex64::new(1.0, 0.0), &[e[k], e[k + 1]]);
        let (gpoly, rem) = curve.f.div_rem(&lin);
        let rem_norm = rem.coeffs.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
        debug_assert!(rem_norm <= 1e-8 * curve.f.lead().norm() * curve.scale().powi(5));
        let _ = rem_norm;
        segs.push(Segment {
            mid: (e[k] + e[k + 1]) * 0.5,
            rad: (e[k + 1] - e[k]) * 0.5,
            gpoly,
        });
    }
    Ok(segs)
}

/// Raw Chebyshev estimate (pi/N) sum_i x(t_i)^j / H(t_i) for all j < g,
/// where H is the branch of sqrt(G) anchored at the principal value in the
/// segment midpoint and tracked node to node. Returns None when adjacent
/// nodes under-resolve the phase of G, which forces another doubling.
fn segment_integrals(seg: &Segment, g: usize, n: usize) -> Option<Vec<Complex64>> {
    let nodes = chebyshev_nodes(n);
    let anchor = seg.gpoly.eval(seg.mid).sqrt();
    if anchor.norm() == 0.0 {
        return None;
    }
    // Index of the node closest to t = 0.
    let mut ai = 0usize;
    for (i, t) in nodes.iter().enumerate() {
        if t.abs() < nodes[ai].abs() {
            ai = i;
        }
    }
    let mut h = vec![Complex64::new(0.0, 0.0); n];
    let mut gvals = vec![Complex64::new(0.0, 0.0); n];
    let dg = seg.gpoly.derivative();
    for i in 0..n {
        let x = seg.x_of(nodes[i]);
        gvals[i] = seg.gpoly.eval(x);
        if gvals[i].norm() == 0.0 {
            return None;
        }
        // Node spacing must resolve the unwrapped winding of arg G, bounded
        // by |G'/G| |dx|; otherwise demand a doubling.
        if i > 0 {
            let step = (seg.rad * (nodes[i] - nodes[i - 1])).norm();
            let rate = (dg.eval(x) / gvals[i]).norm();
            if rate * step > 1.0 {
                return None;
            }
        }
    }
    let track = |prev_g: Complex64, prev_h: Complex64, gv: Complex64| -> Option<Complex64> {
        if (gv / prev_g).arg().abs() > std::f64::consts::FRAC_PI_2 {
            return None;
        }
        let cand = gv.sqrt();
        Some(if (cand * prev_h.conj()).re >= 0.0 { cand } else { -cand })
    };
    // Anchor node, then track outward in both directions.
    h[ai] = track(seg.gpoly.eval(seg.mid), anchor, gvals[ai])?;
    let mut prev = (gvals[ai], h[ai]);
    for i in ai + 1..n {
        h[i] = track(prev.0, prev.1, gvals[i])?;
        prev = (gvals[i], h[i]);
    }
    prev = (gvals[ai], h[ai]);
    for i in (0..ai).rev() {
        h[i] = track(prev.0, prev.1, gvals[i])?;
        prev = (gvals[i], h[i]);
    }
    let wq = std::f64::consts::PI / n as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); g];
    for i in 0..n {
        let x = seg.x_of(nodes[i]);
        let inv = wq / h[i];
        let mut xp = Complex64::new(1.0, 0.0);
        for j in 0..g {
            out[j] += xp * inv;
            xp *= x;
        }
    }
    Some(out)
}

/// Branch-coherence sign linking segment k to segment k+1: continue sqrt(f)
/// from the midpoint representative of segment k, around e_{k+1} by a
/// clockwise half-turn, to the midpoint of segment k+1, and compare with the
/// representative there.
fn connector_sign(
    curve: &HyperellipticCurve,
    segs: &[Segment],
    k: usize,
) -> Result<f64> {
    let e = curve.branch_points[k + 1];
    let dir_in = -segs[k].rad / segs[k].rad.norm();
    let dir_out = segs[k + 1].rad / segs[k + 1].rad.norm();
    let mut rho = segs[k].rad.norm().min(segs[k + 1].rad.norm()) * 0.5;
    for (i, other) in curve.branch_points.iter().enumerate() {
        if i != k + 1 {
            rho = rho.min(0.5 * (other - e).norm());
        }
    }
    let a = e + dir_in * rho;
    let b = e + dir_out * rho;

    let mut path = vec![segs[k].mid, a];
    let th_a = (a - e).arg();
    let mut dth = (b - e).arg() - th_a;
    while dth > 0.0 {
        dth -= 2.0 * std::f64::consts::PI;
    }
    let steps = 24;
    for s in 1..=steps {
        let th = th_a + dth * (s as f64) / (steps as f64);
        path.push(e + Complex64::new(th.cos(), th.sin()) * rho);
    }
    path.push(segs[k + 1].mid);

    let w0 = I * segs[k].rad * segs[k].gpoly.eval(segs[k].mid).sqrt();
    let w_end = curve.continue_sqrt(&path, w0)?;
    let rep = I * segs[k + 1].rad * segs[k + 1].gpoly.eval(segs[k + 1].mid).sqrt();
    let r = (w_end / rep).re;
    if !(r.abs() > 0.5) {
        return Err(Error::QuadratureNotConverged(format!(
            "sheet connector at branch point {} is ambiguous (ratio {r:.3})",
            k + 1
        )));
    }
    Ok(if r > 0.0 { 1.0 } else { -1.0 })
}

/// Compute a/b periods and the Riemann matrix.
///
/// Gauss-Chebyshev node counts double until successive estimates of every
/// segment integral agree to `tol`; the node cap is 2^16.
pub fn period_matrix(curve: &HyperellipticCurve, tol: f64) -> Result<PeriodData> {
    assert!(
        (1e-14..=1e-6).contains(&tol),
        "period tolerance outside documented range"
    );
    let g = curve.genus;
    let segs = build_segments(curve)?;
    let nseg = segs.len();

    // Converged raw integrals R_k^{(j)} = (pi/N) sum x^j / H.
    let mut raw: Vec<Vec<Complex64>> = Vec::with_capacity(nseg);
    for seg in &segs {
        let mut n = 16usize;
        let mut prev: Option<Vec<Complex64>> = None;
        let mut accepted: Option<Vec<Complex64>> = None;
        while n <= (1 << 16) {
            if let Some(cur) = segment_integrals(seg, g, n) {
                if let Some(p) = &prev {
                    let scale = 1.0 + cur.iter().map(|v| v.norm()).fold(0.0, f64::max);
                    let diff = cur
                        .iter()
                        .zip(p.iter())
                        .map(|(a, b)| (a - b).norm())
                        .fold(0.0f64, f64::max);
                    if diff < tol * scale {
                        accepted = Some(cur);
                        break;
                    }
                }
                prev = Some(cur);
            } else {
                prev = None;
            }
            n *= 2;
        }
        match accepted {
            Some(v) => raw.push(v),
            None => {
                return Err(Error::QuadratureNotConverged(format!(
                    "segment integral did not converge below {tol:.1e} within 2^16 nodes"
                )))
            }
        }
    }

    // Chain coherence signs.
    let mut eps = vec![1.0f64; nseg];
    for k in 0..nseg - 1 {
        eps[k + 1] = eps[k] * connector_sign(curve, &segs, k)?;
    }

    // T_k = raw_k / (i * eps_k); cuts are the odd segments (0-based).
    let t: Vec<Vec<Complex64>> = raw
        .iter()
        .zip(eps.iter())
        .map(|(r, &e)| r.iter().map(|v| v / (I * e)).collect())
        .collect();

    let mut a_mat = DMatrix::<Complex64>::zeros(g, g);
    let mut b_mat = DMatrix::<Complex64>::zeros(g, g);
    for i in 0..g {
        for j in 0..g {
            a_mat[(i, j)] = 2.0 * t[2 * i + 1][j];
            // Collapsing b_i onto the chain, its two arcs run on opposite
            // sheets: gap contributions double while cut contributions
            // cancel, so only even-index segments enter.
            let mut acc = Complex64::new(0.0, 0.0);
            for k in (0..=2 * i).step_by(2) {
                acc += t[k][j];
            }
            b_mat[(i, j)] = 2.0 * acc;
        }
    }

    let a_inv = a_mat
        .clone()
        .try_inverse()
        .ok_or(Error::IllConditionedAPeriods(f64::INFINITY))?;
    let cond = inf_norm(&a_mat) * inf_norm(&a_inv);
    if cond > 1e10 {
        return Err(Error::IllConditionedAPeriods(cond));
    }

    let mut tau = &b_mat * &a_inv;
    // Global orientation: positive definite imaginary part.
    let im_ev = symmetric_im_eigen(&tau);
    if im_ev.iter().all(|&l| l < 0.0) {
        tau = -tau;
        b_mat = -b_mat;
    }
    let tau = RiemannMatrix::new(tau).map_err(|e| match e {
        Error::InvalidTau(m) => Error::InvalidTau(format!(
            "period certification failed (homology convention): {m}"
        )),
        other => other,
    })?;

    Ok(PeriodData {
        a_periods: a_mat,
        b_periods: b_mat,
        normalization: a_inv,
        tau,
        tol,
    })
}

fn inf_norm(m: &DMatrix<Complex64>) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn symmetric_im_eigen(tau: &DMatrix<Complex64>) -> Vec<f64> {
    let g = tau.nrows();
    let im = DMatrix::<f64>::from_fn(g, g, |i, j| 0.5 * (tau[(i, j)].im + tau[(j, i)].im));
    nalgebra::SymmetricEigen::new(im).eigenvalues.iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn coeffs(v: &[f64]) -> Vec<Complex64> {
        v.iter().map(|&x| c(x, 0.0)).collect()
    }

    #[test]
    fn build_cubic() {
        // f = x^3 - x: genus 1, branch points -1, 0, 1.
        let cur = build_curve(&coeffs(&[0., -1., 0., 1.])).unwrap();
        assert_eq!(cur.genus, 1);
        assert!((cur.branch_points[0] - c(-1., 0.)).norm() < 1e-12);
        assert!((cur.branch_points[1] - c(0., 0.)).norm() < 1e-12);
        assert!((cur.branch_points[2] - c(1., 0.)).norm() < 1e-12);
        assert!((cur.base_point().x - c(-1., 0.)).norm() < 1e-12);
    }

    #[test]
    fn build_quintic_roots_of_unity() {
        // f = x^5 - 1: genus 2, branch points are the 5th roots of unity.
        let cur = build_curve(&coeffs(&[-1., 0., 0., 0., 0., 1.])).unwrap();
        assert_eq!(cur.genus, 2);
        for e in &cur.branch_points {
            assert!((e.norm() - 1.0).abs() < 1e-12);
            assert!(cur.f.eval(*e).norm() < 1e-10);
        }
    }

    #[test]
    fn double_root_rejected() {
        // f = x^3 - x^2 has a double root at 0.
        let err = build_curve(&coeffs(&[0., 0., -1., 1.])).unwrap_err();
        assert!(matches!(err, Error::NotSquarefree(_, _)));
    }

    #[test]
    fn even_degree_rejected() {
        let err = build_curve(&coeffs(&[1., 0., 0., 0., 1.])).unwrap_err();
        assert!(matches!(err, Error::WrongDegree(4)));
    }

    #[test]
    fn differential_evaluation() {
        // dx/y at (x=2, +) on y^2 = x^5 - 1: 1/sqrt(31).
        let cur = build_curve(&coeffs(&[-1., 0., 0., 0., 0., 1.])).unwrap();
        let basis = differential_basis(&cur);
        assert_eq!(basis.len(), 2);
        assert_eq!(basis[0].exponent, 0);
        assert_eq!(basis[1].exponent, 1);
        let p = cur.point(c(2., 0.), 1);
        let v = basis[0].eval_dx_coeff(&cur, &p).unwrap();
        assert!((v - c(1.0 / 31f64.sqrt(), 0.)).norm() < 1e-12);
        let brk = cur.point(c(1., 0.), 1);
        assert!(matches!(
            basis[0].eval_dx_coeff(&cur, &brk),
            Err(Error::EvaluationAtBranchPoint)
        ));
    }

    #[test]
    fn sheet_monodromy() {
        let cur = build_curve(&coeffs(&[0., -1., 0., 1.])).unwrap();
        // Closed loop around the single branch point at x = 1.
        let loop_one: Vec<Complex64> = (0..=48)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / 48.0;
                c(1., 0.) + c(0.4 * th.cos(), 0.4 * th.sin())
            })
            .collect();
        assert_eq!(continue_sheet(&cur, &loop_one, 1).unwrap(), -1);
        // Loop around two branch points (0 and 1).
        let loop_two: Vec<Complex64> = (0..=96)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / 96.0;
                c(0.5, 0.) + c(1.1 * th.cos(), 1.1 * th.sin())
            })
            .collect();
        assert_eq!(continue_sheet(&cur, &loop_two, 1).unwrap(), 1);
        // Loop around no branch point.
        let loop_none: Vec<Complex64> = (0..=32)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / 32.0;
                c(4., 4.) + c(0.5 * th.cos(), 0.5 * th.sin())
            })
            .collect();
        assert_eq!(continue_sheet(&cur, &loop_none, 1).unwrap(), 1);
        // Too close to a branch point is an error.
        let bad = vec![c(1.0 + 1e-9, 0.), c(1.0 + 1e-9, 1.)];
        assert!(matches!(
            continue_sheet(&cur, &bad, 1),
            Err(Error::PathTooCloseToBranchPoint { .. })
        ));
    }

    fn agm(mut a: f64, mut b: f64) -> f64 {
        for _ in 0..64 {
            let (an, bn) = (0.5 * (a + b), (a * b).sqrt());
            if (an - bn).abs() < 1e-16 * an {
                return an;
            }
            a = an;
            b = bn;
        }
        a
    }

    #[test]
    fn lemniscatic_tau_is_i() {
        // y^2 = x^3 - x has tau = i. Independent oracle: half-periods of the
        // lattice via the arithmetic-geometric mean with e1=1, e2=0, e3=-1:
        // omega_a = pi / agm(sqrt(e1-e3), sqrt(e1-e2)),
        // omega_b = pi / agm(sqrt(e1-e3), sqrt(e2-e3)), tau = i omega_b/omega_a,
        // and the lemniscatic symmetry makes the two AGMs equal.
        let cur = build_curve(&coeffs(&[0., -1., 0., 1.])).unwrap();
        let pd = period_matrix(&cur, 1e-11).unwrap();
        let tau = pd.tau.mat()[(0, 0)];
        let m_a = agm(2f64.sqrt(), 1.0);
        let m_b = agm(2f64.sqrt(), 1.0);
        let tau_oracle = c(0.0, m_a / m_b);
        assert!(
            (tau - tau_oracle).norm() < 1e-9,
            "tau = {tau}, oracle = {tau_oracle}"
        );
    }

    #[test]
    fn genus_two_tau_certificates() {
        for f in [
            coeffs(&[-1., 0., 0., 0., 0., 1.]),      // x^5 - 1
            coeffs(&[0., 2., 0., -3., 0., 1.]),      // x^5 - 3x^3 + 2x
        ] {
            let cur = build_curve(&f).unwrap();
            let pd = period_matrix(&cur, 1e-11).unwrap();
            let tau = pd.tau.mat();
            let asym = (tau[(0, 1)] - tau[(1, 0)]).norm();
            assert!(asym < 1e-9, "asymmetry {asym}");
            let ev = symmetric_im_eigen(tau);
            assert!(ev.iter().all(|&l| l > 0.0), "Im tau eigenvalues {ev:?}");
        }
    }

    #[test]
    fn quadrature_self_consistency() {
        // Halving the tolerance moves every period entry by less than the
        // coarser tolerance.
        let cur = build_curve(&coeffs(&[0., 2., 0., -3., 0., 1.])).unwrap();
        let coarse = period_matrix(&cur, 1e-8).unwrap();
        let fine = period_matrix(&cur, 1e-12).unwrap();
        let scale = inf_norm(&coarse.a_periods).max(1.0);
        let mut diff = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                diff = diff.max((coarse.a_periods[(i, j)] - fine.a_periods[(i, j)]).norm());
                diff = diff.max((coarse.b_periods[(i, j)] - fine.b_periods[(i, j)]).norm());
            }
        }
        assert!(diff < 1e-8 * scale, "diff {diff}");
    }
}
