//! Dense univariate complex polynomials: evaluation, arithmetic, root finding.
//!
//! Root finding is Durand-Kerner iteration polished by Newton steps, which is
//! plenty for the degrees that occur here (at most 4g for cover models).

use num_complex::Complex64;

/// Coefficients in ascending degree order; `coeffs.last()` is the leading one.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    pub coeffs: Vec<Complex64>,
}

impl Poly {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        let mut p = Poly { coeffs };
        p.trim();
        p
    }

    pub fn from_roots(lead: Complex64, roots: &[Complex64]) -> Self {
        let mut p = Poly::new(vec![lead]);
        for &r in roots {
            p = p.mul(&Poly::new(vec![-r, Complex64::new(1.0, 0.0)]));
        }
        p
    }

    fn trim(&mut self) {
        while self.coeffs.len() > 1 && self.coeffs.last().map_or(false, |c| c.norm() == 0.0) {
            self.coeffs.pop();
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn lead(&self) -> Complex64 {
        *self.coeffs.last().unwrap()
    }

    pub fn eval(&self, x: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() <= 1 {
            return Poly::new(vec![Complex64::new(0.0, 0.0)]);
        }
        Poly::new(
            self.coeffs[1..]
                .iter()
                .enumerate()
                .map(|(i, &c)| c * (i as f64 + 1.0))
                .collect(),
        )
    }

    pub fn mul(&self, rhs: &Poly) -> Poly {
        let mut out = vec![Complex64::new(0.0, 0.0); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    pub fn add(&self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (i, &a) in self.coeffs.iter().enumerate() {
            out[i] += a;
        }
        for (i, &b) in rhs.coeffs.iter().enumerate() {
            out[i] += b;
        }
        Poly::new(out)
    }

    pub fn scale(&self, s: Complex64) -> Poly {
        Poly::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    /// Long division; returns (quotient, remainder).
    pub fn div_rem(&self, rhs: &Poly) -> (Poly, Poly) {
        let mut rem = self.coeffs.clone();
        let dl = rhs.degree();
        if self.degree() < dl {
            return (Poly::new(vec![Complex64::new(0.0, 0.0)]), self.clone());
        }
        let mut quot = vec![Complex64::new(0.0, 0.0); self.degree() - dl + 1];
        for k in (0..quot.len()).rev() {
            let q = rem[k + dl] / rhs.lead();
            quot[k] = q;
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                rem[k + j] -= q * b;
            }
        }
        rem.truncate(dl.max(1));
        (Poly::new(quot), Poly::new(rem))
    }

    /// Composition self(q(x)) for polynomial q.
    pub fn compose(&self, q: &Poly) -> Poly {
        let mut acc = Poly::new(vec![Complex64::new(0.0, 0.0)]);
        for &c in self.coeffs.iter().rev() {
            acc = acc.mul(q).add(&Poly::new(vec![c]));
        }
        acc
    }

    /// All complex roots by Durand-Kerner, Newton-polished.
    ///
    /// Residuals after polishing are below `1e-12 * scale` for the
    /// well-separated inputs this crate feeds it; pathological clustering is
    /// reported by the squarefree check at the call site, not here.
    pub fn roots(&self) -> Vec<Complex64> {
        let n = self.degree();
        if n == 0 {
            return vec![];
        }
        // Monic normalization.
        let lead = self.lead();
        let monic: Vec<Complex64> = self.coeffs.iter().map(|&c| c / lead).collect();
        let radius = 1.0
            + monic[..n]
                .iter()
                .map(|c| c.norm())
                .fold(0.0f64, f64::max);
        // Non-real starting angles avoid symmetric stalls.
        let mut z: Vec<Complex64> = (0..n)
            .map(|k| {
                let ang = 2.0 * std::f64::consts::PI * (k as f64) / (n as f64) + 0.4;
                radius * 0.8 * Complex64::new(ang.cos(), ang.sin())
            })
            .collect();
        let eval_monic = |x: Complex64| {
            let mut acc = Complex64::new(1.0, 0.0);
            for &c in monic[..n].iter().rev() {
                acc = acc * x + c;
            }
            acc
        };
        for _ in 0..200 {
            let mut moved = 0.0f64;
            for i in 0..n {
                let mut denom = Complex64::new(1.0, 0.0);
                for j in 0..n {
                    if j != i {
                        denom *= z[i] - z[j];
                    }
                }
                if denom.norm() == 0.0 {
                    continue;
                }
                let step = eval_monic(z[i]) / denom;
                z[i] -= step;
                moved = moved.max(step.norm());
            }
            if moved < 1e-14 * radius {
                break;
            }
        }
        // Newton polish against the original (non-monic) polynomial.
        let dp = self.derivative();
        for r in z.iter_mut() {
            for _ in 0..4 {
                let d = dp.eval(*r);
                if d.norm() == 0.0 {
                    break;
                }
                let step = self.eval(*r) / d;
                *r -= step;
                if step.norm() < 1e-16 * radius {
                    break;
                }
            }
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn roots_of_cubic() {
        // x^3 - x = x(x-1)(x+1)
        let p = Poly::new(vec![c(0., 0.), c(-1., 0.), c(0., 0.), c(1., 0.)]);
        let mut roots = p.roots();
        roots.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((roots[0] - c(-1., 0.)).norm() < 1e-12);
        assert!((roots[1] - c(0., 0.)).norm() < 1e-12);
        assert!((roots[2] - c(1., 0.)).norm() < 1e-12);
    }

    #[test]
    fn roots_of_unity() {
        // x^5 - 1
        let mut coeffs = vec![c(-1., 0.); 1];
        coeffs.extend(vec![c(0., 0.); 4]);
        coeffs.push(c(1., 0.));
        let p = Poly::new(coeffs);
        let roots = p.roots();
        assert_eq!(roots.len(), 5);
        for r in roots {
            assert!((r.norm() - 1.0).abs() < 1e-12);
            assert!(p.eval(r).norm() < 1e-12);
        }
    }

    #[test]
    fn division_recombines() {
        let a = Poly::new(vec![c(1., 2.), c(0., 0.), c(3., -1.), c(2., 0.5)]);
        let b = Poly::new(vec![c(-1., 1.), c(1., 0.)]);
        let (q, r) = a.div_rem(&b);
        let back = q.mul(&b).add(&r);
        for (x, y) in back.coeffs.iter().zip(a.coeffs.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn composition_matches_pointwise() {
        let p = Poly::new(vec![c(1., 0.), c(2., 0.), c(1., 1.)]);
        let q = Poly::new(vec![c(0., -1.), c(0.5, 0.), c(1., 0.)]);
        let comp = p.compose(&q);
        let x = c(0.3, 0.7);
        assert!((comp.eval(x) - p.eval(q.eval(x))).norm() < 1e-12);
    }
}
