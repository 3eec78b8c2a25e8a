//! Univariate B-spline bases on open knot vectors.
//!
//! Basis functions are indexed from zero. A knot vector of degree `p` with
//! `m` basis functions stores `m + p + 1` knots; the span index `s` of a point
//! satisfies `knots[s] <= t < knots[s + 1]` and the functions that are nonzero
//! there are `s - p ..= s`.

use crate::error::{Error, Result};

/// Open knot vector on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

impl KnotVector {
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidKnots("degree must be at least 1".into()));
        }
        if knots.len() < 2 * (degree + 1) {
            return Err(Error::InvalidKnots(format!(
                "need at least {} knots for degree {degree}, got {}",
                2 * (degree + 1),
                knots.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::InvalidKnots("knots must be nondecreasing".into()));
        }
        let p = degree;
        let len = knots.len();
        if knots[..=p].iter().any(|&k| k != 0.0) || knots[len - p - 1..].iter().any(|&k| k != 1.0) {
            return Err(Error::InvalidKnots(format!(
                "first and last {} knots must equal 0 and 1",
                p + 1
            )));
        }
        let interior = &knots[p + 1..len - p - 1];
        if interior.iter().any(|&k| k <= 0.0 || k >= 1.0) {
            return Err(Error::InvalidKnots("interior knots must lie in (0, 1)".into()));
        }
        let mut run = 0;
        for (i, &k) in interior.iter().enumerate() {
            run = if i > 0 && interior[i - 1] == k { run + 1 } else { 1 };
            if run > p {
                return Err(Error::InvalidKnots(format!(
                    "interior knot {k} has multiplicity above the degree {p}"
                )));
            }
        }
        Ok(Self { degree, knots })
    }

    /// Uniform open knot vector with `elements` equal spans and simple interior knots.
    pub fn uniform(degree: usize, elements: usize) -> Result<Self> {
        if elements == 0 {
            return Err(Error::InvalidKnots("at least one element required".into()));
        }
        let mut knots = vec![0.0; degree + 1];
        knots.extend((1..elements).map(|j| j as f64 / elements as f64));
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Self::new(degree, knots)
    }

    /// Glues two knot vectors of equal degree side by side, the first on
    /// `[0, 1/2]` and the second on `[1/2, 1]`, with a `C^0` joint at `1/2`.
    ///
    /// The basis of the result is the union of both bases with the two
    /// functions that are nonzero at the joint identified.
    pub fn join(left: &Self, right: &Self) -> Result<Self> {
        if left.degree != right.degree {
            return Err(Error::InvalidKnots("cannot join knot vectors of different degree".into()));
        }
        let p = left.degree;
        let mut knots = vec![0.0; p + 1];
        knots.extend(left.interior_knots().iter().map(|k| 0.5 * k));
        knots.extend(std::iter::repeat_n(0.5, p));
        knots.extend(right.interior_knots().iter().map(|k| 0.5 + 0.5 * k));
        knots.extend(std::iter::repeat_n(1.0, p + 1));
        Self::new(p, knots)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn interior_knots(&self) -> &[f64] {
        &self.knots[self.degree + 1..self.knots.len() - self.degree - 1]
    }

    /// Dimension `m` of the full spline space.
    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Distinct knot values, including 0 and 1.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for &k in &self.knots {
            if out.last() != Some(&k) {
                out.push(k);
            }
        }
        out
    }

    /// Nonempty spans as `(span index, left knot, right knot)`.
    pub fn spans(&self) -> Vec<(usize, f64, f64)> {
        (self.degree..self.num_basis())
            .filter(|&s| self.knots[s] < self.knots[s + 1])
            .map(|s| (s, self.knots[s], self.knots[s + 1]))
            .collect()
    }

    /// Span containing `t`; `t = 1` belongs to the last nonempty span.
    pub fn find_span(&self, t: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::OutOfDomain { value: t });
        }
        let m = self.num_basis();
        if t >= self.knots[m] {
            // last nonempty span, closed on the right
            let mut s = m - 1;
            while self.knots[s] == self.knots[s + 1] {
                s -= 1;
            }
            return Ok(s);
        }
        // largest s in [p, m-1] with knots[s] <= t
        let (mut lo, mut hi) = (self.degree, m);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.knots[mid] <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    /// Values of the `p + 1` functions that are nonzero at `t`.
    pub fn eval_basis(&self, t: f64) -> Result<(usize, Vec<f64>)> {
        let span = self.find_span(t)?;
        let mut vals = vec![0.0; self.degree + 1];
        self.basis_in_span(span, t, self.degree, &mut vals);
        Ok((span, vals))
    }

    /// Values and first derivatives of the nonzero functions at `t`.
    pub fn eval_basis_derivs(&self, t: f64, order: usize) -> Result<BasisDerivs> {
        if order > 1 {
            return Err(Error::Unsupported(format!(
                "basis derivatives of order {order}; only values and gradients are available"
            )));
        }
        let span = self.find_span(t)?;
        let p = self.degree;
        let mut values = vec![0.0; p + 1];
        self.basis_in_span(span, t, p, &mut values);
        let mut derivs = vec![0.0; p + 1];
        if order == 1 {
            let mut lower = vec![0.0; p];
            self.basis_in_span(span, t, p - 1, &mut lower);
            // N'_{i,p} = p/(x_{i+p}-x_i) N_{i,p-1} - p/(x_{i+p+1}-x_{i+1}) N_{i+1,p-1}
            for (r, d) in derivs.iter_mut().enumerate() {
                let i = span - p + r;
                let left = if r >= 1 { lower[r - 1] } else { 0.0 };
                let right = if r < p { lower[r] } else { 0.0 };
                let dl = self.knots[i + p] - self.knots[i];
                let dr = self.knots[i + p + 1] - self.knots[i + 1];
                let mut v = 0.0;
                if dl > 0.0 {
                    v += p as f64 / dl * left;
                }
                if dr > 0.0 {
                    v -= p as f64 / dr * right;
                }
                *d = v;
            }
        }
        Ok(BasisDerivs {
            span,
            values,
            derivs,
        })
    }

    /// Cox-de Boor triangle for degree `q <= p` in the given span; writes the
    /// `q + 1` functions `span - q ..= span` into `out`.
    fn basis_in_span(&self, span: usize, t: f64, q: usize, out: &mut [f64]) {
        let k = &self.knots;
        let mut left = vec![0.0; q + 1];
        let mut right = vec![0.0; q + 1];
        out[0] = 1.0;
        for j in 1..=q {
            left[j] = t - k[span + 1 - j];
            right[j] = k[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                // 0/0 = 0
                let temp = if denom != 0.0 { out[r] / denom } else { 0.0 };
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
    }
}

/// Output of [`KnotVector::eval_basis_derivs`].
#[derive(Debug, Clone)]
pub struct BasisDerivs {
    pub span: usize,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
}

/// Univariate spline space with homogeneous Dirichlet conditions: the first
/// and last basis functions are dropped, leaving `n = m - 2` unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineSpace1D {
    knots: KnotVector,
}

impl SplineSpace1D {
    pub fn new(knots: KnotVector) -> Result<Self> {
        if knots.num_basis() < 3 {
            return Err(Error::InvalidKnots(
                "space has no interior basis function after removing the endpoints".into(),
            ));
        }
        Ok(Self { knots })
    }

    /// Degree `p` splines on `elements` uniform spans (mesh size `1/elements`).
    pub fn uniform(degree: usize, elements: usize) -> Result<Self> {
        Self::new(KnotVector::uniform(degree, elements)?)
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.knots.degree
    }

    /// Full space dimension `m`.
    pub fn m(&self) -> usize {
        self.knots.num_basis()
    }

    /// Interior dofs `n = m - 2`.
    pub fn n(&self) -> usize {
        self.m() - 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hat() -> KnotVector {
        KnotVector::new(1, vec![0.0, 0.0, 0.5, 1.0, 1.0]).unwrap()
    }

    // Linear scan oracle for the span convention.
    fn span_oracle(kv: &KnotVector, t: f64) -> usize {
        let k = kv.knots();
        let m = kv.num_basis();
        (kv.degree()..m)
            .rev()
            .find(|&s| k[s] < k[s + 1] && (k[s] <= t && (t < k[s + 1] || (t == 1.0 && k[s + 1] == 1.0))))
            .unwrap()
    }

    #[test]
    fn spans_of_hat_space() {
        let kv = hat();
        assert_eq!(kv.find_span(0.25).unwrap(), 1);
        assert_eq!(kv.find_span(0.5).unwrap(), 2);
        assert_eq!(kv.find_span(1.0).unwrap(), 2);
        assert_eq!(kv.find_span(0.0).unwrap(), 1);
        assert!(matches!(kv.find_span(1.5), Err(Error::OutOfDomain { .. })));
        assert!(kv.find_span(-1e-12).is_err());
    }

    #[test]
    fn span_matches_linear_scan() {
        let kv = KnotVector::new(3, vec![0., 0., 0., 0., 0.2, 0.2, 0.5, 0.7, 1., 1., 1., 1.]).unwrap();
        for i in 0..=1000 {
            let t = i as f64 / 1000.0;
            assert_eq!(kv.find_span(t).unwrap(), span_oracle(&kv, t), "t = {t}");
        }
    }

    #[test]
    fn hat_values_and_slopes() {
        let (span, v) = hat().eval_basis(0.25).unwrap();
        assert_eq!(span, 1);
        assert!((v[0] - 0.5).abs() < 1e-15 && (v[1] - 0.5).abs() < 1e-15);
        let d = hat().eval_basis_derivs(0.25, 1).unwrap();
        assert!((d.derivs[0] + 2.0).abs() < 1e-14 && (d.derivs[1] - 2.0).abs() < 1e-14);
        assert!(matches!(hat().eval_basis_derivs(0.3, 2), Err(Error::Unsupported(_))));
    }

    #[test]
    fn quadratic_is_c1_across_knots() {
        let kv = KnotVector::uniform(2, 4).unwrap();
        let h = 1e-9;
        let m = kv.num_basis();
        let full = |t: f64| {
            let d = kv.eval_basis_derivs(t, 1).unwrap();
            let mut v = vec![0.0; m];
            let mut g = vec![0.0; m];
            for r in 0..=2 {
                v[d.span - 2 + r] = d.values[r];
                g[d.span - 2 + r] = d.derivs[r];
            }
            (v, g)
        };
        for knot in [0.25, 0.5, 0.75] {
            let (vl, gl) = full(knot - h);
            let (vr, gr) = full(knot + h);
            for i in 0..m {
                assert!((vl[i] - vr[i]).abs() < 1e-8);
                assert!((gl[i] - gr[i]).abs() < 1e-6 * (1.0 + gl[i].abs()), "{} {}", gl[i], gr[i]);
            }
        }
    }

    #[test]
    fn partition_of_unity_local_support_and_fd_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in 1..=6 {
            let kv = KnotVector::uniform(p, 7).unwrap();
            for _ in 0..100 {
                let t: f64 = rng.gen_range(0.001..0.999);
                let d = kv.eval_basis_derivs(t, 1).unwrap();
                let sum: f64 = d.values.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                assert!(d.values.iter().all(|&v| v >= 0.0));
                assert!(d.derivs.iter().sum::<f64>().abs() < 1e-9);
                for r in 0..=p {
                    let i = d.span - p + r;
                    let k = kv.knots();
                    assert!(k[i] <= t && t <= k[i + p + 1]);
                }
                // central differences on the same span
                let step = 1e-6;
                let (s1, vp) = kv.eval_basis(t + step).unwrap();
                let (s0, vm) = kv.eval_basis(t - step).unwrap();
                if s1 == d.span && s0 == d.span {
                    for r in 0..=p {
                        let fd = (vp[r] - vm[r]) / (2.0 * step);
                        let scale = d.derivs.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
                        assert!((fd - d.derivs[r]).abs() <= 1e-5 * scale, "p={p} fd={fd} an={}", d.derivs[r]);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_malformed_knot_vectors() {
        assert!(KnotVector::new(0, vec![0.0, 1.0]).is_err());
        assert!(KnotVector::new(1, vec![0.0, 0.5, 1.0, 1.0]).is_err());
        assert!(KnotVector::new(1, vec![0.0, 0.0, 0.7, 0.3, 1.0, 1.0]).is_err());
        assert!(KnotVector::new(2, vec![0., 0., 0., 0.5, 0.5, 0.5, 1., 1., 1.]).is_err());
        assert!(KnotVector::new(2, vec![0., 0., 0., 0.5, 0.5, 1., 1., 1.]).is_ok());
        assert!(SplineSpace1D::uniform(1, 1).is_err());
        assert_eq!(SplineSpace1D::uniform(3, 8).unwrap().n(), 9);
    }

    #[test]
    fn join_places_c0_knot_in_the_middle() {
        let a = KnotVector::uniform(2, 2).unwrap();
        let j = KnotVector::join(&a, &a).unwrap();
        assert_eq!(j.knots(), &[0., 0., 0., 0.25, 0.5, 0.5, 0.75, 1., 1., 1.]);
        assert_eq!(j.num_basis(), 2 * a.num_basis() - 1);
        // interpolatory at the joint
        let (span, v) = j.eval_basis(0.5).unwrap();
        assert_eq!(span, 5);
        // function a.num_basis() - 1 = 3 is the shared one
        assert!((v[0] - 1.0).abs() < 1e-14);
    }
}
