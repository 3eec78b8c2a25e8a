//! Quadrature, univariate pencils, the Galerkin stiffness matrix and load
//! vector, and the geometric bound on the preconditioned condition number.
//!
//! Element matrices are computed by contracting the quadrature one direction
//! at a time over tabulated univariate basis values, which keeps 3D degree-4
//! assembly affordable on a single core.

use std::ops::Range;

use crate::bspline::SplineSpace1D;
use crate::error::{Error, Result};
use crate::geometry::{q_into, sym_eigenvalues, CoefficientField, GeometryMap, SINGULAR_DET};
use crate::linalg::{axpy, BandedSymMatrix};

pub use crate::sparse::{write_vector_market, SparseMatrix};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            z = 0.0;
            dp = 1.0;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n == 1 {
        w[0] = 2.0;
    }
    (x, w)
}

/// Gauss-Legendre points mapped into every nonempty knot span.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule1D {
    pub points_per_span: usize,
    /// Span index (into the knot vector) for each group of points.
    pub spans: Vec<usize>,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule1D {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

pub fn gauss_rule(space: &SplineSpace1D, points_per_span: usize) -> Result<QuadratureRule1D> {
    if points_per_span == 0 {
        return Err(Error::InvalidArgument("points_per_span must be at least 1".into()));
    }
    let (gx, gw) = gauss_legendre(points_per_span);
    let mut rule = QuadratureRule1D {
        points_per_span,
        spans: Vec::new(),
        nodes: Vec::new(),
        weights: Vec::new(),
    };
    for (s, lo, hi) in space.knots().spans() {
        rule.spans.push(s);
        let half = 0.5 * (hi - lo);
        for (x, w) in gx.iter().zip(&gw) {
            rule.nodes.push(lo + half * (x + 1.0));
            rule.weights.push(half * w);
        }
    }
    Ok(rule)
}

/// Basis values and derivatives at the quadrature points of one element.
#[derive(Debug, Clone)]
struct ElementTab {
    /// Full-space index of the first of the `p + 1` supported functions.
    first: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `[point][local function]`
    vals: Vec<f64>,
    ders: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Tabulation {
    nloc: usize,
    nq: usize,
    elems: Vec<ElementTab>,
}

fn tabulate(space: &SplineSpace1D, nq: usize) -> Result<Tabulation> {
    let kv = space.knots();
    let p = kv.degree();
    let rule = gauss_rule(space, nq)?;
    let mut elems = Vec::with_capacity(rule.spans.len());
    for (e, &span) in rule.spans.iter().enumerate() {
        let r = e * nq..(e + 1) * nq;
        let mut vals = Vec::with_capacity(nq * (p + 1));
        let mut ders = Vec::with_capacity(nq * (p + 1));
        for &t in &rule.nodes[r.clone()] {
            let bd = kv.eval_basis_derivs(t, 1)?;
            debug_assert_eq!(bd.span, span);
            vals.extend_from_slice(&bd.values);
            ders.extend_from_slice(&bd.derivs);
        }
        elems.push(ElementTab {
            first: span - p,
            nodes: rule.nodes[r.clone()].to_vec(),
            weights: rule.weights[r].to_vec(),
            vals,
            ders,
        });
    }
    Ok(Tabulation {
        nloc: p + 1,
        nq,
        elems,
    })
}

/// Full-space index range of the Dirichlet interior functions.
pub fn interior_range(space: &SplineSpace1D) -> Range<usize> {
    1..space.m() - 1
}

/// Univariate stiffness and mass matrices `(K, M)` on the interior functions.
pub fn assemble_pencil_1d(space: &SplineSpace1D) -> (BandedSymMatrix, BandedSymMatrix) {
    let p = space.degree();
    let tab = tabulate(space, p + 1).expect("gauss points lie inside their spans");
    let range = interior_range(space);
    let n = space.n();
    let mut k = BandedSymMatrix::zeros(n, p);
    let mut m = BandedSymMatrix::zeros(n, p);
    for el in &tab.elems {
        for q in 0..tab.nq {
            let w = el.weights[q];
            let row = q * tab.nloc;
            for a in 0..tab.nloc {
                let fa = el.first + a;
                if !range.contains(&fa) {
                    continue;
                }
                for b in 0..=a {
                    let fb = el.first + b;
                    if !range.contains(&fb) {
                        continue;
                    }
                    let (ia, ib) = (fa - range.start, fb - range.start);
                    m.add(ia, ib, w * el.vals[row + a] * el.vals[row + b]);
                    k.add(ia, ib, w * el.ders[row + a] * el.ders[row + b]);
                }
            }
        }
    }
    (k, m)
}

/// Sparsity layout of a tensor-product space: row `I` couples with every `J`
/// whose per-direction indices satisfy `|i_l - j_l| <= bw_l`, so column
/// offsets inside a row follow from the multi-indices alone.
#[derive(Debug, Clone)]
pub(crate) struct TensorPattern {
    dims: Vec<usize>,
    lo: Vec<Vec<usize>>,
    width: Vec<Vec<usize>>,
    row_ptr: Vec<usize>,
}

impl TensorPattern {
    pub(crate) fn new(dims: &[usize], bw: &[usize]) -> Self {
        let mut lo = Vec::new();
        let mut width = Vec::new();
        for (&n, &b) in dims.iter().zip(bw) {
            lo.push((0..n).map(|i| i.saturating_sub(b)).collect::<Vec<_>>());
            width.push((0..n).map(|i| (i + b).min(n - 1) + 1 - i.saturating_sub(b)).collect::<Vec<_>>());
        }
        let total: usize = dims.iter().product();
        let mut row_ptr = Vec::with_capacity(total + 1);
        row_ptr.push(0);
        let mut multi = vec![0usize; dims.len()];
        for _ in 0..total {
            let len: usize = multi.iter().enumerate().map(|(l, &i)| width[l][i]).product();
            row_ptr.push(row_ptr.last().unwrap() + len);
            increment(&mut multi, dims);
        }
        Self {
            dims: dims.to_vec(),
            lo,
            width,
            row_ptr,
        }
    }

    fn columns(&self) -> Vec<u32> {
        let d = self.dims.len();
        let total: usize = self.dims.iter().product();
        let mut col = Vec::with_capacity(*self.row_ptr.last().unwrap());
        let mut multi = vec![0usize; d];
        for _ in 0..total {
            let mut j = vec![0usize; d];
            let win: Vec<usize> = (0..d).map(|l| self.width[l][multi[l]]).collect();
            let count: usize = win.iter().product();
            for _ in 0..count {
                let mut flat = 0usize;
                for l in 0..d {
                    flat = flat * self.dims[l] + self.lo[l][multi[l]] + j[l];
                }
                col.push(flat as u32);
                increment(&mut j, &win);
            }
            increment(&mut multi, &self.dims);
        }
        col
    }

    /// Position in the value array of entry `(row, col)` given both multi-indices.
    #[inline]
    pub(crate) fn position(&self, row_flat: usize, row: &[usize], col: &[usize]) -> usize {
        let mut off = 0usize;
        for l in 0..row.len() {
            off = off * self.width[l][row[l]] + (col[l] - self.lo[l][row[l]]);
        }
        self.row_ptr[row_flat] + off
    }

    pub(crate) fn into_matrix(self) -> SparseMatrix {
        let n = *self.row_ptr.last().unwrap();
        let col = self.columns();
        let total = self.row_ptr.len() - 1;
        SparseMatrix::from_csr(total, self.row_ptr, col, vec![0.0; n]).expect("tensor pattern is valid CSR")
    }
}

/// Row-major multi-index increment (last index fastest).
pub(crate) fn increment(multi: &mut [usize], dims: &[usize]) {
    for l in (0..multi.len()).rev() {
        multi[l] += 1;
        if multi[l] < dims[l] {
            return;
        }
        multi[l] = 0;
    }
}

fn check_dims(spaces: &[SplineSpace1D], map: &dyn GeometryMap) -> Result<()> {
    if spaces.len() != map.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            found: spaces.len(),
        });
    }
    if !(2..=3).contains(&spaces.len()) {
        return Err(Error::Unsupported(format!("{}-dimensional problems", spaces.len())));
    }
    Ok(())
}

/// Sum-factorized element stiffness kernel.
///
/// `coef[(a,b)][qp]` holds `Q_ab * weight` at every tensor quadrature point
/// (last direction fastest), for `a <= b`. Directions `d-1 .. 1` are
/// contracted per coefficient pair; the partial results are then grouped by
/// which factor (value or derivative) the first direction needs, so the
/// expensive first-direction contraction runs three times instead of once
/// per pair.
struct ElementKernel {
    d: usize,
    nloc: Vec<usize>,
    nq: Vec<usize>,
    total_loc: usize,
    /// Size of the pair layout of directions `1..d`.
    rest: usize,
    /// Map from the contracted (i1 j1 i2 j2 ..) layout to `I * total_loc + J`.
    scatter: Vec<usize>,
    /// Same as `scatter` but to `J * total_loc + I`.
    scatter_t: Vec<usize>,
    /// Swaps `i_l <-> j_l` for every direction `1..d` in the rest layout.
    swap: Vec<usize>,
    buf_a: Vec<f64>,
    buf_b: Vec<f64>,
    g_dd: Vec<f64>,
    g_db: Vec<f64>,
    g_bb: Vec<f64>,
    pairs_out: Vec<f64>,
}

impl ElementKernel {
    fn new(nloc: Vec<usize>, nq: Vec<usize>) -> Self {
        let d = nloc.len();
        let total_loc: usize = nloc.iter().product();
        let pairs: Vec<usize> = nloc.iter().map(|n| n * n).collect();
        let mut scatter = Vec::with_capacity(total_loc * total_loc);
        let mut multi = vec![0usize; d];
        for _ in 0..total_loc * total_loc {
            let (mut i, mut j) = (0, 0);
            for l in 0..d {
                i = i * nloc[l] + multi[l] / nloc[l];
                j = j * nloc[l] + multi[l] % nloc[l];
            }
            scatter.push(i * total_loc + j);
            increment(&mut multi, &pairs);
        }
        let scatter_t = scatter.iter().map(|&s| (s % total_loc) * total_loc + s / total_loc).collect();
        let rest: usize = pairs[1..].iter().product();
        let mut swap = Vec::with_capacity(rest);
        let mut multi = vec![0usize; d - 1];
        for _ in 0..rest {
            let mut s = 0;
            for l in 1..d {
                let (i, j) = (multi[l - 1] / nloc[l], multi[l - 1] % nloc[l]);
                s = s * pairs[l] + j * nloc[l] + i;
            }
            swap.push(s);
            increment(&mut multi, &pairs[1..]);
        }
        let cap = (0..=d)
            .map(|k| nq[..k].iter().product::<usize>() * pairs[k..].iter().product::<usize>())
            .max()
            .unwrap();
        let blk = nq[0] * rest;
        Self {
            d,
            nloc,
            nq,
            total_loc,
            rest,
            scatter,
            scatter_t,
            swap,
            buf_a: vec![0.0; cap],
            buf_b: vec![0.0; cap],
            g_dd: vec![0.0; blk],
            g_db: vec![0.0; blk],
            g_bb: vec![0.0; blk],
            pairs_out: vec![0.0; total_loc * total_loc],
        }
    }

    /// Contracts directions `d-1 .. 1` of `coef` against `X^a (x) X^b`; the
    /// result, laid out `[q_0][pairs 1..d]`, is left in `buf_a`.
    fn contract_tail(&mut self, coef: &[f64], tabs: &[&ElementTab], a: usize, b: usize) {
        let d = self.d;
        let nqt: usize = self.nq.iter().product();
        self.buf_a[..nqt].copy_from_slice(coef);
        let mut rest = 1usize;
        for k in (1..d).rev() {
            let (nl, nq) = (self.nloc[k], self.nq[k]);
            let qpre: usize = self.nq[..k].iter().product();
            let xa = if a == k { &tabs[k].ders } else { &tabs[k].vals };
            let xb = if b == k { &tabs[k].ders } else { &tabs[k].vals };
            let out_len = qpre * nl * nl * rest;
            self.buf_b[..out_len].fill(0.0);
            if rest == 1 {
                for qp in 0..qpre {
                    let dst = &mut self.buf_b[qp * nl * nl..(qp + 1) * nl * nl];
                    for q in 0..nq {
                        let c = self.buf_a[qp * nq + q];
                        let (ra, rb) = (&xa[q * nl..(q + 1) * nl], &xb[q * nl..(q + 1) * nl]);
                        for i in 0..nl {
                            let u = c * ra[i];
                            for j in 0..nl {
                                dst[i * nl + j] += u * rb[j];
                            }
                        }
                    }
                }
                std::mem::swap(&mut self.buf_a, &mut self.buf_b);
                rest = nl * nl;
                continue;
            }
            for qp in 0..qpre {
                for q in 0..nq {
                    let src = &self.buf_a[(qp * nq + q) * rest..(qp * nq + q + 1) * rest];
                    for i in 0..nl {
                        let u = xa[q * nl + i];
                        if u == 0.0 {
                            continue;
                        }
                        for j in 0..nl {
                            let c = u * xb[q * nl + j];
                            let o = (qp * nl * nl + i * nl + j) * rest;
                            axpy(c, src, &mut self.buf_b[o..o + rest]);
                        }
                    }
                }
            }
            std::mem::swap(&mut self.buf_a, &mut self.buf_b);
            rest *= nl * nl;
        }
    }

    /// First-direction contraction of `g` into `pairs_out`, then accumulated
    /// into `out` (and its transpose when `both`).
    fn finish(&mut self, which: u8, xa: &[f64], xb: &[f64], out: &mut [f64], both: bool) {
        let (nl, nq, rest) = (self.nloc[0], self.nq[0], self.rest);
        let g = match which {
            0 => &self.g_dd,
            1 => &self.g_db,
            _ => &self.g_bb,
        };
        let res = &mut self.pairs_out;
        res.fill(0.0);
        for q in 0..nq {
            let src = &g[q * rest..(q + 1) * rest];
            for i in 0..nl {
                let u = xa[q * nl + i];
                if u == 0.0 {
                    continue;
                }
                for j in 0..nl {
                    let o = (i * nl + j) * rest;
                    axpy(u * xb[q * nl + j], src, &mut res[o..o + rest]);
                }
            }
        }
        if both {
            for ((&v, &s), &t) in res.iter().zip(&self.scatter).zip(&self.scatter_t) {
                out[s] += v;
                out[t] += v;
            }
        } else {
            for (r, &s) in self.scatter.iter().enumerate() {
                out[s] += res[r];
            }
        }
    }

    /// Local stiffness `sum_ab X_a^T C_ab X_b` into `out` (`total_loc^2`, row-major).
    fn stiffness(&mut self, coefs: &[Vec<f64>], tabs: &[&ElementTab], out: &mut [f64]) {
        let d = self.d;
        let blk = self.nq[0] * self.rest;
        self.g_dd.fill(0.0);
        self.g_db.fill(0.0);
        self.g_bb.fill(0.0);
        let mut idx = 0;
        for a in 0..d {
            for b in a..d {
                self.contract_tail(&coefs[idx], tabs, a, b);
                let t = &self.buf_a[..blk];
                match (a == 0, b == 0) {
                    (true, true) => axpy(1.0, t, &mut self.g_dd),
                    (true, false) => axpy(1.0, t, &mut self.g_db),
                    _ => {
                        axpy(1.0, t, &mut self.g_bb);
                        if a != b {
                            // the (b, a) term is the (a, b) term with i and j swapped
                            let rest = self.rest;
                            for q in 0..self.nq[0] {
                                for (r, &s) in self.swap.iter().enumerate() {
                                    self.g_bb[q * rest + s] += t[q * rest + r];
                                }
                            }
                        }
                    }
                }
                idx += 1;
            }
        }
        out.fill(0.0);
        let (vals, ders) = (&tabs[0].vals, &tabs[0].ders);
        self.finish(0, ders, ders, out, false);
        self.finish(2, vals, vals, out, false);
        // pairs (0, b) and their mirrors (b, 0)
        self.finish(1, ders, vals, out, true);
    }
}

/// Iterates over all elements of the tensor mesh, last direction fastest.
fn for_each_element(tabs: &[Tabulation], mut f: impl FnMut(&[&ElementTab]) -> Result<()>) -> Result<()> {
    let d = tabs.len();
    let counts: Vec<usize> = tabs.iter().map(|t| t.elems.len()).collect();
    let total: usize = counts.iter().product();
    let mut multi = vec![0usize; d];
    let mut cur: Vec<&ElementTab> = Vec::with_capacity(d);
    for _ in 0..total {
        cur.clear();
        for l in 0..d {
            cur.push(&tabs[l].elems[multi[l]]);
        }
        f(&cur)?;
        increment(&mut multi, &counts);
    }
    Ok(())
}

/// Quadrature point coordinates and tensor weight for flat point index `qp`.
fn point_of(tabs: &[&ElementTab], nq: &[usize], qp: usize, zeta: &mut [f64]) -> f64 {
    let d = tabs.len();
    let mut rem = qp;
    let mut w = 1.0;
    for l in (0..d).rev() {
        let q = rem % nq[l];
        rem /= nq[l];
        zeta[l] = tabs[l].nodes[q];
        w *= tabs[l].weights[q];
    }
    w
}

/// Stiffness matrix on the interior (Dirichlet) dofs.
pub fn assemble_stiffness(
    spaces: &[SplineSpace1D],
    map: &dyn GeometryMap,
    coeff: &dyn CoefficientField,
) -> Result<SparseMatrix> {
    let ranges: Vec<_> = spaces.iter().map(interior_range).collect();
    assemble_stiffness_on(spaces, &ranges, map, coeff)
}

/// Stiffness matrix on an arbitrary tensor block of full-space functions;
/// `ranges[l]` selects the active functions in direction `l`. Multipatch
/// assembly keeps the boundary functions on interface sides this way.
pub fn assemble_stiffness_on(
    spaces: &[SplineSpace1D],
    ranges: &[Range<usize>],
    map: &dyn GeometryMap,
    coeff: &dyn CoefficientField,
) -> Result<SparseMatrix> {
    check_dims(spaces, map)?;
    let d = spaces.len();
    let dims: Vec<usize> = ranges.iter().map(|r| r.len()).collect();
    let bw: Vec<usize> = spaces.iter().map(|s| s.degree()).collect();
    let pattern = TensorPattern::new(&dims, &bw);
    let mut values = vec![0.0; *pattern.row_ptr.last().unwrap()];

    let tabs = spaces
        .iter()
        .map(|s| tabulate(s, s.degree() + 1))
        .collect::<Result<Vec<_>>>()?;
    let nloc: Vec<usize> = tabs.iter().map(|t| t.nloc).collect();
    let nq: Vec<usize> = tabs.iter().map(|t| t.nq).collect();
    let nqt: usize = nq.iter().product();
    let mut kernel = ElementKernel::new(nloc.clone(), nq.clone());
    let total_loc = kernel.total_loc;
    let npairs = d * (d + 1) / 2;
    let mut coefs = vec![vec![0.0; nqt]; npairs];
    let mut local = vec![0.0; total_loc * total_loc];
    let mut zeta = [0.0; 3];
    let mut q = [0.0; 9];
    // active multi-index (or None) of every local function
    let mut act: Vec<Option<(usize, [usize; 3])>> = vec![None; total_loc];

    for_each_element(&tabs, |el| {
        for qp in 0..nqt {
            let w = point_of(el, &nq, qp, &mut zeta[..d]);
            let ok = match q_into(map, coeff, &zeta[..d], &mut q[..d * d]) {
                Ok(_) => true,
                Err(Error::SingularJacobian { .. }) => false,
                Err(e) => return Err(e),
            };
            let mut idx = 0;
            for a in 0..d {
                for b in a..d {
                    coefs[idx][qp] = if ok { q[a * d + b] * w } else { 0.0 };
                    idx += 1;
                }
            }
        }
        kernel.stiffness(&coefs, el, &mut local);

        let mut lm = vec![0usize; d];
        for slot in act.iter_mut() {
            let mut mi = [0usize; 3];
            let mut flat = 0usize;
            let mut inside = true;
            for l in 0..d {
                let full = el[l].first + lm[l];
                if !ranges[l].contains(&full) {
                    inside = false;
                    break;
                }
                mi[l] = full - ranges[l].start;
                flat = flat * dims[l] + mi[l];
            }
            *slot = inside.then_some((flat, mi));
            increment(&mut lm, &nloc);
        }
        // columns that differ only in the last direction are adjacent in
        // both the local matrix and the CSR row
        let nl_last = nloc[d - 1];
        for (i, ai) in act.iter().enumerate() {
            let Some((row, ri)) = ai else { continue };
            let lrow = &local[i * total_loc..(i + 1) * total_loc];
            for jb in (0..total_loc).step_by(nl_last) {
                // active functions of a run are contiguous
                let Some(j0) = (jb..jb + nl_last).find(|&j| act[j].is_some()) else { continue };
                let len = (j0..jb + nl_last).take_while(|&j| act[j].is_some()).count();
                let (_, cj) = act[j0].unwrap();
                let pos = pattern.position(*row, &ri[..d], &cj[..d]);
                for (v, &l) in values[pos..pos + len].iter_mut().zip(&lrow[j0..j0 + len]) {
                    *v += l;
                }
            }
        }
        Ok(())
    })?;

    let mut a = pattern.into_matrix();
    a.values_mut().copy_from_slice(&values);
    Ok(a)
}

/// Load vector `b_i = int f(F(zeta)) B_i(zeta) det J dzeta` on the interior dofs.
pub fn assemble_load(
    spaces: &[SplineSpace1D],
    map: &dyn GeometryMap,
    f: &dyn Fn(&[f64]) -> f64,
) -> Result<Vec<f64>> {
    let ranges: Vec<_> = spaces.iter().map(interior_range).collect();
    assemble_load_on(spaces, &ranges, map, f)
}

pub fn assemble_load_on(
    spaces: &[SplineSpace1D],
    ranges: &[Range<usize>],
    map: &dyn GeometryMap,
    f: &dyn Fn(&[f64]) -> f64,
) -> Result<Vec<f64>> {
    check_dims(spaces, map)?;
    let d = spaces.len();
    let dims: Vec<usize> = ranges.iter().map(|r| r.len()).collect();
    let mut b = vec![0.0; dims.iter().product()];
    let tabs = spaces
        .iter()
        .map(|s| tabulate(s, s.degree() + 1))
        .collect::<Result<Vec<_>>>()?;
    let nloc: Vec<usize> = tabs.iter().map(|t| t.nloc).collect();
    let nq: Vec<usize> = tabs.iter().map(|t| t.nq).collect();
    let nqt: usize = nq.iter().product();
    let total_loc: usize = nloc.iter().product();
    let mut fw = vec![0.0; nqt];
    let mut zeta = [0.0; 3];
    let mut x = [0.0; 3];
    let mut jac = [0.0; 9];
    let mut inv = [0.0; 9];

    for_each_element(&tabs, |el| {
        for (qp, v) in fw.iter_mut().enumerate() {
            let w = point_of(el, &nq, qp, &mut zeta[..d]);
            map.jacobian(&zeta[..d], &mut jac[..d * d]);
            let det = crate::geometry::det_inv(d, &jac[..d * d], &mut inv[..d * d]);
            if det.abs() < SINGULAR_DET || !det.is_finite() {
                *v = 0.0;
                continue;
            }
            map.evaluate(&zeta[..d], &mut x[..d]);
            *v = f(&x[..d]) * det.abs() * w;
        }
        let mut lm = vec![0usize; d];
        for _ in 0..total_loc {
            let mut flat = 0usize;
            let mut inside = true;
            for l in 0..d {
                let full = el[l].first + lm[l];
                if !ranges[l].contains(&full) {
                    inside = false;
                    break;
                }
                flat = flat * dims[l] + full - ranges[l].start;
            }
            if inside {
                let mut s = 0.0;
                let mut qm = vec![0usize; d];
                for &v in &fw {
                    let mut basis = 1.0;
                    for l in 0..d {
                        basis *= el[l].vals[qm[l] * nloc[l] + lm[l]];
                    }
                    s += v * basis;
                    increment(&mut qm, &nq);
                }
                b[flat] += s;
            }
            increment(&mut lm, &nloc);
        }
        Ok(())
    })?;
    Ok(b)
}

/// Assembles the Kronecker sum of univariate pencils as a sparse matrix with
/// the same pattern as the Galerkin stiffness matrix.
pub fn assemble_kronecker_sum(pencils: &[(BandedSymMatrix, BandedSymMatrix)]) -> SparseMatrix {
    let d = pencils.len();
    let dims: Vec<usize> = pencils.iter().map(|(k, _)| k.order()).collect();
    let bw: Vec<usize> = pencils.iter().map(|(k, m)| k.bandwidth().max(m.bandwidth())).collect();
    let pattern = TensorPattern::new(&dims, &bw);
    let mut a = pattern.clone().into_matrix();
    let total: usize = dims.iter().product();
    let mut vals = vec![0.0; a.nnz()];
    let mut row = vec![0usize; d];
    for r in 0..total {
        let (cols, _) = a.row(r);
        let start = a.row_ptr()[r];
        for (k, &c) in cols.iter().enumerate() {
            let mut rem = c as usize;
            let mut cm = [0usize; 3];
            for l in (0..d).rev() {
                cm[l] = rem % dims[l];
                rem /= dims[l];
            }
            let mut v = 0.0;
            for s in 0..d {
                let mut term = 1.0;
                for l in 0..d {
                    let (kk, mm) = &pencils[l];
                    term *= if l == s { kk.get(row[l], cm[l]) } else { mm.get(row[l], cm[l]) };
                }
                v += term;
            }
            vals[start + k] = v;
        }
        increment(&mut row, &dims);
    }
    a.values_mut().copy_from_slice(&vals);
    debug_assert_eq!(pattern.row_ptr.len(), total + 1);
    a
}

/// Parametric sample points per direction for [`condition_bound`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    pub coords: Vec<Vec<f64>>,
}

impl SampleGrid {
    /// `n` equispaced points per direction including both ends.
    pub fn uniform(dim: usize, n: usize) -> Self {
        let n = n.max(2);
        let line: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        Self {
            coords: vec![line; dim],
        }
    }

    /// Gauss points of the assembly rule plus all breakpoints, per direction.
    pub fn mesh(spaces: &[SplineSpace1D]) -> Self {
        let coords = spaces
            .iter()
            .map(|s| {
                let mut pts = gauss_rule(s, s.degree() + 1).expect("nonzero rule").nodes;
                pts.extend(s.knots().breakpoints());
                pts.sort_by(f64::total_cmp);
                pts.dedup();
                pts
            })
            .collect();
        Self { coords }
    }
}

/// Result of [`condition_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionBound {
    /// `sup lambda_max(Q) / inf lambda_min(Q)`, or `+inf` when singular.
    pub value: f64,
    /// Set when a sample point had a (numerically) singular Jacobian.
    pub singular: bool,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// Upper bound on `kappa(P^{-1} A)` from the spread of the eigenvalues of `Q`.
pub fn condition_bound(
    map: &dyn GeometryMap,
    coeff: &dyn CoefficientField,
    grid: &SampleGrid,
) -> Result<ConditionBound> {
    let d = map.dim();
    if grid.coords.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: grid.coords.len(),
        });
    }
    let dims: Vec<usize> = grid.coords.iter().map(|c| c.len()).collect();
    let total: usize = dims.iter().product();
    let mut multi = vec![0usize; d];
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mut zeta = [0.0; 3];
    let mut q = [0.0; 9];
    let mut singular = false;
    for _ in 0..total {
        for l in 0..d {
            zeta[l] = grid.coords[l][multi[l]];
        }
        match q_into(map, coeff, &zeta[..d], &mut q[..d * d]) {
            Ok(_) => {
                let e = sym_eigenvalues(d, &q[..d * d]);
                lo = lo.min(e[0]);
                hi = hi.max(e[d - 1]);
            }
            Err(Error::SingularJacobian { .. }) => singular = true,
            Err(e) => return Err(e),
        }
        increment(&mut multi, &dims);
    }
    let value = if singular || lo <= 0.0 { f64::INFINITY } else { hi / lo };
    Ok(ConditionBound {
        value,
        singular,
        lambda_min: lo,
        lambda_max: hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::KnotVector;
    use crate::geometry::{builtin, AffineBox, BuiltinDomain, IdentityCoefficient};

    #[test]
    fn gauss_rule_examples() {
        let single = SplineSpace1D::new(KnotVector::new(2, vec![0., 0., 0., 1., 1., 1.]).unwrap()).unwrap();
        let r1 = gauss_rule(&single, 1).unwrap();
        assert_eq!(r1.nodes, vec![0.5]);
        assert_eq!(r1.weights, vec![1.0]);
        let r2 = gauss_rule(&single, 2).unwrap();
        let h = 0.5 / 3f64.sqrt();
        assert!((r2.nodes[0] - (0.5 - h)).abs() < 1e-15 && (r2.nodes[1] - (0.5 + h)).abs() < 1e-15);
        assert!((r2.integrate(|t| t * t * t) - 0.25).abs() < 1e-15);
        assert!(gauss_rule(&single, 0).is_err());
    }

    #[test]
    fn gauss_legendre_exactness() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            assert!(w.iter().all(|&v| v > 0.0));
            for k in 0..2 * n {
                let s: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k as i32)).sum();
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                assert!((s - exact).abs() < 1e-13, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn linear_pencil_rows() {
        let s = SplineSpace1D::uniform(1, 8).unwrap();
        let (k, m) = assemble_pencil_1d(&s);
        let h = 1.0 / 8.0;
        assert!((m.get(3, 3) - 2.0 * h / 3.0).abs() < 1e-15);
        assert!((m.get(3, 4) - h / 6.0).abs() < 1e-15);
        assert!((k.get(3, 3) - 2.0 / h).abs() < 1e-12);
        assert!((k.get(3, 2) + 1.0 / h).abs() < 1e-12);
        assert_eq!(k.get(3, 5), 0.0);
    }

    #[test]
    fn stiffness_annihilates_constants_away_from_boundary() {
        for p in 1..=4 {
            let s = SplineSpace1D::uniform(p, 12).unwrap();
            let (k, _) = assemble_pencil_1d(&s);
            let y = k.matvec(&vec![1.0; s.n()]);
            for (i, v) in y.iter().enumerate() {
                let near = i < p || i >= s.n() - p;
                if !near {
                    assert!(v.abs() < 1e-10, "p={p} row {i}: {v}");
                }
            }
            assert!(k.cholesky().is_ok());
        }
    }

    #[test]
    fn identity_geometry_matches_kronecker_sum() {
        for d in 2..=3 {
            for p in 1..=4 {
                let spaces: Vec<_> = (0..d).map(|l| SplineSpace1D::uniform(p, 4 + l + p).unwrap()).collect();
                let map = AffineBox::unit(d);
                let a = assemble_stiffness(&spaces, &map, &IdentityCoefficient).unwrap();
                let pencils: Vec<_> = spaces.iter().map(assemble_pencil_1d).collect();
                let pk = assemble_kronecker_sum(&pencils);
                assert_eq!(a.row_ptr(), pk.row_ptr());
                assert_eq!(a.col_indices(), pk.col_indices());
                let scale = pk.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for (x, y) in a.values().iter().zip(pk.values()) {
                    assert!((x - y).abs() <= 1e-10 * scale, "d={d} p={p}");
                }
            }
        }
    }

    #[test]
    fn nnz_is_bounded_by_band_count() {
        for p in 1..=3 {
            let spaces = vec![SplineSpace1D::uniform(p, 16).unwrap(); 2];
            let a = assemble_stiffness(&spaces, &AffineBox::unit(2), &IdentityCoefficient).unwrap();
            let n = a.order();
            assert!(a.nnz() <= (2 * p + 1).pow(2) * n);
            assert!(a.nnz() as f64 >= 0.6 * ((2 * p + 1).pow(2) * n) as f64);
        }
    }

    #[test]
    fn load_is_linear_and_vanishes_for_zero() {
        let spaces = vec![SplineSpace1D::uniform(2, 6).unwrap(); 2];
        let map = builtin(BuiltinDomain::QuarterAnnulus);
        let z = assemble_load(&spaces, map.as_ref(), &|_| 0.0).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        let f = |x: &[f64]| x[0] * x[1] + 1.0;
        let b1 = assemble_load(&spaces, map.as_ref(), &f).unwrap();
        let b2 = assemble_load(&spaces, map.as_ref(), &|x| 2.0 * f(x)).unwrap();
        for (u, v) in b1.iter().zip(&b2) {
            assert!((2.0 * u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn load_of_constant_integrates_basis() {
        // sum over all basis functions would give the area; the interior
        // subset sums to area minus boundary-function integrals
        let s = SplineSpace1D::uniform(1, 4).unwrap();
        let b = assemble_load(&[s.clone(), s], &AffineBox::unit(2), &|_| 1.0).unwrap();
        for v in b {
            assert!((v - 0.0625).abs() < 1e-15);
        }
    }

    #[test]
    fn condition_bounds() {
        let id = condition_bound(&AffineBox::unit(2), &IdentityCoefficient, &SampleGrid::uniform(2, 10)).unwrap();
        assert_eq!(id.value, 1.0);
        let qa = builtin(BuiltinDomain::QuarterAnnulus);
        let c = condition_bound(qa.as_ref(), &IdentityCoefficient, &SampleGrid::uniform(2, 50)).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((c.value / pi2 - 1.0).abs() < 0.05);
        let tri = builtin(BuiltinDomain::CollapsedTriangle);
        let spaces = vec![SplineSpace1D::uniform(2, 8).unwrap(); 2];
        let c = condition_bound(tri.as_ref(), &IdentityCoefficient, &SampleGrid::mesh(&spaces)).unwrap();
        assert!(c.singular && c.value.is_infinite());
    }

    #[test]
    fn singular_points_do_not_poison_assembly() {
        let spaces = vec![SplineSpace1D::uniform(2, 8).unwrap(); 2];
        let tri = builtin(BuiltinDomain::CollapsedTriangle);
        let a = assemble_stiffness(&spaces, tri.as_ref(), &IdentityCoefficient).unwrap();
        assert!(a.values().iter().all(|v| v.is_finite()));
        assert!(a.symmetry_defect() < 1e-12);
    }

    #[test]
    fn partial_ranges_keep_boundary_functions() {
        let s = SplineSpace1D::uniform(2, 5).unwrap();
        let spaces = vec![s.clone(), s.clone()];
        let ranges = vec![0..s.m(), 1..s.m() - 1];
        let a = assemble_stiffness_on(&spaces, &ranges, &AffineBox::unit(2), &IdentityCoefficient).unwrap();
        assert_eq!(a.order(), s.m() * s.n());
        let full = assemble_stiffness(&spaces, &AffineBox::unit(2), &IdentityCoefficient).unwrap();
        // interior block of the partial matrix equals the Dirichlet matrix
        let n = s.n();
        let idx: Vec<usize> = (1..s.m() - 1).flat_map(|i| (0..n).map(move |j| i * n + j)).collect();
        let sub = a.principal_submatrix(&idx);
        for (x, y) in sub.values().iter().zip(full.values()) {
            assert!((x - y).abs() < 1e-13);
        }
    }
}
