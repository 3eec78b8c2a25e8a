//! Small dense and banded matrix kernels, plus the "apply along one tensor
//! axis" primitive that every Kronecker operation is built from.
//!
//! Tensor vectors use row-major layout: the last direction varies fastest.
//! Applying an `n x n` matrix along axis `k` of a tensor with dims `d` views
//! the data as `outer x n x inner` blocks, where `outer` is the product of the
//! dims before `k` and `inner` the product of the dims after it.

use crate::error::{Error, Result};

/// `(outer, n, inner)` view of `dims` around `axis`.
pub fn axis_split(dims: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = dims[..axis].iter().product();
    let inner = dims[axis + 1..].iter().product();
    (outer, dims[axis], inner)
}

/// A square matrix that can act along one axis of a tensor.
pub trait AxisOp {
    fn order(&self) -> usize;

    /// `y = A x` along the middle index of an `outer x n x inner` block layout.
    fn apply_axis(&self, x: &[f64], y: &mut [f64], outer: usize, inner: usize);
}

/// A square matrix whose inverse can be applied in place along one axis.
pub trait AxisSolve {
    fn order(&self) -> usize;

    fn solve_axis(&self, x: &mut [f64], outer: usize, inner: usize);
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a != 0.0 {
                    axpy(a, other.row(k), orow);
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Applies `A^T` along an axis instead of `A`.
    pub fn transposed(&self) -> Transposed<'_> {
        Transposed(self)
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl AxisOp for DenseMatrix {
    fn order(&self) -> usize {
        debug_assert_eq!(self.rows, self.cols);
        self.rows
    }

    fn apply_axis(&self, x: &[f64], y: &mut [f64], outer: usize, inner: usize) {
        let n = self.rows;
        let block = n * inner;
        for o in 0..outer {
            let xb = &x[o * block..(o + 1) * block];
            let yb = &mut y[o * block..(o + 1) * block];
            if inner == 1 {
                for i in 0..n {
                    yb[i] = dot(self.row(i), xb);
                }
            } else {
                yb.fill(0.0);
                for i in 0..n {
                    let yi = &mut yb[i * inner..(i + 1) * inner];
                    for (j, &a) in self.row(i).iter().enumerate() {
                        axpy(a, &xb[j * inner..(j + 1) * inner], yi);
                    }
                }
            }
        }
    }
}

/// Transposed view of a dense matrix for axis application.
pub struct Transposed<'a>(&'a DenseMatrix);

impl AxisOp for Transposed<'_> {
    fn order(&self) -> usize {
        self.0.rows
    }

    fn apply_axis(&self, x: &[f64], y: &mut [f64], outer: usize, inner: usize) {
        let a = self.0;
        let n = a.rows;
        let block = n * inner;
        for o in 0..outer {
            let xb = &x[o * block..(o + 1) * block];
            let yb = &mut y[o * block..(o + 1) * block];
            yb.fill(0.0);
            if inner == 1 {
                for (j, &xj) in xb.iter().enumerate() {
                    axpy(xj, a.row(j), yb);
                }
            } else {
                for j in 0..n {
                    let xj = &xb[j * inner..(j + 1) * inner];
                    for (i, &aji) in a.row(j).iter().enumerate() {
                        axpy(aji, xj, &mut yb[i * inner..(i + 1) * inner]);
                    }
                }
            }
        }
    }
}

/// Symmetric banded matrix holding the lower band: row `i` stores columns
/// `i - p ..= i`, padded with zeros before column 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSymMatrix {
    n: usize,
    bandwidth: usize,
    band: Vec<f64>,
}

impl BandedSymMatrix {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self {
            n,
            bandwidth,
            band: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, 0);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds from a dense symmetric matrix, keeping entries with `|i - j| <= bandwidth`.
    pub fn from_dense(a: &DenseMatrix, bandwidth: usize) -> Self {
        let mut m = Self::zeros(a.rows(), bandwidth);
        for i in 0..a.rows() {
            for j in i.saturating_sub(bandwidth)..=i {
                m.set(i, j, 0.5 * (a[(i, j)] + a[(j, i)]));
            }
        }
        m
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bandwidth);
        i * (self.bandwidth + 1) + self.bandwidth - (i - j)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bandwidth {
            0.0
        } else {
            self.band[self.slot(i, j)]
        }
    }

    /// Sets entries `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bandwidth, "entry outside the band");
        let s = self.slot(i, j);
        self.band[s] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let s = self.slot(i, j);
        self.band[s] += v;
    }

    /// `self + alpha * other`; the bandwidth is the larger of the two.
    pub fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let bw = self.bandwidth.max(other.bandwidth);
        let mut out = Self::zeros(self.n, bw);
        for i in 0..self.n {
            for j in i.saturating_sub(bw)..=i {
                out.set(i, j, self.get(i, j) + alpha * other.get(i, j));
            }
        }
        out
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            n: self.n,
            bandwidth: self.bandwidth,
            band: self.band.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in i.saturating_sub(self.bandwidth)..=i {
                let v = self.get(i, j);
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
        d
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.apply_axis(x, &mut y, 1, 1);
        y
    }

    /// Banded Cholesky factorization `A = L L^T`.
    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let p = self.bandwidth;
        let n = self.n;
        let mut l = self.clone();
        for i in 0..n {
            for j in i.saturating_sub(p)..=i {
                let mut s = l.band[l.slot(i, j)];
                for k in i.saturating_sub(p)..j {
                    s -= l.band[l.slot(i, k)] * l.band[l.slot(j, k)];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                    }
                    let si = l.slot(i, i);
                    l.band[si] = s.sqrt();
                } else {
                    let d = l.band[l.slot(j, j)];
                    let sij = l.slot(i, j);
                    l.band[sij] = s / d;
                }
            }
        }
        Ok(BandedCholesky { l })
    }
}

impl AxisOp for BandedSymMatrix {
    fn order(&self) -> usize {
        self.n
    }

    fn apply_axis(&self, x: &[f64], y: &mut [f64], outer: usize, inner: usize) {
        let n = self.n;
        let p = self.bandwidth;
        let block = n * inner;
        for o in 0..outer {
            let xb = &x[o * block..(o + 1) * block];
            let yb = &mut y[o * block..(o + 1) * block];
            for i in 0..n {
                let lo = i.saturating_sub(p);
                let hi = (i + p).min(n - 1);
                if inner == 1 {
                    let mut s = 0.0;
                    for j in lo..=hi {
                        s += self.get(i, j) * xb[j];
                    }
                    yb[i] = s;
                } else {
                    let yi = &mut yb[i * inner..(i + 1) * inner];
                    yi.fill(0.0);
                    for j in lo..=hi {
                        axpy(self.get(i, j), &xb[j * inner..(j + 1) * inner], yi);
                    }
                }
            }
        }
    }
}

/// Lower-banded Cholesky factor.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    l: BandedSymMatrix,
}

impl BandedCholesky {
    pub fn order(&self) -> usize {
        self.l.n
    }

    /// Entry `L[i][j]`, `j <= i`.
    pub fn lower(&self, i: usize, j: usize) -> f64 {
        if j > i || i - j > self.l.bandwidth {
            0.0
        } else {
            self.l.band[self.l.slot(i, j)]
        }
    }

    /// `x <- L^{-1} x` on a single contiguous vector.
    pub fn forward(&self, x: &mut [f64]) {
        let p = self.l.bandwidth;
        for i in 0..self.l.n {
            let mut s = x[i];
            for k in i.saturating_sub(p)..i {
                s -= self.lower(i, k) * x[k];
            }
            x[i] = s / self.lower(i, i);
        }
    }

    /// `x <- L^{-T} x` on a single contiguous vector.
    pub fn backward(&self, x: &mut [f64]) {
        let p = self.l.bandwidth;
        let n = self.l.n;
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..(i + p + 1).min(n) {
                s -= self.lower(k, i) * x[k];
            }
            x[i] = s / self.lower(i, i);
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_axis(&mut x, 1, 1);
        x
    }
}

impl AxisSolve for BandedCholesky {
    fn order(&self) -> usize {
        self.l.n
    }

    fn solve_axis(&self, x: &mut [f64], outer: usize, inner: usize) {
        let n = self.l.n;
        let p = self.l.bandwidth;
        let block = n * inner;
        for o in 0..outer {
            let xb = &mut x[o * block..(o + 1) * block];
            if inner == 1 {
                self.forward(xb);
                self.backward(xb);
                continue;
            }
            for i in 0..n {
                let (head, tail) = xb.split_at_mut(i * inner);
                let xi = &mut tail[..inner];
                for k in i.saturating_sub(p)..i {
                    axpy(-self.lower(i, k), &head[k * inner..(k + 1) * inner], xi);
                }
                scal(1.0 / self.lower(i, i), xi);
            }
            for i in (0..n).rev() {
                let (head, tail) = xb.split_at_mut((i + 1) * inner);
                let xi = &mut head[i * inner..];
                for k in i + 1..(i + p + 1).min(n) {
                    let off = (k - i - 1) * inner;
                    axpy(-self.lower(k, i), &tail[off..off + inner], xi);
                }
                scal(1.0 / self.lower(i, i), xi);
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // four accumulators so the loop vectorizes
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn scal(alpha: f64, x: &mut [f64]) {
    for v in x {
        *v *= alpha;
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd_banded(n: usize, p: usize, rng: &mut ChaCha8Rng) -> BandedSymMatrix {
        let mut a = BandedSymMatrix::zeros(n, p);
        for i in 0..n {
            for j in i.saturating_sub(p)..i {
                a.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        for i in 0..n {
            a.set(i, i, 2.0 * p as f64 + 1.0 + rng.gen::<f64>());
        }
        a
    }

    #[test]
    fn banded_cholesky_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in 0..5 {
            let a = random_spd_banded(13, p, &mut rng);
            let b: Vec<f64> = (0..13).map(|_| rng.gen()).collect();
            let x = a.cholesky().unwrap().solve(&b);
            let r = a.matvec(&x);
            for i in 0..13 {
                assert!((r[i] - b[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = BandedSymMatrix::identity(3);
        a.set(1, 1, -1.0);
        assert!(matches!(a.cholesky(), Err(Error::NotPositiveDefinite { pivot: 1, .. })));
    }

    #[test]
    fn axis_application_matches_per_line_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = [3usize, 4, 5];
        let x: Vec<f64> = (0..60).map(|_| rng.gen()).collect();
        for axis in 0..3 {
            let n = dims[axis];
            let a = random_spd_banded(n, 2, &mut rng);
            let dense = a.to_dense();
            let (outer, _, inner) = axis_split(&dims, axis);
            let mut y1 = vec![0.0; 60];
            let mut y2 = vec![0.0; 60];
            let mut y3 = vec![0.0; 60];
            a.apply_axis(&x, &mut y1, outer, inner);
            dense.apply_axis(&x, &mut y2, outer, inner);
            dense.transpose().transposed().apply_axis(&x, &mut y3, outer, inner);
            // reference: explicit strided lines
            for o in 0..outer {
                for q in 0..inner {
                    for i in 0..n {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += dense[(i, j)] * x[o * n * inner + j * inner + q];
                        }
                        let idx = o * n * inner + i * inner + q;
                        assert!((y1[idx] - s).abs() < 1e-13);
                        assert!((y2[idx] - s).abs() < 1e-13);
                        assert!((y3[idx] - s).abs() < 1e-13);
                    }
                }
            }
            let mut z = y1.clone();
            a.cholesky().unwrap().solve_axis(&mut z, outer, inner);
            for (zi, xi) in z.iter().zip(&x) {
                assert!((zi - xi).abs() < 1e-12);
            }
        }
    }
}
