//! Envelope (profile) Cholesky for sparse SPD matrices, usually after an
//! RCM reordering has made the profile small.

use crate::error::{Error, Result};
use crate::ic::rcm;
use crate::linalg::dot;
use crate::sparse::SparseMatrix;

/// `P A P^T = L L^T`, row `i` of `L` stored densely from its first nonzero
/// column up to the diagonal.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    ptr: Vec<usize>,
    val: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors `A` after an RCM reordering.
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        Self::with_permutation(a, rcm(a))
    }

    pub fn with_permutation(a: &SparseMatrix, perm: Vec<usize>) -> Result<Self> {
        let pa = a.permuted(&perm);
        let n = pa.order();
        let first: Vec<usize> = (0..n)
            .map(|i| pa.row(i).0.first().map_or(i, |&c| (c as usize).min(i)))
            .collect();
        let mut ptr = Vec::with_capacity(n + 1);
        ptr.push(0);
        for i in 0..n {
            ptr.push(ptr[i] + i + 1 - first[i]);
        }
        let mut val = vec![0.0; ptr[n]];
        for i in 0..n {
            let (cols, vals) = pa.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let c = c as usize;
                if c <= i {
                    val[ptr[i] + c - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let lo = fi.max(first[j]);
                let (head, row_i) = val.split_at_mut(ptr[i]);
                let row_j = &head[ptr[j]..ptr[j + 1]];
                let s = row_i[j - fi] - dot(&row_i[lo - fi..j - fi], &row_j[lo - first[j]..j - first[j]]);
                row_i[j - fi] = s / row_j[j - first[j]];
            }
            let row_i = &mut val[ptr[i]..ptr[i + 1]];
            let k = i - fi;
            let d = row_i[k] - dot(&row_i[..k], &row_i[..k]);
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: i, value: d });
            }
            row_i[k] = d.sqrt();
        }
        Ok(Self { perm, first, ptr, val })
    }

    pub fn order(&self) -> usize {
        self.first.len()
    }

    /// Stored entries of `L`.
    pub fn envelope_size(&self) -> usize {
        self.val.len()
    }

    /// `x <- A^{-1} x`.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.order();
        let mut y: Vec<f64> = self.perm.iter().map(|&i| x[i]).collect();
        for i in 0..n {
            let row = &self.val[self.ptr[i]..self.ptr[i + 1]];
            let k = row.len() - 1;
            let s = y[i] - dot(&row[..k], &y[self.first[i]..i]);
            y[i] = s / row[k];
        }
        for i in (0..n).rev() {
            let row = &self.val[self.ptr[i]..self.ptr[i + 1]];
            let k = row.len() - 1;
            y[i] /= row[k];
            let yi = y[i];
            for (t, &l) in y[self.first[i]..i].iter_mut().zip(&row[..k]) {
                *t -= l * yi;
            }
        }
        for (k, &i) in self.perm.iter().enumerate() {
            x[i] = y[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solves_random_sparse_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 40;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 6.0));
            for _ in 0..2 {
                let j = rng.gen_range(0..n);
                if j != i {
                    let v = rng.gen_range(-1.0..1.0);
                    t.push((i, j, v));
                    t.push((j, i, v));
                }
            }
        }
        let a = SparseMatrix::from_triplets(n, &t).unwrap();
        let f = EnvelopeCholesky::new(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut x = b.clone();
        f.solve_in_place(&mut x);
        let r = a.matvec(&x);
        for (u, v) in r.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let d = DenseMatrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        let a = SparseMatrix::from_dense(&d);
        assert!(matches!(
            EnvelopeCholesky::with_permutation(&a, vec![0, 1]),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
    }
}
