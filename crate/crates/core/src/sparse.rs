//! Compressed sparse row storage for the assembled Galerkin matrices.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Square CSR matrix with sorted column indices in every row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<u32>,
    val: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_csr(n: usize, row_ptr: Vec<usize>, col: Vec<u32>, val: Vec<f64>) -> Result<Self> {
        if row_ptr.len() != n + 1 || row_ptr[0] != 0 || row_ptr[n] != col.len() || col.len() != val.len() {
            return Err(Error::InvalidArgument("inconsistent CSR arrays".into()));
        }
        for i in 0..n {
            let cols = &col[row_ptr[i]..row_ptr[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c as usize >= n) {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has unsorted or out-of-range columns"
                )));
            }
        }
        Ok(Self { n, row_ptr, col, val })
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!("triplet ({i}, {j}) out of range")));
            }
            rows[i].push((j as u32, v));
        }
        Ok(Self::from_rows(rows))
    }

    /// Builds from per-row `(col, value)` lists; duplicates are summed.
    pub fn from_rows(mut rows: Vec<Vec<(u32, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable_by_key(|e| e.0);
            let start = col.len();
            for &(c, v) in row.iter() {
                if col.len() > start && *col.last().unwrap() == c {
                    *val.last_mut().unwrap() += v;
                } else {
                    col.push(c);
                    val.push(v);
                }
            }
            row_ptr.push(col.len());
        }
        Self { n, row_ptr, col, val }
    }

    pub fn from_dense(a: &DenseMatrix) -> Self {
        let rows = (0..a.rows())
            .map(|i| {
                (0..a.cols())
                    .filter(|&j| a[(i, j)] != 0.0)
                    .map(|j| (j as u32, a[(i, j)]))
                    .collect()
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col
    }

    pub fn values(&self) -> &[f64] {
        &self.val
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.val
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col[r.clone()], &self.val[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[k] * x[self.col[k] as usize];
            }
            *yi = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                d[(i, c as usize)] = v;
            }
        }
        d
    }

    /// Largest `|A_ij - A_ji|` relative to the largest `|A_ij|`.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                scale = scale.max(v.abs());
                worst = worst.max((v - self.get(c as usize, i)).abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// Half bandwidth `max |i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| self.row(i).0.iter().map(move |&c| (c as usize).abs_diff(i)))
            .max()
            .unwrap_or(0)
    }

    /// `P A P^T` where row `k` of the result is row `perm[k]` of `A`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0u32; self.n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k as u32;
        }
        let rows = perm
            .iter()
            .map(|&p| {
                let (cols, vals) = self.row(p);
                cols.iter().zip(vals).map(|(&c, &v)| (inv[c as usize], v)).collect()
            })
            .collect();
        Self::from_rows(rows)
    }

    /// Principal submatrix on `idx` (in the given order).
    pub fn principal_submatrix(&self, idx: &[usize]) -> Self {
        let mut local = vec![u32::MAX; self.n];
        for (k, &g) in idx.iter().enumerate() {
            local[g] = k as u32;
        }
        let rows = idx
            .iter()
            .map(|&g| {
                let (cols, vals) = self.row(g);
                cols.iter()
                    .zip(vals)
                    .filter(|(&c, _)| local[c as usize] != u32::MAX)
                    .map(|(&c, &v)| (local[c as usize], v))
                    .collect()
            })
            .collect();
        Self::from_rows(rows)
    }

    /// Writes Matrix Market coordinate format, 1-based, every stored entry,
    /// values with 17 significant digits.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.16e}", i + 1, c + 1, v)?;
            }
        }
        Ok(())
    }

    /// Reads the coordinate format written by [`Self::write_matrix_market`]
    /// (also accepts `symmetric`, mirroring the off-diagonal entries).
    pub fn read_matrix_market<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty Matrix Market input".into()))??;
        let symmetric = header.contains("symmetric");
        if !header.starts_with("%%MatrixMarket matrix coordinate real") {
            return Err(Error::InvalidArgument(format!("unsupported header '{header}'")));
        }
        let mut size: Option<(usize, usize)> = None;
        let mut trip = Vec::new();
        for line in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            let parts: Vec<&str> = t.split_whitespace().collect();
            let bad = || Error::InvalidArgument(format!("malformed line '{t}'"));
            match size {
                None => {
                    let n: usize = parts.first().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
                    let nnz: usize = parts.get(2).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
                    size = Some((n, nnz));
                }
                Some(_) => {
                    let i: usize = parts.first().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
                    let j: usize = parts.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
                    let v: f64 = parts.get(2).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
                    trip.push((i - 1, j - 1, v));
                    if symmetric && i != j {
                        trip.push((j - 1, i - 1, v));
                    }
                }
            }
        }
        let (n, _) = size.ok_or_else(|| Error::InvalidArgument("missing size line".into()))?;
        Self::from_triplets(n, &trip)
    }
}

/// Writes a vector as a Matrix Market dense column, 17 significant digits.
pub fn write_vector_market<W: Write>(x: &[f64], mut w: W) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} 1", x.len())?;
    for v in x {
        writeln!(w, "{v:.16e}")?;
    }
    Ok(())
}
