//! Zero-fill incomplete Cholesky with optional reverse Cuthill-McKee ordering.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::pcg::LinearOperator;
use crate::sparse::SparseMatrix;

/// First diagonal shift tried after a breakdown, relative to `diag(A)`.
pub const INITIAL_SHIFT: f64 = 1e-3;

/// Number of shift doublings before giving up.
pub const MAX_SHIFT_DOUBLINGS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reorder {
    None,
    #[default]
    Rcm,
}

/// Reverse Cuthill-McKee ordering of the graph of `A`: BFS from a
/// pseudo-peripheral node of each component, neighbours by increasing
/// degree, then reversed. `perm[k]` is the old index placed at `k`.
pub fn rcm(a: &SparseMatrix) -> Vec<usize> {
    let n = a.order();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| a.row(i).0.iter().map(|&c| c as usize).filter(|&c| c != i).collect())
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut level = vec![usize::MAX; n];
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| degree[i]);
    for &seed in &by_degree {
        if placed[seed] {
            continue;
        }
        let root = pseudo_peripheral(seed, &adj, &degree, &mut level);
        let mut queue = VecDeque::from([root]);
        placed[root] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&u| !placed[u]).collect();
            next.sort_by_key(|&u| (degree[u], u));
            for u in next {
                placed[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// BFS levels from `root`; returns the last level's nodes and the eccentricity.
fn bfs_levels(root: usize, adj: &[Vec<usize>], level: &mut [usize]) -> (Vec<usize>, usize) {
    let mut visited = vec![root];
    level[root] = 0;
    let mut head = 0;
    let mut depth = 0;
    while head < visited.len() {
        let v = visited[head];
        head += 1;
        for &u in &adj[v] {
            if level[u] == usize::MAX {
                level[u] = level[v] + 1;
                depth = depth.max(level[u]);
                visited.push(u);
            }
        }
    }
    let last = visited.iter().copied().filter(|&v| level[v] == depth).collect();
    for &v in &visited {
        level[v] = usize::MAX;
    }
    (last, depth)
}

fn pseudo_peripheral(start: usize, adj: &[Vec<usize>], degree: &[usize], level: &mut [usize]) -> usize {
    let mut root = start;
    let (mut last, mut ecc) = bfs_levels(root, adj, level);
    loop {
        let cand = *last.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
        let (l2, e2) = bfs_levels(cand, adj, level);
        if e2 <= ecc {
            return root;
        }
        root = cand;
        last = l2;
        ecc = e2;
    }
}

/// `P A P^T ~ L L^T` with the pattern of `tril(P A P^T)`.
#[derive(Debug, Clone)]
pub struct IcFactor {
    perm: Option<Vec<usize>>,
    /// Rows of `L`, diagonal stored last in each row.
    l: SparseMatrix,
    shift: f64,
}

impl IcFactor {
    pub fn new(a: &SparseMatrix, reorder: Reorder) -> Result<Self> {
        let (perm, pa) = match reorder {
            Reorder::None => (None, a.clone()),
            Reorder::Rcm => {
                let p = rcm(a);
                let pa = a.permuted(&p);
                (Some(p), pa)
            }
        };
        let mut shift = 0.0;
        let mut last_row = 0;
        for attempt in 0..=MAX_SHIFT_DOUBLINGS + 1 {
            match ic0(&pa, shift) {
                Ok(l) => return Ok(Self { perm, l, shift }),
                Err(row) => last_row = row,
            }
            shift = INITIAL_SHIFT * 2f64.powi(attempt as i32);
        }
        Err(Error::IcBreakdown {
            row: last_row,
            shift: INITIAL_SHIFT * 2f64.powi(MAX_SHIFT_DOUBLINGS as i32),
        })
    }

    pub fn permutation(&self) -> Option<&[usize]> {
        self.perm.as_deref()
    }

    /// Lower factor in the permuted ordering.
    pub fn lower(&self) -> &SparseMatrix {
        &self.l
    }

    /// Relative diagonal shift that was needed, 0 if none.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn order(&self) -> usize {
        self.l.order()
    }

    /// `y = (L L^T)^{-1} x` in the permuted ordering.
    fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.l.order();
        for i in 0..n {
            let (cols, vals) = self.l.row(i);
            let k = cols.len() - 1;
            let mut s = x[i];
            for (&c, &v) in cols[..k].iter().zip(&vals[..k]) {
                s -= v * x[c as usize];
            }
            x[i] = s / vals[k];
        }
        for i in (0..n).rev() {
            let (cols, vals) = self.l.row(i);
            let k = cols.len() - 1;
            x[i] /= vals[k];
            let xi = x[i];
            for (&c, &v) in cols[..k].iter().zip(&vals[..k]) {
                x[c as usize] -= v * xi;
            }
        }
    }
}

impl LinearOperator for IcFactor {
    fn order(&self) -> usize {
        self.l.order()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        match &self.perm {
            None => {
                y.copy_from_slice(x);
                self.solve_in_place(y);
            }
            Some(p) => {
                let mut t: Vec<f64> = p.iter().map(|&i| x[i]).collect();
                self.solve_in_place(&mut t);
                for (k, &i) in p.iter().enumerate() {
                    y[i] = t[k];
                }
            }
        }
    }

    fn name(&self) -> &str {
        "IC(0) preconditioner"
    }
}

/// IC(0) of `A + shift diag(A)`; `Err(row)` on a nonpositive pivot.
fn ic0(a: &SparseMatrix, shift: f64) -> std::result::Result<SparseMatrix, usize> {
    let n = a.order();
    let mut row_ptr = vec![0usize; n + 1];
    let mut cols: Vec<u32> = Vec::with_capacity(a.nnz() / 2 + n);
    let mut vals: Vec<f64> = Vec::with_capacity(a.nnz() / 2 + n);
    let mut diag = vec![0.0; n];
    // dense scatter of the current row of L
    let mut w = vec![0.0; n];
    for i in 0..n {
        let (ac, av) = a.row(i);
        let start = cols.len();
        let mut aii = 0.0;
        for (&c, &v) in ac.iter().zip(av) {
            let c = c as usize;
            if c < i {
                cols.push(c as u32);
                vals.push(v);
            } else if c == i {
                aii = v * (1.0 + shift);
            }
        }
        for t in start..cols.len() {
            let j = cols[t] as usize;
            // L_ij = (A_ij - sum_{k<j} L_ik L_jk) / L_jj
            let (lc, lv) = (&cols[row_ptr[j]..row_ptr[j + 1] - 1], &vals[row_ptr[j]..row_ptr[j + 1] - 1]);
            let mut s = vals[t];
            for (&k, &v) in lc.iter().zip(lv) {
                s -= w[k as usize] * v;
            }
            let lij = s / diag[j];
            vals[t] = lij;
            w[j] = lij;
        }
        let mut d = aii;
        for t in start..cols.len() {
            d -= vals[t] * vals[t];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(i);
        }
        let d = d.sqrt();
        diag[i] = d;
        for t in start..cols.len() {
            w[cols[t] as usize] = 0.0;
        }
        cols.push(i as u32);
        vals.push(d);
        row_ptr[i + 1] = cols.len();
    }
    Ok(SparseMatrix::from_csr(n, row_ptr, cols, vals).expect("IC(0) factor has a valid pattern"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, DenseMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplace_2d(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                t.push((k, k, 4.0));
                if i > 0 {
                    t.push((k, k - n, -1.0));
                }
                if i + 1 < n {
                    t.push((k, k + n, -1.0));
                }
                if j > 0 {
                    t.push((k, k - 1, -1.0));
                }
                if j + 1 < n {
                    t.push((k, k + 1, -1.0));
                }
            }
        }
        SparseMatrix::from_triplets(n * n, &t).unwrap()
    }

    #[test]
    fn diagonal_matrix() {
        let a = SparseMatrix::from_triplets(3, &[(0, 0, 4.0), (1, 1, 9.0), (2, 2, 2.0)]).unwrap();
        let f = IcFactor::new(&a, Reorder::None).unwrap();
        assert_eq!(f.lower().values(), &[2.0, 3.0, 2f64.sqrt()]);
        let y = f.apply(&[4.0, 9.0, 1.0]);
        assert!((y[0] - 1.0).abs() < 1e-15 && (y[1] - 1.0).abs() < 1e-15 && (y[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dense_pattern_gives_exact_cholesky() {
        let d = DenseMatrix::from_row_major(3, 3, vec![4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0]).unwrap();
        let a = SparseMatrix::from_dense(&d);
        let f = IcFactor::new(&a, Reorder::None).unwrap();
        assert_eq!(f.shift(), 0.0);
        let b = [1.0, -2.0, 0.5];
        let x = f.apply(&b);
        let ax = a.matvec(&x);
        for (u, v) in ax.iter().zip(&b) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn residual_vanishes_on_pattern() {
        let a = laplace_2d(7);
        let f = IcFactor::new(&a, Reorder::None).unwrap();
        let l = f.lower().to_dense();
        let llt = l.matmul(&l.transpose());
        for i in 0..a.order() {
            let (cols, vals) = a.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                assert!((llt[(i, c as usize)] - v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn apply_is_symmetric() {
        let a = laplace_2d(9);
        let f = IcFactor::new(&a, Reorder::Rcm).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r: Vec<f64> = (0..81).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let q: Vec<f64> = (0..81).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = dot(&r, &f.apply(&q));
        let y = dot(&q, &f.apply(&r));
        assert!((x - y).abs() < 1e-12 * x.abs().max(y.abs()));
    }

    #[test]
    fn rcm_is_a_bijection_and_narrows_bandwidth() {
        let a = laplace_2d(12);
        // scramble, then check RCM recovers a narrow band
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p: Vec<usize> = (0..144).collect();
        for i in (1..144).rev() {
            p.swap(i, rng.gen_range(0..=i));
        }
        let s = a.permuted(&p);
        let r = rcm(&s);
        let mut seen = r.clone();
        seen.sort();
        assert_eq!(seen, (0..144).collect::<Vec<_>>());
        assert!(s.permuted(&r).bandwidth() <= a.bandwidth());
        assert!(a.permuted(&rcm(&a)).bandwidth() <= a.bandwidth());
    }

    #[test]
    fn breakdown_triggers_shift() {
        // SPD (eigenvalues 3 -+ 2 sqrt 2), but the unshifted IC(0) pivot of
        // row 3 is -5; the first shift that works is 0.256
        let a = SparseMatrix::from_triplets(
            4,
            &[
                (0, 0, 3.0), (0, 1, -2.0), (0, 3, 2.0),
                (1, 0, -2.0), (1, 1, 3.0), (1, 2, -2.0),
                (2, 1, -2.0), (2, 2, 3.0), (2, 3, -2.0),
                (3, 0, 2.0), (3, 2, -2.0), (3, 3, 3.0),
            ],
        )
        .unwrap();
        let f = IcFactor::new(&a, Reorder::None).unwrap();
        assert!((f.shift() - 0.256).abs() < 1e-12, "{}", f.shift());
        assert!(f.lower().diagonal().iter().all(|&d| d > 0.0));
    }

    #[test]
    fn indefinite_matrix_fails_after_all_shifts() {
        let a = SparseMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 1, -1.0)]).unwrap();
        assert!(matches!(IcFactor::new(&a, Reorder::None), Err(Error::IcBreakdown { .. })));
    }
}
