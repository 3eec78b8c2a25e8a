//! Preconditioned conjugate gradients with a Lanczos condition estimate.

use crate::adi::AdiPreconditioner;
use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::fd::FdPreconditioner;
use crate::kronecker::KroneckerSum;
use crate::linalg::{axpy, dot, norm2, DenseMatrix};
use crate::sparse::SparseMatrix;

/// Default relative residual tolerance of the outer iteration.
pub const DEFAULT_TOL: f64 = 1e-8;

/// A square linear map `y = A x`.
pub trait LinearOperator {
    fn order(&self) -> usize;

    /// Overwrites `y` with `A x`.
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    /// Used in error messages.
    fn name(&self) -> &str {
        "operator"
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.order()];
        self.apply_into(x, &mut y);
        y
    }
}

/// The identity of order `n`.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn order(&self) -> usize {
        self.0
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
    fn name(&self) -> &str {
        "identity"
    }
}

impl LinearOperator for SparseMatrix {
    fn order(&self) -> usize {
        SparseMatrix::order(self)
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_into(x, y);
    }
    fn name(&self) -> &str {
        "system matrix"
    }
}

impl LinearOperator for DenseMatrix {
    fn order(&self) -> usize {
        self.rows()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(self.row(i), x);
        }
    }
    fn name(&self) -> &str {
        "dense matrix"
    }
}

impl LinearOperator for KroneckerSum {
    fn order(&self) -> usize {
        self.len()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_into(x, y);
    }
    fn name(&self) -> &str {
        "Kronecker sum"
    }
}

impl LinearOperator for FdPreconditioner {
    fn order(&self) -> usize {
        self.len()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        FdPreconditioner::apply_into(self, x, y);
    }
    fn name(&self) -> &str {
        "FD preconditioner"
    }
}

impl LinearOperator for AdiPreconditioner {
    fn order(&self) -> usize {
        self.len()
    }
    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        AdiPreconditioner::apply_into(self, x, y);
    }
    fn name(&self) -> &str {
        "ADI preconditioner"
    }
}

#[derive(Debug, Clone)]
pub struct PcgResult {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Recurred relative residual after each iteration; entry 0 is the start.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// Recomputed `||b - A x|| / ||b||` at exit.
    pub true_residual: f64,
    /// `kappa(Pinv A)` from the CG Lanczos tridiagonal, when at least two
    /// iterations ran.
    pub lanczos_cond_estimate: Option<f64>,
}

/// PCG from a zero initial guess. Stops when the recurred relative residual
/// drops to `tol` or after `maxit` iterations.
pub fn pcg(
    a: &dyn LinearOperator,
    pinv: &dyn LinearOperator,
    b: &[f64],
    tol: f64,
    maxit: usize,
) -> Result<PcgResult> {
    let n = a.order();
    for (order, found) in [(n, b.len()), (n, pinv.order())] {
        if order != found {
            return Err(Error::DimensionMismatch { expected: order, found });
        }
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("right-hand side is not finite".into()));
    }
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(PcgResult {
            solution: x,
            iterations: 0,
            residual_history: vec![0.0],
            converged: true,
            true_residual: 0.0,
            lanczos_cond_estimate: None,
        });
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    let mut q = vec![0.0; n];
    pinv.apply_into(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut history = vec![1.0];
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut converged = false;
    let mut it = 0;
    if !(rz > 0.0) {
        return Err(indefinite(pinv, 0, rz));
    }
    while it < maxit {
        a.apply_into(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(indefinite(a, it, pq));
        }
        let alpha = rz / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        it += 1;
        alphas.push(alpha);
        let rel = norm2(&r) / bnorm;
        history.push(rel);
        if rel <= tol {
            converged = true;
            break;
        }
        pinv.apply_into(&r, &mut z);
        let rz_new = dot(&r, &z);
        if !(rz_new > 0.0) {
            return Err(indefinite(pinv, it, rz_new));
        }
        let beta = rz_new / rz;
        betas.push(beta);
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    a.apply_into(&x, &mut q);
    let true_residual = q.iter().zip(b).map(|(u, v)| (v - u) * (v - u)).sum::<f64>().sqrt() / bnorm;
    Ok(PcgResult {
        solution: x,
        iterations: it,
        residual_history: history,
        converged,
        true_residual,
        lanczos_cond_estimate: lanczos_condition_estimate(&alphas, &betas),
    })
}

fn indefinite(op: &dyn LinearOperator, iteration: usize, value: f64) -> Error {
    Error::Indefinite {
        operator: op.name().to_string(),
        iteration,
        value,
    }
}

/// Extreme Ritz values of the Lanczos tridiagonal built from the CG
/// coefficients: diagonal `1/a_k + b_{k-1}/a_{k-1}`, off-diagonal
/// `sqrt(b_{k-1})/a_{k-1}`. Returns their ratio.
pub fn lanczos_condition_estimate(alphas: &[f64], betas: &[f64]) -> Option<f64> {
    let k = alphas.len();
    if k < 2 {
        return None;
    }
    let mut t = DenseMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = 1.0 / alphas[i];
        if i > 0 {
            t[(i, i)] += betas[i - 1] / alphas[i - 1];
            let off = betas[i - 1].sqrt() / alphas[i - 1];
            t[(i, i - 1)] = off;
            t[(i - 1, i)] = off;
        }
    }
    let (d, _) = symmetric_eigen(t).ok()?;
    let (lo, hi) = (d[0], d[k - 1]);
    (lo > 0.0).then(|| hi / lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::BandedSymMatrix;
    use crate::kronecker::Pencil;

    fn diag(v: &[f64]) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(v.len(), v.len());
        for (i, &x) in v.iter().enumerate() {
            a[(i, i)] = x;
        }
        a
    }

    #[test]
    fn small_diagonal_system() {
        let a = diag(&[1.0, 2.0, 3.0]);
        let res = pcg(&a, &Identity(3), &[1.0, 1.0, 1.0], 1e-12, 10).unwrap();
        assert!(res.converged);
        assert!(res.iterations <= 3);
        for (x, d) in res.solution.iter().zip([1.0, 2.0, 3.0]) {
            assert!((x - 1.0 / d).abs() < 1e-12);
        }
        assert_eq!(res.residual_history.len(), res.iterations + 1);
    }

    #[test]
    fn exact_preconditioner_one_iteration() {
        let a = diag(&[1.0, 2.0, 3.0, 7.0]);
        let inv = diag(&[1.0, 0.5, 1.0 / 3.0, 1.0 / 7.0]);
        let res = pcg(&a, &inv, &[1.0, -2.0, 0.5, 4.0], 1e-12, 10).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn identity_condition_estimate() {
        assert_eq!(lanczos_condition_estimate(&[1.0], &[]), None);
        // A = I: alpha = 1 and beta = 0 at every step
        let est = lanczos_condition_estimate(&[1.0, 1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!((est - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lanczos_matches_spectrum_after_n_steps() {
        let v: Vec<f64> = (1..=12).map(|i| i as f64 * i as f64).collect();
        let a = diag(&v);
        let b = vec![1.0; 12];
        let res = pcg(&a, &Identity(12), &b, 1e-14, 12).unwrap();
        let est = res.lanczos_cond_estimate.unwrap();
        assert!((est / 144.0 - 1.0).abs() < 1e-6, "{est}");
    }

    #[test]
    fn indefinite_operator_is_named() {
        let a = diag(&[1.0, -1.0]);
        let err = pcg(&a, &Identity(2), &[0.0, 1.0], 1e-10, 10).unwrap_err();
        match err {
            Error::Indefinite { operator, .. } => assert_eq!(operator, "dense matrix"),
            e => panic!("{e}"),
        }
        let err = pcg(&Identity(2), &a, &[0.0, 1.0], 1e-10, 10).unwrap_err();
        assert!(matches!(err, Error::Indefinite { .. }));
    }

    #[test]
    fn zero_rhs() {
        let res = pcg(&Identity(4), &Identity(4), &[0.0; 4], 1e-8, 5).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn maxit_reached_reports_nonconvergence() {
        let v: Vec<f64> = (1..=50).map(|i| i as f64).collect();
        let res = pcg(&diag(&v), &Identity(50), &vec![1.0; 50], 1e-12, 3).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 3);
    }

    #[test]
    fn kronecker_sum_with_fd_is_exact() {
        let mut k = BandedSymMatrix::zeros(6, 1);
        for i in 0..6 {
            k.set(i, i, 2.0);
            if i > 0 {
                k.set(i, i - 1, -1.0);
            }
        }
        let q = Pencil::new(k, BandedSymMatrix::identity(6)).unwrap();
        let ks = KroneckerSum::new(vec![q.clone(), q]).unwrap();
        let fd = FdPreconditioner::new(&ks).unwrap();
        let b: Vec<f64> = (0..36).map(|i| (i as f64).sin()).collect();
        let res = pcg(&ks, &fd, &b, 1e-10, 10).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(res.true_residual < 1e-10);
    }
}
