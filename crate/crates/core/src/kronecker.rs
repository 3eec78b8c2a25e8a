//! Matrix-free Kronecker products, factorwise solves, and the Kronecker-sum
//! operator `K1 (x) M2 + M1 (x) K2` (and its three-term analogue).

use crate::assembly::assemble_pencil_1d;
use crate::bspline::SplineSpace1D;
use crate::error::{Error, Result};
use crate::linalg::{axis_split, AxisOp, AxisSolve, BandedSymMatrix};

fn check_len(dims: &[usize], x: &[f64]) -> Result<()> {
    let n: usize = dims.iter().product();
    if n != x.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x.len(),
        });
    }
    Ok(())
}

/// Applies `A` along `axis` of a tensor with the given dims.
pub fn apply_along(a: &dyn AxisOp, dims: &[usize], axis: usize, x: &[f64], y: &mut [f64]) {
    let (outer, n, inner) = axis_split(dims, axis);
    debug_assert_eq!(a.order(), n);
    a.apply_axis(x, y, outer, inner);
}

/// Solves with `A` along `axis`, in place.
pub fn solve_along(a: &dyn AxisSolve, dims: &[usize], axis: usize, x: &mut [f64]) {
    let (outer, n, inner) = axis_split(dims, axis);
    debug_assert_eq!(a.order(), n);
    a.solve_axis(x, outer, inner);
}

/// `(A_1 (x) ... (x) A_d) x` without forming the product.
pub fn kron_matvec(factors: &[&dyn AxisOp], x: &[f64]) -> Result<Vec<f64>> {
    let dims: Vec<usize> = factors.iter().map(|f| f.order()).collect();
    check_len(&dims, x)?;
    let mut cur = x.to_vec();
    let mut next = vec![0.0; x.len()];
    for (axis, f) in factors.iter().enumerate() {
        apply_along(*f, &dims, axis, &cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

/// `(A_1 (x) ... (x) A_d)^{-1} x` via one solve per factor.
pub fn kron_solve(factors: &[&dyn AxisSolve], x: &[f64]) -> Result<Vec<f64>> {
    let dims: Vec<usize> = factors.iter().map(|f| f.order()).collect();
    check_len(&dims, x)?;
    let mut out = x.to_vec();
    for (axis, f) in factors.iter().enumerate() {
        solve_along(*f, &dims, axis, &mut out);
    }
    Ok(out)
}

/// Per-direction stiffness/mass pencil `(K_l, M_l)`.
#[derive(Debug, Clone)]
pub struct Pencil {
    pub k: BandedSymMatrix,
    pub m: BandedSymMatrix,
}

impl Pencil {
    pub fn new(k: BandedSymMatrix, m: BandedSymMatrix) -> Result<Self> {
        if k.order() != m.order() {
            return Err(Error::DimensionMismatch {
                expected: k.order(),
                found: m.order(),
            });
        }
        Ok(Self { k, m })
    }

    pub fn from_space(space: &SplineSpace1D) -> Self {
        let (k, m) = assemble_pencil_1d(space);
        Self { k, m }
    }

    pub fn order(&self) -> usize {
        self.k.order()
    }
}

/// `P = sum_s (x)_l (s == l ? K_l : M_l)`, symmetric positive definite.
#[derive(Debug, Clone)]
pub struct KroneckerSum {
    pencils: Vec<Pencil>,
    dims: Vec<usize>,
}

impl KroneckerSum {
    pub fn new(pencils: Vec<Pencil>) -> Result<Self> {
        if !(2..=3).contains(&pencils.len()) {
            return Err(Error::Unsupported(format!("{}-term Kronecker sums", pencils.len())));
        }
        let dims = pencils.iter().map(Pencil::order).collect();
        Ok(Self { pencils, dims })
    }

    pub fn from_spaces(spaces: &[SplineSpace1D]) -> Result<Self> {
        Self::new(spaces.iter().map(Pencil::from_space).collect())
    }

    pub fn dim(&self) -> usize {
        self.pencils.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pencils(&self) -> &[Pencil] {
        &self.pencils
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(&self.dims, x)?;
        let mut y = vec![0.0; x.len()];
        self.matvec_into(x, &mut y);
        Ok(y)
    }

    /// `y = P x`. Mass factors are shared between terms where possible.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        let dims = &self.dims;
        let n = x.len();
        let p = &self.pencils;
        let mut t1 = vec![0.0; n];
        let mut t2 = vec![0.0; n];
        if self.dim() == 2 {
            // y = (K1 (x) I)(I (x) M2) x + (M1 (x) I)(I (x) K2) x
            apply_along(&p[1].m, dims, 1, x, &mut t1);
            apply_along(&p[0].k, dims, 0, &t1, y);
            apply_along(&p[1].k, dims, 1, x, &mut t1);
            apply_along(&p[0].m, dims, 0, &t1, &mut t2);
        } else {
            // u = M3 x;  y = K1 M2 u + M1 (K2 u + M2 K3 x)
            let mut u = vec![0.0; n];
            apply_along(&p[2].m, dims, 2, x, &mut u);
            apply_along(&p[1].m, dims, 1, &u, &mut t1);
            apply_along(&p[0].k, dims, 0, &t1, y);
            apply_along(&p[1].k, dims, 1, &u, &mut t1);
            apply_along(&p[2].k, dims, 2, x, &mut u);
            apply_along(&p[1].m, dims, 1, &u, &mut t2);
            for (a, b) in t1.iter_mut().zip(&t2) {
                *a += b;
            }
            apply_along(&p[0].m, dims, 0, &t1, &mut t2);
        }
        for (a, b) in y.iter_mut().zip(&t2) {
            *a += b;
        }
    }
}
