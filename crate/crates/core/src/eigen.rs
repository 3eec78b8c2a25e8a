//! Generalized symmetric-definite eigendecomposition of univariate pencils
//! and power-method estimates of their extreme eigenvalues.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, BandedSymMatrix, DenseMatrix};

/// Relative widening of the power-method bracket `b / a`, split evenly
/// between the two ends.
pub const BRACKET_WIDENING: f64 = 1.05;

/// Default number of direct and of inverse power iterations.
pub const POWER_ITERS: usize = 10;

const POWER_SEED: u64 = 0x5eed_0fe1;

/// `K U = M U diag(D)` with `U^T M U = I`, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct PencilEigen {
    pub u: DenseMatrix,
    pub d: Vec<f64>,
}

/// Solves the pencil via `M = L L^T` and a symmetric eigensolve of `L^{-1} K L^{-T}`.
pub fn generalized_eig(k: &BandedSymMatrix, m: &BandedSymMatrix) -> Result<PencilEigen> {
    let n = k.order();
    if m.order() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m.order(),
        });
    }
    let l = m.cholesky()?;
    // t = (L^{-1} K)^T, one forward solve per column of K
    let kd = k.to_dense();
    let mut t = DenseMatrix::zeros(n, n);
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.copy_from_slice(kd.row(j));
        l.forward(&mut col);
        for i in 0..n {
            t[(j, i)] = col[i];
        }
    }
    // columns of t are columns of K L^{-T}; one more forward solve gives K~
    let mut kt = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            col[j] = t[(j, i)];
        }
        l.forward(&mut col);
        for j in 0..n {
            kt[(i, j)] = col[j];
        }
    }
    // symmetrize away round-off
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (kt[(i, j)] + kt[(j, i)]);
            kt[(i, j)] = v;
            kt[(j, i)] = v;
        }
    }
    let (d, z) = symmetric_eigen(kt)?;
    // U = L^{-T} Z, column by column
    let mut u = DenseMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            col[i] = z[(i, j)];
        }
        l.backward(&mut col);
        for i in 0..n {
            u[(i, j)] = col[i];
        }
    }
    Ok(PencilEigen { u, d })
}

/// Eigenvalues (ascending) and orthonormal eigenvectors (columns) of a dense
/// symmetric matrix: Householder tridiagonalization followed by implicit QL.
pub fn symmetric_eigen(a: DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = a.rows();
    let mut v = a;
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    if n == 0 {
        return Ok((d, v));
    }
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;
    Ok((d, v))
}

fn tred2(v: &mut DenseMatrix, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                g = e[j] + v[(j, j)] * f;
                for k in j + 1..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    // accumulate transformations
    for i in 0..n - 1 {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    v[(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = 0.0;
    }
    v[(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

fn tql2(v: &mut DenseMatrix, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::InvalidArgument(
                        "QL iteration did not converge".into(),
                    ));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let vk = v[(k, i + 1)];
                        v[(k, i + 1)] = s * v[(k, i)] + c * vk;
                        v[(k, i)] = c * v[(k, i)] - s * vk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    // selection sort into ascending order
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for (j, &dj) in d.iter().enumerate().skip(i + 1) {
            if dj < p {
                k = j;
                p = dj;
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            for j in 0..n {
                let t = v[(j, i)];
                v[(j, i)] = v[(j, k)];
                v[(j, k)] = t;
            }
        }
    }
    Ok(())
}

/// Bracket `[a, b]` of the spectrum of `M^{-1} K` from `iters` direct and
/// `iters` inverse power steps, widened so that `b / a` grows by
/// [`BRACKET_WIDENING`].
pub fn extreme_eigs(k: &BandedSymMatrix, m: &BandedSymMatrix, iters: usize) -> Result<(f64, f64)> {
    let n = k.order();
    let fk = k.cholesky()?;
    let fm = m.cholesky()?;
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    // random magnitudes; the direct iteration starts from an oscillating
    // vector (top modes oscillate), the inverse one from a smooth positive one
    let mag: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let start: Vec<f64> = mag.iter().enumerate().map(|(i, &v)| if i % 2 == 0 { v } else { -v }).collect();
    let rayleigh = |v: &[f64]| dot(v, &k.matvec(v)) / dot(v, &m.matvec(v));

    // largest: v <- M^{-1} K v
    let mut v = start.clone();
    for _ in 0..iters {
        v = fm.solve(&k.matvec(&v));
        normalize(&mut v);
    }
    let hi = rayleigh(&v);
    // smallest: v <- K^{-1} M v
    let mut v = mag;
    for _ in 0..iters {
        v = fk.solve(&m.matvec(&v));
        normalize(&mut v);
    }
    let lo = rayleigh(&v);
    let (lo, hi) = (lo.min(hi), lo.max(hi));
    let f = BRACKET_WIDENING.sqrt();
    Ok((lo / f, hi * f))
}

fn normalize(v: &mut [f64]) {
    let s = dot(v, v).sqrt();
    if s > 0.0 {
        for x in v {
            *x /= s;
        }
    }
}
