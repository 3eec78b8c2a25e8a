use approx::assert_relative_eq;
use kronsolve::adi::{adi_solve_2d, wachspress_shifts};
use kronsolve::eigen::{extreme_eigs, POWER_ITERS};
use kronsolve::experiment::fmt_g6;
use kronsolve::ic::rcm;
use kronsolve::kronecker::kron_matvec;
use kronsolve::linalg::{AxisOp, DenseMatrix};
use kronsolve::{FdPreconditioner, KnotVector, KroneckerSum, SparseMatrix, SplineSpace1D};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn to_na(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice())
}

fn dense(n: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| DenseMatrix::from_row_major(n, n, v).unwrap())
}

fn kron_case() -> impl Strategy<Value = (Vec<DenseMatrix>, Vec<f64>)> {
    prop::collection::vec(1usize..5, 2..=3).prop_flat_map(|dims| {
        let total: usize = dims.iter().product();
        let mats: Vec<_> = dims.iter().map(|&n| dense(n)).collect();
        (mats, prop::collection::vec(-1.0f64..1.0, total))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kron_matvec_matches_dense_kronecker((mats, x) in kron_case()) {
        let factors: Vec<&dyn AxisOp> = mats.iter().map(|m| m as &dyn AxisOp).collect();
        let y = kron_matvec(&factors, &x).unwrap();
        let big = mats[1..].iter().fold(to_na(&mats[0]), |acc, m| acc.kronecker(&to_na(m)));
        let want = big * nalgebra::DVector::from_column_slice(&x);
        for (u, v) in y.iter().zip(want.iter()) {
            assert_relative_eq!(*u, *v, epsilon = 1e-12);
        }
    }

    #[test]
    fn partition_of_unity(p in 1usize..6, el in 1usize..9, t in 0.0f64..=1.0) {
        let k = KnotVector::uniform(p, el).unwrap();
        let (_, vals) = k.eval_basis(t).unwrap();
        prop_assert!((vals.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        prop_assert!(vals.iter().all(|&v| v >= -1e-15));
    }

    #[test]
    fn fd_inverts_kronecker_sum(p in 1usize..5, e1 in 2usize..7, e2 in 2usize..7, three in any::<bool>(), seed in any::<u64>()) {
        let mut spaces = vec![SplineSpace1D::uniform(p, e1).unwrap(), SplineSpace1D::uniform(p, e2).unwrap()];
        if three {
            spaces.push(SplineSpace1D::uniform(p, 3).unwrap());
        }
        let ks = KroneckerSum::from_spaces(&spaces).unwrap();
        let fd = FdPreconditioner::new(&ks).unwrap();
        let r: Vec<f64> = (0..ks.len()).map(|i| ((i as u64 ^ seed) % 97) as f64 / 97.0 - 0.5).collect();
        let back = ks.matvec(&fd.apply(&r).unwrap()).unwrap();
        let err: f64 = back.iter().zip(&r).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-9 * norm.max(1e-300));
    }

    #[test]
    fn g6_round_trip(x in prop::num::f64::NORMAL) {
        let back: f64 = fmt_g6(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-6 * x.abs());
    }

    #[test]
    fn rcm_is_a_permutation(n in 1usize..30, edges in prop::collection::vec((0usize..30, 0usize..30), 0..60)) {
        let mut t: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 4.0)).collect();
        for (i, j) in edges {
            if i < n && j < n && i != j {
                t.push((i, j, -0.1));
                t.push((j, i, -0.1));
            }
        }
        let a = SparseMatrix::from_triplets(n, &t).unwrap();
        let mut perm = rcm(&a);
        perm.sort_unstable();
        prop_assert_eq!(perm, (0..n).collect::<Vec<_>>());
    }
}

#[test]
fn adi_2d_agrees_with_fd() {
    let s = SplineSpace1D::uniform(3, 12).unwrap();
    let ks = KroneckerSum::from_spaces(&[s.clone(), s]).unwrap();
    let pen = &ks.pencils()[0];
    let (a, b) = extreme_eigs(&pen.k, &pen.m, POWER_ITERS).unwrap();
    let plan = wachspress_shifts(a, b, a, b, 1e-12).unwrap();
    let r: Vec<f64> = (0..ks.len()).map(|i| (i as f64 * 0.37).sin()).collect();
    let x = adi_solve_2d(&ks, &r, &plan).unwrap();
    let y = FdPreconditioner::new(&ks).unwrap().apply(&r).unwrap();
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (u, v) in x.iter().zip(&y) {
        assert!((u - v).abs() <= 1e-9 * scale);
    }
}

#[test]
fn matrix_market_round_trip_is_bit_exact() {
    let s = SplineSpace1D::uniform(2, 5).unwrap();
    let a = kronsolve::assembly::assemble_stiffness(
        &[s.clone(), s],
        &kronsolve::geometry::QuarterAnnulus,
        &kronsolve::geometry::IdentityCoefficient,
    )
    .unwrap();
    let file = tempfile::NamedTempFile::new().unwrap();
    a.write_matrix_market(std::fs::File::create(file.path()).unwrap()).unwrap();
    let back = SparseMatrix::read_matrix_market(std::io::BufReader::new(std::fs::File::open(file.path()).unwrap())).unwrap();
    assert_eq!(back.nnz(), a.nnz());
    assert_eq!(back.values(), a.values());
    assert_eq!(back.col_indices(), a.col_indices());
}
