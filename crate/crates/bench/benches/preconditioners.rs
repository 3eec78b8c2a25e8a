use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kronsolve::assembly::assemble_stiffness;
use kronsolve::geometry::{IdentityCoefficient, QuarterAnnulus};
use kronsolve::ic::Reorder;
use kronsolve::{pcg, AdiPreconditioner, FdPreconditioner, IcFactor, KroneckerSum, Shifts3D, SplineSpace1D};

fn pencils(p: usize, h_inv: usize, d: usize) -> KroneckerSum {
    KroneckerSum::from_spaces(&vec![SplineSpace1D::uniform(p, h_inv).unwrap(); d]).unwrap()
}

fn rhs(n: usize) -> Vec<f64> {
    (0..n).map(|i| (i as f64 * 0.61).sin()).collect()
}

fn fd_apply(c: &mut Criterion) {
    let mut g = c.benchmark_group("fd_apply");
    for (d, h) in [(2, 64), (2, 256), (3, 32)] {
        let ks = pencils(3, h, d);
        let fd = FdPreconditioner::new(&ks).unwrap();
        let r = rhs(ks.len());
        let mut s = vec![0.0; ks.len()];
        g.bench_with_input(BenchmarkId::new(format!("{d}d_p3"), h), &h, |b, _| {
            b.iter(|| fd.apply_into(black_box(&r), &mut s))
        });
    }
    g.finish();
}

fn adi_apply(c: &mut Criterion) {
    let mut g = c.benchmark_group("adi_apply");
    for (d, h) in [(2, 64), (2, 256), (3, 16)] {
        let ks = pencils(3, h, d);
        let adi = AdiPreconditioner::new(&ks, 0.1, Shifts3D::Douglas).unwrap();
        let r = rhs(ks.len());
        let mut s = vec![0.0; ks.len()];
        g.bench_with_input(BenchmarkId::new(format!("{d}d_p3_eps0.1"), h), &h, |b, _| {
            b.iter(|| adi.apply_into(black_box(&r), &mut s))
        });
    }
    g.finish();
}

fn kron_matvec(c: &mut Criterion) {
    let ks = pencils(3, 32, 3);
    let x = rhs(ks.len());
    let mut y = vec![0.0; ks.len()];
    c.bench_function("kronecker_sum_matvec_3d_p3_h32", |b| b.iter(|| ks.matvec_into(black_box(&x), &mut y)));
}

fn pcg_quarter_annulus(c: &mut Criterion) {
    let mut g = c.benchmark_group("pcg_quarter_annulus_p3_h64");
    g.sample_size(10);
    let s = SplineSpace1D::uniform(3, 64).unwrap();
    let spaces = [s.clone(), s];
    let a = assemble_stiffness(&spaces, &QuarterAnnulus, &IdentityCoefficient).unwrap();
    let b = rhs(a.order());
    let fd = FdPreconditioner::new(&KroneckerSum::from_spaces(&spaces).unwrap()).unwrap();
    g.bench_function("fd", |bch| bch.iter(|| pcg(&a, &fd, black_box(&b), 1e-8, 1000).unwrap()));
    let ic = IcFactor::new(&a, Reorder::Rcm).unwrap();
    g.bench_function("ic", |bch| bch.iter(|| pcg(&a, &ic, black_box(&b), 1e-8, 5000).unwrap()));
    g.finish();
}

criterion_group!(benches, fd_apply, adi_apply, kron_matvec, pcg_quarter_annulus);
criterion_main!(benches);
