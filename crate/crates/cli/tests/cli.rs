use std::fs;
use std::process::{Command, Output};

use kronsolve::experiment::{read_csv, CSV_HEADER};
use kronsolve::SparseMatrix;

fn kronsolve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kronsolve")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_direct_fd_csv() {
    let o = kronsolve(&["run", "--domain", "unit_square", "-p", "2", "--h-inv", "16", "--mode", "direct"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().next().unwrap(), CSV_HEADER.join(","));
    let report = read_csv(out.as_bytes()).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].outer_iters, 1);
    assert!(report.rows[0].residual <= 1e-10);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "domain=quarter_annulus\np=3\nh_inv=8,16\nsolver=ic\nmode=precond\ntol=1e-8\nseed=42\n").unwrap();
    let out_path = dir.path().join("report.csv");
    let o = kronsolve(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--solver",
        "fd",
        "--output",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_csv(fs::File::open(&out_path).unwrap()).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert!(report.rows.iter().all(|r| r.solver == "fd" && r.p == 3 && r.domain == "quarter_annulus"));
}

#[test]
fn config_errors_exit_2() {
    for args in [
        vec!["run", "--h-inv", "48"],
        vec!["run", "--solver", "lu"],
        vec!["run", "--eps", "1.5"],
        vec!["run", "--config", "/nonexistent/exp.cfg"],
        vec!["run", "--format", "xml"],
        vec!["shifts", "--a", "1", "--b", "10", "--eps", "2"],
    ] {
        let o = kronsolve(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    }
}

#[test]
fn memory_guard_refuses_with_required_bytes() {
    let o = kronsolve(&["run", "--domain", "unit_square", "-p", "3", "--h-inv", "256", "--mem-cap", "1MB"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bytes exceeds the cap of 1048576"), "{err}");
    assert!(o.stdout.is_empty());
}

#[test]
fn all_rows_nonconverged_exit_3() {
    let o = kronsolve(&["run", "--domain", "quarter_annulus", "--solver", "none", "--maxit", "2", "--h-inv", "8,16"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(read_csv(o.stdout.as_slice()).unwrap().rows.len(), 2);
}

#[test]
fn text_format() {
    let o = kronsolve(&["run", "--domain", "unit_cube", "-p", "2", "--h-inv", "4,8", "--solver", "adi", "--format", "text"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let lens: Vec<usize> = out.lines().map(str::len).collect();
    assert_eq!(lens.len(), 3);
    assert!(lens.iter().all(|&l| l == lens[0]));
}

#[test]
fn export_matrix_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.mtx");
    let b = dir.path().join("b.mtx");
    let o = kronsolve(&[
        "export-matrix",
        "--domain",
        "l_shape",
        "-p",
        "2",
        "--h-inv",
        "4",
        "--output",
        a.to_str().unwrap(),
        "--rhs-output",
        b.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let m = SparseMatrix::read_matrix_market(std::io::BufReader::new(fs::File::open(&a).unwrap())).unwrap();
    let dom = kronsolve::MultiPatchDomain::l_shape(2, 4).unwrap();
    assert_eq!(m.order(), dom.num_dofs());
    assert!(m.symmetry_defect() < 1e-14);
    let text = fs::read_to_string(&b).unwrap();
    assert_eq!(text.lines().count(), 2 + dom.num_dofs());
    // 17 significant digits
    let first = text.lines().nth(2).unwrap();
    let mant = first.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
    assert_eq!(mant.len(), 17);
}

#[test]
fn shifts_2d_and_3d() {
    let o = kronsolve(&["shifts", "-p", "1", "--h-inv", "512", "--eps", "1e-8"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("J = 29"), "{out}");
    assert_eq!(out.lines().filter(|l| l.starts_with(char::is_numeric)).count(), 29);
    let o = kronsolve(&["shifts", "--dim", "3", "--a", "1", "--b", "1000", "--strategy", "greedy"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("J0 = "));
}
