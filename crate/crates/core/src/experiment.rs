//! Benchmark runner: configuration, experiment loop over refinements, and
//! CSV / aligned-text reports.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::adi::{AdiPreconditioner, Shifts3D};
use crate::assembly::{assemble_load, assemble_stiffness, condition_bound, SampleGrid};
use crate::bspline::SplineSpace1D;
use crate::error::{Error, Result};
use crate::fd::FdPreconditioner;
use crate::geometry::{builtin, BuiltinDomain, IdentityCoefficient};
use crate::ic::{IcFactor, Reorder};
use crate::kronecker::KroneckerSum;
use crate::linalg::norm2;
use crate::multipatch::{MultiPatchDomain, Patch, SchwarzMode, SchwarzPreconditioner};
use crate::pcg::{pcg, Identity, LinearOperator};
use crate::sparse::SparseMatrix;

pub const CSV_HEADER: [&str; 11] = [
    "domain",
    "p",
    "h_inv",
    "solver",
    "outer_iters",
    "inner_iters",
    "setup_s",
    "solve_s",
    "residual",
    "cond_bound",
    "nnz",
];

/// Default memory cap: 8 GiB.
pub const DEFAULT_MEMORY_CAP: u64 = 8 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainChoice {
    Builtin(BuiltinDomain),
    LShape,
}

impl DomainChoice {
    pub fn dim(self) -> usize {
        match self {
            Self::Builtin(d) => d.dim(),
            Self::LShape => 2,
        }
    }
}

impl fmt::Display for DomainChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Builtin(d) => write!(f, "{d}"),
            Self::LShape => f.write_str("l_shape"),
        }
    }
}

impl FromStr for DomainChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "l_shape" {
            return Ok(Self::LShape);
        }
        s.parse::<BuiltinDomain>()
            .map(Self::Builtin)
            .map_err(|_| Error::Config(format!("unknown domain '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverChoice {
    Fd,
    Adi,
    Ic,
    SchwarzExact,
    SchwarzFd,
    None,
}

impl SolverChoice {
    pub const ALL: [SolverChoice; 6] = [
        Self::Fd,
        Self::Adi,
        Self::Ic,
        Self::SchwarzExact,
        Self::SchwarzFd,
        Self::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Fd => "fd",
            Self::Adi => "adi",
            Self::Ic => "ic",
            Self::SchwarzExact => "schwarz_exact",
            Self::SchwarzFd => "schwarz_fd",
            Self::None => "none",
        }
    }
}

impl fmt::Display for SolverChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown solver '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RunMode {
    /// Apply the preconditioner once as the solver.
    Direct,
    #[default]
    Preconditioner,
}

impl FromStr for RunMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Self::Direct),
            "precond" | "preconditioner" => Ok(Self::Preconditioner),
            _ => Err(Error::Config(format!("unknown mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RhsChoice {
    /// Standard normal for `unit_cube`, the manufactured load otherwise.
    #[default]
    Auto,
    Manufactured,
    Randn,
}

impl FromStr for RhsChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "manufactured" => Ok(Self::Manufactured),
            "randn" => Ok(Self::Randn),
            _ => Err(Error::Config(format!("unknown rhs '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub domain: DomainChoice,
    pub degree: usize,
    pub refinements: Vec<usize>,
    pub solver: SolverChoice,
    pub mode: RunMode,
    /// Inner ADI tolerance.
    pub eps: f64,
    /// Outer PCG tolerance.
    pub tol: f64,
    pub seed: u64,
    pub maxit: usize,
    pub shifts: Shifts3D,
    pub rhs: RhsChoice,
    pub memory_cap: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            domain: DomainChoice::Builtin(BuiltinDomain::UnitSquare),
            degree: 2,
            refinements: vec![16],
            solver: SolverChoice::Fd,
            mode: RunMode::Preconditioner,
            eps: 0.1,
            tol: 1e-8,
            seed: 42,
            maxit: 10_000,
            shifts: Shifts3D::Douglas,
            rhs: RhsChoice::Auto,
            memory_cap: DEFAULT_MEMORY_CAP,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

/// `123`, `64K`, `1MB`, `8GiB` (binary multiples).
pub fn parse_bytes(s: &str) -> Result<u64> {
    let t = s.trim();
    let split = t.find(|c: char| !c.is_ascii_digit()).unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let base: u64 = parse_num("mem_cap", num)?;
    let shift = match unit.trim().to_ascii_uppercase().as_str() {
        "" | "B" => 0,
        "K" | "KB" | "KIB" => 10,
        "M" | "MB" | "MIB" => 20,
        "G" | "GB" | "GIB" => 30,
        _ => return Err(Error::Config(format!("mem_cap: unknown unit '{unit}'"))),
    };
    base.checked_mul(1 << shift)
        .ok_or_else(|| Error::Config(format!("mem_cap: '{s}' overflows")))
}

impl ExperimentConfig {
    /// Sets one field from its key; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "domain" => self.domain = value.parse()?,
            "p" | "degree" => self.degree = parse_num(key, value)?,
            "h_inv" | "refinements" => {
                self.refinements = if value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|v| parse_num(key, v.trim()))
                        .collect::<Result<_>>()?
                }
            }
            "solver" => self.solver = value.parse()?,
            "mode" => self.mode = value.parse()?,
            "eps" => self.eps = parse_num(key, value)?,
            "tol" => self.tol = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "maxit" => self.maxit = parse_num(key, value)?,
            "shifts" => {
                self.shifts = match value {
                    "douglas" => Shifts3D::Douglas,
                    "greedy" => Shifts3D::Greedy,
                    _ => return Err(Error::Config(format!("unknown shift strategy '{value}'"))),
                }
            }
            "rhs" => self.rhs = value.parse()?,
            "mem_cap" => self.memory_cap = parse_bytes(value)?,
            k => return Err(Error::Config(format!("unknown key '{k}'"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", no + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {}", no + 1, strip_config(e))))?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.degree == 0 {
            return bad("p must be at least 1".into());
        }
        if let Some(h) = self.refinements.iter().find(|h| !h.is_power_of_two() || **h < 2) {
            return bad(format!("h_inv {h} is not a power of two >= 2"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad(format!("eps {} outside (0, 1)", self.eps));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return bad(format!("tol {} outside (0, 1)", self.tol));
        }
        if self.maxit == 0 {
            return bad("maxit must be positive".into());
        }
        if self.domain == DomainChoice::LShape && matches!(self.solver, SolverChoice::Fd | SolverChoice::Adi) {
            return bad(format!("solver {} needs a single-patch domain", self.solver));
        }
        if self.mode == RunMode::Direct && !matches!(self.solver, SolverChoice::Fd | SolverChoice::Adi) {
            return bad(format!("direct mode needs solver fd or adi, not {}", self.solver));
        }
        Ok(())
    }

    /// Predicted peak bytes of one refinement level.
    pub fn estimate_memory(&self, h_inv: usize) -> u64 {
        let d = self.domain.dim() as u64;
        let p = self.degree as u64;
        let n = (h_inv as u64 + p).saturating_sub(2);
        let patches = if self.domain == DomainChoice::LShape { 3 } else { 1 };
        let dofs = patches * n.pow(d as u32);
        let nnz = dofs * (2 * p + 1).pow(d as u32);
        // system matrix and PCG work vectors
        let mut bytes = nnz * 12 + 8 * dofs * 8;
        bytes += match self.solver {
            SolverChoice::Fd => n * n * d * 8 + dofs * 8,
            SolverChoice::Adi => n * (p + 1) * 8 * d * 64 + 3 * dofs * 8,
            SolverChoice::Ic => nnz * 12 + dofs * 8,
            // two merged subdomains of 2 n^2 unknowns
            SolverChoice::SchwarzExact => 2 * (2 * dofs / 3).max(n.pow(d as u32)) * (p + 1) * n * 8,
            SolverChoice::SchwarzFd => 2 * (4 * n * n * d * 8 + 2 * n.pow(d as u32) * 8),
            SolverChoice::None => 0,
        };
        bytes
    }
}

fn strip_config(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        e => e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub domain: String,
    pub p: usize,
    pub h_inv: usize,
    pub solver: String,
    pub outer_iters: usize,
    /// ADI steps per application.
    pub inner_iters: Option<usize>,
    pub setup_s: f64,
    pub solve_s: f64,
    /// True relative residual at exit.
    pub residual: f64,
    pub cond_bound: f64,
    pub nnz: usize,
    /// Not a CSV column; parsed rows carry `true`.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn all_failed(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| !r.converged)
    }
}

/// `%g` with 6 significant digits.
pub fn fmt_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-4..6).contains(&exp) {
        trim(&format!("{:.*}", (5 - exp) as usize, x))
    } else {
        format!("{}e{}{:02}", trim(mant), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

impl ReportRow {
    fn fields(&self) -> [String; 11] {
        [
            self.domain.clone(),
            self.p.to_string(),
            self.h_inv.to_string(),
            self.solver.clone(),
            self.outer_iters.to_string(),
            self.inner_iters.map_or(String::new(), |v| v.to_string()),
            fmt_g6(self.setup_s),
            fmt_g6(self.solve_s),
            fmt_g6(self.residual),
            fmt_g6(self.cond_bound),
            self.nnz.to_string(),
        ]
    }
}

pub fn write_csv<W: Write>(report: &ExperimentReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for row in &report.rows {
        out.write_record(row.fields())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<ExperimentReport> {
    let mut rdr = csv::Reader::from_reader(r);
    if rdr.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::InvalidArgument("unexpected CSV header".into()));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        let int = |i: usize| -> Result<usize> {
            get(i).parse().map_err(|_| Error::InvalidArgument(format!("{}: '{}'", CSV_HEADER[i], get(i))))
        };
        let real = |i: usize| -> Result<f64> {
            get(i).parse().map_err(|_| Error::InvalidArgument(format!("{}: '{}'", CSV_HEADER[i], get(i))))
        };
        rows.push(ReportRow {
            domain: get(0).to_string(),
            p: int(1)?,
            h_inv: int(2)?,
            solver: get(3).to_string(),
            outer_iters: int(4)?,
            inner_iters: if get(5).is_empty() { None } else { Some(int(5)?) },
            setup_s: real(6)?,
            solve_s: real(7)?,
            residual: real(8)?,
            cond_bound: real(9)?,
            nnz: int(10)?,
            converged: true,
        });
    }
    Ok(ExperimentReport { rows })
}

/// Right-aligned columns padded to the widest entry, plus a trailing flag
/// column marking nonconverged rows.
pub fn write_text<W: Write>(report: &ExperimentReport, mut w: W) -> Result<()> {
    let mut table: Vec<Vec<String>> = vec![CSV_HEADER.iter().map(|s| s.to_string()).collect()];
    for row in &report.rows {
        table.push(row.fields().into());
    }
    let widths: Vec<usize> = (0..CSV_HEADER.len())
        .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    for (i, r) in table.iter().enumerate() {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(s, &wd)| format!("{s:>wd$}")).collect();
        let flag = match i {
            0 => " conv",
            _ if report.rows[i - 1].converged => "  yes",
            _ => "   NO",
        };
        writeln!(w, "{}{flag}", cells.join("  "))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "text" => Ok(Self::Text),
            _ => Err(Error::Config(format!("unknown format '{s}'"))),
        }
    }
}

pub fn emit_report(report: &ExperimentReport, format: ReportFormat, path: &Path) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    match format {
        ReportFormat::Csv => write_csv(report, file),
        ReportFormat::Text => write_text(report, file),
    }
}

/// The manufactured loads: `2(x^2-x) + 2(y^2-y) [+ 2(z^2-z)]`.
pub fn manufactured_load(x: &[f64]) -> f64 {
    x.iter().map(|&t| 2.0 * (t * t - t)).sum()
}

/// Single-patch discretization at one refinement level.
pub struct Discretization {
    pub spaces: Vec<SplineSpace1D>,
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    domain: Option<MultiPatchDomain>,
}

impl Discretization {
    pub fn new(cfg: &ExperimentConfig, h_inv: usize) -> Result<Self> {
        let space = SplineSpace1D::uniform(cfg.degree, h_inv)?;
        let d = cfg.domain.dim();
        let spaces = vec![space; d];
        let randn = match cfg.rhs {
            RhsChoice::Auto => cfg.domain == DomainChoice::Builtin(BuiltinDomain::UnitCube),
            RhsChoice::Manufactured => false,
            RhsChoice::Randn => true,
        };
        let (matrix, load, domain) = match cfg.domain {
            DomainChoice::Builtin(b) => {
                let map = builtin(b);
                let a = assemble_stiffness(&spaces, map.as_ref(), &IdentityCoefficient)?;
                let f = if randn { None } else { Some(assemble_load(&spaces, map.as_ref(), &manufactured_load)?) };
                let domain = if cfg.solver == SolverChoice::SchwarzExact || cfg.solver == SolverChoice::SchwarzFd {
                    Some(MultiPatchDomain::single(Patch::new(spaces.clone(), map)?)?)
                } else {
                    None
                };
                (a, f, domain)
            }
            DomainChoice::LShape => {
                let dom = MultiPatchDomain::l_shape(cfg.degree, h_inv)?;
                let a = dom.assemble_stiffness(&IdentityCoefficient)?;
                let f = if randn { None } else { Some(dom.assemble_load(&manufactured_load)?) };
                (a, f, Some(dom))
            }
        };
        let rhs = load.unwrap_or_else(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ h_inv as u64);
            (0..matrix.order()).map(|_| StandardNormal.sample(&mut rng)).collect()
        });
        Ok(Self {
            spaces,
            matrix,
            rhs,
            domain,
        })
    }
}

fn elapsed(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn report_cond_bound(cfg: &ExperimentConfig) -> Result<f64> {
    match cfg.domain {
        // translated unit squares
        DomainChoice::LShape => Ok(1.0),
        DomainChoice::Builtin(b) => {
            let d = b.dim();
            Ok(condition_bound(builtin(b).as_ref(), &IdentityCoefficient, &SampleGrid::uniform(d, 65))?.value)
        }
    }
}

/// One row per refinement. Nonconvergence flags the row and the run goes
/// on; an over-cap memory estimate refuses the whole run up front.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    for &h in &cfg.refinements {
        let required = cfg.estimate_memory(h);
        if required > cfg.memory_cap {
            return Err(Error::MemoryLimit {
                required,
                cap: cfg.memory_cap,
            });
        }
    }
    let cond = if cfg.refinements.is_empty() { 0.0 } else { report_cond_bound(cfg)? };
    let mut rows = Vec::with_capacity(cfg.refinements.len());
    for &h in &cfg.refinements {
        rows.push(run_level(cfg, h, cond)?);
    }
    Ok(ExperimentReport { rows })
}

fn run_level(cfg: &ExperimentConfig, h_inv: usize, cond_bound: f64) -> Result<ReportRow> {
    let disc = Discretization::new(cfg, h_inv)?;
    let a = &disc.matrix;
    let b = &disc.rhs;
    let t = Instant::now();
    let mut inner = None;
    let pinv: Box<dyn LinearOperator> = match cfg.solver {
        SolverChoice::Fd => Box::new(FdPreconditioner::new(&KroneckerSum::from_spaces(&disc.spaces)?)?),
        SolverChoice::Adi => {
            let adi = AdiPreconditioner::new(&KroneckerSum::from_spaces(&disc.spaces)?, cfg.eps, cfg.shifts)?;
            inner = Some(adi.iterations());
            Box::new(adi)
        }
        SolverChoice::Ic => Box::new(IcFactor::new(a, Reorder::Rcm)?),
        SolverChoice::SchwarzExact | SolverChoice::SchwarzFd => {
            let mode = if cfg.solver == SolverChoice::SchwarzExact { SchwarzMode::Exact } else { SchwarzMode::Inexact };
            let dom = disc.domain.as_ref().expect("multipatch domain built for Schwarz");
            Box::new(SchwarzPreconditioner::new(dom, a, mode)?)
        }
        SolverChoice::None => Box::new(Identity(a.order())),
    };
    let setup_s = elapsed(t);
    let t = Instant::now();
    let (outer, residual, converged) = match cfg.mode {
        RunMode::Direct => {
            let x = pinv.apply(b);
            let ax = a.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(u, v)| u - v).collect();
            let res = norm2(&r) / norm2(b);
            (1, res, res <= cfg.tol)
        }
        RunMode::Preconditioner => {
            let res = pcg(a, pinv.as_ref(), b, cfg.tol, cfg.maxit)?;
            (res.iterations, res.true_residual, res.converged && res.true_residual <= 2.0 * cfg.tol)
        }
    };
    Ok(ReportRow {
        domain: cfg.domain.to_string(),
        p: cfg.degree,
        h_inv,
        solver: cfg.solver.to_string(),
        outer_iters: outer,
        inner_iters: inner,
        setup_s,
        solve_s: elapsed(t),
        residual,
        cond_bound,
        nnz: a.nnz(),
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_kv(text).unwrap()
    }

    #[test]
    fn g6_formatting() {
        assert_eq!(fmt_g6(0.0), "0");
        assert_eq!(fmt_g6(1.0), "1");
        assert_eq!(fmt_g6(25.0), "25");
        assert_eq!(fmt_g6(0.123456789), "0.123457");
        assert_eq!(fmt_g6(123456.7), "123457");
        assert_eq!(fmt_g6(1234567.0), "1.23457e+06");
        assert_eq!(fmt_g6(3.2e-9), "3.2e-09");
        assert_eq!(fmt_g6(-0.5), "-0.5");
        assert_eq!(fmt_g6(0.0001), "0.0001");
        assert_eq!(fmt_g6(0.000020577), "2.0577e-05");
        assert_eq!(fmt_g6(9.999995), "10");
        assert_eq!(fmt_g6(f64::INFINITY), "inf");
    }

    #[test]
    fn parse_keys_and_errors() {
        let c = cfg("domain=quarter_annulus\np=3\nh_inv=64,128\nsolver=fd\nmode=precond\neps=0.1\ntol=1e-8\nseed=42 # c\n\n");
        assert_eq!(c.domain, DomainChoice::Builtin(BuiltinDomain::QuarterAnnulus));
        assert_eq!(c.degree, 3);
        assert_eq!(c.refinements, vec![64, 128]);
        assert_eq!(c.seed, 42);
        for bad in ["h_inv=48", "eps=1.5", "tol=0", "solver=lu", "bogus=1", "p", "domain=l_shape\nsolver=fd", "mode=direct\nsolver=ic", "mem_cap=3XB"] {
            assert!(matches!(ExperimentConfig::from_kv(bad), Err(Error::Config(_))), "{bad}");
        }
        assert_eq!(parse_bytes("1MB").unwrap(), 1 << 20);
        assert_eq!(parse_bytes("512").unwrap(), 512);
    }

    #[test]
    fn later_keys_override() {
        let mut c = cfg("p=2\nsolver=ic");
        c.set("p", "4").unwrap();
        assert_eq!(c.degree, 4);
        assert_eq!(c.solver, SolverChoice::Ic);
    }

    #[test]
    fn direct_fd_on_unit_square() {
        let r = run_experiment(&cfg("domain=unit_square\np=2\nh_inv=16\nsolver=fd\nmode=direct")).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].outer_iters, 1);
        assert!(r.rows[0].residual <= 1e-10);
        assert!(r.rows[0].converged);
    }

    #[test]
    fn memory_cap_refuses() {
        let c = cfg("domain=unit_square\np=3\nh_inv=256\nsolver=fd\nmem_cap=1MB");
        match run_experiment(&c) {
            Err(Error::MemoryLimit { required, cap }) => {
                assert_eq!(cap, 1 << 20);
                assert!(required > cap);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_refinements_give_header_only_csv() {
        let r = run_experiment(&cfg("h_inv=")).unwrap();
        let mut buf = Vec::new();
        write_csv(&r, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), CSV_HEADER.join(",") + "\n");
    }

    #[test]
    fn csv_round_trip() {
        let r = run_experiment(&cfg("domain=quarter_annulus\np=2\nh_inv=8,16\nsolver=adi")).unwrap();
        let mut buf = Vec::new();
        write_csv(&r, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.rows.len(), 2);
        for (x, y) in r.rows.iter().zip(&back.rows) {
            assert_eq!((&x.domain, x.p, x.h_inv, &x.solver), (&y.domain, y.p, y.h_inv, &y.solver));
            assert_eq!((x.outer_iters, x.inner_iters, x.nnz), (y.outer_iters, y.inner_iters, y.nnz));
            for (u, v) in [(x.residual, y.residual), (x.cond_bound, y.cond_bound), (x.setup_s, y.setup_s)] {
                assert!((u - v).abs() <= 5e-6 * u.abs(), "{u} {v}");
            }
        }
    }

    #[test]
    fn text_layout_golden() {
        let row = |h: usize, it: usize, conv: bool| ReportRow {
            domain: "unit_square".into(),
            p: 2,
            h_inv: h,
            solver: "adi".into(),
            outer_iters: it,
            inner_iters: Some(7),
            setup_s: 0.0125,
            solve_s: 1.5,
            residual: 3.25e-9,
            cond_bound: 1.0,
            nnz: 25 * h,
            converged: conv,
        };
        let r = ExperimentReport {
            rows: vec![row(8, 5, true), row(128, 12, false)],
        };
        let mut buf = Vec::new();
        write_text(&r, &mut buf).unwrap();
        let expected = concat!(
            "     domain  p  h_inv  solver  outer_iters  inner_iters  setup_s  solve_s  residual  cond_bound   nnz conv\n",
            "unit_square  2      8     adi            5            7   0.0125      1.5  3.25e-09           1   200  yes\n",
            "unit_square  2    128     adi           12            7   0.0125      1.5  3.25e-09           1  3200   NO\n",
        );
        assert_eq!(String::from_utf8(buf).unwrap(), expected);
    }

    #[test]
    fn reproducible_iterations() {
        let c = cfg("domain=unit_cube\np=2\nh_inv=4,8\nsolver=ic");
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        let its = |r: &ExperimentReport| r.rows.iter().map(|x| (x.outer_iters, x.residual)).collect::<Vec<_>>();
        assert_eq!(its(&a), its(&b));
    }

    #[test]
    fn nonconvergence_flags_row() {
        let r = run_experiment(&cfg("domain=quarter_annulus\np=2\nh_inv=16\nsolver=none\nmaxit=2")).unwrap();
        assert!(!r.rows[0].converged);
        assert!(r.all_failed());
    }

    #[test]
    fn every_solver_runs_on_l_shape_or_square() {
        for s in ["ic", "schwarz_exact", "schwarz_fd", "none"] {
            let r = run_experiment(&cfg(&format!("domain=l_shape\np=2\nh_inv=8\nsolver={s}"))).unwrap();
            assert!(r.rows[0].converged, "{s}");
        }
        for s in SolverChoice::ALL {
            let r = run_experiment(&cfg(&format!("domain=quarter_annulus\np=2\nh_inv=8\nsolver={s}"))).unwrap();
            assert!(r.rows[0].converged, "{s}");
        }
    }
}
