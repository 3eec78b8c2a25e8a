use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kronsolve::adi::{douglas_shifts_3d, greedy_shifts_3d, wachspress_shifts};
use kronsolve::assembly::{assemble_pencil_1d, assemble_load, assemble_stiffness};
use kronsolve::eigen::{extreme_eigs, POWER_ITERS};
use kronsolve::experiment::{manufactured_load, write_csv, write_text, DomainChoice, ReportFormat};
use kronsolve::geometry::{builtin, IdentityCoefficient};
use kronsolve::sparse::write_vector_market;
use kronsolve::{run_experiment, Error, ExperimentConfig, MultiPatchDomain, SplineSpace1D};

const EXIT_ERROR: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NONCONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "kronsolve", version, about = "Kronecker-structured Poisson preconditioner benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and print its report.
    Run(Box<RunArgs>),
    /// Write the stiffness matrix (and optionally the load) in Matrix Market format.
    ExportMatrix(ExportArgs),
    /// Print an ADI shift plan.
    Shifts(ShiftArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key=value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    domain: Option<String>,
    #[arg(short, long)]
    p: Option<String>,
    /// Comma-separated refinement levels, e.g. 64,128.
    #[arg(long)]
    h_inv: Option<String>,
    #[arg(long)]
    solver: Option<String>,
    /// direct | precond
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    maxit: Option<String>,
    /// douglas | greedy
    #[arg(long)]
    shifts: Option<String>,
    /// auto | manufactured | randn
    #[arg(long)]
    rhs: Option<String>,
    /// Memory cap, e.g. 512MB.
    #[arg(long)]
    mem_cap: Option<String>,
    /// csv | text
    #[arg(long, default_value = "csv")]
    format: String,
    /// Report file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        [
            ("domain", &self.domain),
            ("p", &self.p),
            ("h_inv", &self.h_inv),
            ("solver", &self.solver),
            ("mode", &self.mode),
            ("eps", &self.eps),
            ("tol", &self.tol),
            ("seed", &self.seed),
            ("maxit", &self.maxit),
            ("shifts", &self.shifts),
            ("rhs", &self.rhs),
            ("mem_cap", &self.mem_cap),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
        .collect()
    }
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long, default_value = "unit_square")]
    domain: String,
    #[arg(short, long, default_value_t = 2)]
    p: usize,
    #[arg(long, default_value_t = 16)]
    h_inv: usize,
    /// Matrix file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write the manufactured load vector here.
    #[arg(long)]
    rhs_output: Option<PathBuf>,
}

#[derive(Args)]
struct ShiftArgs {
    /// Spectral interval; computed from the 1D pencil of degree p and
    /// h_inv when absent.
    #[arg(long, requires = "b")]
    a: Option<f64>,
    #[arg(long, requires = "a")]
    b: Option<f64>,
    #[arg(short, long, default_value_t = 1)]
    p: usize,
    #[arg(long, default_value_t = 64)]
    h_inv: usize,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=3))]
    dim: u8,
    /// 3D only: douglas | greedy
    #[arg(long, default_value = "douglas")]
    strategy: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(*args),
        Command::ExportMatrix(args) => export(args).map(|_| ExitCode::SUCCESS),
        Command::Shifts(args) => shifts(args).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config(_) | Error::MemoryLimit { .. } | Error::InvalidArgument(_) => EXIT_CONFIG,
                _ => EXIT_ERROR,
            };
            ExitCode::from(code)
        }
    }
}

fn sink(path: &Option<PathBuf>) -> kronsolve::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(args: RunArgs) -> kronsolve::Result<ExitCode> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        cfg.apply_kv(&text)?;
    }
    for (k, v) in args.overrides() {
        cfg.set(k, v)?;
    }
    let format: ReportFormat = args.format.parse()?;
    let report = run_experiment(&cfg)?;
    let mut out = sink(&args.output)?;
    match format {
        ReportFormat::Csv => write_csv(&report, &mut out)?,
        ReportFormat::Text => write_text(&report, &mut out)?,
    }
    out.flush()?;
    for row in report.rows.iter().filter(|r| !r.converged) {
        eprintln!(
            "warning: {} p={} h_inv={} did not converge (residual {:e})",
            row.domain, row.p, row.h_inv, row.residual
        );
    }
    Ok(if report.all_failed() {
        ExitCode::from(EXIT_NONCONVERGED)
    } else {
        ExitCode::SUCCESS
    })
}

fn export(args: ExportArgs) -> kronsolve::Result<()> {
    let domain: DomainChoice = args.domain.parse()?;
    if !args.h_inv.is_power_of_two() || args.h_inv < 2 || args.p == 0 {
        return Err(Error::Config(format!("need p >= 1 and h_inv a power of two >= 2, got p={} h_inv={}", args.p, args.h_inv)));
    }
    let (a, b) = match domain {
        DomainChoice::Builtin(d) => {
            let spaces = vec![SplineSpace1D::uniform(args.p, args.h_inv)?; d.dim()];
            let map = builtin(d);
            (
                assemble_stiffness(&spaces, map.as_ref(), &IdentityCoefficient)?,
                assemble_load(&spaces, map.as_ref(), &manufactured_load)?,
            )
        }
        DomainChoice::LShape => {
            let dom = MultiPatchDomain::l_shape(args.p, args.h_inv)?;
            (dom.assemble_stiffness(&IdentityCoefficient)?, dom.assemble_load(&manufactured_load)?)
        }
    };
    let mut out = sink(&args.output)?;
    a.write_matrix_market(&mut out)?;
    out.flush()?;
    if let Some(path) = &args.rhs_output {
        let mut w = BufWriter::new(fs::File::create(path)?);
        write_vector_market(&b, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn shifts(args: ShiftArgs) -> kronsolve::Result<()> {
    let (a, b) = match (args.a, args.b) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            let s = SplineSpace1D::uniform(args.p, args.h_inv)?;
            let (k, m) = assemble_pencil_1d(&s);
            extreme_eigs(&k, &m, POWER_ITERS)?
        }
    };
    let mut out = io::stdout().lock();
    writeln!(out, "interval = [{a:e}, {b:e}]")?;
    writeln!(out, "eps = {:e}", args.eps)?;
    if args.dim == 2 {
        let plan = wachspress_shifts(a, b, a, b, args.eps)?;
        writeln!(out, "J = {}", plan.j)?;
        writeln!(out, "bound = {:e}", plan.bound)?;
        writeln!(out, "j,omega,gamma")?;
        for (j, (w, g)) in plan.omega.iter().zip(&plan.gamma).enumerate() {
            writeln!(out, "{},{:.17e},{:.17e}", j + 1, w, g)?;
        }
    } else {
        let plan = match args.strategy.as_str() {
            "douglas" => douglas_shifts_3d(a, b, args.eps, None)?,
            "greedy" => {
                let j_max = douglas_shifts_3d(a, b, args.eps, None)?.j0;
                greedy_shifts_3d(a, b, j_max, args.eps)?
            }
            s => return Err(Error::Config(format!("unknown shift strategy '{s}'"))),
        };
        writeln!(out, "J0 = {}", plan.j0)?;
        writeln!(out, "J = {}", plan.j)?;
        writeln!(out, "rho = {:e}", plan.rho())?;
        writeln!(out, "j,omega,rho")?;
        for (j, (w, r)) in plan.omega.iter().zip(&plan.rho_values).enumerate() {
            writeln!(out, "{},{:.17e},{:e}", j + 1, w, r)?;
        }
    }
    Ok(())
}
