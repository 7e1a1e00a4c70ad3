use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use acopf_core::builders::build;
use acopf_core::case_io::read_case;
use acopf_core::export::{export_json, export_sdpa, import_point};
use acopf_core::grid::Grid;
use acopf_core::ir::{evaluate, FormKind, ResidualKind, Sense};
use acopf_core::solvers::{
    optimality_gap_tol, solve_jabr_barrier, solve_polar_local, SolveOptions, SolveResult, SolveStatus,
};
use clap::{Args, Parser, Subcommand};
use log::info;

#[derive(Parser)]
#[command(name = "acopf", version, about = "AC optimal power flow models, bounds and exports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a case file and print a summary.
    Parse { case: PathBuf },
    /// Build a formulation and write it as JSON.
    Build {
        case: PathBuf,
        #[arg(long)]
        form: FormKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a point against a formulation.
    Check {
        case: PathBuf,
        #[arg(long)]
        form: FormKind,
        #[arg(long)]
        point: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Compute a lower bound, an upper bound, or both.
    Solve(SolveArgs),
    /// Write a formulation as SDPA (or JSON without --sdpa).
    Export {
        case: PathBuf,
        #[arg(long)]
        form: FormKind,
        #[arg(long)]
        sdpa: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SolveArgs {
    case: PathBuf,
    #[arg(long)]
    lb: bool,
    #[arg(long)]
    ub: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    multistart: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

/// Failure with its exit code.
struct Failure(u8, String);

impl Failure {
    fn input(e: impl std::fmt::Display) -> Failure {
        Failure(2, e.to_string())
    }
}

fn load(path: &Path) -> Result<Grid, Failure> {
    read_case(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn write_out(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::input(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn summary(grid: &Grid) -> String {
    let reference = grid.reference().map(|r| grid.buses()[r].id.to_string()).unwrap_or_else(|| "none".into());
    format!(
        "{} buses, {} lines, {} generators, reference bus {}",
        grid.n_buses(),
        grid.branches().len(),
        grid.generators().len(),
        reference
    )
}

fn residual_kind(k: ResidualKind) -> &'static str {
    match k {
        ResidualKind::Constraint(Sense::Eq) => "eq",
        ResidualKind::Constraint(Sense::Le) => "le",
        ResidualKind::Constraint(Sense::Ge) => "ge",
        ResidualKind::Cone => "soc",
        ResidualKind::Psd => "psd",
        ResidualKind::Bound => "bound",
    }
}

fn check(case: &Path, form: FormKind, point: &Path, tol: f64) -> Result<u8, Failure> {
    if !(tol > 0.0) {
        return Err(Failure::input("--tol must be positive"));
    }
    let grid = load(case)?;
    let f = build(form, &grid).map_err(Failure::input)?;
    let text = fs::read_to_string(point).map_err(|e| Failure::input(format!("{}: {e}", point.display())))?;
    let p = import_point(&text, &f).map_err(Failure::input)?;
    let report = evaluate(&f, &p).map_err(Failure::input)?;
    println!("objective {:.12e}", report.objective);
    let mut violated = 0;
    for r in &report.residuals {
        let bad = match r.kind {
            ResidualKind::Psd => r.value < -tol,
            _ => r.violation > tol,
        };
        if bad {
            violated += 1;
            let at: Vec<String> = r.at.iter().map(|a| a.to_string()).collect();
            println!("violated {} [{}] {} value {:.6e}", r.tag, at.join(","), residual_kind(r.kind), r.value);
        }
    }
    println!("max violation {:.6e} over {} residuals", report.max_violation, report.residuals.len());
    if violated == 0 {
        println!("feasible at tolerance {tol:e}");
        Ok(0)
    } else {
        println!("infeasible at tolerance {tol:e}: {violated} residuals violated");
        Ok(1)
    }
}

fn row(name: &str, r: &SolveResult) {
    println!(
        "{:<6} {:<20} {:>22.10} {:>12.3e} {:>6}",
        name,
        r.status.as_str(),
        r.objective,
        r.max_violation,
        r.iterations
    );
}

fn solve(args: &SolveArgs) -> Result<u8, Failure> {
    let grid = load(&args.case)?;
    let mut opts = SolveOptions { seed: args.seed, ..Default::default() };
    if let Some(m) = args.multistart {
        opts.multistart = m;
    }
    if let Some(t) = args.tol {
        opts.tol_feas = t;
    }
    opts.validate().map_err(Failure::input)?;
    let (want_lb, want_ub) = if args.lb || args.ub { (args.lb, args.ub) } else { (true, true) };
    let lb = if want_lb { Some(solve_jabr_barrier(&grid, &opts).map_err(Failure::input)?) } else { None };
    let ub = if want_ub { Some(solve_polar_local(&grid, &opts).map_err(Failure::input)?) } else { None };

    println!("{}", summary(&grid));
    println!("{:<6} {:<20} {:>22} {:>12} {:>6}", "bound", "status", "objective", "violation", "iters");
    let mut code = 0;
    for (name, r) in [("lower", &lb), ("upper", &ub)] {
        let Some(r) = r else { continue };
        row(name, r);
        if !r.status.is_feasible() {
            let c = if r.status == SolveStatus::InfeasibleDetected { 1 } else { 3 };
            code = code.max(c);
        }
    }
    if let (Some(lb), Some(ub)) = (&lb, &ub) {
        match optimality_gap_tol(lb, ub, opts.tol_opt) {
            Ok(gap) => println!("gap {gap:.6e}"),
            Err(e) => {
                println!("gap unavailable: {e}");
                code = code.max(3);
            }
        }
    }
    info!("solve finished with exit code {code}");
    Ok(code)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Parse { case } => {
            let grid = load(&case)?;
            println!("{}", summary(&grid));
            Ok(0)
        }
        Command::Build { case, form, out } => {
            let grid = load(&case)?;
            let f = build(form, &grid).map_err(Failure::input)?;
            write_out(out.as_deref(), &export_json(&f))?;
            Ok(0)
        }
        Command::Check { case, form, point, tol } => check(&case, form, &point, tol),
        Command::Solve(args) => solve(&args),
        Command::Export { case, form, sdpa, out } => {
            let grid = load(&case)?;
            let f = build(form, &grid).map_err(Failure::input)?;
            let text = if sdpa { export_sdpa(&f).map_err(Failure::input)? } else { export_json(&f) };
            write_out(out.as_deref(), &text)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("ACOPF_LOG", "error"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
