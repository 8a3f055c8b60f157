use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::debug;

use stwave_core::experiments::{
    build_case, check_manufactured, condsweep_plot_script, convergence_plot_script, run_condsweep,
    run_convergence, run_ode, solve_level, write_condsweep_csv, write_convergence_csv,
    write_ode_csv, write_solution_samples, CaseKind, ExperimentConfig, ExperimentKind,
};
use stwave_core::{compute_errors, Error};

/// Space-time Galerkin solver for the weighted regularisation of the
/// semilinear wave equation.
#[derive(Parser, Debug)]
#[command(name = "stwave", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a single level and write solution samples (x, t, u)
    Solve(Settings),
    /// Run a convergence sweep and write errors with observed orders
    Converge(Settings),
    /// Condition numbers of the zero-dimensional system over eps and lambda
    Condsweep(Settings),
    /// Check the manufactured forcings against finite differences of the exact fields
    Check {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value = "0.25")]
        eps: String,
        #[arg(long = "T", default_value = "2")]
        final_time: String,
        #[arg(long, default_value_t = 6)]
        p: u32,
    },
}

#[derive(Args, Debug)]
struct Settings {
    /// Flat `key = value` file; command line flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// ode, linear, nonlinear, coupled or condsweep (inferred from the case if omitted)
    #[arg(long)]
    kind: Option<String>,
    /// Final time
    #[arg(long = "T")]
    final_time: Option<String>,
    /// Regularisation parameter(s), e.g. 0.25 or 2^-12..2^-1
    #[arg(long)]
    eps: Option<String>,
    /// Time step(s), e.g. 2^-2..2^-5
    #[arg(long)]
    tau: Option<String>,
    /// Number of spatial cells
    #[arg(long)]
    nx: Option<String>,
    /// Exponent of the reaction term
    #[arg(long)]
    p: Option<String>,
    /// Reaction coefficient(s) of the zero-dimensional problem
    #[arg(long)]
    lambda: Option<String>,
    /// Manufactured case
    #[arg(long, value_parser = ["linreg", "nonlinreg", "wave4"])]
    case: Option<String>,
    /// Comma-separated norms: L2L2, H1L2, H2L2, L2H1, Energy, SeminormRss
    #[arg(long)]
    norms: Option<String>,
    /// Output CSV path (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Newton tolerance on |d sigma|/#dof
    #[arg(long)]
    tol: Option<String>,
    /// Newton iteration limit
    #[arg(long)]
    max_iter: Option<String>,
    /// Run even when tau/eps exceeds 2
    #[arg(long)]
    allow_ill_conditioned: bool,
}

impl Settings {
    fn pairs(&self) -> Result<Vec<(String, String)>, Failure> {
        let mut pairs = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
                stwave_core::experiments::parse_pairs(&text)?
            }
            None => Vec::new(),
        };
        let flags = [
            ("kind", &self.kind),
            ("T", &self.final_time),
            ("eps", &self.eps),
            ("tau", &self.tau),
            ("nx", &self.nx),
            ("p", &self.p),
            ("lambda", &self.lambda),
            ("case", &self.case),
            ("norms", &self.norms),
            ("tol", &self.tol),
            ("max_iter", &self.max_iter),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                pairs.push((k.to_string(), v.clone()));
            }
        }
        if let Some(out) = &self.out {
            pairs.push(("out".into(), out.display().to_string()));
        }
        if self.allow_ill_conditioned {
            pairs.push(("allow_ill_conditioned".into(), "true".into()));
        }
        Ok(pairs)
    }

    fn config(&self, fallback: Option<ExperimentKind>) -> Result<ExperimentConfig, Failure> {
        let cfg = ExperimentConfig::from_pairs(fallback, &self.pairs()?)?;
        debug!("{cfg:?}");
        Ok(cfg)
    }
}

enum Failure {
    Usage(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Argument(_) => Failure::Usage(e.to_string()),
            other => Failure::Solver(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Solver(format!("i/o error: {e}"))
    }
}

fn open_output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_plot_script(csv: &Path, script: impl Fn(&str) -> String) -> io::Result<()> {
    let name = csv.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = csv.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    fs::write(csv.with_file_name(format!("{stem}_plot.py")), script(&name))
}

fn solve(s: &Settings) -> Result<(), Failure> {
    let cfg = s.config(None)?;
    let mut out = open_output(cfg.output.as_deref())?;
    if cfg.kind == ExperimentKind::Ode {
        write_ode_csv(&run_ode(&cfg)?, &mut out)?;
        out.flush()?;
        return Ok(());
    }
    if cfg.kind == ExperimentKind::Condsweep {
        return Err(Failure::Usage("use the condsweep subcommand for conditioning sweeps".into()));
    }
    let levels = cfg.levels();
    let [level] = levels.as_slice() else {
        return Err(Failure::Usage(format!(
            "solve runs a single level but the settings describe {}; use converge for sweeps",
            levels.len()
        )));
    };
    let case = build_case(cfg.case, level.epsilon, cfg.final_time, cfg.p)?;
    let outcome = solve_level(&case, level, &cfg.newton)?;
    let report = compute_errors(&outcome.solution, &case.exact, &cfg.norms)?;
    write_solution_samples(&outcome.solution, &mut out)?;
    out.flush()?;
    for (tag, value) in &report.values {
        eprintln!("{tag} error: {value:.6e}");
    }
    if let Some(rep) = outcome.newton {
        eprintln!("Newton: {} iterations, converged: {}", rep.iterations, rep.converged);
        if !rep.converged {
            return Err(Failure::Solver("Newton iteration did not converge".into()));
        }
    }
    Ok(())
}

fn converge(s: &Settings) -> Result<(), Failure> {
    let cfg = s.config(None)?;
    let rows = run_convergence(&cfg)?;
    let mut out = open_output(cfg.output.as_deref())?;
    write_convergence_csv(&rows, &mut out)?;
    out.flush()?;
    if let Some(path) = &cfg.output {
        write_plot_script(path, convergence_plot_script)?;
    }
    let failed: Vec<&str> = rows
        .iter()
        .filter(|r| r.status != "ok")
        .map(|r| r.status.as_str())
        .collect();
    match failed.first() {
        Some(first) => Err(Failure::Solver(format!("{} rows did not complete: {first}", failed.len()))),
        None => Ok(()),
    }
}

fn condsweep(s: &Settings) -> Result<(), Failure> {
    let cfg = s.config(Some(ExperimentKind::Condsweep))?;
    let rows = run_condsweep(&cfg)?;
    let mut out = open_output(cfg.output.as_deref())?;
    write_condsweep_csv(&rows, &mut out)?;
    out.flush()?;
    if let Some(path) = &cfg.output {
        write_plot_script(path, condsweep_plot_script)?;
    }
    match rows.iter().find(|r| r.kappa.is_none()) {
        Some(r) => Err(Failure::Solver(format!("condition number failed: {}", r.status))),
        None => Ok(()),
    }
}

/// Absolute tolerance of the finite-difference consistency check.
const CHECK_TOL: f64 = 1e-6;

fn check(samples: usize, eps: &str, final_time: &str, p: u32) -> Result<(), Failure> {
    let eps = stwave_core::experiments::parse_real(eps)?;
    let final_time = stwave_core::experiments::parse_real(final_time)?;
    let mut ok = true;
    for kind in [CaseKind::LinReg, CaseKind::NonlinReg, CaseKind::Wave4] {
        let case = build_case(kind, eps, final_time, p)?;
        let r = check_manufactured(&case, samples);
        let pass = r.max_residual <= CHECK_TOL && r.max_derivative_mismatch <= CHECK_TOL;
        ok &= pass;
        println!(
            "{:<10} {} max residual {:.3e}, max derivative mismatch {:.3e} over {} points",
            kind.name(),
            if pass { "ok  " } else { "FAIL" },
            r.max_residual,
            r.max_derivative_mismatch,
            r.samples
        );
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Solver("manufactured forcing check failed".into()))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Solve(s) => solve(s),
        Command::Converge(s) => converge(s),
        Command::Condsweep(s) => condsweep(s),
        Command::Check {
            samples,
            eps,
            final_time,
            p,
        } => check(*samples, eps, final_time, *p),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
