use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use stochgram::duality::dual_ltv;
use stochgram::error::Error;
use stochgram::fixtures::{oscillator, shear_reference, shear_reference_horizon};
use stochgram::io::{format_float, load_system, write_summary_csv, write_sweep_csv};
use stochgram::recursive::cons_recursion;
use stochgram::riccati::{solve_dare_fixed_point, DEFAULT_MAX_ITER, DEFAULT_TOL};
use stochgram::sweep::{
    compute_gramian, find_plateau, information_profile, run_sweep, summarize, write_information_csv, GramianKind,
    GramianSweepRecord, Method,
};
use stochgram::LoadedSystem;

const EXIT_VALIDATION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "stochgram",
    version,
    about = "Stochastic observability and constructability Gramians"
)]
struct Cli {
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Convergence tolerance for fixed-point iterations.
    #[arg(long, global = true, default_value_t = DEFAULT_TOL)]
    tol: f64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a system file and report every issue found.
    Validate { system: PathBuf },
    /// Compute one Gramian and print it as a CSV row.
    Gramian {
        system: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        w: usize,
        /// Print every dual constructability iterate (recursive_dual only).
        #[arg(long)]
        trace: bool,
    },
    /// Observability Gramians for every window up to --w-max.
    Sweep {
        system: PathBuf,
        #[arg(long)]
        w_max: usize,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::DirectBlockSum, MethodArg::DirectMform, MethodArg::RecursiveDual])]
        methods: Vec<MethodArg>,
    },
    /// Steady-state observability Gramian of a time-invariant system.
    Dare {
        system: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: usize,
    },
    /// Per-state information profile of the embedded shear system.
    ReproduceFig1 {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Method sweep and summary for the embedded time-varying oscillator.
    ReproduceFig2 {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum KindArg {
    Obs,
    Cons,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
#[value(rename_all = "snake_case")]
enum MethodArg {
    #[value(name = "direct_thm1")]
    DirectBlockSum,
    DirectMform,
    RecursiveDual,
    NoNoise,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::DirectBlockSum => Method::DirectBlockSum,
            MethodArg::DirectMform => Method::DirectMform,
            MethodArg::RecursiveDual => Method::RecursiveDual,
            MethodArg::NoNoise => Method::NoNoise,
        }
    }
}

impl std::fmt::Display for MethodArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(Method::from(*self).tag())
    }
}

/// Command failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Validation(_) => EXIT_VALIDATION,
            Error::Singular { .. } | Error::NotPositiveDefinite { .. } | Error::Conditioning { .. } => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type CmdResult = Result<u8, Failure>;

fn validate(path: &Path) -> CmdResult {
    match load_system(path) {
        Ok(sys) => {
            let kind = if sys.as_lti().is_some() { "lti" } else { "ltv" };
            println!("ok: {kind} system, n = {}", sys.state_dim());
            Ok(0)
        }
        Err(Error::Validation(report)) => {
            println!("{report}");
            Ok(EXIT_VALIDATION)
        }
        Err(e) => Err(e.into()),
    }
}

fn gramian(path: &Path, kind: KindArg, method: Method, w: usize, trace: bool) -> CmdResult {
    let sys = load_system(path)?.to_ltv();
    let kind = match kind {
        KindArg::Obs => GramianKind::Obs,
        KindArg::Cons => GramianKind::Cons,
    };
    let record = compute_gramian(&sys, kind, method, w)?;
    let mut records = vec![record];
    if trace {
        if method != Method::RecursiveDual {
            return Err(usage("--trace is only available with --method recursive_dual"));
        }
        let window = sys.subsystem(0, w - 1)?;
        let map = dual_ltv(&window)?;
        records = cons_recursion(&map.dual, w)?
            .steps
            .iter()
            .enumerate()
            .map(|(i, f)| GramianSweepRecord::from_fim(method, i + 1, f, 0))
            .collect();
    }
    write_sweep_csv(&records, sys.state_dim(), io::stdout().lock())?;
    Ok(0)
}

fn sweep(path: &Path, w_max: usize, methods: &[MethodArg]) -> CmdResult {
    let sys = load_system(path)?.to_ltv();
    let methods: Vec<Method> = methods.iter().map(|&m| m.into()).collect();
    let rows = run_sweep(&sys, w_max, &methods)?;
    write_sweep_csv(&rows, sys.state_dim(), io::stdout().lock())?;
    Ok(0)
}

fn dare(path: &Path, tol: f64, max_iter: usize) -> CmdResult {
    let system = match load_system(path)? {
        LoadedSystem::Lti { system, .. } => system,
        LoadedSystem::Ltv(_) => return Err(usage("dare needs a time-invariant (lti) system")),
    };
    let sol = solve_dare_fixed_point(&system, tol, max_iter)?;
    let f = sol.f_inf.matrix();
    let n = f.nrows();
    let mut wtr = csv::Writer::from_writer(io::stdout().lock());
    let mut header = vec!["iterations".to_string(), "residual".into(), "converged".into()];
    let mut row = vec![
        sol.iterations.to_string(),
        format_float(sol.residual),
        sol.converged.to_string(),
    ];
    for i in 0..n {
        for j in 0..n {
            header.push(format!("f{}{}", i + 1, j + 1));
            row.push(format_float(f[(i, j)]));
        }
    }
    wtr.write_record(&header).map_err(Error::from)?;
    wtr.write_record(&row).map_err(Error::from)?;
    wtr.flush()?;
    if sol.converged {
        Ok(0)
    } else {
        eprintln!("no convergence after {} iterations", sol.iterations);
        Ok(EXIT_NUMERICAL)
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn reproduce_profile(out: &Path, horizon: Option<usize>) -> CmdResult {
    let sys = shear_reference().lift(horizon.unwrap_or_else(shear_reference_horizon));
    if sys.horizon() == 0 {
        return Err(usage("--horizon must be at least 1"));
    }
    let rows = information_profile(&sys)?;
    let mut file = create(out, "information_profile.csv")?;
    write_information_csv(&rows, &mut file)?;
    file.flush()?;
    match find_plateau(&rows) {
        Some(k) => println!("plateau from k = {k}"),
        None => println!("no interior plateau"),
    }
    Ok(0)
}

fn reproduce_sweep(out: &Path) -> CmdResult {
    let sys = oscillator();
    let rows = run_sweep(&sys, sys.horizon() + 1, &Method::SWEEP)?;
    let n = sys.state_dim();
    let mut file = create(out, "oscillator_sweep.csv")?;
    write_sweep_csv(&rows, n, &mut file)?;
    file.flush()?;
    let summary = summarize(&rows, n);
    let mut file = create(out, "oscillator_summary.csv")?;
    write_summary_csv(&summary, &mut file)?;
    file.flush()?;
    for s in &summary {
        let first = s
            .first_monotonicity_break_w
            .map(|w| w.to_string())
            .unwrap_or("-".into());
        println!(
            "{}: max sym_err {:e}, first break w = {first}",
            s.method.tag(),
            s.max_sym_err
        );
    }
    Ok(0)
}

fn run(cli: Cli) -> CmdResult {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    match cli.command {
        Command::Validate { system } => validate(&system),
        Command::Gramian {
            system,
            kind,
            method,
            w,
            trace,
        } => gramian(&system, kind, method.into(), w, trace),
        Command::Sweep { system, w_max, methods } => sweep(&system, w_max, &methods),
        Command::Dare { system, max_iter } => dare(&system, cli.tol, max_iter),
        Command::ReproduceFig1 { out, horizon } => reproduce_profile(&out, horizon),
        Command::ReproduceFig2 { out } => reproduce_sweep(&out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
