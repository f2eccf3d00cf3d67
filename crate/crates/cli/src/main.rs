//! `leakgate` command-line front end.
//!
//! Exit codes: 0 no violation (or success), 3 violation, 1 usage error,
//! 2 data error.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use leakgate_core::ingest::{self, load_series, render_series, MeasurementSeries};
use leakgate_core::power::estimate_sample_size;
use leakgate_core::simulate::{gen_ar1, rejection_grid};
use leakgate_core::{
    detector, Ar1Spec, Decision, GridSpec, Kind, PowerFormula, PowerRequest, QuantileLevels, TestConfig, Unit,
    SCHEMA_VERSION,
};

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_VIOLATION: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "leakgate",
    version,
    about = "Relevant-difference tests for timing measurements"
)]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, env = "LEAKGATE_THREADS")]
    threads: Option<usize>,

    /// Report format. Defaults to json, or csv for `simulate`.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Write the report to this file instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test whether two series differ by more than delta at some quantile.
    Analyze(AnalyzeArgs),
    /// Estimate the sample size needed to detect a leak of a given size.
    Power(PowerArgs),
    /// Rejection rates of the test on simulated AR(1) pairs.
    Simulate(SimulateArgs),
    /// Write a pair of AR(1) series in the input text format.
    #[command(name = "gen-ar1")]
    GenAr1(GenAr1Args),
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Unit shared by both input files.
    #[arg(long, default_value = "ns")]
    unit: Unit,
    /// Cut both series to the shorter length instead of failing.
    #[arg(long)]
    truncate: bool,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    baseline: PathBuf,
    candidate: PathBuf,
    /// Negligibility threshold, in the unit of the data.
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Preset (percentiles, deciles, quartiles) or a comma list of levels.
    #[arg(long, default_value = "percentiles")]
    quantiles: String,
    /// Bootstrap replicates.
    #[arg(short = 'B', long = "replicates", default_value_t = 1000)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Force the continuous or discrete estimator.
    #[arg(long)]
    kind: Option<Kind>,
    /// Fixed block length instead of the data-driven estimate.
    #[arg(long)]
    block_length: Option<usize>,
    #[command(flatten)]
    input: InputArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormulaArg {
    Asymptotic,
    Literal,
}

#[derive(Args, Debug)]
struct PowerArgs {
    pilot_x: PathBuf,
    pilot_y: PathBuf,
    /// Leak size to detect.
    #[arg(long)]
    mu: f64,
    #[arg(long)]
    delta: f64,
    /// Target detection rate.
    #[arg(long, default_value_t = 0.9)]
    power: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Assume a pure location shift.
    #[arg(long)]
    shift: bool,
    #[arg(long, value_enum, default_value = "asymptotic")]
    formula: FormulaArg,
    #[arg(long, default_value = "percentiles")]
    quantiles: String,
    #[arg(short = 'B', long = "replicates", default_value_t = 1000)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    input: InputArgs,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Comma list of AR(1) coefficients.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
    phis: Vec<f64>,
    /// Comma list of shifts applied to y.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
    mus: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(short = 'B', long = "replicates", default_value_t = 1000)]
    replicates: usize,
    /// Simulated pairs per cell.
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Innovation standard deviation.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    #[arg(long, default_value = "percentiles")]
    quantiles: String,
}

#[derive(Args, Debug)]
struct GenAr1Args {
    x_out: PathBuf,
    y_out: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    phi: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
    mu: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    #[arg(long, default_value = "ns")]
    unit: Unit,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<leakgate_core::Error> for Failure {
    fn from(e: leakgate_core::Error) -> Self {
        if e.is_data_error() {
            Self::data(e.to_string())
        } else {
            Self::usage(e.to_string())
        }
    }
}

type Outcome = Result<u8, Failure>;

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never see a partial report.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    let fail = |e: std::io::Error| Failure::data(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(contents).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

fn emit(output: Option<&Path>, report: &str) -> Result<(), Failure> {
    match output {
        Some(path) => write_atomic(path, report.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(report.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Failure::data(format!("cannot write to standard output: {e}")))
        }
    }
}

fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

/// The serde name of a unit enum variant.
fn tag(value: &impl Serialize) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

fn levels(spec: &str) -> Result<QuantileLevels, Failure> {
    QuantileLevels::parse(spec).map_err(Failure::from)
}

fn load_pair(x: &Path, y: &Path, input: &InputArgs) -> Result<leakgate_core::Pair, Failure> {
    let x: MeasurementSeries<f64> = load_series(x, input.unit)?;
    let y: MeasurementSeries<f64> = load_series(y, input.unit)?;
    Ok(ingest::pair(x, y, input.truncate)?)
}

#[derive(Serialize)]
struct Inputs<'a> {
    x: &'a Path,
    y: &'a Path,
    unit: Unit,
    truncate: bool,
}

#[derive(Serialize)]
struct Envelope<'a, R> {
    #[serde(flatten)]
    report: R,
    inputs: Inputs<'a>,
    threads: usize,
}

fn analyze(args: &AnalyzeArgs, format: Format, output: Option<&Path>) -> Outcome {
    let config = TestConfig {
        alpha: args.alpha,
        delta: args.delta,
        levels: levels(&args.quantiles)?,
        replicates: args.replicates,
        seed: args.seed,
        kind_override: args.kind,
        block_length: args.block_length,
        ..TestConfig::default()
    };
    config.validate()?;
    let pair = load_pair(&args.baseline, &args.candidate, &args.input)?;
    let result = detector::run_test(&pair, &config)?;
    let report = result.report();

    let text = match format {
        Format::Json => to_json(&Envelope {
            report: &report,
            inputs: Inputs {
                x: &args.baseline,
                y: &args.candidate,
                unit: args.input.unit,
                truncate: args.input.truncate,
            },
            threads: rayon::current_num_threads(),
        }),
        Format::Csv => {
            let mut s = String::from("k,qx,qy,diff,sigma,in_k_sub,in_k_sub_max\n");
            for l in report.levels {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    l.k, l.qx, l.qy, l.diff, l.sigma, l.in_k_sub, l.in_k_sub_max
                );
            }
            s
        }
        Format::Text => {
            let mut s = String::new();
            let threshold = report.threshold.map_or("none".to_string(), |c| c.to_string());
            let _ = writeln!(s, "decision:     {}", tag(&report.decision));
            let _ = writeln!(s, "statistic:    {}", report.statistic);
            let _ = writeln!(s, "threshold:    {threshold}");
            let _ = writeln!(s, "alpha:        {}", report.alpha);
            let _ = writeln!(s, "delta:        {} {}", report.delta, pair.unit());
            let _ = writeln!(s, "n:            {}", report.n);
            let _ = writeln!(
                s,
                "block length: {} (x {:.2}, y {:.2})",
                report.m, report.m_x, report.m_y
            );
            let _ = writeln!(
                s,
                "kind:         {} ({} distinct values)",
                report.kind, report.distinct_count
            );
            let regime = report.regime.map_or("none".to_string(), |r| tag(&r));
            let _ = writeln!(s, "regime:       {regime}");
            let _ = writeln!(s, "replicates:   {}", report.replicates);
            let _ = writeln!(s, "seed:         {}", report.seed);
            let _ = writeln!(s, "levels:       {}", config.levels.len());
            let _ = writeln!(s, "quantiles:    {}", args.quantiles);
            let _ = writeln!(
                s,
                "inputs:       {} {}",
                args.baseline.display(),
                args.candidate.display()
            );
            if report.forced_by_zero_variance {
                let _ = writeln!(s, "note:         a zero-variance level exceeds delta");
            }
            if report.degenerate {
                let _ = writeln!(s, "note:         both series are the same constant");
            }
            s
        }
    };
    emit(output, &text)?;
    Ok(match result.decision {
        Decision::Violation => EXIT_VIOLATION,
        Decision::NoViolation => EXIT_OK,
    })
}

fn power(args: &PowerArgs, format: Format, output: Option<&Path>) -> Outcome {
    let req = PowerRequest {
        mu: args.mu,
        delta: args.delta,
        power: args.power,
        alpha: args.alpha,
        shift: args.shift,
        formula: match args.formula {
            FormulaArg::Asymptotic => PowerFormula::Asymptotic,
            FormulaArg::Literal => PowerFormula::Literal,
        },
        levels: levels(&args.quantiles)?,
        replicates: args.replicates,
        seed: args.seed,
    };
    req.validate()?;
    let pilot = load_pair(&args.pilot_x, &args.pilot_y, &args.input)?;
    let result = estimate_sample_size(&pilot, &req)?;
    let report = result.report(&req);

    let text = match format {
        Format::Json => to_json(&Envelope {
            report: &report,
            inputs: Inputs {
                x: &args.pilot_x,
                y: &args.pilot_y,
                unit: args.input.unit,
                truncate: args.input.truncate,
            },
            threads: rayon::current_num_threads(),
        }),
        Format::Csv => format!(
            "n,n_sub_raw,sigma_hat,variant,formula,pilot_n,m,mu,delta,power,alpha,B,seed\n{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            result.n,
            result.n_sub_raw,
            result.sigma_hat,
            tag(&result.variant),
            tag(&result.formula),
            result.pilot_n,
            result.m,
            req.mu,
            req.delta,
            req.power,
            req.alpha,
            req.replicates,
            req.seed
        ),
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "sample size:  {}", result.n);
            let _ = writeln!(s, "raw n_sub:    {:.2}", result.n_sub_raw);
            let _ = writeln!(s, "sigma:        {} ({})", result.sigma_hat, tag(&result.variant));
            let _ = writeln!(s, "formula:      {}", tag(&result.formula));
            let _ = writeln!(s, "pilot n:      {} (block length {})", result.pilot_n, result.m);
            let _ = writeln!(s, "mu, delta:    {}, {}", req.mu, req.delta);
            let _ = writeln!(s, "power, alpha: {}, {}", req.power, req.alpha);
            let _ = writeln!(s, "replicates:   {}", req.replicates);
            let _ = writeln!(s, "seed:         {}", req.seed);
            s
        }
    };
    emit(output, &text)?;
    Ok(EXIT_OK)
}

fn simulate(args: &SimulateArgs, format: Format, output: Option<&Path>) -> Outcome {
    let grid = GridSpec {
        phis: args.phis.clone(),
        mus: args.mus.clone(),
        n: args.n,
        delta: args.delta,
        alpha: args.alpha,
        replicates: args.replicates,
        reps: args.reps,
        seed: args.seed,
        sigma: args.sigma,
        burn_in: args.burn_in,
        levels: levels(&args.quantiles)?,
    };
    let surface = rejection_grid(&grid)?;
    let text = match format {
        Format::Json => to_json(&surface),
        Format::Csv => surface.to_csv(),
        Format::Text => {
            let mut s = format!(
                "n={} delta={} alpha={} B={} reps={} seed={}\n{:>8} {:>8} {:>12} {:>10}\n",
                grid.n,
                grid.delta,
                grid.alpha,
                grid.replicates,
                grid.reps,
                grid.seed,
                "phi",
                "mu",
                "reject_rate",
                "stderr"
            );
            for c in &surface.cells {
                let _ = writeln!(s, "{:>8} {:>8} {:>12.4} {:>10.4}", c.phi, c.mu, c.reject_rate, c.stderr);
            }
            s
        }
    };
    emit(output, &text)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct GenReport<'a> {
    schema_version: u32,
    spec: &'a Ar1Spec,
    unit: Unit,
    x: &'a Path,
    y: &'a Path,
}

fn gen_ar1_files(args: &GenAr1Args, format: Format, output: Option<&Path>) -> Outcome {
    let spec = Ar1Spec {
        phi: args.phi,
        sigma: args.sigma,
        mu_shift: args.mu,
        n: args.n,
        burn_in: args.burn_in,
        seed: args.seed,
    };
    let sample = gen_ar1(&spec)?;
    for (series, path, label) in [(sample.x(), &args.x_out, "x"), (sample.y(), &args.y_out, "y")] {
        let series = MeasurementSeries::new(series.values().to_vec(), label, args.unit)?;
        write_atomic(path, render_series(&series).as_bytes())?;
    }
    let text = match format {
        Format::Json => to_json(&GenReport {
            schema_version: SCHEMA_VERSION,
            spec: &spec,
            unit: args.unit,
            x: &args.x_out,
            y: &args.y_out,
        }),
        Format::Csv => format!(
            "phi,sigma,mu_shift,n,burn_in,seed,x,y\n{},{},{},{},{},{},{},{}\n",
            spec.phi,
            spec.sigma,
            spec.mu_shift,
            spec.n,
            spec.burn_in,
            spec.seed,
            args.x_out.display(),
            args.y_out.display()
        ),
        Format::Text => format!(
            "wrote {} and {}: n={} phi={} sigma={} mu={} burn_in={} seed={}\n",
            args.x_out.display(),
            args.y_out.display(),
            spec.n,
            spec.phi,
            spec.sigma,
            spec.mu_shift,
            spec.burn_in,
            spec.seed
        ),
    };
    emit(output, &text)?;
    Ok(EXIT_OK)
}

fn run(cli: &Cli) -> Outcome {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::usage(format!("cannot configure threads: {e}")))?;
    }
    let output = cli.output.as_deref();
    match &cli.command {
        Command::Analyze(a) => analyze(a, cli.format.unwrap_or(Format::Json), output),
        Command::Power(a) => power(a, cli.format.unwrap_or(Format::Json), output),
        Command::Simulate(a) => simulate(a, cli.format.unwrap_or(Format::Csv), output),
        Command::GenAr1(a) => gen_ar1_files(a, cli.format.unwrap_or(Format::Json), output),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("leakgate: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
