mod config;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use neurocomm::dataset::{self, Format, ModelRow, ProfileRow, RunRow, SurfaceRow};
use neurocomm::experiments::{self, ExperimentError};
use neurocomm::scaling::{self, log_spaced, ModelError};
use neurocomm::workload::WorkloadError;
use neurocomm::{ScalingParams, SimTrace, WorkloadProfile};
use serde::Serialize;

use config::{ExperimentConfig, ModelSection};

#[derive(Parser)]
#[command(
    name = "neurocomm",
    version,
    about = "Neuromorphic interconnect simulator and scaling models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// Experiment file (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset output path; standard output when absent
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Trace output path (JSON lines); sweeps write one file per value
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
    /// Worker threads for sweeps
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Accepted for compatibility; runs are deterministic
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Tabular,
    StructuredRecords,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured workload once
    Run,
    /// Simulate once per value of the [sweep] section
    Sweep {
        /// Also fit the scaling model to the sweep and report it on stderr
        #[arg(long)]
        fit: bool,
    },
    /// Evaluate the analytic scaling model
    Model(ModelArgs),
    /// Split measured performance at two operand widths into housekeeping and payload
    Extrapolate {
        #[arg(long)]
        perf_a: f64,
        #[arg(long)]
        width_a: u32,
        #[arg(long)]
        perf_b: f64,
        #[arg(long)]
        width_b: u32,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Non-payload fraction
    #[arg(long)]
    s: Option<f64>,
    /// Per-core overhead coefficient
    #[arg(long)]
    c: Option<f64>,
    /// Single-core performance
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 1)]
    n_min: u64,
    #[arg(long, default_value_t = 1000)]
    n_max: u64,
    /// Log-spaced sample count; every integer in the range when absent
    #[arg(long)]
    points: Option<usize>,
    /// Curves of the preset workload profiles instead of a single model
    #[arg(long, conflicts_with = "surface_s")]
    presets: bool,
    /// Efficiency surface over these non-payload fractions
    #[arg(long, value_delimiter = ',')]
    surface_s: Vec<f64>,
}

const MAX_DENSE_POINTS: u64 = 1_000_000;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Config(String),
    Runtime(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (tag, msg) = match self {
            CliError::Usage(m) => ("usage", m),
            CliError::Config(m) => ("config", m),
            CliError::Runtime(m) => ("runtime", m),
            CliError::Io(m) => ("io", m),
        };
        // one line, whatever the message
        write!(f, "error[{tag}]: {}", msg.replace('\n', " "))
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Sweep(_)
            | ExperimentError::Topology(_)
            | ExperimentError::Model(_)
            | ExperimentError::Workload(WorkloadError::Definition(_)) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", CliError::Usage(first.trim_start_matches("error: ").to_owned()));
            return ExitCode::from(2);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let config = match &cli.global.config {
        Some(path) => Some(ExperimentConfig::load(path).map_err(CliError::Config)?),
        None => None,
    };
    let out = Output::new(&cli.global, config.as_ref());
    match &cli.command {
        Command::Run => cmd_run(require(config)?, &out),
        Command::Sweep { fit } => cmd_sweep(require(config)?, &out, cli.global.jobs, *fit),
        Command::Model(args) => cmd_model(args, config.and_then(|c| c.model).unwrap_or_default(), &out),
        Command::Extrapolate {
            perf_a,
            width_a,
            perf_b,
            width_b,
        } => cmd_extrapolate(*perf_a, *width_a, *perf_b, *width_b, &out),
    }
}

fn require(config: Option<ExperimentConfig>) -> Result<ExperimentConfig, CliError> {
    config.ok_or_else(|| CliError::Usage("this command needs --config".into()))
}

/// Where and how results go: flags first, then the [output] section.
struct Output {
    dataset: Option<PathBuf>,
    trace: Option<PathBuf>,
    format: Format,
}

impl Output {
    fn new(global: &Global, config: Option<&ExperimentConfig>) -> Self {
        let section = config.map(|c| c.output.clone()).unwrap_or_default();
        let format = match global.format {
            Some(FormatArg::Tabular) => Format::Tabular,
            Some(FormatArg::StructuredRecords) => Format::StructuredRecords,
            None => section.format.unwrap_or_default(),
        };
        Self {
            dataset: global.out.clone().or(section.dataset),
            trace: global.trace.clone().or(section.trace),
            format,
        }
    }

    fn rows<R: Serialize>(&self, rows: &[R]) -> Result<(), CliError> {
        let mut buf = Vec::new();
        dataset::write_rows(rows, self.format, &mut buf).map_err(|e| CliError::Io(e.to_string()))?;
        match &self.dataset {
            Some(path) => write_file(path, &buf),
            None => std::io::stdout()
                .write_all(&buf)
                .map_err(|e| CliError::Io(e.to_string())),
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn write_trace(path: &Path, trace: &SimTrace) -> Result<(), CliError> {
    let mut buf = Vec::new();
    trace.write_jsonl(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    write_file(path, &buf)
}

/// `traces/run.jsonl` with value 8 becomes `traces/run.8.jsonl`.
fn per_value_path(path: &Path, value: u64) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{value}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{value}"),
    };
    path.with_file_name(name)
}

fn cmd_run(config: ExperimentConfig, out: &Output) -> Result<(), CliError> {
    let scenario = config.scenario().map_err(CliError::Config)?;
    let (workload, topology) = scenario.build()?;
    let (metrics, trace) = experiments::run_experiment(&workload, &topology)?;
    out.rows(&[RunRow::new("run", &metrics)])?;
    if let Some(path) = &out.trace {
        write_trace(path, &trace)?;
    }
    Ok(())
}

fn cmd_sweep(config: ExperimentConfig, out: &Output, jobs: usize, fit: bool) -> Result<(), CliError> {
    let scenario = config.scenario().map_err(CliError::Config)?;
    let (param, values) = config.sweep().map_err(CliError::Config)?;
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let result = experiments::sweep(&scenario, param, &values, jobs)?;
    out.rows(&RunRow::from_sweep(&result))?;
    if let Some(path) = &out.trace {
        for &value in &values {
            let (_, trace) = param.apply(&scenario, value)?.run()?;
            write_trace(&per_value_path(path, value), &trace)?;
        }
    }
    if fit {
        let params = experiments::fit_scaling_params(&result)?;
        let cmp = experiments::compare_with_model(&result, &params)?;
        eprintln!(
            "fit: s={:.6e} c={:.6e} max_rel_divergence={:.4} simulated_plateau={:.4} model_plateau={:.4}",
            params.nonpayload_fraction(),
            params.overhead_coeff(),
            cmp.max_rel_divergence,
            cmp.simulated_plateau,
            cmp.model_plateau
        );
    }
    Ok(())
}

fn sample_points(args: &ModelArgs) -> Result<Vec<u64>, CliError> {
    if args.n_min == 0 || args.n_max < args.n_min {
        return Err(CliError::Usage(format!(
            "bad core range {}..{}",
            args.n_min, args.n_max
        )));
    }
    match args.points {
        Some(0) => Err(CliError::Usage("--points must be positive".into())),
        Some(count) => Ok(log_spaced(args.n_min, args.n_max, count)),
        None if args.n_max - args.n_min >= MAX_DENSE_POINTS => Err(CliError::Usage(format!(
            "range {}..{} is too wide for every integer; pass --points",
            args.n_min, args.n_max
        ))),
        None => Ok((args.n_min..=args.n_max).collect()),
    }
}

fn cmd_model(args: &ModelArgs, section: ModelSection, out: &Output) -> Result<(), CliError> {
    let ns = sample_points(args)?;
    if args.presets {
        return out.rows(&ProfileRow::roofline(&WorkloadProfile::presets(), &ns)?);
    }
    let c = args.c.or(section.c).unwrap_or(0.0);
    if !args.surface_s.is_empty() {
        return out.rows(&SurfaceRow::grid(&args.surface_s, &ns, c)?);
    }
    let s = args
        .s
        .or(section.s)
        .ok_or_else(|| CliError::Usage("model needs --s (or [model] s)".into()))?;
    let p = args.p.or(section.p).unwrap_or(1.0);
    let params = ScalingParams::new(s, c, p)?;
    out.rows(&ModelRow::curve(&params, &ns)?)
}

#[derive(Serialize)]
struct ExtrapolationRow {
    housekeeping_share: f64,
    fp0_performance: f64,
}

fn cmd_extrapolate(perf_a: f64, width_a: u32, perf_b: f64, width_b: u32, out: &Output) -> Result<(), CliError> {
    let x = scaling::mixed_precision_extrapolate(perf_a, width_a, perf_b, width_b)?;
    out.rows(&[ExtrapolationRow {
        housekeeping_share: x.housekeeping_share,
        fp0_performance: x.fp0_performance,
    }])
}
