//! Command-line front end for the `depbound` library.
//!
//! [`dispatch`] parses an argument vector, runs one subcommand and returns
//! the process exit code: 0 on success, 1 when the arguments or a config
//! file fail validation, 2 when the work itself fails. Data goes to stdout
//! or to files under `--out`; progress and diagnostics go to stderr.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use depbound::analysis::{analyze_records, calibrate_records, contrasts_csv, scaling_csv};
use depbound::blocking::{blocking_oracle_suite, make_blocks, optimal_delay, BlockingCheck, BlockingPlan};
use depbound::bounds::{
    generalization_bound, rademacher_grid, BoundInputs, BoundReport, OracleBudget, RademacherCheck,
};
use depbound::experiments::{
    execute_on_series, execute_run, load_records, plan_fair_grid, plan_standard_grid, sweep, CellTemplate, DelayPolicy,
    GridSpec, Manifest, Protocol, RunRecord, RunSpec, SweepOptions, DEFAULT_DEPTHS, DEFAULT_FAIR_TRIALS,
    DEFAULT_KERNEL_SIZE, DEFAULT_LENGTHS, DEFAULT_RADIUS, DEFAULT_RHOS, DEFAULT_STANDARD_TRIALS, DEFAULT_TARGETS,
    MANIFEST_FILE, RESULTS_FILE,
};
use depbound::ingest::{bandpass, load_signal, normalize, split_and_window, write_signal, SignalFile, SignalFormat};
use depbound::mixing::{
    effective_sample_size, gen_ar1, required_length, sample_autocorrelation, Ar1Spec, MixingProfile, Series,
};
use depbound::model::{gradient_check_suite, GradCheck, DEFAULT_CHANNELS};
use depbound::training::{DEFAULT_EVAL_FRACTION, DEFAULT_STEP_SCALE};
use depbound::{Error, VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "depbound", version = VERSION, about = "Generalization bounds for causal convolutional networks on dependent sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a stationary AR(1) series as CSV.
    Gen(GenArgs),
    /// Plan an experiment grid and optionally write its manifest.
    Plan {
        #[command(subcommand)]
        grid: PlanCommand,
    },
    /// Execute every missing cell of a manifest into a result store.
    Sweep(SweepArgs),
    /// Execute a single cell and print its result line.
    Run(RunArgs),
    /// Evaluate the three-term generalization bound.
    Bound(BoundArgs),
    /// Run the numerical oracle suites.
    Verify(VerifyArgs),
    /// Scaling fits, ρ contrasts and calibration from a result store.
    Analyze(AnalyzeArgs),
    /// Fit the bound's constants to the gaps in a result store.
    Calibrate(CalibrateArgs),
    /// Load, filter and normalize a recorded signal.
    Ingest(IngestArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// AR(1) coefficient, |rho| < 1.
    #[arg(long, allow_hyphen_values = true)]
    rho: f64,
    /// Number of values.
    #[arg(long)]
    length: usize,
    /// Root seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Marginal variance.
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
    /// Sampling rate recorded in the `# fs=` header.
    #[arg(long)]
    fs: Option<f64>,
    /// Directory for `series.csv`; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum PlanCommand {
    /// Cells at fixed effective sample size (raw length derived per ρ).
    Fair(FairArgs),
    /// Cells at fixed raw length (effective size derived per ρ).
    Standard(StandardArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlanFormat {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct FairArgs {
    /// Target effective sample sizes.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_TARGETS)]
    targets: Vec<u64>,
    #[command(flatten)]
    common: PlanCommon,
    /// Seeds per cell.
    #[arg(long, default_value_t = DEFAULT_FAIR_TRIALS)]
    trials: u32,
}

#[derive(Debug, Args)]
struct StandardArgs {
    /// Raw sequence lengths.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LENGTHS)]
    lengths: Vec<u64>,
    #[command(flatten)]
    common: PlanCommon,
    /// Seeds per cell.
    #[arg(long, default_value_t = DEFAULT_STANDARD_TRIALS)]
    trials: u32,
}

#[derive(Debug, Args)]
struct PlanCommon {
    /// AR(1) coefficients.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_RHOS)]
    rhos: Vec<f64>,
    /// Network depths.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_DEPTHS)]
    depths: Vec<usize>,
    #[command(flatten)]
    cell: CellArgs,
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// Output layout on stdout.
    #[arg(long, value_enum, default_value_t = PlanFormat::Table)]
    format: PlanFormat,
    /// Directory for `manifest.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CellArgs {
    /// Kernel size.
    #[arg(long = "p", default_value_t = DEFAULT_KERNEL_SIZE)]
    kernel_size: usize,
    /// Per-layer l2,1 radius.
    #[arg(long = "R", default_value_t = DEFAULT_RADIUS)]
    radius: f64,
    /// Fixed feedback delay; the mixing-optimal delay when omitted.
    #[arg(long)]
    delay: Option<u64>,
    /// Root seed every cell seed is derived from.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl CellArgs {
    fn template(&self) -> CellTemplate {
        CellTemplate {
            kernel_size: self.kernel_size,
            norm_radius: self.radius,
            delay: self.delay.map_or(DelayPolicy::Optimal, DelayPolicy::Fixed),
            root_seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
struct ProtocolArgs {
    /// Hidden channels per layer.
    #[arg(long, default_value_t = DEFAULT_CHANNELS)]
    width: usize,
    /// Step-size multiplier.
    #[arg(long, default_value_t = DEFAULT_STEP_SCALE)]
    step_scale: f64,
    /// Passes over the training split.
    #[arg(long, default_value_t = 1)]
    passes: usize,
    /// Held-out suffix fraction.
    #[arg(long, default_value_t = DEFAULT_EVAL_FRACTION)]
    eval_fraction: f64,
    /// Confidence parameter of the bound.
    #[arg(long, default_value_t = depbound::bounds::DEFAULT_DELTA)]
    delta: f64,
    /// Complexity constant of the bound.
    #[arg(long, default_value_t = depbound::bounds::SYMBOLIC_C1)]
    c1: f64,
}

impl ProtocolArgs {
    fn protocol(&self) -> Protocol {
        Protocol {
            width: self.width,
            step_scale: self.step_scale,
            passes: self.passes,
            eval_fraction: self.eval_fraction,
            delta: self.delta,
            c1: self.c1,
        }
    }
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Manifest JSON written by `plan --out` (or by hand).
    #[arg(long)]
    config: PathBuf,
    /// Store directory; holds manifest.json, results.jsonl, timings.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// Replace the manifest's root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Stop after this many new cells.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InputFormat {
    Single,
    Timestamped,
}

impl From<InputFormat> for SignalFormat {
    fn from(f: InputFormat) -> Self {
        match f {
            InputFormat::Single => SignalFormat::CsvSingleColumn,
            InputFormat::Timestamped => SignalFormat::CsvTimestamped,
        }
    }
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("size").args(["n_eff", "n_raw", "series"]).required(true)))]
struct RunArgs {
    /// AR(1) coefficient; estimated from the lag-1 autocorrelation with --series.
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    /// Effective sample size (raw length derived from rho).
    #[arg(long)]
    n_eff: Option<u64>,
    /// Raw sequence length.
    #[arg(long)]
    n_raw: Option<u64>,
    /// Train on this series (e.g. `ingest` output) instead of generated data.
    #[arg(long)]
    series: Option<PathBuf>,
    /// Layout of --series.
    #[arg(long, value_enum, default_value_t = InputFormat::Single)]
    format: InputFormat,
    /// Network depth.
    #[arg(long = "D")]
    depth: usize,
    /// Trial index (enters the cell seed).
    #[arg(long, default_value_t = 0)]
    trial: u32,
    #[command(flatten)]
    cell: CellArgs,
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// Directory for `run.jsonl`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundFormat {
    Both,
    Json,
    Table,
}

#[derive(Debug, Args)]
struct BoundArgs {
    /// Depth.
    #[arg(long = "D")]
    depth: usize,
    /// Kernel size.
    #[arg(long = "p")]
    kernel_size: usize,
    /// Input dimension.
    #[arg(long = "n", default_value_t = 1)]
    in_dim: usize,
    /// Per-layer l2,1 radius.
    #[arg(long = "R")]
    radius: f64,
    /// Sample size.
    #[arg(long = "N")]
    n: u64,
    /// Confidence parameter.
    #[arg(long, default_value_t = depbound::bounds::DEFAULT_DELTA)]
    delta: f64,
    /// Complexity constant.
    #[arg(long, default_value_t = depbound::bounds::SYMBOLIC_C1)]
    c1: f64,
    /// Mixing constant C0 (the value N·β(d*) collapses to).
    #[arg(long, default_value_t = 1.0)]
    c0: f64,
    /// Mixing rate c0 of the exponential envelope.
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    /// Output: JSON, table or both.
    #[arg(long, value_enum, default_value_t = BoundFormat::Both)]
    format: BoundFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Blocking,
    Rademacher,
    Grad,
    All,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(value_enum)]
    suite: Suite,
    /// Directory for blocking.csv, rademacher.csv and grad.csv; the
    /// selected suite's CSV goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed for chains, networks and sign draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random chains in the blocking suite.
    #[arg(long, default_value_t = 50)]
    chains: usize,
    /// Random networks in the gradient suite.
    #[arg(long, default_value_t = 20)]
    instances: usize,
    /// Sampled hypotheses per Rademacher cell.
    #[arg(long, default_value_t = OracleBudget::default().hypotheses)]
    hypotheses: usize,
    /// Sign draws per Rademacher cell.
    #[arg(long, default_value_t = OracleBudget::default().trials)]
    trials: usize,
    /// Accepted ascent steps per sign draw.
    #[arg(long, default_value_t = OracleBudget::default().refine_steps)]
    refine_steps: usize,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// results.jsonl or a store directory.
    #[arg(long)]
    results: PathBuf,
    /// Directory for scaling.csv, contrasts.csv and calibration.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// results.jsonl or a store directory.
    #[arg(long)]
    results: PathBuf,
    /// Directory for calibration.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Signal CSV.
    #[arg(long)]
    input: PathBuf,
    /// Input layout.
    #[arg(long, value_enum, default_value_t = InputFormat::Single)]
    format: InputFormat,
    /// Sampling rate in Hz; overrides a `# fs=` header.
    #[arg(long)]
    fs: Option<f64>,
    /// Lower pass-band edge in Hz.
    #[arg(long, default_value_t = 0.5)]
    low: f64,
    /// Upper pass-band edge in Hz.
    #[arg(long, default_value_t = 40.0)]
    high: f64,
    /// Skip the band-pass filter.
    #[arg(long)]
    no_filter: bool,
    /// Window length for the supervised pair count.
    #[arg(long)]
    window: Option<usize>,
    /// Step between window starts.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Held-out suffix fraction used for the pair counts.
    #[arg(long, default_value_t = DEFAULT_EVAL_FRACTION)]
    eval_fraction: f64,
    /// Directory for `preprocessed.csv`; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Why a subcommand did not succeed.
#[derive(Debug)]
enum Failure {
    Invalid(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => EXIT_INVALID,
            Failure::Runtime(_) => EXIT_FAILURE,
        }
    }
}

fn is_validation(e: &Error) -> bool {
    match e {
        Error::InvalidParameter(_)
        | Error::ShapeMismatch(_)
        | Error::TooShort(_)
        | Error::Parse { .. }
        | Error::Json(_) => true,
        Error::Cell { source, .. } => is_validation(source),
        _ => false,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if is_validation(&e) {
            Failure::Invalid(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Plan { grid } => cmd_plan(&grid),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Bound(a) => cmd_bound(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Ingest(a) => cmd_ingest(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            match &f {
                Failure::Invalid(m) => eprintln!("error: {m}"),
                Failure::Runtime(m) => eprintln!("failed: {m}"),
            }
            f.code()
        }
    }
}

fn ensure_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn require_file(path: &Path) -> Outcome {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Invalid(format!("{} is not a readable file", path.display())))
    }
}

fn cmd_gen(a: &GenArgs) -> Outcome {
    let mut spec = Ar1Spec::new(a.rho, a.length, a.seed);
    spec.target_variance = a.variance;
    let mut series = gen_ar1(&spec)?;
    if let Some(fs) = a.fs {
        series = series.with_sampling_rate(fs)?;
    }
    match &a.out {
        Some(dir) => {
            ensure_dir(dir)?;
            let path = dir.join("series.csv");
            fs::write(&path, series.to_csv())?;
            eprintln!("wrote {} values to {}", series.len(), path.display());
        }
        None => print!("{}", series.to_csv()),
    }
    Ok(())
}

fn cmd_plan(cmd: &PlanCommand) -> Outcome {
    let (grid, common, cells) = match cmd {
        PlanCommand::Fair(a) => {
            let t = a.common.cell.template();
            let g = plan_fair_grid(&a.targets, &a.common.rhos, &a.common.depths, a.trials, &t)?;
            let spec = GridSpec::Fair {
                targets: a.targets.clone(),
                rhos: a.common.rhos.clone(),
                depths: a.common.depths.clone(),
                trials: a.trials,
                template: t,
            };
            (spec, &a.common, g.cells)
        }
        PlanCommand::Standard(a) => {
            let t = a.common.cell.template();
            let g = plan_standard_grid(&a.lengths, &a.common.rhos, &a.common.depths, a.trials, &t)?;
            let spec = GridSpec::Standard {
                lengths: a.lengths.clone(),
                rhos: a.common.rhos.clone(),
                depths: a.common.depths.clone(),
                trials: a.trials,
                template: t,
            };
            (spec, &a.common, g.cells)
        }
    };
    let fair = matches!(grid, GridSpec::Fair { .. });
    let levels: Vec<u64> = match &grid {
        GridSpec::Fair { targets, .. } => targets.clone(),
        GridSpec::Standard { lengths, .. } => lengths.clone(),
    };
    let mut table = Vec::with_capacity(levels.len());
    for &level in &levels {
        let mut row = Vec::with_capacity(common.rhos.len());
        for &rho in &common.rhos {
            row.push(if fair {
                required_length(level, rho)?
            } else {
                effective_sample_size(level, rho)?
            });
        }
        table.push(row);
    }
    let (row_label, cell_label) = if fair { ("n_eff", "n_raw") } else { ("n_raw", "n_eff") };
    match common.format {
        PlanFormat::Table => print!("{}", plan_table(row_label, &levels, &common.rhos, &table)),
        PlanFormat::Csv => {
            let mut out = format!("{row_label},rho,{cell_label}\n");
            for (level, row) in levels.iter().zip(&table) {
                for (rho, v) in common.rhos.iter().zip(row) {
                    let _ = writeln!(out, "{level},{rho},{v}");
                }
            }
            print!("{out}");
        }
        PlanFormat::Json => println!("{}", serde_json::to_string_pretty(&cells)?),
    }
    eprintln!("{} cells", cells.len());
    if let Some(dir) = &common.out {
        ensure_dir(dir)?;
        let manifest = Manifest::new(grid, common.protocol.protocol())?;
        let path = dir.join(MANIFEST_FILE);
        manifest.save(&path)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

/// Rows are grid levels, columns are ρ values, all right-aligned.
fn plan_table(row_label: &str, levels: &[u64], rhos: &[f64], table: &[Vec<u64>]) -> String {
    let mut header = vec![row_label.to_string()];
    header.extend(rhos.iter().map(|r| format!("rho={r}")));
    let mut rows = vec![header];
    for (level, row) in levels.iter().zip(table) {
        let mut r = vec![level.to_string()];
        r.extend(row.iter().map(u64::to_string));
        rows.push(r);
    }
    aligned(&rows, false)
}

/// Column 0 is left-aligned when `label_column`; all others right-aligned.
fn aligned(rows: &[Vec<String>], label_column: bool) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, w))| {
                if c == 0 && label_column {
                    format!("{s:<w$}")
                } else {
                    format!("{s:>w$}")
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn cmd_sweep(a: &SweepArgs) -> Outcome {
    require_file(&a.config)?;
    let mut manifest = Manifest::load(&a.config)?;
    if let Some(seed) = a.seed {
        let mut grid = manifest.grid.clone();
        match &mut grid {
            GridSpec::Fair { template, .. } | GridSpec::Standard { template, .. } => template.root_seed = seed,
        }
        manifest = Manifest::new(grid, manifest.protocol)?;
    }
    let total = manifest.grid.cells()?.len();
    eprintln!(
        "sweep: {total} cells into {} with {} worker(s)",
        a.out.display(),
        a.parallelism
    );
    let started = Instant::now();
    let report = sweep(
        &manifest,
        &a.out,
        &SweepOptions {
            parallelism: a.parallelism,
            limit: a.limit,
        },
    )?;
    eprintln!(
        "sweep: executed {}, skipped {}, failed {} in {:.1}s",
        report.executed,
        report.skipped,
        report.failed.len(),
        started.elapsed().as_secs_f64()
    );
    for f in &report.failed {
        eprintln!("  {}: {}", f.cell, f.error);
    }
    let summary = serde_json::json!({
        "total": report.total,
        "executed": report.executed,
        "skipped": report.skipped,
        "failed": report.failed.iter().map(|f| &f.cell).collect::<Vec<_>>(),
        "results": report.results_path,
    });
    println!("{summary}");
    if report.failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "{} cell(s) failed; completed results are kept in {}",
            report.failed.len(),
            report.results_path.display()
        )))
    }
}

fn cmd_run(a: &RunArgs) -> Outcome {
    let template = a.cell.template();
    let protocol = a.protocol.protocol();
    let record = if let Some(path) = &a.series {
        require_file(path)?;
        let raw = load_signal(&SignalFile {
            path: path.clone(),
            format: a.format.into(),
            sampling_rate: Some(1.0),
        })?;
        let series = raw.interpolate()?;
        let rho = match a.rho {
            Some(r) => r,
            None => {
                let r = sample_autocorrelation(series.values(), 1);
                eprintln!("estimated lag-1 autocorrelation {r:.4}");
                r
            }
        };
        let n_raw = series.len() as u64;
        let n_eff = effective_sample_size(n_raw, rho.abs())?;
        let spec = RunSpec::new(rho, n_raw, n_eff, a.depth, a.trial, &template);
        execute_on_series(&series, &spec, &protocol)?
    } else {
        let rho = a
            .rho
            .ok_or_else(|| Failure::Invalid("--rho is required without --series".into()))?;
        let (n_raw, n_eff) = match (a.n_eff, a.n_raw) {
            (Some(n_eff), _) => (required_length(n_eff, rho)?, n_eff),
            (None, Some(n_raw)) => (n_raw, effective_sample_size(n_raw, rho.abs())?),
            (None, None) => unreachable!("clap requires one size argument"),
        };
        let spec = RunSpec::new(rho, n_raw, n_eff, a.depth, a.trial, &template);
        eprintln!("run: {}", spec.label());
        execute_run(&spec, &protocol)?
    };
    let line = record.to_line()?;
    println!("{line}");
    if !record.within_bound() {
        eprintln!(
            "warning: gap {} exceeds the bound {}",
            record.result.gap, record.bound.total
        );
    }
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        fs::write(dir.join("run.jsonl"), format!("{line}\n"))?;
    }
    Ok(())
}

fn cmd_bound(a: &BoundArgs) -> Outcome {
    let profile = MixingProfile::exponential(a.c0, a.rate)?;
    let report = generalization_bound(BoundInputs {
        depth: a.depth,
        kernel_size: a.kernel_size,
        in_dim: a.in_dim,
        radius: a.radius,
        n: a.n,
        delta: a.delta,
        profile,
        c1: a.c1,
    })?;
    if a.format != BoundFormat::Table {
        println!("{}", serde_json::to_string_pretty(&report)?);
    }
    if a.format != BoundFormat::Json {
        let plan = make_blocks(a.n, optimal_delay(a.n, a.rate)?)?;
        print!("{}", bound_table(&report, &plan));
    }
    Ok(())
}

fn bound_table(r: &BoundReport, plan: &BlockingPlan) -> String {
    let i = &r.inputs;
    let rows = vec![
        vec!["term".into(), "value".into()],
        vec![
            "complexity C1*R*sqrt(D*p*n*lnN/N)".into(),
            format!("{:.6}", r.complexity_term),
        ],
        vec!["mixing C0".into(), format!("{:.6}", r.mixing_const)],
        vec![
            "concentration sqrt(ln(1/delta)/N)".into(),
            format!("{:.6}", r.concentration_term),
        ],
        vec!["total".into(), format!("{:.6}", r.total)],
    ];
    let mut out = format!(
        "D={} p={} n={} R={} N={} delta={} C1={}\n",
        i.depth, i.kernel_size, i.in_dim, i.radius, i.n, i.delta, i.c1
    );
    out.push_str(&aligned(&rows, true));
    let _ = writeln!(
        out,
        "blocks: d*={} B={} r={} block-first share {}",
        plan.delay,
        plan.n_blocks,
        plan.remainder,
        plan.fraction_label()
    );
    out
}

fn blocking_csv(rows: &[BlockingCheck]) -> String {
    let mut out = String::from("chain_id,states,B,d,tv_exact,tv_bound,pass\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.chain_id, r.states, r.n_blocks, r.delay, r.tv_exact, r.tv_bound, r.pass
        );
    }
    out
}

fn rademacher_csv(rows: &[RademacherCheck]) -> String {
    let mut out = String::from("D,p,R,m,estimate,std_error,bound,margin_se,pass\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.depth, r.kernel_size, r.radius, r.m, r.estimate, r.std_error, r.bound, r.margin_se, r.pass
        );
    }
    out
}

fn grad_csv(rows: &[GradCheck]) -> String {
    let mut out = String::from("instance,D,p,n,width,params,active,inactive,unclipped,clipped,max_rel_error,pass\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.instance,
            r.depth,
            r.kernel_size,
            r.in_dim,
            r.width,
            r.params,
            r.active,
            r.inactive,
            r.unclipped,
            r.clipped,
            r.max_rel_error,
            r.pass
        );
    }
    out
}

fn cmd_verify(a: &VerifyArgs) -> Outcome {
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
    }
    let emit = |name: &str, csv: String| -> Outcome {
        match &a.out {
            Some(dir) => fs::write(dir.join(name), csv)?,
            None if a.suite != Suite::All => print!("{csv}"),
            None => {}
        }
        Ok(())
    };
    let mut failures = Vec::new();
    let want = |s: Suite| a.suite == s || a.suite == Suite::All;

    if want(Suite::Blocking) {
        let t = Instant::now();
        let rows = blocking_oracle_suite(a.chains, a.seed)?;
        let bad = rows.iter().filter(|r| !r.pass).count();
        eprintln!(
            "blocking: {}/{} plans within B*beta(d) ({:.1}s)",
            rows.len() - bad,
            rows.len(),
            t.elapsed().as_secs_f64()
        );
        if bad > 0 {
            failures.push(format!("blocking: {bad} violation(s)"));
        }
        emit("blocking.csv", blocking_csv(&rows))?;
    }
    if want(Suite::Grad) {
        let t = Instant::now();
        let rows = gradient_check_suite(a.instances, a.seed)?;
        let bad = rows.iter().filter(|r| !r.pass).count();
        let worst = rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
        eprintln!(
            "grad: {}/{} instances agree (worst relative error {worst:.2e}, {:.1}s)",
            rows.len() - bad,
            rows.len(),
            t.elapsed().as_secs_f64()
        );
        if bad > 0 {
            failures.push(format!("grad: {bad} instance(s) disagree"));
        }
        emit("grad.csv", grad_csv(&rows))?;
    }
    if want(Suite::Rademacher) {
        let t = Instant::now();
        let budget = OracleBudget {
            hypotheses: a.hypotheses,
            trials: a.trials,
            refine_steps: a.refine_steps,
        };
        let rows = rademacher_grid(a.seed, &budget)?;
        let bad = rows.iter().filter(|r| !r.pass).count();
        let tightest = rows.iter().map(|r| r.margin_se).fold(f64::INFINITY, f64::min);
        eprintln!(
            "rademacher: {}/{} cells below the formula by >= 3 SE (smallest margin {tightest:.1} SE, {:.1}s)",
            rows.len() - bad,
            rows.len(),
            t.elapsed().as_secs_f64()
        );
        if bad > 0 {
            failures.push(format!("rademacher: {bad} cell(s) too close to or above the formula"));
        }
        emit("rademacher.csv", rademacher_csv(&rows))?;
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(failures.join("; ")))
    }
}

/// Accepts a store directory or the JSONL file itself.
fn read_results(path: &Path) -> std::result::Result<Vec<RunRecord>, Failure> {
    let file = if path.is_dir() {
        path.join(RESULTS_FILE)
    } else {
        path.to_path_buf()
    };
    require_file(&file)?;
    let records = load_records(&file)?;
    if records.is_empty() {
        return Err(Failure::Invalid(format!("{} holds no results", file.display())));
    }
    eprintln!("loaded {} results from {}", records.len(), file.display());
    Ok(records)
}

fn cmd_analyze(a: &AnalyzeArgs) -> Outcome {
    let records = read_results(&a.results)?;
    let report = analyze_records(&records)?;
    let scaling = scaling_csv(&report.scaling);
    let contrasts = contrasts_csv(&report.contrasts);
    let calibration = serde_json::to_string_pretty(&report.calibration)? + "\n";
    match &a.out {
        Some(dir) => {
            ensure_dir(dir)?;
            fs::write(dir.join("scaling.csv"), &scaling)?;
            fs::write(dir.join("contrasts.csv"), &contrasts)?;
            fs::write(dir.join("calibration.json"), &calibration)?;
            eprintln!(
                "wrote {} scaling row(s), {} contrast(s) to {}",
                report.scaling.len(),
                report.contrasts.len(),
                dir.display()
            );
        }
        None => {
            print!("{scaling}\n{contrasts}\n{calibration}");
        }
    }
    Ok(())
}

fn cmd_calibrate(a: &CalibrateArgs) -> Outcome {
    let records = read_results(&a.results)?;
    let cal = calibrate_records(&records)?;
    let text = serde_json::to_string_pretty(&cal)? + "\n";
    print!("{text}");
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        fs::write(dir.join("calibration.json"), &text)?;
    }
    Ok(())
}

fn cmd_ingest(a: &IngestArgs) -> Outcome {
    require_file(&a.input)?;
    let raw = load_signal(&SignalFile {
        path: a.input.clone(),
        format: a.format.into(),
        sampling_rate: a.fs,
    })?;
    let missing = raw.missing_indices().len();
    let fs_hz = raw.sampling_rate;
    let mut series: Series = raw.interpolate()?;
    let mut provenance = vec![
        format!("source={}", a.input.display()),
        format!("interpolated={missing}"),
    ];
    if !a.no_filter {
        series = bandpass(&series, a.low, a.high)?;
        provenance.push(format!("bandpass={}-{} Hz zero-phase", a.low, a.high));
    }
    series = normalize(&series)?;
    provenance.push("normalized=zero-mean unit-variance".into());
    provenance.push(format!("depbound={VERSION}"));

    let mut summary = serde_json::json!({
        "samples": series.len(),
        "missing_filled": missing,
        "fs": fs_hz,
    });
    if let Some(len) = a.window {
        let (train, test) = split_and_window(&series, a.eval_fraction, len, a.stride)?;
        summary["train_pairs"] = train.len().into();
        summary["test_pairs"] = test.len().into();
    }
    match &a.out {
        Some(dir) => {
            ensure_dir(dir)?;
            let path = dir.join("preprocessed.csv");
            write_signal(&series, &path, &provenance)?;
            eprintln!("wrote {}", path.display());
            println!("{summary}");
        }
        None => {
            eprintln!("{summary}");
            print!("{}", series.to_csv());
        }
    }
    Ok(())
}
