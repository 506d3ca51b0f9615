//! Experiment grids, single-run execution and resumable sweeps backed by a
//! JSONL result store.
//!
//! A sweep directory holds three files:
//!
//! - `manifest.json`: grid definition, protocol, root seed and a digest of
//!   all of them;
//! - `results.jsonl`: one [`RunRecord`] per completed cell, rewritten in
//!   grid order when a sweep finishes;
//! - `timings.jsonl`: wall-clock durations, kept apart so the result store
//!   stays byte-reproducible.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blocking::optimal_delay;
use crate::bounds::{derive_seed, generalization_bound, tightness_ratio, BoundInputs, DEFAULT_DELTA, SYMBOLIC_C1};
use crate::error::{invalid, Error, Result};
use crate::mixing::{
    ar1_mixing_profile, effective_sample_size, gen_ar1, required_length, Ar1Spec, MixingProfile, Series,
};
use crate::model::{TcnConfig, DEFAULT_CHANNELS};
use crate::training::{evaluate_gap, train_delayed_feedback, TrainConfig, DEFAULT_EVAL_FRACTION, DEFAULT_STEP_SCALE};

pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_TARGETS: [u64; 6] = [500, 1000, 2000, 4000, 8000, 16000];
pub const DEFAULT_LENGTHS: [u64; 6] = [512, 1024, 2048, 4096, 8192, 16384];
pub const DEFAULT_RHOS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];
pub const DEFAULT_DEPTHS: [usize; 4] = [2, 4, 6, 8];
pub const DEFAULT_FAIR_TRIALS: u32 = 3;
pub const DEFAULT_STANDARD_TRIALS: u32 = 10;
pub const DEFAULT_KERNEL_SIZE: usize = 5;
pub const DEFAULT_RADIUS: f64 = 1.0;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESULTS_FILE: &str = "results.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayPolicy {
    /// `⌈ln N_train / c₀⌉` from the process's mixing rate.
    Optimal,
    Fixed(u64),
}

/// Architecture and seeding shared by every cell of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellTemplate {
    pub kernel_size: usize,
    pub norm_radius: f64,
    pub delay: DelayPolicy,
    pub root_seed: u64,
}

impl Default for CellTemplate {
    fn default() -> Self {
        Self {
            kernel_size: DEFAULT_KERNEL_SIZE,
            norm_radius: DEFAULT_RADIUS,
            delay: DelayPolicy::Optimal,
            root_seed: 0,
        }
    }
}

/// Training and bound settings shared by every cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    pub width: usize,
    pub step_scale: f64,
    pub passes: usize,
    pub eval_fraction: f64,
    pub delta: f64,
    pub c1: f64,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            width: DEFAULT_CHANNELS,
            step_scale: DEFAULT_STEP_SCALE,
            passes: 1,
            eval_fraction: DEFAULT_EVAL_FRACTION,
            delta: DEFAULT_DELTA,
            c1: SYMBOLIC_C1,
        }
    }
}

/// One cell of a grid. `seed` is derived from the root seed and the
/// cell's coordinates, so adding cells never shifts another cell's draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub rho: f64,
    pub n_raw: u64,
    pub n_eff: u64,
    pub depth: usize,
    pub kernel_size: usize,
    pub norm_radius: f64,
    pub trial: u32,
    pub seed: u64,
    pub delay: DelayPolicy,
}

/// Identity of a cell in a store; floats compared bitwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    rho: u64,
    n_raw: u64,
    n_eff: u64,
    depth: usize,
    kernel_size: usize,
    radius: u64,
    trial: u32,
    seed: u64,
}

impl RunSpec {
    pub fn new(rho: f64, n_raw: u64, n_eff: u64, depth: usize, trial: u32, template: &CellTemplate) -> Self {
        let seed = derive_seed(
            template.root_seed,
            &[
                rho.to_bits(),
                n_raw,
                n_eff,
                depth as u64,
                template.kernel_size as u64,
                template.norm_radius.to_bits(),
                trial as u64,
            ],
        );
        Self {
            rho,
            n_raw,
            n_eff,
            depth,
            kernel_size: template.kernel_size,
            norm_radius: template.norm_radius,
            trial,
            seed,
            delay: template.delay,
        }
    }

    pub fn key(&self) -> CellKey {
        CellKey {
            rho: self.rho.to_bits(),
            n_raw: self.n_raw,
            n_eff: self.n_eff,
            depth: self.depth,
            kernel_size: self.kernel_size,
            radius: self.norm_radius.to_bits(),
            trial: self.trial,
            seed: self.seed,
        }
    }

    pub fn label(&self) -> String {
        format!(
            "rho={} n_raw={} n_eff={} D={} p={} R={} trial={}",
            self.rho, self.n_raw, self.n_eff, self.depth, self.kernel_size, self.norm_radius, self.trial
        )
    }
}

fn check_rhos(rhos: &[f64]) -> Result<()> {
    match rhos.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        Some(r) => Err(invalid(format!("grid rho values must lie in (0, 1), got {r}"))),
        None => Ok(()),
    }
}

fn check_depths(depths: &[usize]) -> Result<()> {
    if depths.contains(&0) {
        return Err(invalid("depths must be >= 1"));
    }
    Ok(())
}

/// Cells at fixed effective sample size: raw lengths follow from
/// [`required_length`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairGrid {
    pub targets: Vec<u64>,
    pub rhos: Vec<f64>,
    pub depths: Vec<usize>,
    pub trials: u32,
    pub cells: Vec<RunSpec>,
}

pub fn plan_fair_grid(
    targets: &[u64],
    rhos: &[f64],
    depths: &[usize],
    trials: u32,
    template: &CellTemplate,
) -> Result<FairGrid> {
    check_rhos(rhos)?;
    check_depths(depths)?;
    let mut cells = Vec::with_capacity(targets.len() * rhos.len() * depths.len() * trials as usize);
    for &n_eff in targets {
        for &rho in rhos {
            let n_raw = required_length(n_eff, rho)?;
            for &depth in depths {
                for trial in 0..trials {
                    cells.push(RunSpec::new(rho, n_raw, n_eff, depth, trial, template));
                }
            }
        }
    }
    Ok(FairGrid {
        targets: targets.to_vec(),
        rhos: rhos.to_vec(),
        depths: depths.to_vec(),
        trials,
        cells,
    })
}

/// Cells at fixed raw length; each records its effective size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardGrid {
    pub lengths: Vec<u64>,
    pub rhos: Vec<f64>,
    pub depths: Vec<usize>,
    pub trials: u32,
    pub cells: Vec<RunSpec>,
}

pub fn plan_standard_grid(
    lengths: &[u64],
    rhos: &[f64],
    depths: &[usize],
    trials: u32,
    template: &CellTemplate,
) -> Result<StandardGrid> {
    check_rhos(rhos)?;
    check_depths(depths)?;
    let mut cells = Vec::with_capacity(lengths.len() * rhos.len() * depths.len() * trials as usize);
    for &rho in rhos {
        for &n_raw in lengths {
            let n_eff = effective_sample_size(n_raw, rho)?;
            for &depth in depths {
                for trial in 0..trials {
                    cells.push(RunSpec::new(rho, n_raw, n_eff, depth, trial, template));
                }
            }
        }
    }
    Ok(StandardGrid {
        lengths: lengths.to_vec(),
        rhos: rhos.to_vec(),
        depths: depths.to_vec(),
        trials,
        cells,
    })
}

/// Grid definition as stored in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    Fair {
        targets: Vec<u64>,
        rhos: Vec<f64>,
        depths: Vec<usize>,
        trials: u32,
        template: CellTemplate,
    },
    Standard {
        lengths: Vec<u64>,
        rhos: Vec<f64>,
        depths: Vec<usize>,
        trials: u32,
        template: CellTemplate,
    },
}

impl GridSpec {
    pub fn fair_defaults(template: CellTemplate) -> Self {
        Self::Fair {
            targets: DEFAULT_TARGETS.to_vec(),
            rhos: DEFAULT_RHOS.to_vec(),
            depths: DEFAULT_DEPTHS.to_vec(),
            trials: DEFAULT_FAIR_TRIALS,
            template,
        }
    }

    pub fn standard_defaults(template: CellTemplate) -> Self {
        Self::Standard {
            lengths: DEFAULT_LENGTHS.to_vec(),
            rhos: DEFAULT_RHOS.to_vec(),
            depths: DEFAULT_DEPTHS.to_vec(),
            trials: DEFAULT_STANDARD_TRIALS,
            template,
        }
    }

    pub fn cells(&self) -> Result<Vec<RunSpec>> {
        Ok(match self {
            Self::Fair {
                targets,
                rhos,
                depths,
                trials,
                template,
            } => plan_fair_grid(targets, rhos, depths, *trials, template)?.cells,
            Self::Standard {
                lengths,
                rhos,
                depths,
                trials,
                template,
            } => plan_standard_grid(lengths, rhos, depths, *trials, template)?.cells,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub version: String,
    pub grid: GridSpec,
    pub protocol: Protocol,
    /// Train/test split rule.
    pub split: String,
    pub digest: String,
}

impl Manifest {
    pub fn new(grid: GridSpec, protocol: Protocol) -> Result<Self> {
        grid.cells()?;
        let mut m = Self {
            schema_version: SCHEMA_VERSION,
            version: crate::VERSION.to_string(),
            grid,
            protocol,
            split: format!("contiguous suffix of ceil({} * len)", protocol.eval_fraction),
            digest: String::new(),
        };
        m.digest = m.compute_digest()?;
        Ok(m)
    }

    fn compute_digest(&self) -> Result<String> {
        let body = serde_json::to_string(&(
            self.schema_version,
            &self.version,
            &self.grid,
            &self.protocol,
            &self.split,
        ))?;
        Ok(format!("{:x}", Sha256::digest(body.as_bytes())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        if m.compute_digest()? != m.digest {
            return Err(Error::Store(format!(
                "{}: digest does not match contents",
                path.display()
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecRecord {
    pub rho: f64,
    pub n_raw: u64,
    pub n_eff: u64,
    pub depth: usize,
    pub p: usize,
    #[serde(rename = "R")]
    pub radius: f64,
    pub seed: u64,
    pub trial: u32,
    /// Delay actually used.
    pub delay: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub train_loss: f64,
    pub test_loss: f64,
    pub gap: f64,
    pub total_norm: f64,
    /// Training length; the N the bound is evaluated at.
    pub n_train: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub complexity: f64,
    pub mixing: f64,
    pub concentration: f64,
    pub total: f64,
    pub ratio: f64,
    pub delta: f64,
    pub c1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRecord {
    pub version: String,
}

/// One line of `results.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec: SpecRecord,
    pub result: ResultRecord,
    pub bound: BoundRecord,
    pub meta: MetaRecord,
}

impl RunRecord {
    pub fn key(&self) -> CellKey {
        let s = &self.spec;
        CellKey {
            rho: s.rho.to_bits(),
            n_raw: s.n_raw,
            n_eff: s.n_eff,
            depth: s.depth,
            kernel_size: s.p,
            radius: s.radius.to_bits(),
            trial: s.trial,
            seed: s.seed,
        }
    }

    pub fn to_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Whether the measured gap respects the stored bound.
    pub fn within_bound(&self) -> bool {
        self.result.gap <= self.bound.total
    }
}

/// Mixing profile and delay of a cell. `|ρ|` sets the envelope; ρ = 0 is
/// an independent sequence with `C₀ = 0` and no delay.
fn cell_mixing(spec: &RunSpec, n_train: u64) -> Result<(MixingProfile, u64)> {
    let rho = spec.rho.abs();
    let profile = if rho == 0.0 {
        MixingProfile::exponential(0.0, 1.0)?
    } else {
        ar1_mixing_profile(rho)?
    };
    let delay = match spec.delay {
        DelayPolicy::Fixed(d) => d,
        DelayPolicy::Optimal if rho == 0.0 => 0,
        DelayPolicy::Optimal => match profile {
            MixingProfile::Exponential { rate, .. } => optimal_delay(n_train, rate)?,
            MixingProfile::Polynomial { .. } => unreachable!("AR(1) envelopes are exponential"),
        },
    };
    Ok((profile, delay))
}

/// Generates the cell's series, trains at the cell's delay, measures the
/// gap and attaches the bound evaluated at the training length.
pub fn execute_run(spec: &RunSpec, protocol: &Protocol) -> Result<RunRecord> {
    run_inner(spec, protocol).map_err(|e| Error::Cell {
        cell: spec.label(),
        source: Box::new(e),
    })
}

fn run_inner(spec: &RunSpec, protocol: &Protocol) -> Result<RunRecord> {
    let n_raw = usize::try_from(spec.n_raw).map_err(|_| invalid("n_raw does not fit in memory"))?;
    let series = gen_ar1(&Ar1Spec::new(spec.rho, n_raw, derive_seed(spec.seed, &[0])))?;
    train_and_bound(&series, spec, protocol)
}

/// Runs the cell protocol on a given series instead of a generated one.
/// `spec.rho` is the AR(1) coefficient assumed for the mixing envelope;
/// `spec.n_raw` must equal the series length.
pub fn execute_on_series(series: &Series, spec: &RunSpec, protocol: &Protocol) -> Result<RunRecord> {
    if spec.n_raw != series.len() as u64 {
        return Err(Error::ShapeMismatch(format!(
            "spec has n_raw {} but the series holds {} values",
            spec.n_raw,
            series.len()
        )));
    }
    train_and_bound(series, spec, protocol).map_err(|e| Error::Cell {
        cell: spec.label(),
        source: Box::new(e),
    })
}

fn train_and_bound(series: &Series, spec: &RunSpec, protocol: &Protocol) -> Result<RunRecord> {
    let cfg = TcnConfig::new(spec.depth, spec.kernel_size, 1, protocol.width, spec.norm_radius)?;
    let mut tcfg = TrainConfig {
        delay: 0,
        steps: protocol.passes,
        step_scale: protocol.step_scale,
        eval_fraction: protocol.eval_fraction,
        seed: derive_seed(spec.seed, &[1]),
    };
    let (train, test) = tcfg.split(series)?;
    let n_train = train.len() as u64;
    let (profile, delay) = cell_mixing(spec, n_train)?;
    tcfg.delay = usize::try_from(delay).map_err(|_| invalid("delay does not fit in memory"))?;
    let model = train_delayed_feedback(&cfg, &train, &tcfg)?;
    let run = evaluate_gap(&cfg, &model, &train, &test)?;
    let report = generalization_bound(BoundInputs {
        depth: spec.depth,
        kernel_size: spec.kernel_size,
        in_dim: 1,
        radius: spec.norm_radius,
        n: n_train,
        delta: protocol.delta,
        profile,
        c1: protocol.c1,
    })?;
    let ratio = tightness_ratio(run.gap, &report)?;
    Ok(RunRecord {
        spec: SpecRecord {
            rho: spec.rho,
            n_raw: spec.n_raw,
            n_eff: spec.n_eff,
            depth: spec.depth,
            p: spec.kernel_size,
            radius: spec.norm_radius,
            seed: spec.seed,
            trial: spec.trial,
            delay,
        },
        result: ResultRecord {
            train_loss: run.train_loss,
            test_loss: run.test_loss,
            gap: run.gap,
            total_norm: run.total_norm,
            n_train,
        },
        bound: BoundRecord {
            complexity: report.complexity_term,
            mixing: report.mixing_const,
            concentration: report.concentration_term,
            total: report.total,
            ratio,
            delta: protocol.delta,
            c1: protocol.c1,
        },
        meta: MetaRecord {
            version: crate::VERSION.to_string(),
        },
    })
}

/// Reads a result store. A final line cut short by an interrupted write
/// is dropped; any other malformed line is an error.
pub fn load_records(path: &Path) -> Result<Vec<RunRecord>> {
    Ok(read_store(path)?.0)
}

/// Records plus the byte length of the valid prefix.
fn read_store(path: &Path) -> Result<(Vec<RunRecord>, u64)> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
        Err(e) => return Err(e.into()),
    };
    let mut reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut valid = 0u64;
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let complete = buf.ends_with('\n');
        match serde_json::from_str::<RunRecord>(buf.trim_end()) {
            Ok(r) if complete => {
                records.push(r);
                valid += n as u64;
            }
            _ if !complete => break,
            Ok(_) => unreachable!(),
            Err(e) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok((records, valid))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    pub parallelism: usize,
    /// Stop after this many new cells; `None` runs the whole grid.
    pub limit: Option<usize>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            parallelism: 1,
            limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellFailure {
    pub cell: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepReport {
    pub total: usize,
    pub executed: usize,
    pub skipped: usize,
    pub failed: Vec<CellFailure>,
    pub results_path: PathBuf,
}

#[derive(Serialize)]
struct TimingLine<'a> {
    cell: &'a str,
    duration_s: f64,
}

struct Sink {
    results: File,
    timings: File,
    failures: Vec<CellFailure>,
    executed: usize,
}

/// Runs every cell of `manifest` not already present in `dir`, then
/// rewrites the store in grid order.
///
/// An existing manifest in `dir` must carry the same digest. Failed cells
/// are reported, not stored, and are retried by the next sweep.
pub fn sweep(manifest: &Manifest, dir: &Path, options: &SweepOptions) -> Result<SweepReport> {
    if options.parallelism == 0 {
        return Err(invalid("parallelism must be >= 1"));
    }
    fs::create_dir_all(dir)?;
    let manifest_path = dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        let existing = Manifest::load(&manifest_path)?;
        if existing.digest != manifest.digest {
            return Err(Error::Store(format!(
                "{} belongs to a different grid (digest {})",
                dir.display(),
                existing.digest
            )));
        }
    } else {
        manifest.save(&manifest_path)?;
    }

    let cells = manifest.grid.cells()?;
    let order: HashMap<CellKey, usize> = cells.iter().enumerate().map(|(i, c)| (c.key(), i)).collect();
    let results_path = dir.join(RESULTS_FILE);
    let (existing, valid_len) = read_store(&results_path)?;
    if let Some(stray) = existing.iter().find(|r| !order.contains_key(&r.key())) {
        return Err(Error::Store(format!(
            "record for a cell outside the grid: {:?}",
            stray.spec
        )));
    }
    let mut done: HashSet<CellKey> = existing.iter().map(RunRecord::key).collect();
    let skipped = done.len();
    let pending: Vec<&RunSpec> = cells
        .iter()
        .filter(|c| done.insert(c.key()))
        .take(options.limit.unwrap_or(usize::MAX))
        .collect();

    let mut results = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(false)
        .open(&results_path)?;
    results.set_len(valid_len)?;
    results.seek(SeekFrom::End(0))?;
    let timings = OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join(TIMINGS_FILE))?;
    let sink = Mutex::new(Sink {
        results,
        timings,
        failures: Vec::new(),
        executed: 0,
    });

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism)
        .build()
        .map_err(|e| Error::Store(format!("thread pool: {e}")))?;
    let write_result: Result<()> = pool.install(|| {
        pending.par_iter().try_for_each(|spec| {
            let start = Instant::now();
            let outcome = execute_run(spec, &manifest.protocol);
            let elapsed = start.elapsed().as_secs_f64();
            let mut sink = sink.lock().expect("sink lock poisoned");
            match outcome {
                Ok(record) => {
                    let mut line = record.to_line()?;
                    line.push('\n');
                    sink.results.write_all(line.as_bytes())?;
                    sink.results.flush()?;
                    let label = spec.label();
                    let mut t = serde_json::to_string(&TimingLine {
                        cell: &label,
                        duration_s: elapsed,
                    })?;
                    t.push('\n');
                    sink.timings.write_all(t.as_bytes())?;
                    sink.executed += 1;
                }
                Err(e) => sink.failures.push(CellFailure {
                    cell: spec.label(),
                    error: e.to_string(),
                }),
            }
            Ok(())
        })
    });
    write_result?;
    let sink = sink.into_inner().expect("sink lock poisoned");
    drop(sink.results);

    canonicalize_store(&results_path, &order)?;
    Ok(SweepReport {
        total: cells.len(),
        executed: sink.executed,
        skipped,
        failed: sink.failures,
        results_path,
    })
}

/// Rewrites the store sorted by grid position.
fn canonicalize_store(path: &Path, order: &HashMap<CellKey, usize>) -> Result<()> {
    let mut records = load_records(path)?;
    records.sort_by_key(|r| order.get(&r.key()).copied().unwrap_or(usize::MAX));
    let mut body = String::new();
    for r in &records {
        body.push_str(&r.to_line()?);
        body.push('\n');
    }
    let tmp = path.with_extension("jsonl.tmp");
    fs::write(&tmp, body)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
