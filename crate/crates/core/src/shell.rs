//! Configuration, file formats and the command workflows.
//!
//! Everything on disk is flat text: TOML for configuration, comma-separated
//! files for events, grids, traces and reports, and JSON lines for the
//! retained draws. A fitted chain is stored as a directory:
//!
//! | file | contents |
//! |---|---|
//! | `config.toml` | the effective configuration |
//! | `meta.json` | region, model, inducing grid and chain statistics |
//! | `events_train.csv`, `events_test.csv` | the split data |
//! | `split.csv` | which input event went where |
//! | `samples.jsonl` | one retained draw per line |
//! | `trace.csv` | per-iteration statistics |
//! | `diagnostics.csv` | effective sample sizes and R-hat |
//! | `timing.csv` | wall-clock timings (the only nondeterministic file) |
//! | `truth.json` | copied from the data directory when present |

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    diagnostics, run_chain, summarize, ChainOutput, ModelKind, PosteriorSample, RunConfig, Timing, TraceDiagnostics, TraceRow,
};
use crate::genesis::{sample_ground_truth, thin_events, GroundTruth, TruthConfig};
use crate::metrics::{l2_error, predictive_loglik, Kde, PredictiveScore, Quadrature};
use crate::region::{EventSet, Point, Region};
use crate::sgcp::{PriorConfig, SamplerSettings};
use crate::thinning::{RateLadder, DEFAULT_SLACK};
use crate::{Error, Result};

pub const CONFIG_FILE: &str = "config.toml";
pub const META_FILE: &str = "meta.json";
pub const TRAIN_EVENTS_FILE: &str = "events_train.csv";
pub const TEST_EVENTS_FILE: &str = "events_test.csv";
pub const SPLIT_FILE: &str = "split.csv";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const TRACE_FILE: &str = "trace.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const TRUTH_FILE: &str = "truth.json";
pub const REPORT_FILE: &str = "report.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Default for RegionSpec {
    fn default() -> Self {
        RegionSpec {
            lower: vec![0.0],
            upper: vec![1.0],
        }
    }
}

/// Chain settings as they appear in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSpec {
    pub n_iters: usize,
    pub burn_in: usize,
    pub thin_every: usize,
    pub parallel_workers: usize,
    /// Increasing rate levels ending in 1.
    pub rate_levels: Vec<f64>,
    pub rate_slack: f64,
    pub num_latent: usize,
    /// Inducing points per axis; 20 in one dimension and 8 otherwise when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_per_axis: Option<usize>,
    pub grid_margin: f64,
    pub model: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_phi: Option<f64>,
    pub independent_phi: f64,
    pub phi_step: f64,
    pub phi_target_accept: f64,
    pub latent_slice_steps: usize,
}

impl Default for ChainSpec {
    fn default() -> Self {
        let r = RunConfig::default();
        ChainSpec {
            n_iters: r.n_iters,
            burn_in: r.burn_in,
            thin_every: r.thin_every,
            parallel_workers: r.parallel_workers,
            rate_levels: r.rate_ladder.levels().to_vec(),
            rate_slack: r.rate_ladder.slack(),
            num_latent: r.num_latent,
            grid_per_axis: None,
            grid_margin: r.grid_margin,
            model: r.model,
            initial_phi: r.initial_phi,
            independent_phi: r.independent_phi,
            phi_step: r.phi_step,
            phi_target_accept: r.phi_target_accept,
            latent_slice_steps: r.latent_slice_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSpec {
    /// Quadrature nodes per axis; 512 in one dimension and 64 otherwise when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature_resolution: Option<usize>,
    /// Fraction of events kept for training.
    pub split_fraction: f64,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec {
            quadrature_resolution: None,
            split_fraction: 0.75,
        }
    }
}

/// The full configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub region: RegionSpec,
    pub generate: TruthConfig,
    pub chain: ChainSpec,
    pub priors: PriorConfig,
    pub sampler: SamplerSettings,
    pub evaluation: EvalSpec,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            region: RegionSpec::default(),
            generate: TruthConfig::default(),
            chain: ChainSpec::default(),
            priors: PriorConfig::default(),
            sampler: SamplerSettings::default(),
            evaluation: EvalSpec::default(),
        }
    }
}

impl Config {
    /// Parses and validates.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text).map_err(|e| Error::Validation(format!("configuration: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::from_toml_str(&text).map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Validation(format!("cannot encode configuration: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let region = self.region()?;
        self.generate.validate()?;
        self.run_config()?.validate()?;
        self.quadrature(&region)?;
        let f = self.evaluation.split_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Parameter(format!("split fraction must lie in (0, 1], got {f}")));
        }
        Ok(())
    }

    pub fn region(&self) -> Result<Region> {
        Region::new(self.region.lower.clone(), self.region.upper.clone())
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let c = &self.chain;
        Ok(RunConfig {
            n_iters: c.n_iters,
            burn_in: c.burn_in,
            thin_every: c.thin_every,
            seed: self.seed,
            parallel_workers: c.parallel_workers,
            rate_ladder: RateLadder::new(c.rate_levels.clone(), c.rate_slack)?,
            num_latent: c.num_latent,
            grid_per_axis: c.grid_per_axis.unwrap_or(default_grid_per_axis(self.region()?.dim())),
            grid_margin: c.grid_margin,
            priors: self.priors,
            sampler: self.sampler,
            model: c.model,
            initial_phi: c.initial_phi,
            independent_phi: c.independent_phi,
            phi_step: c.phi_step,
            phi_target_accept: c.phi_target_accept,
            latent_slice_steps: c.latent_slice_steps,
        })
    }

    pub fn quadrature(&self, region: &Region) -> Result<Quadrature> {
        match self.evaluation.quadrature_resolution {
            Some(n) => Quadrature::new(region, n),
            None => Ok(Quadrature::default_for(region)),
        }
    }

    /// Shorthand for a halving ladder with `b` levels.
    pub fn set_halving_ladder(&mut self, b: usize) -> Result<()> {
        self.chain.rate_levels = RateLadder::halving(b)?.levels().to_vec();
        self.chain.rate_slack = DEFAULT_SLACK;
        Ok(())
    }
}

/// Default inducing points per axis for a region of dimension `dim`.
pub fn default_grid_per_axis(dim: usize) -> usize {
    if dim == 1 {
        20
    } else {
        8
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Validation(format!("{}: {other:?}", path.display())),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn event_header(dim: usize) -> Vec<String> {
    std::iter::once("process_id".to_string())
        .chain((1..=dim).map(|a| format!("x{a}")))
        .collect()
}

/// Writes `process_id,x1[,x2]` rows for every set, in order.
pub fn write_events(path: &Path, sets: &[EventSet], dim: usize) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(event_header(dim)).map_err(|e| csv_error(path, e))?;
    for s in sets {
        for p in &s.points {
            let row = std::iter::once(s.process_id.to_string()).chain(p.iter().map(|v| v.to_string()));
            w.write_record(row).map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One parsed event with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRow {
    pub process_id: usize,
    pub point: Point,
    pub line: usize,
}

/// Parses an event file, checking the header and every coordinate.
pub fn read_event_file(path: &Path, dim: usize) -> Result<Vec<EventRow>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| csv_error(path, e))?.iter().map(str::to_string).collect();
    if header != event_header(dim) {
        return Err(Error::Validation(format!(
            "{}: expected header {:?}, found {header:?}",
            path.display(),
            event_header(dim).join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let bad = |what: String| Error::Validation(format!("{}: row {line}: {what}", path.display()));
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != dim + 1 {
            return Err(bad(format!("expected {} fields, found {}", dim + 1, rec.len())));
        }
        let process_id = rec[0]
            .parse::<usize>()
            .map_err(|_| bad(format!("process id {:?} is not a nonnegative integer", &rec[0])))?;
        let point = (1..=dim)
            .map(|a| match rec[a].parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(bad(format!("coordinate {:?} is not a finite number", &rec[a]))),
            })
            .collect::<Result<Point>>()?;
        rows.push(EventRow { process_id, point, line });
    }
    Ok(rows)
}

/// Reads event files into contiguous processes.
///
/// With several files, each file is one process in the given order and may
/// carry a single process id (or none, when empty). A single file may hold
/// several ids, which are mapped to `0..D` in increasing order; an empty
/// single file is one process without events. Events outside `region` are
/// rejected with their file and row.
pub fn load_events(paths: &[PathBuf], region: &Region) -> Result<Vec<EventSet>> {
    if paths.is_empty() {
        return Err(Error::Validation("no event files given".into()));
    }
    let check = |path: &Path, row: &EventRow| -> Result<()> {
        if !region.contains(&row.point) {
            return Err(Error::Validation(format!(
                "{}: row {}: event {:?} lies outside the region",
                path.display(),
                row.line,
                row.point
            )));
        }
        Ok(())
    };
    if paths.len() == 1 {
        let rows = read_event_file(&paths[0], region.dim())?;
        for r in &rows {
            check(&paths[0], r)?;
        }
        let mut ids: Vec<usize> = rows.iter().map(|r| r.process_id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() {
            return Ok(vec![EventSet::empty(0)]);
        }
        let mut sets: Vec<EventSet> = (0..ids.len()).map(EventSet::empty).collect();
        for r in rows {
            let d = ids.binary_search(&r.process_id).expect("id was collected");
            sets[d].points.push(r.point);
        }
        return Ok(sets);
    }
    paths
        .iter()
        .enumerate()
        .map(|(d, path)| {
            let rows = read_event_file(path, region.dim())?;
            let mut set = EventSet::empty(d);
            if let Some(first) = rows.first() {
                for r in &rows {
                    check(path, r)?;
                    if r.process_id != first.process_id {
                        return Err(Error::Validation(format!(
                            "{}: row {}: process id {} differs from the file's id {}",
                            path.display(),
                            r.line,
                            r.process_id,
                            first.process_id
                        )));
                    }
                }
            }
            set.points = rows.into_iter().map(|r| r.point).collect();
            Ok(set)
        })
        .collect()
}

/// A random train/test partition of each process's events.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<EventSet>,
    pub test: Vec<EventSet>,
    /// `true` where the input event went to training.
    pub in_train: Vec<Vec<bool>>,
    pub fraction: f64,
}

/// Sends each event to training with probability `fraction`.
pub fn split_events(sets: &[EventSet], fraction: f64, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
        in_train: Vec::new(),
        fraction,
    };
    for s in sets {
        let mask: Vec<bool> = s.points.iter().map(|_| fraction >= 1.0 || rng.random::<f64>() < fraction).collect();
        let pick = |keep: bool| {
            EventSet::new(
                s.process_id,
                s.points.iter().zip(&mask).filter(|(_, m)| **m == keep).map(|(p, _)| p.clone()).collect(),
            )
        };
        split.train.push(pick(true));
        split.test.push(pick(false));
        split.in_train.push(mask);
    }
    split
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArchiveMeta {
    region: Region,
    model: ModelKind,
    num_processes: usize,
    grid: Vec<Point>,
    rel_jitter: f64,
    peak_matrix_side: usize,
    phi_acceptance: f64,
    split_fraction: f64,
}

/// A chain read back from its directory.
#[derive(Debug, Clone)]
pub struct Archive {
    pub config: Config,
    pub chain: ChainOutput,
    pub test: Vec<EventSet>,
    pub split_fraction: f64,
    /// As stored in the archive.
    pub diagnostics: Vec<TraceDiagnostics>,
    pub truth: Option<GroundTruth>,
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

/// Writes every archive file into `dir`.
pub fn write_archive(dir: &Path, config: &Config, chain: &ChainOutput, split: &Split, truth: Option<&GroundTruth>) -> Result<()> {
    create_dir(dir)?;
    let dim = chain.region.dim();
    write_text(&dir.join(CONFIG_FILE), &config.to_toml()?)?;
    let meta = ArchiveMeta {
        region: chain.region.clone(),
        model: chain.model,
        num_processes: chain.num_processes(),
        grid: chain.grid.clone(),
        rel_jitter: chain.rel_jitter,
        peak_matrix_side: chain.peak_matrix_side,
        phi_acceptance: chain.phi_acceptance,
        split_fraction: split.fraction,
    };
    let meta = serde_json::to_string_pretty(&meta).map_err(|e| Error::Validation(e.to_string()))?;
    write_text(&dir.join(META_FILE), &meta)?;
    write_events(&dir.join(TRAIN_EVENTS_FILE), &split.train, dim)?;
    write_events(&dir.join(TEST_EVENTS_FILE), &split.test, dim)?;

    let path = dir.join(SPLIT_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["process_id", "index", "set"]).map_err(|e| csv_error(&path, e))?;
    for (d, mask) in split.in_train.iter().enumerate() {
        for (i, m) in mask.iter().enumerate() {
            let set = if *m { "train" } else { "test" };
            w.write_record([d.to_string(), i.to_string(), set.to_string()])
                .map_err(|e| csv_error(&path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(SAMPLES_FILE);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = BufWriter::new(file);
    for s in &chain.samples {
        let line = serde_json::to_string(s).map_err(|e| Error::Validation(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io(&path, e))?;
    }
    out.flush().map_err(|e| Error::io(&path, e))?;

    write_rows(&dir.join(TRACE_FILE), &chain.trace)?;
    // A single retained draw has no diagnostics; the file is left empty.
    let diag = if chain.samples.len() >= 2 { diagnostics(&chain.samples)? } else { Vec::new() };
    write_rows(&dir.join(DIAGNOSTICS_FILE), &diag)?;
    write_rows(&dir.join(TIMING_FILE), &[chain.timing])?;
    if let Some(t) = truth {
        write_text(&dir.join(TRUTH_FILE), &t.to_json()?)?;
    }
    Ok(())
}

fn read_events_split(path: &Path, region: &Region, d: usize) -> Result<Vec<EventSet>> {
    let mut sets: Vec<EventSet> = (0..d).map(EventSet::empty).collect();
    for r in read_event_file(path, region.dim())? {
        if r.process_id >= d {
            return Err(Error::Validation(format!(
                "{}: row {}: process id {} beyond the archive's {d} processes",
                path.display(),
                r.line,
                r.process_id
            )));
        }
        sets[r.process_id].points.push(r.point);
    }
    Ok(sets)
}

pub fn read_archive(dir: &Path) -> Result<Archive> {
    let config = Config::load(&dir.join(CONFIG_FILE))?;
    let meta: ArchiveMeta = serde_json::from_str(&read_text(&dir.join(META_FILE))?)
        .map_err(|e| Error::Validation(format!("{}: {e}", dir.join(META_FILE).display())))?;
    let region = Region::new(meta.region.lower().to_vec(), meta.region.upper().to_vec())?;
    let d = meta.num_processes;
    let data = read_events_split(&dir.join(TRAIN_EVENTS_FILE), &region, d)?;
    let test = read_events_split(&dir.join(TEST_EVENTS_FILE), &region, d)?;

    let path = dir.join(SAMPLES_FILE);
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: PosteriorSample = serde_json::from_str(&line)
            .map_err(|e| Error::Validation(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        if s.processes.len() != d {
            return Err(Error::Validation(format!(
                "{}: line {}: {} processes, archive has {d}",
                path.display(),
                i + 1,
                s.processes.len()
            )));
        }
        samples.push(s);
    }
    let trace: Vec<TraceRow> = read_rows(&dir.join(TRACE_FILE))?;
    let timing: Vec<Timing> = read_rows(&dir.join(TIMING_FILE))?;
    let diagnostics: Vec<TraceDiagnostics> = read_rows(&dir.join(DIAGNOSTICS_FILE))?;
    let truth_path = dir.join(TRUTH_FILE);
    let truth = if truth_path.exists() {
        Some(GroundTruth::from_json(&read_text(&truth_path)?)?)
    } else {
        None
    };
    Ok(Archive {
        config,
        chain: ChainOutput {
            region,
            model: meta.model,
            data,
            grid: meta.grid,
            rel_jitter: meta.rel_jitter,
            samples,
            trace,
            timing: timing.first().copied().unwrap_or_default(),
            peak_matrix_side: meta.peak_matrix_side,
            phi_acceptance: meta.phi_acceptance,
        },
        test,
        split_fraction: meta.split_fraction,
        diagnostics,
        truth,
    })
}

/// Output of [`cmd_generate`].
#[derive(Debug, Clone)]
pub struct Generated {
    pub truth: GroundTruth,
    pub events: Vec<EventSet>,
    pub files: Vec<PathBuf>,
}

/// Draws a ground truth and one event file per process into `out`.
pub fn cmd_generate(config: &Config, out: &Path) -> Result<Generated> {
    config.validate()?;
    let region = config.region()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let truth = sample_ground_truth(&region, &config.generate, &mut rng)?;
    create_dir(out)?;
    let mut events = Vec::new();
    let mut files = Vec::new();
    for d in 0..truth.num_processes() {
        let ev = thin_events(
            |x| truth.intensity(d, x),
            truth.processes[d].lambda_star,
            d,
            &region,
            &mut rng,
        )?;
        let path = out.join(format!("events_{d}.csv"));
        write_events(&path, std::slice::from_ref(&ev), region.dim())?;
        files.push(path);
        events.push(ev);
    }
    write_text(&out.join(TRUTH_FILE), &truth.to_json()?)?;
    Ok(Generated { truth, events, files })
}

/// Splits the events, runs the chain on the training part and writes the
/// archive. A `truth.json` beside the first event file is carried along.
pub fn cmd_fit(config: &Config, event_files: &[PathBuf], out: &Path) -> Result<ChainOutput> {
    config.validate()?;
    let region = config.region()?;
    let events = load_events(event_files, &region)?;
    let split = split_events(&events, config.evaluation.split_fraction, config.seed);
    let chain = run_chain(&split.train, &region, &config.run_config()?)?;
    let truth_path = event_files[0].parent().map(|p| p.join(TRUTH_FILE));
    let truth = match truth_path {
        Some(p) if p.exists() => Some(GroundTruth::from_json(&read_text(&p)?)?),
        _ => None,
    };
    if let Some(t) = &truth {
        if t.num_processes() != events.len() {
            return Err(Error::Validation(format!(
                "truth manifest has {} processes, data has {}",
                t.num_processes(),
                events.len()
            )));
        }
    }
    write_archive(out, config, &chain, &split, truth.as_ref())?;
    Ok(chain)
}

/// One line of a metric report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub model: String,
    pub metric: String,
    pub value: f64,
}

pub const MODEL_OURS: &str = "ours";
pub const MODEL_INDEPENDENT: &str = "independent-sgcp";
pub const MODEL_KDE: &str = "kde";

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn report_to_string(rows: &[ReportRow]) -> String {
    let mut s = String::from("dataset,model,metric,value\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.dataset, r.model, r.metric, r.value));
    }
    s
}

fn score_rows(rows: &mut Vec<ReportRow>, dataset: &str, model: &str, score: PredictiveScore) {
    rows.push(ReportRow {
        dataset: dataset.into(),
        model: model.into(),
        metric: "predictive_ll".into(),
        value: score.log_mean_lik,
    });
    rows.push(ReportRow {
        dataset: dataset.into(),
        model: model.into(),
        metric: "predictive_ll_mean_log".into(),
        value: score.mean_log_lik,
    });
}

fn l2_row(rows: &mut Vec<ReportRow>, dataset: &str, model: &str, value: f64) {
    rows.push(ReportRow {
        dataset: dataset.into(),
        model: model.into(),
        metric: "l2".into(),
        value,
    });
}

/// Scores the archive's chain (and, with `baselines`, an independent chain
/// and a kernel density estimate fitted to the same training data) on held
/// out events. Without `test_files` the archive's own test split is used and
/// intensities are rescaled by the test-to-training size ratio; explicit test
/// files are scored as full realizations. L2 rows need a truth manifest in
/// the archive and compare the intensity rescaled to the full data.
pub fn cmd_eval(archive_dir: &Path, test_files: &[PathBuf], baselines: bool) -> Result<Vec<ReportRow>> {
    cmd_eval_with_seed(archive_dir, test_files, baselines, None)
}

/// [`cmd_eval`] with the independent baseline's seed overridden.
pub fn cmd_eval_with_seed(archive_dir: &Path, test_files: &[PathBuf], baselines: bool, seed: Option<u64>) -> Result<Vec<ReportRow>> {
    let archive = read_archive(archive_dir)?;
    let chain = &archive.chain;
    let region = &chain.region;
    let d_count = chain.num_processes();
    let f = archive.split_fraction;
    let (test, scale) = if test_files.is_empty() {
        (archive.test.clone(), (1.0 - f) / f)
    } else {
        (load_events(test_files, region)?, 1.0)
    };
    if test.len() != d_count {
        return Err(Error::Validation(format!(
            "test data has {} processes, archive has {d_count}",
            test.len()
        )));
    }
    if test_files.is_empty() && f >= 1.0 && test.iter().any(|t| !t.is_empty()) {
        return Err(Error::Invariant("archive without a test split holds test events".into()));
    }
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let quad = archive.config.quadrature(region)?;

    let independent = if baselines {
        let mut cfg = archive.config.run_config()?;
        cfg.model = ModelKind::Independent;
        if let Some(seed) = seed {
            cfg.seed = seed;
        }
        Some(run_chain(&chain.data, region, &cfg)?)
    } else {
        None
    };
    let truth_grid: Option<Vec<Vec<f64>>> = archive.truth.as_ref().map(|t| {
        (0..d_count)
            .map(|d| quad.points().iter().map(|x| t.intensity(d, x)).collect())
            .collect()
    });
    let full = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x / f).collect() };

    let mut rows = Vec::new();
    let ours = summarize(chain, quad.points())?;
    let theirs = independent.as_ref().map(|c| summarize(c, quad.points())).transpose()?;
    for d in 0..d_count {
        let dataset = format!("process_{d}");
        score_rows(&mut rows, &dataset, MODEL_OURS, predictive_loglik(chain, d, &test[d], &quad, scale)?);
        if let Some(tg) = &truth_grid {
            l2_row(&mut rows, &dataset, MODEL_OURS, l2_error(&full(&ours.intensity[d].mean), &tg[d], &quad)?);
        }
        if let (Some(c), Some(s)) = (&independent, &theirs) {
            score_rows(&mut rows, &dataset, MODEL_INDEPENDENT, predictive_loglik(c, d, &test[d], &quad, scale)?);
            if let Some(tg) = &truth_grid {
                l2_row(&mut rows, &dataset, MODEL_INDEPENDENT, l2_error(&full(&s.intensity[d].mean), &tg[d], &quad)?);
            }
        }
        if baselines && chain.data[d].len() >= 2 {
            let kde = Kde::fit(&chain.data[d], region)?;
            let at: Vec<f64> = test[d].points.iter().map(|x| scale * kde.eval(x)).collect();
            let grid: Vec<f64> = quad.points().iter().map(|x| kde.eval(x)).collect();
            let scaled: Vec<f64> = grid.iter().map(|v| scale * v).collect();
            let ll = crate::metrics::poisson_loglik(&at, &scaled, &quad)?;
            score_rows(&mut rows, &dataset, MODEL_KDE, PredictiveScore::from_logliks(&[ll])?);
            if let Some(tg) = &truth_grid {
                l2_row(&mut rows, &dataset, MODEL_KDE, l2_error(&full(&grid), &tg[d], &quad)?);
            }
        }
    }
    Ok(rows)
}

/// Writes `intensity_<d>.csv` and `latent_<q>.csv` with rows
/// `x1[,x2],mean,sd` on a lattice of `resolution` points per axis.
pub fn cmd_export_grid(archive_dir: &Path, resolution: usize, out: &Path) -> Result<Vec<PathBuf>> {
    if resolution == 0 {
        return Err(Error::Parameter("resolution must be positive".into()));
    }
    let archive = read_archive(archive_dir)?;
    let region = &archive.chain.region;
    let xs = region.lattice(resolution);
    let summary = summarize(&archive.chain, &xs)?;
    create_dir(out)?;
    let mut files = Vec::new();
    let surfaces = summary
        .intensity
        .iter()
        .enumerate()
        .map(|(d, s)| (format!("intensity_{d}.csv"), s))
        .chain(summary.latent.iter().enumerate().map(|(q, s)| (format!("latent_{q}.csv"), s)));
    for (name, stats) in surfaces {
        let path = out.join(name);
        let mut w = csv_writer(&path)?;
        let header: Vec<String> = (1..=region.dim())
            .map(|a| format!("x{a}"))
            .chain(["mean".to_string(), "sd".to_string()])
            .collect();
        w.write_record(&header).map_err(|e| csv_error(&path, e))?;
        for ((x, m), s) in xs.iter().zip(&stats.mean).zip(&stats.sd) {
            let row = x.iter().chain([m, s]).map(|v| v.to_string());
            w.write_record(row).map_err(|e| csv_error(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        files.push(path);
    }
    Ok(files)
}

/// Files of an archive whose bytes are fixed by the inputs and the seed.
pub const DETERMINISTIC_FILES: [&str; 8] = [
    CONFIG_FILE,
    META_FILE,
    TRAIN_EVENTS_FILE,
    TEST_EVENTS_FILE,
    SPLIT_FILE,
    SAMPLES_FILE,
    TRACE_FILE,
    DIAGNOSTICS_FILE,
];

/// Compares two archives byte for byte, timing excluded. Returns the names
/// of the files that differ.
pub fn archive_differences(a: &Path, b: &Path) -> Result<Vec<String>> {
    let mut diff = Vec::new();
    for name in DETERMINISTIC_FILES.iter().chain(&[TRUTH_FILE]) {
        let (pa, pb) = (a.join(name), b.join(name));
        let read = |p: &Path| -> Result<Option<Vec<u8>>> {
            if p.exists() {
                fs::read(p).map(Some).map_err(|e| Error::io(p, e))
            } else {
                Ok(None)
            }
        };
        if read(&pa)? != read(&pb)? {
            diff.push(name.to_string());
        }
    }
    Ok(diff)
}
