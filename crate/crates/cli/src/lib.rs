//! Command implementations behind the `fraccol` binary.
//!
//! Every command writes its outputs under `--out-dir` and returns an
//! [`Outcome`]; the binary maps `Complete` to exit 0, `Partial` (some scenes
//! failed) to 2 and any [`CliError`] to 1.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use fraccol_core::behavior::{load_behavior_model, BehaviorModel};
use fraccol_core::risk::{CorpusReport, Framework, GtSplit, QaReport, SceneEvaluation, Verdict};
use fraccol_core::synth::{generate_corpus, parse_spec};
use fraccol_core::{
    aggregate_corpus, load_engine_config, parse_scene, run_scene, serialize_scene, validate_scene,
    EngineConfig, SeverityLevel, SeverityPmf,
};

#[derive(Debug, Parser)]
#[command(name = "fraccol", version, about = "Fractional collision risk for two-agent conflicts")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Engine configuration (TOML or JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores). Overrides the configured value.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Resampling step in seconds. Overrides the configured value.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate scene files (or directories of `*.json`) into result files.
    Evaluate { inputs: Vec<PathBuf> },
    /// Run the three data-quality checks on annotated scenes.
    Qa { inputs: Vec<PathBuf> },
    /// Build the framework x GT-collision report from result files.
    Aggregate {
        results: Vec<PathBuf>,
        /// CSV with columns scene_id, gt_severity, nrm_severity that
        /// replaces the outcomes stored in the result files.
        #[arg(long)]
        outcomes: Option<PathBuf>,
    },
    /// Generate annotated synthetic scenes from a scenario spec.
    Generate {
        spec: PathBuf,
        #[arg(short, long)]
        n: usize,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("behavior model {path}: {message}")]
    Model { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error(transparent)]
    Aggregate(#[from] fraccol_core::AggregateError),
    #[error(transparent)]
    Generate(#[from] fraccol_core::GenerateError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Complete,
    Partial,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Complete => 0,
            Outcome::Partial => 2,
        }
    }
}

/// Resolved configuration shared by all commands.
pub struct Settings {
    pub engine: EngineConfig,
    pub model: BehaviorModel,
    pub out_dir: PathBuf,
}

impl Settings {
    pub fn load(opts: &GlobalOpts) -> Result<Self, CliError> {
        let mut engine = match &opts.config {
            Some(path) => {
                let bytes = fs::read(path).map_err(io_err(path))?;
                load_engine_config(&bytes).map_err(|e| CliError::Config(e.to_string()))?
            }
            None => EngineConfig::default(),
        };
        if let Some(seed) = opts.seed {
            engine.seed = seed;
        }
        if let Some(jobs) = opts.jobs {
            engine.jobs = jobs;
        }
        if let Some(dt) = opts.dt {
            engine.dt_s = dt;
        }
        engine
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let model = match &engine.behavior_model {
            Some(rel) => {
                let path = match (&opts.config, rel.is_relative()) {
                    (Some(cfg), true) => cfg.parent().unwrap_or(Path::new(".")).join(rel),
                    _ => rel.clone(),
                };
                let bytes = fs::read(&path).map_err(io_err(&path))?;
                load_behavior_model(&bytes).map_err(|e| CliError::Model {
                    path,
                    message: e.to_string(),
                })?
            }
            None => BehaviorModel::placeholder(),
        };
        Ok(Self {
            engine,
            model,
            out_dir: opts.out_dir.clone(),
        })
    }

    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.engine.jobs)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))
    }
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let settings = Settings::load(&cli.global)?;
    fs::create_dir_all(&settings.out_dir).map_err(io_err(&settings.out_dir))?;
    let pool = settings.pool()?;
    pool.install(|| match &cli.command {
        Command::Evaluate { inputs } => {
            let summary = cmd_evaluate(inputs, &settings)?;
            report_failures(&summary.failures);
            println!(
                "evaluated {} scenes, {} failed",
                summary.results.len() + summary.failures.len(),
                summary.failures.len()
            );
            Ok(summary.outcome())
        }
        Command::Qa { inputs } => {
            let summary = cmd_qa(inputs, &settings)?;
            report_failures(&summary.failures);
            print!("{}", summary.render());
            Ok(summary.outcome())
        }
        Command::Aggregate { results, outcomes } => {
            let report = cmd_aggregate(results, outcomes.as_deref(), &settings.out_dir)?;
            for fw in Framework::ALL {
                println!("{:<13} total {}", fw.as_str(), report.total(fw));
            }
            Ok(Outcome::Complete)
        }
        Command::Generate { spec, n } => {
            let written = cmd_generate(spec, *n, &settings)?;
            println!("wrote {} scenes to {}", written.len(), settings.out_dir.display());
            Ok(Outcome::Complete)
        }
    })
}

fn report_failures(failures: &[SceneFailure]) {
    for f in failures {
        eprintln!("{}: {}", f.input.display(), f.message);
    }
}

/// Expands directories to their `*.json` files (excluding outputs of this
/// tool) and returns a sorted, de-duplicated list.
pub fn collect_inputs(inputs: &[PathBuf], suffix: &str) -> Result<Vec<PathBuf>, CliError> {
    let mut files = BTreeSet::new();
    for input in inputs {
        let meta = fs::metadata(input).map_err(io_err(input))?;
        if meta.is_dir() {
            for entry in fs::read_dir(input).map_err(io_err(input))? {
                let path = entry.map_err(io_err(input))?.path();
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
                let wanted = if suffix == ".json" {
                    name.ends_with(".json")
                        && !name.ends_with(".result.json")
                        && !name.ends_with(".error.json")
                } else {
                    name.ends_with(suffix)
                };
                if wanted && path.is_file() {
                    files.insert(path);
                }
            }
        } else {
            files.insert(input.clone());
        }
    }
    Ok(files.into_iter().collect())
}

/// Writes via a temporary sibling and rename so readers never see a
/// partial file.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    input: String,
    error: &'a str,
}

fn write_error(out_dir: &Path, input: &Path, message: &str) -> Result<PathBuf, CliError> {
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("input");
    let path = out_dir.join(format!("{stem}.error.json"));
    let record = ErrorRecord {
        input: input.display().to_string(),
        error: message,
    };
    let json = serde_json::to_string_pretty(&record).expect("error record serializes");
    write_atomic(&path, format!("{json}\n").as_bytes())?;
    Ok(path)
}

fn failure(out_dir: &Path, input: PathBuf, message: String) -> Result<SceneFailure, CliError> {
    let record = write_error(out_dir, &input, &message)?;
    Ok(SceneFailure { input, message, record })
}

fn evaluate_file(path: &Path, settings: &Settings) -> Result<SceneEvaluation, String> {
    let bytes = fs::read(path).map_err(|e| e.to_string())?;
    let scene = parse_scene(&bytes).map_err(|e| e.to_string())?;
    let violations = validate_scene(&scene);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(format!("invalid scene: {}", list.join("; ")));
    }
    run_scene(&scene, &settings.model, &settings.engine).map_err(|e| e.to_string())
}

/// A scene that could not be evaluated and the error record written for it.
#[derive(Debug, Clone)]
pub struct SceneFailure {
    pub input: PathBuf,
    pub message: String,
    pub record: PathBuf,
}

#[derive(Debug, Default)]
pub struct EvaluateSummary {
    pub results: Vec<PathBuf>,
    pub failures: Vec<SceneFailure>,
}

impl EvaluateSummary {
    pub fn outcome(&self) -> Outcome {
        if self.failures.is_empty() {
            Outcome::Complete
        } else {
            Outcome::Partial
        }
    }
}

type Evaluated = (PathBuf, Result<SceneEvaluation, String>);

/// Evaluates every input scene in parallel; results keep sorted input order.
fn evaluate_all(
    inputs: &[PathBuf],
    settings: &Settings,
) -> Result<Vec<Evaluated>, CliError> {
    let files = collect_inputs(inputs, ".json")?;
    Ok(files
        .par_iter()
        .map(|path| (path.clone(), evaluate_file(path, settings)))
        .collect())
}

/// Writes `<scene_id>.result.json` per scene, or `<stem>.error.json` for
/// inputs that fail, in sorted input order.
pub fn cmd_evaluate(inputs: &[PathBuf], settings: &Settings) -> Result<EvaluateSummary, CliError> {
    let evaluated = evaluate_all(inputs, settings)?;
    let mut summary = EvaluateSummary::default();
    let mut seen = BTreeSet::new();
    for (input, outcome) in evaluated {
        let outcome = outcome.and_then(|e| {
            if seen.insert(e.scene_id.clone()) {
                Ok(e)
            } else {
                Err(format!("duplicate scene id `{}`", e.scene_id))
            }
        });
        match outcome {
            Ok(eval) => {
                let path = settings.out_dir.join(format!("{}.result.json", eval.scene_id));
                let json = serde_json::to_string_pretty(&eval).expect("result serializes");
                write_atomic(&path, format!("{json}\n").as_bytes())?;
                summary.results.push(path);
            }
            Err(message) => summary.failures.push(failure(&settings.out_dir, input, message)?),
        }
    }
    Ok(summary)
}

#[derive(Debug, Serialize)]
struct QaRow<'a> {
    scene_id: &'a str,
    gt_severity: &'a str,
    check1: &'a str,
    check2: &'a str,
    check3: &'a str,
    check1_evidence: &'a str,
    check2_evidence: &'a str,
    check3_evidence: &'a str,
}

#[derive(Debug, Default)]
pub struct QaSummary {
    pub reports: Vec<QaReport>,
    pub failures: Vec<SceneFailure>,
}

impl QaSummary {
    /// `(passed, applicable)` for check `k` (0-based).
    pub fn counts(&self, k: usize) -> (usize, usize) {
        let applicable = self
            .reports
            .iter()
            .filter(|r| r.reproduced[k].verdict != Verdict::NotApplicable);
        let (mut pass, mut total) = (0, 0);
        for r in applicable {
            total += 1;
            pass += usize::from(r.reproduced[k].verdict == Verdict::Pass);
        }
        (pass, total)
    }

    pub fn render(&self) -> String {
        let mut out = format!("qa: {} scenes, {} failed to evaluate\n", self.reports.len(), self.failures.len());
        for k in 0..3 {
            let (pass, total) = self.counts(k);
            let rate = if total == 0 {
                "n/a".to_string()
            } else {
                format!("{:.1}%", 100.0 * pass as f64 / total as f64)
            };
            out.push_str(&format!("check{}: {pass}/{total} pass ({rate})\n", k + 1));
        }
        for r in &self.reports {
            for (k, c) in r.reproduced.iter().enumerate() {
                if c.verdict == Verdict::Fail {
                    out.push_str(&format!("  {} check{}: {}\n", r.scene_id, k + 1, c.evidence));
                }
            }
        }
        out
    }

    pub fn outcome(&self) -> Outcome {
        if self.failures.is_empty() {
            Outcome::Complete
        } else {
            Outcome::Partial
        }
    }
}

/// Runs the checks and writes `qa.csv`. Check failures are reported, not
/// treated as errors.
pub fn cmd_qa(inputs: &[PathBuf], settings: &Settings) -> Result<QaSummary, CliError> {
    let evaluated = evaluate_all(inputs, settings)?;
    let mut summary = QaSummary::default();
    for (input, outcome) in evaluated {
        match outcome {
            Ok(eval) => summary.reports.push(eval.qa),
            Err(message) => summary.failures.push(failure(&settings.out_dir, input, message)?),
        }
    }
    summary.reports.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    let path = settings.out_dir.join("qa.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &summary.reports {
        let gt = r.gt_severity.map(|l| l.as_str()).unwrap_or("");
        let [c1, c2, c3] = &r.reproduced;
        w.serialize(QaRow {
            scene_id: &r.scene_id,
            gt_severity: gt,
            check1: c1.verdict.as_str(),
            check2: c2.verdict.as_str(),
            check3: c3.verdict.as_str(),
            check1_evidence: &c1.evidence,
            check2_evidence: &c2.evidence,
            check3_evidence: &c3.evidence,
        })?;
    }
    if summary.reports.is_empty() {
        w.write_record([
            "scene_id",
            "gt_severity",
            "check1",
            "check2",
            "check3",
            "check1_evidence",
            "check2_evidence",
            "check3_evidence",
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io {
        path: path.clone(),
        source: e.into_error(),
    })?;
    write_atomic(&path, &bytes)?;
    Ok(summary)
}

/// The subset of a result file that aggregation needs.
#[derive(Debug, Deserialize)]
struct ResultRecord {
    scene_id: String,
    result: PmfRecord,
    gt_severity: SeverityLevel,
    nrm_outcome: NrmRecord,
}

#[derive(Debug, Deserialize)]
struct PmfRecord {
    pmf: SeverityPmf,
}

#[derive(Debug, Deserialize)]
struct NrmRecord {
    severity: SeverityLevel,
}

#[derive(Debug, Deserialize)]
struct OutcomeRow {
    scene_id: String,
    gt_severity: SeverityLevel,
    nrm_severity: SeverityLevel,
}

pub const REPORT_HEADER: [&str; 7] = ["framework", "gt_collision", "L0", "L1", "L2", "NC", "Total"];

/// Table layout: one row per framework and GT split, in the order
/// fractional, ground_truth, nrm and yes, no, all.
pub fn report_csv(report: &CorpusReport) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER)?;
    for fw in Framework::ALL {
        for split in GtSplit::ALL {
            let mut row = vec![fw.as_str().to_string(), split.as_str().to_string()];
            row.extend(report.row(fw, split).values().iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.into_inner().map_err(|e| CliError::Io {
        path: PathBuf::from("corpus_report.csv"),
        source: e.into_error(),
    })
}

/// Aggregates result files into `corpus_report.csv`.
pub fn cmd_aggregate(
    results: &[PathBuf],
    outcomes: Option<&Path>,
    out_dir: &Path,
) -> Result<CorpusReport, CliError> {
    let mut pmfs = BTreeMap::new();
    let mut gt = BTreeMap::new();
    let mut nrm = BTreeMap::new();
    for path in collect_inputs(results, ".result.json")? {
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let rec: ResultRecord = serde_json::from_slice(&bytes).map_err(|e| CliError::Input {
            path: path.clone(),
            message: e.to_string(),
        })?;
        if pmfs.insert(rec.scene_id.clone(), rec.result.pmf).is_some() {
            return Err(CliError::Input {
                path,
                message: format!("duplicate scene id `{}`", rec.scene_id),
            });
        }
        gt.insert(rec.scene_id.clone(), rec.gt_severity);
        nrm.insert(rec.scene_id, rec.nrm_outcome.severity);
    }
    if let Some(path) = outcomes {
        gt.clear();
        nrm.clear();
        let mut r = csv::Reader::from_path(path)?;
        for row in r.deserialize() {
            let row: OutcomeRow = row?;
            gt.insert(row.scene_id.clone(), row.gt_severity);
            nrm.insert(row.scene_id, row.nrm_severity);
        }
    }
    let report = aggregate_corpus(&pmfs, &gt, &nrm)?;
    write_atomic(&out_dir.join("corpus_report.csv"), &report_csv(&report)?)?;
    Ok(report)
}

/// Writes `n` generated scenes as `<scene_id>.json`.
pub fn cmd_generate(spec_path: &Path, n: usize, settings: &Settings) -> Result<Vec<PathBuf>, CliError> {
    let bytes = fs::read(spec_path).map_err(io_err(spec_path))?;
    let spec = parse_spec(&bytes)?;
    let scenes = generate_corpus(&spec, &settings.model, &settings.engine, settings.engine.seed, n)?;
    let mut written = Vec::with_capacity(scenes.len());
    for scene in &scenes {
        let path = settings.out_dir.join(format!("{}.json", scene.scene_id));
        write_atomic(&path, format!("{}\n", serialize_scene(scene)).as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directory_inputs_skip_tool_outputs() {
        let tmp = tempfile::tempdir().unwrap();
        for name in ["b.json", "a.json", "a.result.json", "a.error.json", "notes.txt"] {
            fs::write(tmp.path().join(name), "{}").unwrap();
        }
        let scenes = collect_inputs(&[tmp.path().to_path_buf()], ".json").unwrap();
        let names: Vec<_> = scenes.iter().map(|p| p.file_name().unwrap().to_str().unwrap()).collect();
        assert_eq!(names, ["a.json", "b.json"]);
        let results = collect_inputs(&[tmp.path().to_path_buf()], ".result.json").unwrap();
        assert_eq!(results.len(), 1);
    }

    #[test]
    fn empty_report_has_the_full_layout() {
        let report = aggregate_corpus(&BTreeMap::new(), &BTreeMap::new(), &BTreeMap::new()).unwrap();
        let text = String::from_utf8(report_csv(&report).unwrap()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[1], "fractional,yes,0,0,0,0,0");
        assert_eq!(lines[6], "ground_truth,all,0,0,0,0,0");
    }
}
