//! Experiment orchestration.
//!
//! Runs every selector x fast-forward condition over a population of
//! students and writes per-student results, condition summaries and
//! plot-ready tables. Students are simulated in parallel but results are
//! always merged in student order, so output does not depend on the worker
//! count.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;

use crate::afm::FitDiagnostics;
use crate::config::{ExperimentConfig, ResolvedConfig};
use crate::error::{Error, Result};
use crate::fit::{fit, AfmFitResult, FitSettings, StepLog};
use crate::metrics::{
    compute_student_metrics, paired_difference, reduction_report, summarize, ConditionSummary, ReductionReport,
    StudentMetrics,
};
use crate::selectors::SelectorKind;
use crate::session::{run_session, Environment, SessionConfig, StepEvent};

pub const STUDENTS_FILE: &str = "students.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const FIG2_FILE: &str = "fig2_data.csv";
pub const FIG3_FILE: &str = "fig3_data.csv";
pub const TRACE_FILE: &str = "trace.csv";
/// Timing and host details; the only output that differs between runs.
pub const META_FILE: &str = "run_meta.json";

const PARTIAL_SUFFIX: &str = ".partial";
const CHUNK: u64 = 2048;

#[derive(Debug, Clone)]
pub struct ConditionResult {
    pub selector: SelectorKind,
    pub fast_forward: bool,
    /// Indexed by student.
    pub students: Vec<StudentMetrics>,
    pub summary: ConditionSummary,
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub skills: Vec<String>,
    pub conditions: Vec<ConditionResult>,
    pub reductions: Vec<ReductionReport>,
}

impl ExperimentResults {
    pub fn condition(&self, selector: SelectorKind, fast_forward: bool) -> Option<&ConditionResult> {
        self.conditions
            .iter()
            .find(|c| c.selector == selector && c.fast_forward == fast_forward)
    }

    pub fn reduction(&self, selector: SelectorKind) -> Option<&ReductionReport> {
        self.reductions.iter().find(|r| r.selector == selector)
    }
}

/// Receives each condition's sessions in student order.
pub type TraceSink<'a> = dyn FnMut(SelectorKind, bool, u64, &[StepEvent]) -> Result<()> + 'a;

/// Simulates every planned condition. When `trace` is given, every
/// session's events are passed to it in (condition, student) order.
pub fn simulate(config: &ExperimentConfig, env: &Environment, mut trace: Option<&mut TraceSink<'_>>) -> Result<ExperimentResults> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.resolve())
        .build()
        .map_err(|e| Error::Simulation(format!("cannot start worker pool: {e}")))?;
    let keep_events = trace.is_some();
    let mut conditions = Vec::new();
    for (selector, ff) in config.conditions() {
        let mut students = Vec::with_capacity(config.n_students as usize);
        let mut start = 0;
        while start < config.n_students {
            let end = (start + CHUNK).min(config.n_students);
            let chunk: Vec<(StudentMetrics, Vec<StepEvent>)> = pool.install(|| {
                (start..end)
                    .into_par_iter()
                    .map(|student| {
                        let mut sc = SessionConfig::new(config.regime, selector, ff, config.master_seed, student);
                        sc.step_cap = config.step_cap;
                        let record = run_session(&sc, env)?;
                        let metrics = compute_student_metrics(&record, &env.bkt);
                        Ok((metrics, if keep_events { record.events } else { Vec::new() }))
                    })
                    .collect::<Result<_>>()
            })?;
            for (offset, (metrics, events)) in chunk.into_iter().enumerate() {
                if let Some(sink) = trace.as_mut() {
                    sink(selector, ff, start + offset as u64, &events)?;
                }
                students.push(metrics);
            }
            start = end;
        }
        let summary = summarize(&students, selector, ff)?;
        conditions.push(ConditionResult { selector, fast_forward: ff, students, summary });
    }

    let mut reductions = Vec::new();
    for &selector in &config.selectors {
        let with = conditions.iter().find(|c| c.selector == selector && c.fast_forward);
        let without = conditions.iter().find(|c| c.selector == selector && !c.fast_forward);
        if let (Some(with), Some(without)) = (with, without) {
            let mut report = reduction_report(&with.summary, &without.summary)?;
            report.paired = Some(paired_difference(&with.students, &without.students)?);
            reductions.push(report);
        }
    }
    Ok(ExperimentResults {
        skills: env.skills.names().to_vec(),
        conditions,
        reductions,
    })
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub results: ExperimentResults,
    pub elapsed_seconds: f64,
}

/// Loads the environment, simulates, and writes all output files. Files are
/// written under a `.partial` name and renamed only once everything succeeded.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    let env = config.environment()?;
    run_experiment_with(config, &env)
}

pub fn run_experiment_with(config: &ExperimentConfig, env: &Environment) -> Result<RunOutcome> {
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let results = if config.trace {
        let path = partial(dir, TRACE_FILE);
        let mut w = csv_writer(&path)?;
        w.write_record(["student", "selector", "ff", "problem", "step", "skill", "mastered_before", "correct", "fast_forwarded"])
            .map_err(|e| csv_error(&path, e))?;
        let mut sink = |selector: SelectorKind, ff: bool, student: u64, events: &[StepEvent]| -> Result<()> {
            for e in events {
                let problem = &env.pool.problem(e.problem).id;
                let correct = match e.correct {
                    Some(true) => "1",
                    Some(false) => "0",
                    None => "",
                };
                w.write_record([
                    student.to_string().as_str(),
                    selector.as_str(),
                    bool01(ff),
                    problem,
                    e.step_position.to_string().as_str(),
                    env.skills.name(e.skill),
                    bool01(e.was_mastered_before),
                    correct,
                    bool01(e.fast_forwarded),
                ])
                .map_err(|err| csv_error(&path, err))?;
            }
            Ok(())
        };
        let results = simulate(config, env, Some(&mut sink))?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(TRACE_FILE);
        results
    } else {
        simulate(config, env, None)?
    };

    write_students(&partial(dir, STUDENTS_FILE), &results)?;
    written.push(STUDENTS_FILE);
    write_summary(&partial(dir, SUMMARY_FILE), config, &results)?;
    written.push(SUMMARY_FILE);
    write_fig2(&partial(dir, FIG2_FILE), &results)?;
    written.push(FIG2_FILE);
    write_fig3(&partial(dir, FIG3_FILE), &results)?;
    written.push(FIG3_FILE);

    let elapsed_seconds = started.elapsed().as_secs_f64();
    let meta = serde_json::json!({
        "generator": concat!("fastforward ", env!("CARGO_PKG_VERSION")),
        "started_unix": started_unix,
        "elapsed_seconds": elapsed_seconds,
        "jobs": config.jobs.resolve(),
        "files": written,
    });
    write_json(&partial(dir, META_FILE), &meta)?;
    written.push(META_FILE);

    let mut files = Vec::new();
    for name in written {
        let to = dir.join(name);
        let from = partial(dir, name);
        fs::rename(&from, &to).map_err(|e| Error::io(&from, e))?;
        files.push(to);
    }
    Ok(RunOutcome {
        output_dir: dir.clone(),
        files,
        results,
        elapsed_seconds,
    })
}

fn partial(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}{PARTIAL_SUFFIX}"))
}

fn bool01(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Schema(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_students(path: &Path, results: &ExperimentResults) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<&str> = vec![
        "student",
        "selector",
        "ff",
        "attempted_steps",
        "overpractice_total",
        "underpractice",
        "mastered_all",
        "steps_to_mastery",
    ];
    header.extend(results.skills.iter().map(String::as_str));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for c in &results.conditions {
        for (student, m) in c.students.iter().enumerate() {
            let mut row = vec![
                student.to_string(),
                c.selector.to_string(),
                bool01(c.fast_forward).to_string(),
                m.attempted_steps.to_string(),
                m.overpractice_total.to_string(),
                m.underpractice.to_string(),
                bool01(m.mastered_all).to_string(),
                m.steps_to_mastery.map(|s| s.to_string()).unwrap_or_default(),
            ];
            row.extend(m.overpractice_by_skill.iter().map(u64::to_string));
            w.write_record(&row).map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    metadata: Metadata<'a>,
    conditions: Vec<&'a ConditionSummary>,
    reductions: &'a [ReductionReport],
}

#[derive(Serialize)]
struct Metadata<'a> {
    generator: &'static str,
    seed: u64,
    config_digest: String,
    skills: &'a [String],
    config: ResolvedConfig,
    notes: Notes,
}

#[derive(Serialize)]
struct Notes {
    overpractice: &'static str,
    underpractice: &'static str,
    pairing: &'static str,
    effect_size: &'static str,
}

const NOTES: Notes = Notes {
    overpractice: "attempted steps whose skill was already mastered (BKT posterior at or above threshold) before the attempt; fast-forwarded steps are not attempted",
    underpractice: "number of skills whose BKT posterior is below the mastery threshold when the session ends",
    pairing: "both fast-forward arms of a selector reuse each student's proficiency and response streams, so per-student differences are paired",
    effect_size: "reduction in mean overpractice divided by the standard deviation of the arm without fast-forwarding",
};

fn write_summary(path: &Path, config: &ExperimentConfig, results: &ExperimentResults) -> Result<()> {
    let file = SummaryFile {
        metadata: Metadata {
            generator: concat!("fastforward ", env!("CARGO_PKG_VERSION")),
            seed: config.master_seed,
            config_digest: format!("sha256:{}", config.digest),
            skills: &results.skills,
            config: config.resolved(),
            notes: NOTES,
        },
        conditions: results.conditions.iter().map(|c| &c.summary).collect(),
        reductions: &results.reductions,
    };
    write_json(path, &file)
}

/// One row per condition and skill: mean overpractice, for stacked bars.
fn write_fig2(path: &Path, results: &ExperimentResults) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["selector", "ff", "skill", "mean_overpractice"])
        .map_err(|e| csv_error(path, e))?;
    for c in &results.conditions {
        for (skill, mean) in results.skills.iter().zip(&c.summary.overpractice_by_skill_mean) {
            w.write_record([c.selector.as_str(), bool01(c.fast_forward), skill, &mean.to_string()])
                .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per condition: mean overpractice with +-2 SD bars, and the
/// fast-forward reduction on the fast-forward row.
fn write_fig3(path: &Path, results: &ExperimentResults) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "selector",
        "ff",
        "n_students",
        "mean_overpractice",
        "sd_overpractice",
        "lower_2sd",
        "upper_2sd",
        "reduction_pct",
    ])
    .map_err(|e| csv_error(path, e))?;
    for c in &results.conditions {
        let o = c.summary.overpractice;
        let reduction = c
            .fast_forward
            .then(|| results.reduction(c.selector).and_then(|r| r.reduction_pct))
            .flatten()
            .map(|p| p.to_string())
            .unwrap_or_default();
        w.write_record([
            c.selector.to_string(),
            bool01(c.fast_forward).to_string(),
            c.summary.n_students.to_string(),
            o.mean.to_string(),
            o.sd.to_string(),
            (o.mean - 2.0 * o.sd).to_string(),
            (o.mean + 2.0 * o.sd).to_string(),
            reduction,
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub result: AfmFitResult,
    pub diagnostics: FitDiagnostics,
    pub n_skills: usize,
}

/// Fits AFM to a step log and writes a parameters file that can be used
/// directly as an experiment's `afm_params`.
pub fn fit_log_file(log_path: impl AsRef<Path>, out_path: impl AsRef<Path>, settings: &FitSettings) -> Result<FitOutcome> {
    let log = StepLog::read(log_path)?;
    let result = fit(&log, settings)?;
    let diagnostics = result.diagnostics(&log);
    result.params.to_file(&log.skills, Some(diagnostics.clone())).write(out_path)?;
    Ok(FitOutcome {
        result,
        diagnostics,
        n_skills: log.n_skills(),
    })
}
