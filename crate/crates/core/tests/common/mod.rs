//! Shared helpers for the integration tests: fixture loading, trace-file
//! streaming and an independent BKT replay of recorded sessions.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use fastforward::config::{ExperimentConfig, Overrides};
use fastforward::session::Environment;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture_config(name: &str, n_students: Option<u64>, out: Option<&Path>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(fixture(name)).expect("fixture config");
    cfg.apply(&Overrides {
        n_students,
        output_dir: out.map(Path::to_path_buf),
        ..Default::default()
    })
    .unwrap();
    cfg
}

pub fn fixture_env() -> Environment {
    fixture_config("rq2.cfg", None, None).environment().unwrap()
}

/// Plain BKT parameters for the replay, read straight off a config.
#[derive(Debug, Clone, Copy)]
pub struct Bkt {
    pub p_init: f64,
    pub learn: f64,
    pub guess: f64,
    pub slip: f64,
    pub threshold: f64,
}

impl Bkt {
    pub fn from_config(cfg: &ExperimentConfig) -> Bkt {
        assert!(cfg.bkt_skills.is_empty(), "replay assumes uniform BKT parameters");
        Bkt {
            p_init: cfg.bkt.p_init,
            learn: cfg.bkt.p_learn,
            guess: cfg.bkt.p_guess,
            slip: cfg.bkt.p_slip,
            threshold: cfg.bkt.mastery_threshold,
        }
    }

    pub fn step(&self, p: f64, correct: bool) -> f64 {
        let post = if correct {
            let a = p * (1.0 - self.slip);
            a / (a + (1.0 - p) * self.guess)
        } else {
            let a = p * self.slip;
            a / (a + (1.0 - p) * (1.0 - self.guess))
        };
        post + (1.0 - post) * self.learn
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub student: u64,
    pub selector: String,
    pub ff: bool,
    pub problem: String,
    pub step: usize,
    pub skill: String,
    pub mastered_before: bool,
    pub correct: Option<bool>,
    pub fast_forwarded: bool,
}

fn flag(s: &str) -> bool {
    match s {
        "1" => true,
        "0" => false,
        other => panic!("bad 0/1 field {other:?}"),
    }
}

/// Calls `visit` once per recorded session, in file order.
pub fn for_each_session(path: &Path, mut visit: impl FnMut(&[TraceRow])) -> usize {
    let mut reader = csv::Reader::from_path(path).expect("trace file");
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["student", "selector", "ff", "problem", "step", "skill", "mastered_before", "correct", "fast_forwarded"]
    );
    let mut current: Vec<TraceRow> = Vec::new();
    let mut sessions = 0;
    for rec in reader.records() {
        let r = rec.unwrap();
        let row = TraceRow {
            student: r[0].parse().unwrap(),
            selector: r[1].to_string(),
            ff: flag(&r[2]),
            problem: r[3].to_string(),
            step: r[4].parse().unwrap(),
            skill: r[5].to_string(),
            mastered_before: flag(&r[6]),
            correct: (!r[7].is_empty()).then(|| flag(&r[7])),
            fast_forwarded: flag(&r[8]),
        };
        if let Some(last) = current.last() {
            if (last.student, &last.selector, last.ff) != (row.student, &row.selector, row.ff) {
                visit(&current);
                sessions += 1;
                current.clear();
            }
        }
        current.push(row);
    }
    if !current.is_empty() {
        visit(&current);
        sessions += 1;
    }
    sessions
}

/// Metrics and safety checks recomputed from a session's rows alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Replayed {
    pub attempted: u64,
    pub overpractice_by_skill: Vec<u64>,
    pub overpractice_total: u64,
    pub underpractice: u64,
    pub mastered_all: bool,
    pub steps_to_mastery: Option<u64>,
    /// Fast-forwarded rows whose skill was not mastered at that point.
    pub unsafe_skips: usize,
    /// Rows whose recorded `mastered_before` disagrees with the replay.
    pub flag_mismatches: usize,
}

pub fn replay(rows: &[TraceRow], skills: &[String], bkt: Bkt) -> Replayed {
    let idx = |name: &str| skills.iter().position(|s| s == name).expect("known skill");
    let mut p = vec![bkt.p_init; skills.len()];
    let mastered = |p: &[f64]| p.iter().all(|&x| x >= bkt.threshold);
    let mut out = Replayed {
        attempted: 0,
        overpractice_by_skill: vec![0; skills.len()],
        overpractice_total: 0,
        underpractice: 0,
        mastered_all: false,
        steps_to_mastery: mastered(&p).then_some(0),
        unsafe_skips: 0,
        flag_mismatches: 0,
    };
    for row in rows {
        let k = idx(&row.skill);
        let was = p[k] >= bkt.threshold;
        if was != row.mastered_before {
            out.flag_mismatches += 1;
        }
        if row.fast_forwarded {
            assert!(row.correct.is_none(), "fast-forwarded row with a response");
            if !was {
                out.unsafe_skips += 1;
            }
            continue;
        }
        out.attempted += 1;
        if was {
            out.overpractice_by_skill[k] += 1;
            out.overpractice_total += 1;
        }
        p[k] = bkt.step(p[k], row.correct.expect("attempted row without a response"));
        if out.steps_to_mastery.is_none() && mastered(&p) {
            out.steps_to_mastery = Some(out.attempted);
        }
    }
    out.underpractice = p.iter().filter(|&&x| x < bkt.threshold).count() as u64;
    out.mastered_all = out.underpractice == 0;
    out
}
