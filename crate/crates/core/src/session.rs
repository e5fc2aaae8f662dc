//! One simulated student's practice session.
//!
//! The tutor picks problems with a selector and traces knowledge with BKT;
//! responses come from the student's AFM model. With fast-forwarding on, a
//! problem ends as soon as every remaining step exercises a mastered skill.

use serde::{Deserialize, Serialize};

use crate::afm::{AfmParams, StudentState};
use crate::bkt::{BktModel, BktState};
use crate::error::{Error, Result};
use crate::rng::StudentStreams;
use crate::selectors::{Selector, SelectorKind};
use crate::skills::{Problem, ProblemPool, SkillId, SkillModel};

pub const DEFAULT_STEP_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Stop after this many attempted steps.
    StepBudget(u64),
    /// Replenish the pool as needed and stop only at full mastery.
    RunToMastery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionConfig {
    pub regime: Regime,
    pub selector: SelectorKind,
    pub fast_forward: bool,
    pub master_seed: u64,
    pub student_index: u64,
    /// Safety limit on attempted steps; reaching it aborts the session.
    pub step_cap: u64,
}

impl SessionConfig {
    pub fn new(regime: Regime, selector: SelectorKind, fast_forward: bool, master_seed: u64, student_index: u64) -> Self {
        SessionConfig {
            regime,
            selector,
            fast_forward,
            master_seed,
            student_index,
            step_cap: DEFAULT_STEP_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepEvent {
    /// Pool index of the problem.
    pub problem: usize,
    pub step_position: usize,
    pub skill: SkillId,
    pub was_mastered_before: bool,
    /// `None` for fast-forwarded steps.
    pub correct: Option<bool>,
    pub fast_forwarded: bool,
    /// Attempted steps so far, including this one.
    pub step_counter: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Budget,
    Mastery,
    SelectorNone,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub events: Vec<StepEvent>,
    pub final_bkt: BktState,
    pub final_student: StudentState,
    pub problems_started: u64,
    pub problems_fast_forwarded: u64,
    pub replenishes: u64,
    pub terminated_by: Termination,
}

impl SessionRecord {
    pub fn attempted_steps(&self) -> u64 {
        self.events.iter().filter(|e| !e.fast_forwarded).count() as u64
    }
}

/// Everything a session reads but never mutates.
#[derive(Debug, Clone)]
pub struct Environment {
    pub skills: SkillModel,
    pub pool: ProblemPool,
    pub bkt: BktModel,
    pub afm: AfmParams,
}

impl Environment {
    pub fn new(skills: SkillModel, pool: ProblemPool, bkt: BktModel, afm: AfmParams) -> Result<Self> {
        let env = Environment { skills, pool, bkt, afm };
        env.check_consistency()?;
        Ok(env)
    }

    pub fn check_consistency(&self) -> Result<()> {
        let n = self.skills.len();
        if self.bkt.n_skills() != n {
            return Err(Error::InvalidParam(format!(
                "BKT model covers {} skills, skill model has {n}",
                self.bkt.n_skills()
            )));
        }
        if self.afm.skills.len() != n {
            return Err(Error::InvalidParam(format!(
                "AFM parameters cover {} skills, skill model has {n}",
                self.afm.skills.len()
            )));
        }
        if self.pool.is_empty() {
            return Err(Error::InvalidParam("problem pool is empty".into()));
        }
        for p in self.pool.problems() {
            if let Some(s) = p.skills().find(|s| s.0 >= n) {
                return Err(Error::InvalidParam(format!(
                    "problem {:?} uses skill #{} outside the skill model",
                    p.id, s.0
                )));
            }
        }
        Ok(())
    }

    /// Skills that no problem exercises. Run-to-mastery cannot finish while
    /// any of these start unmastered.
    pub fn uncovered_skills(&self) -> Vec<SkillId> {
        self.pool
            .covered_skills(self.skills.len())
            .iter()
            .enumerate()
            .filter(|(_, &c)| !c)
            .map(|(i, _)| SkillId(i))
            .collect()
    }
}

/// True iff every step at `next_position` or later exercises a mastered
/// skill.
pub fn check_fast_forward(problem: &Problem, next_position: usize, bkt: &BktState, model: &BktModel) -> bool {
    debug_assert!(next_position < problem.len());
    problem.steps[next_position..]
        .iter()
        .all(|step| bkt.is_mastered(step.skill, model.params(step.skill)))
}

/// Optional starting state overrides, mainly for tests and scenario
/// construction.
#[derive(Debug, Clone, Default)]
pub struct SessionStart {
    pub bkt: Option<BktState>,
    pub student: Option<StudentState>,
}

pub fn run_session(config: &SessionConfig, env: &Environment) -> Result<SessionRecord> {
    run_session_from(config, env, SessionStart::default())
}

pub fn run_session_from(config: &SessionConfig, env: &Environment, start: SessionStart) -> Result<SessionRecord> {
    if let Regime::StepBudget(0) = config.regime {
        return Err(Error::InvalidParam("step budget must be at least 1".into()));
    }
    let n_skills = env.skills.len();
    let mut streams = StudentStreams::new(
        config.master_seed,
        config.selector.condition_id(),
        config.student_index,
        n_skills,
    );
    // Always consume the proficiency draw so overrides do not shift streams.
    let drawn = env.afm.draw_student(&mut streams.proficiency);
    let student = start.student.unwrap_or(drawn);
    let bkt = start.bkt.unwrap_or_else(|| BktState::new(&env.bkt));
    if student.all_opportunities().len() != n_skills || bkt.posteriors().len() != n_skills {
        return Err(Error::InvalidParam("starting state does not match the skill model".into()));
    }

    let mut run = Run {
        config,
        env,
        selector: Selector::new(config.selector),
        pool: env.pool.clone(),
        bkt,
        student,
        streams,
        events: Vec::new(),
        attempted: 0,
        problems_started: 0,
        problems_fast_forwarded: 0,
    };
    let terminated_by = run.drive()?;
    Ok(SessionRecord {
        events: run.events,
        final_bkt: run.bkt,
        final_student: run.student,
        problems_started: run.problems_started,
        problems_fast_forwarded: run.problems_fast_forwarded,
        replenishes: run.pool.replenish_count() as u64,
        terminated_by,
    })
}

struct Run<'a> {
    config: &'a SessionConfig,
    env: &'a Environment,
    selector: Selector,
    pool: ProblemPool,
    bkt: BktState,
    student: StudentState,
    streams: StudentStreams,
    events: Vec<StepEvent>,
    attempted: u64,
    problems_started: u64,
    problems_fast_forwarded: u64,
}

enum ProblemOutcome {
    Completed,
    Stop(Termination),
}

impl Run<'_> {
    fn drive(&mut self) -> Result<Termination> {
        if self.bkt.all_mastered(&self.env.bkt) {
            return Ok(Termination::Mastery);
        }
        let to_mastery = self.config.regime == Regime::RunToMastery;
        if to_mastery {
            if let Some(&skill) = self
                .env
                .uncovered_skills()
                .iter()
                .find(|&&s| !self.bkt.is_mastered(s, self.env.bkt.params(s)))
            {
                return Err(Error::Simulation(format!(
                    "skill {:?} appears in no problem and can never be mastered",
                    self.env.skills.name(skill)
                )));
            }
        }
        loop {
            if let Regime::StepBudget(n) = self.config.regime {
                if self.attempted >= n {
                    return Ok(Termination::Budget);
                }
            }
            if self.pool.exhausted() {
                if to_mastery {
                    self.pool.replenish()?;
                } else {
                    return Ok(Termination::SelectorNone);
                }
            }
            let mut choice = self.pick()?;
            if choice.is_none() && to_mastery {
                // Everything left in this pass is fully mastered; start the
                // next pass early.
                self.pool.reset_pass();
                choice = self.pick()?;
                if choice.is_none() {
                    return Err(Error::Simulation(
                        "selector found no problem with an unmastered step after replenishing".into(),
                    ));
                }
            }
            let Some(index) = choice else {
                return Ok(Termination::SelectorNone);
            };
            self.pool.consume_index(index)?;
            self.problems_started += 1;
            if let ProblemOutcome::Stop(t) = self.work_problem(index)? {
                return Ok(t);
            }
        }
    }

    fn pick(&mut self) -> Result<Option<usize>> {
        self.selector
            .select(&self.pool, &self.bkt, &self.env.bkt, &mut self.streams.selection)
    }

    fn work_problem(&mut self, index: usize) -> Result<ProblemOutcome> {
        let env = self.env;
        let problem = env.pool.problem(index);
        for step in &problem.steps {
            if self.config.fast_forward && check_fast_forward(problem, step.position, &self.bkt, &env.bkt) {
                for rest in &problem.steps[step.position..] {
                    self.events.push(StepEvent {
                        problem: index,
                        step_position: rest.position,
                        skill: rest.skill,
                        was_mastered_before: true,
                        correct: None,
                        fast_forwarded: true,
                        step_counter: self.attempted,
                    });
                }
                self.problems_fast_forwarded += 1;
                return Ok(ProblemOutcome::Completed);
            }

            let skill = step.skill;
            let params = env.bkt.params(skill);
            let was_mastered_before = self.bkt.is_mastered(skill, params);
            let correct = env
                .afm
                .sample_response(&self.student, skill, &mut self.streams.responses[skill.0]);
            self.student.record_opportunity(skill);
            self.bkt.observe(skill, correct, params);
            self.attempted += 1;
            self.events.push(StepEvent {
                problem: index,
                step_position: step.position,
                skill,
                was_mastered_before,
                correct: Some(correct),
                fast_forwarded: false,
                step_counter: self.attempted,
            });

            if self.bkt.all_mastered(&env.bkt) {
                return Ok(ProblemOutcome::Stop(Termination::Mastery));
            }
            if let Regime::StepBudget(n) = self.config.regime {
                if self.attempted >= n {
                    return Ok(ProblemOutcome::Stop(Termination::Budget));
                }
            }
            if self.attempted >= self.config.step_cap {
                return Err(Error::Simulation(format!(
                    "student {} ({}, ff={}) hit the {}-step safety cap; posteriors {:?}",
                    self.config.student_index,
                    self.config.selector,
                    self.config.fast_forward,
                    self.config.step_cap,
                    self.bkt.posteriors()
                )));
            }
        }
        Ok(ProblemOutcome::Completed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::afm::SkillCoefficients;
    use crate::bkt::BktParams;

    const A: SkillId = SkillId(0);
    const B: SkillId = SkillId(1);

    fn env(paths: &[&[SkillId]], beta: f64) -> Environment {
        let skills = SkillModel::new(["A", "B"]).unwrap();
        let problems = paths
            .iter()
            .enumerate()
            .map(|(i, p)| Problem::new(format!("p{i}"), p, i).unwrap())
            .collect();
        let pool = ProblemPool::new(problems).unwrap();
        let bkt = BktModel::uniform(BktParams::default(), 2).unwrap();
        let afm = AfmParams::new(0.0, 1.0, vec![SkillCoefficients { beta, gamma: 0.1 }; 2]).unwrap();
        Environment::new(skills, pool, bkt, afm).unwrap()
    }

    #[test]
    fn budget_counts_attempted_steps() {
        let env = env(&[&[A, B, A], &[B, A, B], &[A, A, B]], 0.0);
        let cfg = SessionConfig::new(Regime::StepBudget(5), SelectorKind::Deterministic, false, 1, 0);
        let start = SessionStart {
            // Keep the student far from mastery so the budget binds.
            student: Some(StudentState::new(-30.0, 2)),
            ..Default::default()
        };
        let rec = run_session_from(&cfg, &env, start).unwrap();
        assert_eq!(rec.events.len(), 5);
        assert_eq!(rec.attempted_steps(), 5);
        assert_eq!(rec.terminated_by, Termination::Budget);
        assert_eq!(rec.events.last().unwrap().step_counter, 5);
        assert_eq!(rec.problems_started, 2);
    }

    #[test]
    fn fast_forward_skips_mastered_suffix() {
        let env = env(&[&[B, A, A]], 0.0);
        let cfg = SessionConfig::new(Regime::StepBudget(3), SelectorKind::Deterministic, true, 1, 0);
        let start = SessionStart {
            bkt: Some(BktState::from_posteriors(vec![0.99, 0.3])),
            ..Default::default()
        };
        let rec = run_session_from(&cfg, &env, start).unwrap();
        let attempted: Vec<_> = rec.events.iter().filter(|e| !e.fast_forwarded).collect();
        let skipped: Vec<_> = rec.events.iter().filter(|e| e.fast_forwarded).collect();
        assert_eq!(attempted.len(), 1);
        assert_eq!(attempted[0].skill, B);
        assert_eq!(skipped.len(), 2);
        assert!(skipped.iter().all(|e| e.skill == A && e.was_mastered_before && e.correct.is_none()));
        assert_eq!(skipped.iter().map(|e| e.step_position).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(rec.problems_fast_forwarded, 1);
        // Only the attempted B step counts as an opportunity.
        assert_eq!(rec.final_student.all_opportunities(), &[0, 1]);
    }

    #[test]
    fn everything_mastered_means_no_practice() {
        let env = env(&[&[A, B]], 0.0);
        let cfg = SessionConfig::new(Regime::RunToMastery, SelectorKind::MasteryHard, false, 1, 0);
        let start = SessionStart {
            bkt: Some(BktState::from_posteriors(vec![0.99, 0.99])),
            ..Default::default()
        };
        let rec = run_session_from(&cfg, &env, start).unwrap();
        assert!(rec.events.is_empty());
        assert_eq!(rec.terminated_by, Termination::Mastery);
    }

    #[test]
    fn fast_forward_check_cases() {
        let model = BktModel::uniform(BktParams::default(), 2).unwrap();
        let aa = Problem::new("aa", &[A, A], 0).unwrap();
        let ab = Problem::new("ab", &[A, B], 1).unwrap();
        let state = BktState::from_posteriors(vec![0.96, 0.30]);
        assert!(check_fast_forward(&aa, 0, &state, &model));
        assert!(!check_fast_forward(&ab, 0, &state, &model));
        assert!(!check_fast_forward(&ab, 1, &state, &model));
        let mixed = Problem::new("ba", &[B, A], 2).unwrap();
        assert!(check_fast_forward(&mixed, 1, &state, &model));
    }

    #[test]
    fn run_to_mastery_replenishes_and_finishes() {
        let env = env(&[&[A, B], &[B]], -1.0);
        for kind in SelectorKind::ALL {
            for ff in [false, true] {
                let cfg = SessionConfig::new(Regime::RunToMastery, kind, ff, 3, 7);
                let rec = run_session(&cfg, &env).unwrap();
                assert_eq!(rec.terminated_by, Termination::Mastery, "{kind} ff={ff}");
                assert!(rec.final_bkt.all_mastered(&env.bkt));
                assert_eq!(rec.attempted_steps(), rec.final_student.total_opportunities());
            }
        }
    }

    #[test]
    fn uncovered_skill_is_rejected_under_run_to_mastery() {
        let env = env(&[&[A]], 0.0);
        let cfg = SessionConfig::new(Regime::RunToMastery, SelectorKind::Random, false, 1, 0);
        assert!(matches!(run_session(&cfg, &env), Err(Error::Simulation(_))));
    }

    #[test]
    fn step_cap_aborts_with_diagnostic() {
        let env = env(&[&[A, B]], 0.0);
        let mut cfg = SessionConfig::new(Regime::RunToMastery, SelectorKind::Random, false, 1, 0);
        cfg.step_cap = 10;
        let start = SessionStart {
            student: Some(StudentState::new(-30.0, 2)),
            ..Default::default()
        };
        let err = run_session_from(&cfg, &env, start).unwrap_err().to_string();
        assert!(err.contains("safety cap"), "{err}");
    }

    #[test]
    fn budget_regime_stops_when_pool_runs_dry() {
        let env = env(&[&[A]], 0.0);
        let cfg = SessionConfig::new(Regime::StepBudget(50), SelectorKind::Random, false, 1, 0);
        let start = SessionStart {
            student: Some(StudentState::new(-30.0, 2)),
            ..Default::default()
        };
        let rec = run_session_from(&cfg, &env, start).unwrap();
        assert_eq!(rec.terminated_by, Termination::SelectorNone);
        assert_eq!(rec.attempted_steps(), 1);
    }

    #[test]
    fn same_seed_same_record() {
        let env = env(&[&[A, B, A], &[B, B], &[A]], -0.5);
        let cfg = SessionConfig::new(Regime::RunToMastery, SelectorKind::FocusedPractice, true, 99, 12);
        assert_eq!(run_session(&cfg, &env).unwrap(), run_session(&cfg, &env).unwrap());
    }
}
