mod common;

use std::sync::OnceLock;

use common::{fixture_config, replay, Bkt, TraceRow};
use fastforward::metrics::compute_student_metrics;
use fastforward::selectors::SelectorKind;
use fastforward::session::{run_session, Environment, Regime, SessionConfig, SessionRecord, Termination};
use proptest::prelude::*;

fn env() -> &'static Environment {
    static ENV: OnceLock<Environment> = OnceLock::new();
    ENV.get_or_init(common::fixture_env)
}

fn bkt() -> Bkt {
    Bkt::from_config(&fixture_config("rq2.cfg", None, None))
}

fn rows(record: &SessionRecord, env: &Environment) -> Vec<TraceRow> {
    record
        .events
        .iter()
        .map(|e| TraceRow {
            student: 0,
            selector: String::new(),
            ff: false,
            problem: env.pool.problem(e.problem).id.clone(),
            step: e.step_position,
            skill: env.skills.name(e.skill).to_string(),
            mastered_before: e.was_mastered_before,
            correct: e.correct,
            fast_forwarded: e.fast_forwarded,
        })
        .collect()
}

fn regime_strategy() -> impl Strategy<Value = Regime> {
    prop_oneof![(1u64..200).prop_map(Regime::StepBudget), Just(Regime::RunToMastery)]
}

fn selector_strategy() -> impl Strategy<Value = SelectorKind> {
    prop::sample::select(SelectorKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn recorded_sessions_obey_the_rules(
        seed in any::<u64>(),
        student in 0u64..100_000,
        kind in selector_strategy(),
        ff in any::<bool>(),
        regime in regime_strategy(),
    ) {
        let env = env();
        let cfg = SessionConfig::new(regime, kind, ff, seed, student);
        let record = run_session(&cfg, env).unwrap();
        let replayed = replay(&rows(&record, env), env.skills.names(), bkt());

        // Skips only ever cover mastered skills, and the recorded mastery
        // flags agree with an independent replay.
        prop_assert_eq!(replayed.unsafe_skips, 0);
        prop_assert_eq!(replayed.flag_mismatches, 0);
        if !ff {
            prop_assert!(record.events.iter().all(|e| !e.fast_forwarded));
            prop_assert_eq!(record.problems_fast_forwarded, 0);
        }

        // Final tutor state matches the replay bit for bit.
        let model = &env.bkt;
        prop_assert_eq!(replayed.underpractice as usize, record.final_bkt.unmastered_count(model));

        // Problem occurrences: steps run 0, 1, 2, ... and every problem but
        // the last is walked to its end, attempted or skipped.
        let mut occurrences: Vec<(usize, usize, bool)> = Vec::new();
        for e in &record.events {
            if e.step_position == 0 {
                occurrences.push((e.problem, 0, false));
            }
            let occ = occurrences.last_mut().expect("first event starts a problem");
            prop_assert_eq!(occ.0, e.problem);
            prop_assert_eq!(occ.1, e.step_position);
            prop_assert_eq!(env.pool.problem(e.problem).steps[e.step_position].skill, e.skill);
            if occ.2 {
                prop_assert!(e.fast_forwarded, "attempted step after a skip");
            }
            occ.1 += 1;
            occ.2 |= e.fast_forwarded;
        }
        prop_assert_eq!(occurrences.len() as u64, record.problems_started);
        prop_assert_eq!(occurrences.iter().filter(|o| o.2).count() as u64, record.problems_fast_forwarded);
        for (i, (p, seen, _)) in occurrences.iter().enumerate() {
            let len = env.pool.problem(*p).len();
            if i + 1 < occurrences.len() {
                prop_assert_eq!(*seen, len);
            } else {
                prop_assert!(*seen == len || record.terminated_by != Termination::SelectorNone);
            }
        }

        // Step counters and opportunities count attempted steps only.
        let mut counter = 0;
        for e in &record.events {
            if !e.fast_forwarded {
                counter += 1;
            }
            prop_assert_eq!(e.step_counter, counter);
        }
        for skill in env.skills.ids() {
            let attempts = record.events.iter().filter(|e| e.skill == skill && !e.fast_forwarded).count() as u32;
            prop_assert_eq!(record.final_student.opportunities(skill), attempts);
        }

        match (regime, record.terminated_by) {
            (Regime::StepBudget(n), Termination::Budget) => prop_assert_eq!(record.attempted_steps(), n),
            (Regime::StepBudget(n), _) => prop_assert!(record.attempted_steps() <= n),
            (Regime::RunToMastery, t) => prop_assert_eq!(t, Termination::Mastery),
        }
        if record.terminated_by == Termination::Mastery {
            prop_assert!(record.final_bkt.all_mastered(model));
        }
        if regime != Regime::RunToMastery {
            prop_assert_eq!(record.replenishes, 0);
        }

        let m = compute_student_metrics(&record, model);
        prop_assert_eq!(m.overpractice_total, replayed.overpractice_total);
        prop_assert_eq!(&m.overpractice_by_skill, &replayed.overpractice_by_skill);
        prop_assert_eq!(m.steps_to_mastery, replayed.steps_to_mastery);
        prop_assert!(m.overpractice_total <= m.attempted_steps);
    }

    #[test]
    fn fast_forward_arm_shares_the_student(
        seed in any::<u64>(),
        student in 0u64..100_000,
        kind in selector_strategy(),
    ) {
        let env = env();
        let a = run_session(&SessionConfig::new(Regime::RunToMastery, kind, false, seed, student), env).unwrap();
        let b = run_session(&SessionConfig::new(Regime::RunToMastery, kind, true, seed, student), env).unwrap();
        prop_assert_eq!(a.final_student.theta, b.final_student.theta);
    }

    #[test]
    fn sessions_are_reproducible(seed in any::<u64>(), student in 0u64..1000, kind in selector_strategy(), ff in any::<bool>()) {
        let env = env();
        let cfg = SessionConfig::new(Regime::StepBudget(60), kind, ff, seed, student);
        prop_assert_eq!(run_session(&cfg, env).unwrap(), run_session(&cfg, env).unwrap());
    }
}

#[test]
fn no_skips_before_any_skill_is_mastered() {
    let env = env();
    for student in 0..50 {
        let record = run_session(&SessionConfig::new(Regime::RunToMastery, SelectorKind::Deterministic, true, 3, student), env).unwrap();
        let first_mastery = record.events.iter().position(|e| e.was_mastered_before);
        let first_skip = record.events.iter().position(|e| e.fast_forwarded);
        if let Some(skip) = first_skip {
            assert!(first_mastery.is_some_and(|m| m <= skip));
        }
    }
}
