mod common;

use common::{fixture, fixture_config};
use fastforward::selectors::SelectorKind;
use fastforward::session::{run_session, Regime, SessionConfig, Termination};
use fastforward::skills::load_pool_file;

#[test]
fn fixture_pool_shape() {
    let (skills, pool) = load_pool_file(fixture("pool_synthetic.json")).unwrap();
    assert_eq!(skills.len(), 9);
    assert_eq!(pool.len(), 24);
    assert!(pool.problems().iter().all(|p| (2..=7).contains(&p.len())));
    let covered = pool.covered_skills(skills.len());
    assert!(covered.iter().all(|&c| c), "every skill appears in some problem");
    for (i, p) in pool.problems().iter().enumerate() {
        assert_eq!(p.pool_order, i);
    }
}

#[test]
fn consuming_every_problem_exhausts_the_pool() {
    let (_, mut pool) = load_pool_file(fixture("pool_synthetic.json")).unwrap();
    let ids: Vec<String> = pool.problems().iter().map(|p| p.id.clone()).collect();
    for (n, id) in ids.iter().enumerate() {
        assert!(!pool.exhausted());
        pool.mark_consumed(id).unwrap();
        assert_eq!(pool.consumed_count(), n + 1);
        assert_eq!(pool.available_count() + pool.consumed_count(), 24);
    }
    assert!(pool.exhausted());
    assert!(pool.mark_consumed(&ids[0]).is_err());
    pool.replenish().unwrap();
    assert_eq!((pool.available_count(), pool.replenish_count()), (24, 1));
    assert!(pool.replenish().is_err(), "replenishing a pool with problems left");
}

#[test]
fn slow_learners_cycle_the_pool_and_still_finish() {
    let mut cfg = fixture_config("rq2.cfg", None, None);
    cfg.theta_mean = Some(-2.5);
    cfg.theta_sd = Some(0.3);
    let env = cfg.environment().unwrap();
    let mut most = 0;
    for student in 0..40 {
        for kind in [SelectorKind::Deterministic, SelectorKind::MasteryHard] {
            let record = run_session(&SessionConfig::new(Regime::RunToMastery, kind, false, 5, student), &env).unwrap();
            assert_eq!(record.terminated_by, Termination::Mastery);
            assert!(record.final_bkt.all_mastered(&env.bkt));
            most = most.max(record.replenishes);
        }
    }
    assert!(most >= 2, "expected at least one student to need two replenishes, max was {most}");
}

#[test]
fn budgeted_sessions_never_replenish() {
    let env = common::fixture_env();
    for student in 0..30 {
        let record = run_session(&SessionConfig::new(Regime::StepBudget(10_000), SelectorKind::Random, false, 9, student), &env).unwrap();
        assert_eq!(record.replenishes, 0);
        assert_eq!(record.terminated_by, if record.final_bkt.all_mastered(&env.bkt) { Termination::Mastery } else { Termination::SelectorNone });
    }
}
