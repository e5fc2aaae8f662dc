mod common;

use common::fixture_config;
use fastforward::runner::simulate;
use fastforward::selectors::SelectorKind;
use fastforward::session::Regime;

/// The RQ1 budget is the median steps to mastery of mastery-hard selection
/// without fast-forwarding over the full population.
#[test]
fn rq1_budget_matches_median_steps_to_mastery() {
    let mut cfg = fixture_config("rq1.cfg", None, None);
    let Regime::StepBudget(budget) = cfg.regime else { panic!("rq1 must be budgeted") };
    assert_eq!(cfg.n_students, 10_000);
    cfg.regime = Regime::RunToMastery;
    cfg.selectors = vec![SelectorKind::MasteryHard];
    cfg.ff_modes = vec![false];
    let env = cfg.environment().unwrap();
    let results = simulate(&cfg, &env, None).unwrap();
    let mut steps: Vec<u64> = results.conditions[0].students.iter().map(|m| m.steps_to_mastery.unwrap()).collect();
    steps.sort_unstable();
    let mid = steps.len() / 2;
    let median = (steps[mid - 1] + steps[mid]) as f64 / 2.0;
    assert_eq!(median, budget as f64);
}

#[test]
fn fixture_configs_agree_on_everything_but_the_plan() {
    let rq1 = fixture_config("rq1.cfg", None, None);
    let rq2 = fixture_config("rq2.cfg", None, None);
    assert_eq!(rq1.pool_path, rq2.pool_path);
    assert_eq!(rq1.afm_params_path, rq2.afm_params_path);
    assert_eq!(rq1.master_seed, rq2.master_seed);
    assert_eq!(rq1.bkt, rq2.bkt);
    assert_eq!(rq2.conditions().len(), 10);
    assert_eq!(rq1.conditions(), vec![(SelectorKind::MasteryHard, false), (SelectorKind::MasteryHard, true)]);
}
