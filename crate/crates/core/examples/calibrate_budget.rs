//! Median steps to mastery for mastery-hard selection without
//! fast-forwarding, the quantity the RQ1 fixture budget is pinned to.
//!
//!     cargo run --release --example calibrate_budget -- [students] [seed]

use fastforward::config::{ExperimentConfig, Overrides};
use fastforward::runner::simulate;
use fastforward::selectors::SelectorKind;
use fastforward::session::Regime;

fn main() -> fastforward::Result<()> {
    let mut args = std::env::args().skip(1);
    let n = args.next().map(|s| s.parse().expect("students"));
    let seed = args.next().map(|s| s.parse().expect("seed"));
    let mut cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/rq1.cfg"))?;
    cfg.apply(&Overrides { n_students: n, seed, ..Default::default() })?;
    cfg.regime = Regime::RunToMastery;
    cfg.selectors = vec![SelectorKind::MasteryHard];
    cfg.ff_modes = vec![false];
    let env = cfg.environment()?;
    let results = simulate(&cfg, &env, None)?;
    let mut steps: Vec<u64> = results.conditions[0]
        .students
        .iter()
        .map(|m| m.steps_to_mastery.expect("run to mastery"))
        .collect();
    steps.sort_unstable();
    let mid = steps.len() / 2;
    let median = if steps.len().is_multiple_of(2) {
        (steps[mid - 1] + steps[mid]) as f64 / 2.0
    } else {
        steps[mid] as f64
    };
    println!("students {}, seed {}: median steps to mastery {median}", steps.len(), cfg.master_seed);
    println!("quartiles {} / {} / {}", steps[steps.len() / 4], steps[mid], steps[3 * steps.len() / 4]);
    Ok(())
}
