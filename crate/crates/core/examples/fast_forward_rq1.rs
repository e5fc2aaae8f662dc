//! Limited practice time: mastery-hard selection with and without
//! fast-forwarding under the fixture step budget.
//!
//!     cargo run --release --example fast_forward_rq1 -- [students]

use fastforward::config::{ExperimentConfig, Overrides};
use fastforward::runner::simulate;
use fastforward::selectors::SelectorKind;

fn main() -> fastforward::Result<()> {
    let mut cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/rq1.cfg"))?;
    let n = std::env::args().nth(1).map(|s| s.parse().expect("students"));
    cfg.apply(&Overrides { n_students: n, ..Default::default() })?;
    let env = cfg.environment()?;
    let results = simulate(&cfg, &env, None)?;

    let without = &results.condition(SelectorKind::MasteryHard, false).unwrap().summary;
    let with = &results.condition(SelectorKind::MasteryHard, true).unwrap().summary;
    let r = results.reduction(SelectorKind::MasteryHard).unwrap();
    println!("{} students, {:?}", cfg.n_students, cfg.regime);
    println!("overpractice   without {:7.2}   with {:7.2}", without.overpractice.mean, with.overpractice.mean);
    println!("underpractice  without {:7.3}   with {:7.3}", without.underpractice.mean, with.underpractice.mean);
    println!("reduction {:.1}%", r.reduction_pct.unwrap_or(0.0));
    if let Some(p) = r.paired {
        println!("paired difference {:.2} (SE {:.3}), {} students not worse off", p.mean, p.standard_error, p.n_not_worse);
    }
    println!();
    println!("{:<18} {:>8} {:>8}", "skill", "without", "with");
    for (i, skill) in results.skills.iter().enumerate() {
        println!(
            "{:<18} {:>8.2} {:>8.2}",
            skill, without.overpractice_by_skill_mean[i], with.overpractice_by_skill_mean[i]
        );
    }
    Ok(())
}
