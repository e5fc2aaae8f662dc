//! Run to mastery under every selector, with and without fast-forwarding.
//!
//!     cargo run --release --example selector_sweep -- [students]

use fastforward::config::{ExperimentConfig, Overrides};
use fastforward::runner::simulate;

fn main() -> fastforward::Result<()> {
    let mut cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/rq2.cfg"))?;
    let n = std::env::args().nth(1).map(|s| s.parse().expect("students"));
    cfg.apply(&Overrides { n_students: Some(n.unwrap_or(2000)), ..Default::default() })?;
    let env = cfg.environment()?;
    let results = simulate(&cfg, &env, None)?;

    println!(
        "{:<17} {:>9} {:>9} {:>8} {:>9} {:>12}",
        "selector", "without", "with", "cut %", "effect", "steps (w/o)"
    );
    for r in &results.reductions {
        let without = &results.condition(r.selector, false).unwrap().summary;
        println!(
            "{:<17} {:>9.2} {:>9.2} {:>8.1} {:>9.2} {:>12.1}",
            r.selector.as_str(),
            r.mean_without_ff,
            r.mean_with_ff,
            r.reduction_pct.unwrap_or(0.0),
            r.effect_size_sd.unwrap_or(0.0),
            without.steps_to_mastery_mean.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
