//! Run one student through the fixture pool with and without fast-forwarding
//! and print the step-by-step trace.
//!
//!     cargo run --example single_session -- [selector] [student]

use fastforward::config::ExperimentConfig;
use fastforward::metrics::compute_student_metrics;
use fastforward::selectors::SelectorKind;
use fastforward::session::{run_session, Regime, SessionConfig};

fn main() -> fastforward::Result<()> {
    let cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/rq2.cfg"))?;
    let env = cfg.environment()?;
    let mut args = std::env::args().skip(1);
    let kind: SelectorKind = args.next().as_deref().unwrap_or("mastery_hard").parse()?;
    let student: u64 = args.next().map_or(0, |s| s.parse().expect("student index"));

    for ff in [false, true] {
        let config = SessionConfig::new(Regime::RunToMastery, kind, ff, cfg.master_seed, student);
        let record = run_session(&config, &env)?;
        println!("== {kind}, fast-forward {}", if ff { "on" } else { "off" });
        let mut last = usize::MAX;
        for e in &record.events {
            if e.step_position == 0 || e.problem != last {
                println!("  {}", env.pool.problem(e.problem).id);
                last = e.problem;
            }
            let outcome = match e.correct {
                Some(true) => "right",
                Some(false) => "wrong",
                None => "skipped",
            };
            println!(
                "    {:<18} {:<7}{}",
                env.skills.name(e.skill),
                outcome,
                if e.was_mastered_before && !e.fast_forwarded { "  (overpractice)" } else { "" }
            );
        }
        let m = compute_student_metrics(&record, &env.bkt);
        println!(
            "  attempted {} steps, overpractice {}, problems {} ({} fast-forwarded), {:?}",
            m.attempted_steps, m.overpractice_total, record.problems_started, record.problems_fast_forwarded, record.terminated_by
        );
    }
    Ok(())
}
