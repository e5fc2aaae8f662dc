//! Run an experiment config and write its result files, the same way
//! `ffsim run` does.
//!
//!     cargo run --release --example run_config -- fixtures/rq1.cfg /tmp/rq1

use fastforward::config::{ExperimentConfig, Overrides};
use fastforward::runner::run_experiment;

fn main() -> fastforward::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/rq1.cfg").to_string());
    let mut cfg = ExperimentConfig::load(&path)?;
    cfg.apply(&Overrides { output_dir: args.next().map(Into::into), ..Default::default() })?;
    let outcome = run_experiment(&cfg)?;
    for f in &outcome.files {
        println!("{}", f.display());
    }
    Ok(())
}
