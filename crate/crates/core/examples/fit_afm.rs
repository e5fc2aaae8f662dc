//! Fit AFM to a step log and compare with the generating parameters when a
//! `<log>.truth.json` file sits next to the log.
//!
//!     cargo run --release --example fit_afm -- [log.csv]

use fastforward::afm::AfmParamsFile;
use fastforward::fit::{fit, FitSettings, StepLog};

fn main() -> fastforward::Result<()> {
    let fixtures = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let path = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| fixtures.join("step_log_synthetic.csv"));
    let log = StepLog::read(&path)?;
    let result = fit(&log, &FitSettings::default())?;
    println!(
        "{} rows, {} students, {} skills: converged={} after {} iterations, nll {:.3}",
        log.rows.len(),
        log.n_students(),
        log.n_skills(),
        result.converged,
        result.iterations,
        result.neg_log_likelihood
    );
    for w in &result.warnings {
        println!("warning: {w}");
    }

    let truth = AfmParamsFile::read(path.with_extension("truth.json")).ok();
    println!("{:<18} {:>8} {:>8} {:>8} {:>8}", "skill", "beta", "gamma", "true b", "true g");
    for (skill, c) in log.skills.names().iter().zip(&result.params.skills) {
        let t = truth.as_ref().and_then(|t| t.skills.get(skill));
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!(
            "{:<18} {:>8.3} {:>8.3} {:>8} {:>8}",
            skill,
            c.beta,
            c.gamma,
            fmt(t.map(|t| t.beta)),
            fmt(t.map(|t| t.gamma))
        );
    }
    println!("theta ~ N({:.3}, {:.3})", result.params.theta_mean, result.params.theta_sd);
    Ok(())
}
