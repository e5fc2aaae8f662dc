//! Simulate a step log from known AFM parameters and write it as CSV,
//! together with the generating parameters.
//!
//!     cargo run --example generate_log -- [out.csv] [students] [opportunities] [seed]
//!
//! With no arguments this regenerates `fixtures/step_log_synthetic.csv`.

use fastforward::afm::{AfmParams, SkillCoefficients};
use fastforward::fit::simulate_log;
use fastforward::skills::SkillModel;

fn main() -> fastforward::Result<()> {
    let fixtures = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut args = std::env::args().skip(1);
    let out = args.next().map(Into::into).unwrap_or_else(|| fixtures.join("step_log_synthetic.csv"));
    let n_students: usize = args.next().map_or(60, |s| s.parse().expect("students"));
    let opportunities: u32 = args.next().map_or(20, |s| s.parse().expect("opportunities"));
    let seed: u64 = args.next().map_or(11, |s| s.parse().expect("seed"));

    let skills = SkillModel::new(["add/subtr-const", "comb-const", "division-simple"])?;
    let truth = AfmParams::new(
        0.0,
        1.0,
        vec![
            SkillCoefficients { beta: -0.6, gamma: 0.15 },
            SkillCoefficients { beta: 0.2, gamma: 0.08 },
            SkillCoefficients { beta: 0.9, gamma: 0.05 },
        ],
    )?;
    let (log, _) = simulate_log(&truth, &skills, n_students, opportunities, seed);
    let file = std::fs::File::create(&out).map_err(|e| fastforward::Error::Io { path: out.clone(), source: e })?;
    log.write_csv(std::io::BufWriter::new(file))?;

    let truth_path = out.with_extension("truth.json");
    truth.to_file(&skills, None).write(&truth_path)?;
    println!("wrote {} rows to {}", log.rows.len(), out.display());
    println!("generating parameters in {}", truth_path.display());
    Ok(())
}
