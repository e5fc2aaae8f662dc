//! Command-line front end: `run`, `validate` and `fit`.
//!
//! Exit status is 0 on success, 2 for config or input validation errors and
//! 1 for failures while running.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fastforward::config::{ExperimentConfig, Overrides};
use fastforward::fit::FitSettings;
use fastforward::runner::{fit_log_file, run_experiment_with};
use fastforward::session::Regime;
use fastforward::Error;

#[derive(Parser)]
#[command(name = "ffsim", version, about = "Mastery-learning simulations with fast-forwarding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every configured condition and write result files.
    Run(RunArgs),
    /// Check a config and its input files without simulating.
    Validate(RunArgs),
    /// Fit AFM parameters to a step log.
    Fit(FitArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    n_students: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    /// CSV with header `student_id,skill,opportunity,correct`.
    log: PathBuf,
    /// Where to write the parameters file.
    #[arg(long, default_value = "afm_params.json")]
    out: PathBuf,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

const CONFIG_ERROR: u8 = 2;
const RUNTIME_ERROR: u8 = 1;

fn fail(code: u8, err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(code)
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut config = ExperimentConfig::load(&args.config)?;
    config.apply(&Overrides {
        n_students: args.n_students,
        seed: args.seed,
        output_dir: args.out.clone(),
        trace: args.trace,
        jobs: args.jobs,
    })?;
    Ok(config)
}

fn describe_regime(regime: Regime) -> String {
    match regime {
        Regime::StepBudget(n) => format!("budget of {n} attempted steps"),
        Regime::RunToMastery => "run to mastery".to_string(),
    }
}

fn validate(args: &RunArgs) -> ExitCode {
    let config = match load(args) {
        Ok(c) => c,
        Err(e) => return fail(CONFIG_ERROR, &e),
    };
    let env = match config.environment() {
        Ok(env) => env,
        Err(e) => return fail(CONFIG_ERROR, &e),
    };
    println!("config ok: {}", args.config.display());
    println!(
        "  pool: {} problems, {} skills",
        env.pool.len(),
        env.skills.len()
    );
    println!("  regime: {}", describe_regime(config.regime));
    println!("  students: {}, seed: {}", config.n_students, config.master_seed);
    let conditions = config.conditions();
    println!("  {} conditions planned:", conditions.len());
    for (selector, ff) in conditions {
        println!("    {selector} ff={ff}");
    }
    for skill in env.uncovered_skills() {
        println!("  warning: no problem exercises skill {:?}", env.skills.name(skill));
    }
    ExitCode::SUCCESS
}

fn run(args: &RunArgs) -> ExitCode {
    let config = match load(args) {
        Ok(c) => c,
        Err(e) => return fail(CONFIG_ERROR, &e),
    };
    let env = match config.environment() {
        Ok(env) => env,
        Err(e) => return fail(CONFIG_ERROR, &e),
    };
    let outcome = match run_experiment_with(&config, &env) {
        Ok(o) => o,
        Err(e) => return fail(RUNTIME_ERROR, &e),
    };
    let results = &outcome.results;
    println!(
        "{} students x {} conditions, {}, {:.1}s",
        config.n_students,
        results.conditions.len(),
        describe_regime(config.regime),
        outcome.elapsed_seconds
    );
    println!("{:<17} {:>3} {:>12} {:>10} {:>13}", "selector", "ff", "overpractice", "sd", "underpractice");
    for c in &results.conditions {
        let s = &c.summary;
        println!(
            "{:<17} {:>3} {:>12.2} {:>10.2} {:>13.3}",
            c.selector.as_str(),
            if c.fast_forward { "on" } else { "off" },
            s.overpractice.mean,
            s.overpractice.sd,
            s.underpractice.mean
        );
    }
    for r in &results.reductions {
        match r.reduction_pct {
            Some(p) => println!("{}: fast-forwarding cuts overpractice by {p:.1}%", r.selector),
            None => println!("{}: no overpractice without fast-forwarding", r.selector),
        }
    }
    println!("wrote {}", outcome.output_dir.display());
    ExitCode::SUCCESS
}

fn fit(args: &FitArgs) -> ExitCode {
    let mut settings = FitSettings::default();
    if let Some(l) = args.lambda {
        settings.lambda = l;
    }
    if let Some(t) = args.tol {
        settings.tol = t;
    }
    if let Some(m) = args.max_iterations {
        settings.max_iterations = m;
    }
    match fit_log_file(&args.log, &args.out, &settings) {
        Ok(outcome) => {
            for w in &outcome.result.warnings {
                eprintln!("warning: {w}");
            }
            let d = &outcome.diagnostics;
            if !d.converged {
                eprintln!(
                    "warning: fit did not converge after {} iterations (gradient max-norm {:.3e})",
                    d.iterations, d.gradient_max_norm
                );
            }
            println!(
                "fitted {} skills from {} rows ({} students): nll {:.4}, {} iterations, converged={}",
                outcome.n_skills, d.n_rows, d.n_students, d.neg_log_likelihood, d.iterations, d.converged
            );
            println!("wrote {}", args.out.display());
            ExitCode::SUCCESS
        }
        Err(Error::Io { path, source }) if path == args.log => fail(CONFIG_ERROR, &Error::Io { path, source }),
        Err(e @ (Error::Fit(_) | Error::Io { .. })) => fail(RUNTIME_ERROR, &e),
        Err(e) => fail(CONFIG_ERROR, &e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(args) => run(args),
        Command::Validate(args) => validate(args),
        Command::Fit(args) => fit(args),
    }
}
