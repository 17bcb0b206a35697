use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use levy_harnack::config::ExperimentConfig;
use levy_harnack::runner::{run, write_artifacts, Command};
use levy_harnack::Error;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Sub {
    Simulate,
    MeckeTest,
    Gradient,
    GirsanovTest,
    Bounds,
    Harnack,
    LogHarnack,
    FiniteMarkov,
    FullSuite,
}

impl Sub {
    fn command(self) -> Command {
        match self {
            Sub::Simulate => Command::Simulate,
            Sub::MeckeTest => Command::MeckeTest,
            Sub::Gradient => Command::Gradient,
            Sub::GirsanovTest => Command::GirsanovTest,
            Sub::Bounds => Command::Bounds,
            Sub::Harnack => Command::Harnack,
            Sub::LogHarnack => Command::LogHarnack,
            Sub::FiniteMarkov => Command::FiniteMarkov,
            Sub::FullSuite => Command::FullSuite,
        }
    }
}

/// Monte Carlo, quadrature and finite-state checks of derivative formulae
/// and Harnack inequalities for Lévy-driven linear SDEs.
///
/// Exit status: 0 when every check passes, 1 when some check fails, 2 on
/// configuration or I/O errors.
#[derive(Debug, Parser)]
#[command(name = "levy-harnack", version)]
struct Args {
    #[arg(value_enum)]
    command: Sub,
    /// JSON configuration; defaults apply to every missing field.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo sample count for every battery.
    #[arg(long)]
    samples: Option<u64>,
    /// Directory for the CSV artifacts. Existing files are never replaced.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Dotted-path override such as `harnack.ps=[2,3]`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads; all outputs are identical for every value.
    #[arg(long)]
    threads: Option<usize>,
}

fn load(args: &Args) -> Result<ExperimentConfig, String> {
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?,
        None => String::new(),
    };
    let mut cfg = ExperimentConfig::from_json_with_overrides(&text, &args.overrides).map_err(|e| match &e {
        Error::Json { line, .. } => {
            let src = text.lines().nth(line.saturating_sub(1)).unwrap_or("");
            format!("{e}\n  {line} | {src}")
        }
        _ => e.to_string(),
    })?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.samples {
        cfg.set_samples(n);
    }
    Ok(cfg)
}

fn execute(args: &Args) -> Result<bool, String> {
    let cfg = load(args)?;
    let out = run(args.command.command(), &cfg).map_err(|e| e.to_string())?;
    write_artifacts(&args.out, &out).map_err(|e| e.to_string())?;
    print!("{}", out.summary());
    let counts = out.counts();
    for f in out.failures() {
        eprintln!("FAIL {} ({})", f.name, f.detail);
    }
    if counts.pass == 0 && counts.fail == 0 && counts.vacuous > 0 {
        eprintln!("warning: every check was vacuous");
    }
    println!("total: {} pass, {} fail, {} vacuous", counts.pass, counts.fail, counts.vacuous);
    Ok(counts.fail == 0)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
