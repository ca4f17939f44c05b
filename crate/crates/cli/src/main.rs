use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use yosida_cli::output::{create_run_dir, write_run};
use yosida_cli::{run, Experiment, Scenario};

#[derive(Parser)]
#[command(
    name = "yosida",
    version,
    about = "Seeded runs of the Yosida-regularized jump-diffusion solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One path per lambda, full time series of every mode.
    Simulate(Common),
    /// Lambda continuation of one sample and the Monte Carlo Cauchy rate.
    Converge(Common),
    /// Maximal inequality sweep over jump intensity and amplitude.
    Bj(Common),
    /// Lambda-uniform moment bound.
    Apriori(Common),
    /// Continuity of the solution in the data.
    Continuity(Common),
    /// Linear drift against its exact solution.
    Oracle(Common),
    /// Solutions for approximated rough data.
    Generalized(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario TOML; defaults are used for anything it leaves out.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Parent directory of the run directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Override one key, e.g. `--set drift.name=power`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

fn execute(experiment: Experiment, args: Common) -> Result<bool> {
    let text = match &args.scenario {
        Some(path) => fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?,
        None => String::new(),
    };
    let mut overrides = args.set;
    if let Some(seed) = args.seed {
        overrides.push(format!("run.seed={seed}"));
    }
    if let Some(samples) = args.samples {
        overrides.push(format!("run.samples={samples}"));
    }
    let scenario = Scenario::from_toml(&text, &overrides)?;
    let regime = scenario.problem()?.regime();
    println!(
        "{experiment}: seed {} samples {}",
        scenario.run.seed, scenario.run.samples
    );
    println!("regime: {}", regime.describe());

    let start = Instant::now();
    let artifacts = run(experiment, &scenario)?;
    let elapsed = start.elapsed().as_secs_f64();
    let dir = create_run_dir(&args.out, experiment)?;
    write_run(&dir, experiment, &scenario, &artifacts, elapsed)?;
    print!("{}", artifacts.summary);
    println!("wrote {}", dir.display());
    Ok(artifacts.pass.unwrap_or(true))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Simulate(a) => (Experiment::Simulate, a),
        Command::Converge(a) => (Experiment::Converge, a),
        Command::Bj(a) => (Experiment::Bj, a),
        Command::Apriori(a) => (Experiment::Apriori, a),
        Command::Continuity(a) => (Experiment::Continuity, a),
        Command::Oracle(a) => (Experiment::Oracle, a),
        Command::Generalized(a) => (Experiment::Generalized, a),
    };
    match execute(experiment, args) {
        Ok(true) => ExitCode::SUCCESS,
        // check ran but its criterion failed
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
