use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use enclosure_cli::config::ExperimentConfig;
use enclosure_cli::presets::{preset, PRESET_NAMES};
use enclosure_cli::run::{dump_field, run_experiment};
use enclosure_cli::verify::{run_verification, Suite};
use enclosure_cli::CliError;

/// Obstacle detection behind a known obstacle from single-source wave data.
///
/// Lengths are in units L, times in L/c with wave speed c = 1.
#[derive(Parser)]
#[command(name = "enclosure", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigSource {
    /// JSON configuration file.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Use a built-in scene instead of a file.
    #[arg(long)]
    preset: Option<String>,
}

impl ConfigSource {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        match (&self.config, &self.preset) {
            (_, Some(name)) => preset(name),
            (Some(path), None) => ExperimentConfig::load(path),
            (None, None) => Err(CliError::Validation("no configuration given".into())),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration and print the derived run plan.
    Validate {
        #[command(flatten)]
        source: ConfigSource,
    },
    /// Run the full pipeline and write the result bundle.
    Run {
        #[command(flatten)]
        source: ConfigSource,
        /// Output directory; overrides `outputs` in the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a verification suite (geometry, heatkernel, identity, solver-oracles or all).
    Verify {
        suite: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "out/verify")]
        out: PathBuf,
    },
    /// Summarize a binary field written by a run with `dump_fields`.
    DumpField {
        run_dir: PathBuf,
        name: String,
        /// Also write every cell as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the configuration of a built-in scene (all names without argument).
    Preset { name: Option<String> },
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("output serializes"));
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { source } => {
            let cfg = source.load()?;
            print_json(&cfg.plan()?);
        }
        Command::Run { source, out } => {
            let mut cfg = source.load()?;
            if let Some(dir) = out {
                cfg.outputs = dir;
            }
            let o = run_experiment(&cfg)?;
            print_json(&o.result);
            eprintln!("artifacts in {}", o.bundle.dir.display());
        }
        Command::Verify { suite, seed, out } => {
            let suites = if suite == "all" { Suite::ALL.to_vec() } else { vec![suite.parse()?] };
            let mut failed = Vec::new();
            for s in &suites {
                let report = run_verification(*s, seed)?;
                let path = report.write(&out, suites.len() > 1)?;
                for c in report.failures() {
                    eprintln!("FAIL {}: {} vs {} ({:?})", c.name, c.lhs, c.rhs, c.relation);
                }
                println!(
                    "{}: {} of {} checks passed in {:.1} s -> {}",
                    s,
                    report.checks.iter().filter(|c| c.pass).count(),
                    report.checks.len(),
                    report.seconds,
                    path.display()
                );
                if !report.passed {
                    failed.push(s.name());
                }
            }
            if !failed.is_empty() {
                return Err(CliError::Verification(format!("suites with failing checks: {}", failed.join(", "))));
            }
        }
        Command::DumpField { run_dir, name, csv } => {
            print_json(&dump_field(&run_dir, &name, csv.as_deref())?);
        }
        Command::Preset { name } => match name {
            Some(n) => println!("{}", preset(&n)?.to_json()),
            None => PRESET_NAMES.iter().for_each(|n| println!("{n}")),
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
