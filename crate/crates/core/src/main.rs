use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cellfree_isac::io::{self, OutputFormat, ScenarioFile};
use cellfree_isac::sim::{run_scenario, Arms, Scenario};
use cellfree_isac::Error;

#[derive(Parser)]
#[command(name = "cfisac", version, about = "Cell-free ISAC tracking and predictive beamforming simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Arm {
    Proposed,
    Conventional,
    Random,
    Perfect,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write epochs.csv, summary.json and manifest.json.
    Run {
        /// Scenario file (TOML); reference values when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the seed in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write variance.svg and rate.svg.
        #[arg(long)]
        emit_plots: bool,
        /// Methods to evaluate; the proposed method always runs.
        #[arg(long, value_enum, value_delimiter = ',')]
        arms: Option<Vec<Arm>>,
    },
    /// Check a scenario file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the reference scenario as a fully explicit scenario file.
    Defaults,
}

fn load(config: Option<&PathBuf>) -> Result<Scenario, Error> {
    match config {
        Some(path) => io::load_scenario(path),
        None => ScenarioFile::default().to_scenario(),
    }
}

fn run(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: PathBuf,
    emit_plots: bool,
    arms: Option<Vec<Arm>>,
) -> Result<(), (u8, Error)> {
    let config_err = |e: Error| (2, e);
    let mut scenario = load(config.as_ref()).map_err(config_err)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    if let Some(arms) = arms {
        scenario.arms = Arms {
            random: arms.contains(&Arm::Random),
            conventional: arms.contains(&Arm::Conventional),
            perfect: arms.contains(&Arm::Perfect),
        };
    }
    let started = io::timestamp();
    let records = run_scenario(&scenario).map_err(|e| if e.is_config_error() { (2, e) } else { (1, e) })?;
    let mut formats: BTreeSet<OutputFormat> = [OutputFormat::Csv, OutputFormat::Json].into_iter().collect();
    if emit_plots {
        formats.insert(OutputFormat::Svg);
    }
    let manifest = io::write_records(&records, &scenario, &out, &formats, &started).map_err(|e| (1, e))?;
    println!("wrote {} to {}", manifest.outputs.join(", "), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out, emit_plots, arms } => run(config, seed, out, emit_plots, arms),
        Command::Validate { config } => load(Some(&config))
            .map(|s| {
                println!(
                    "{}: ok ({} APs, {} epochs, digest {})",
                    config.display(),
                    s.system.num_aps,
                    s.num_epochs,
                    io::config_digest(&s)
                );
            })
            .map_err(|e| (2, e)),
        Command::Defaults => {
            print!("{}", ScenarioFile::from_scenario(&Scenario::reference(0)).to_toml());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, err)) => {
            eprintln!("error: {err}");
            ExitCode::from(code)
        }
    }
}
