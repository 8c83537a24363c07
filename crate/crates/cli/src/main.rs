use std::path::PathBuf;
use std::process::ExitCode;

use anon_auth::SecurityProfile;
use clap::{Parser, Subcommand, ValueEnum};
use wmn_cli::commands::{self, Study};
use wmn_cli::config::{load_scenario, parse_values};
use wmn_cli::validate::{run_all, TrapdoorParams};
use wmn_cli::CliError;
use wmn_core::experiments::{ScenarioConfig, SweepAxis, Variant};

/// Mesh routing simulator and anonymous authentication demo.
///
/// Exit codes: 0 success, 1 runtime or check failure, 2 usage or configuration error.
#[derive(Parser)]
#[command(name = "wmnsim", version)]
struct Cli {
    /// More log output (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Output {
    /// Directory for result files.
    #[arg(long, env = "WMNSIM_OUTPUT_DIR", default_value = "wmnsim-out")]
    output_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write metrics.csv, flows.csv and summary.txt.
    Run {
        /// Scenario file (TOML). Defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the protocol variant.
        #[arg(long)]
        variant: Option<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Sweep one parameter over variants; writes sweep.csv and aggregate.csv.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// n_sources, data_rate, n_flows or selfish_fraction.
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. 15,25,35.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        /// Comma-separated variants; all four when omitted.
        #[arg(long)]
        variants: Option<String>,
        /// Seeded runs per (value, variant).
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        replicates: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: Output,
    },
    /// Delay-estimator or selfish-node study over seeded runs.
    Study {
        #[arg(value_enum)]
        kind: StudyKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
        runs: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: Output,
    },
    /// Three-round anonymous authentication between a ring member and a server.
    AuthDemo {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..=64))]
        ring_size: u64,
        #[arg(long, value_enum, default_value_t = Profile::Test)]
        profile: Profile,
        /// Ring index of the signing client.
        #[arg(long, default_value_t = 0)]
        signer: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run the built-in oracle and property suites.
    Validate {
        /// TOML file with p, q, g and x for the exhaustive trapdoor check.
        #[arg(long)]
        trapdoor_params: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyKind {
    Delay,
    Selfish,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// p = 23, q = 11, g = 4.
    Test,
    /// 512-bit modulus, 160-bit subgroup.
    Desk,
}

fn scenario(path: &Option<PathBuf>, seed: Option<u64>) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match path {
        Some(p) => load_scenario(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run {
            config,
            seed,
            variant,
            output,
        } => {
            let mut cfg = scenario(&config, seed)?;
            if let Some(v) = variant {
                cfg.protocol_variant = v.parse::<Variant>()?;
            }
            let report = commands::run(&cfg, &output.output_dir)?;
            print!("{}", commands::summary_text(&cfg, &report));
            println!("results in {}", output.output_dir.display());
        }
        Command::Sweep {
            config,
            axis,
            values,
            variants,
            replicates,
            seed,
            output,
        } => {
            let cfg = scenario(&config, seed)?;
            let axis: SweepAxis = axis.parse()?;
            let values = parse_values(&values)?;
            let variants: Vec<Variant> = match variants {
                Some(list) => list
                    .split(',')
                    .map(|v| v.trim().parse::<Variant>())
                    .collect::<Result<_, _>>()?,
                None => Variant::ALL.to_vec(),
            };
            let cells = commands::sweep(&cfg, axis, &values, &variants, replicates, &output.output_dir)?;
            println!("{} runs written to {}", cells.len(), output.output_dir.display());
        }
        Command::Study {
            kind,
            config,
            runs,
            seed,
            output,
        } => {
            let cfg = scenario(&config, seed)?;
            let kind = match kind {
                StudyKind::Delay => Study::Delay,
                StudyKind::Selfish => Study::Selfish,
            };
            print!("{}", commands::study(kind, &cfg, runs, &output.output_dir)?);
        }
        Command::AuthDemo {
            ring_size,
            profile,
            signer,
            seed,
        } => {
            let profile = match profile {
                Profile::Test => SecurityProfile::Test,
                Profile::Desk => SecurityProfile::Desk,
            };
            commands::auth_demo(ring_size as usize, profile, signer, seed, &mut std::io::stdout().lock())?;
        }
        Command::Validate { trapdoor_params } => {
            let params = match trapdoor_params {
                Some(p) => {
                    let text = std::fs::read_to_string(&p)
                        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
                    TrapdoorParams::parse(&text)?
                }
                None => TrapdoorParams::default(),
            };
            let reports = run_all(&params)?;
            for r in &reports {
                println!("{r}");
            }
            if reports.iter().any(|r| !r.passed) {
                return Err(CliError::Runtime("validation failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wmnsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
