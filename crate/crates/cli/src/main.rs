use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info, LevelFilter};
use sgplfm_cli::config::ExperimentConfig;
use sgplfm_cli::data::{build_input, simulate_truth};
use sgplfm_cli::error::CliError;
use sgplfm_cli::report::{to_json, write_outputs};
use sgplfm_cli::sweep::{parse_value, run_sweep, write_sweep_csv, SweepAxis};
use sgplfm_cli::{run_experiment, Result};

#[derive(Parser)]
#[command(name = "sgplfm", version, about = "Switching latent force identification of stick-slip oscillators")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration (TOML).
    config: PathBuf,
    /// Override a config key, e.g. `--set signal.snr_db=60`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; defaults to `output.directory` of the config.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured system and write the ground truth at f_s as CSV.
    Simulate(ConfigArgs),
    /// Run the full identification pipeline and write the report files.
    Identify(ConfigArgs),
    /// Repeat the identification over one signal setting.
    Sweep {
        #[command(flatten)]
        args: ConfigArgs,
        /// snr, t_f or f_s.
        #[arg(long)]
        axis: String,
        /// Comma-separated values; `inf` is allowed for snr.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Parse and validate a configuration without running it.
    ValidateConfig {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn load(args: &ConfigArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let cfg = ExperimentConfig::from_file(&args.config, &args.overrides)?;
    let dir = args.output.clone().unwrap_or_else(|| cfg.output.directory.clone());
    Ok((cfg, dir))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ValidateConfig { config, overrides } => {
            let cfg = ExperimentConfig::from_file(&config, &overrides)?;
            println!("{}: ok ({})", config.display(), cfg.name);
        }
        Command::Simulate(args) => {
            let (cfg, dir) = load(&args)?;
            create_dir(&dir)?;
            let input = build_input(&cfg, cfg.seeds.input)?;
            let dense = simulate_truth(&cfg, input.as_ref(), cfg.signal.t_f)?;
            let sampled = sgplfm::friction_sim::resample_uniform(&dense, cfg.signal.f_s).map_err(|source| {
                CliError::Model {
                    context: "resampling".into(),
                    source,
                }
            })?;
            let path = dir.join("truth.csv");
            let file = std::fs::File::create(&path).map_err(|e| CliError::Io {
                path: path.clone(),
                message: e.to_string(),
            })?;
            sgplfm::friction_sim::write_trajectory_csv(&sampled, file).map_err(|source| CliError::Model {
                context: path.display().to_string(),
                source,
            })?;
            info!("{} samples, {} stops", sampled.len(), sampled.stick_count());
            println!("{}", path.display());
        }
        Command::Identify(args) => {
            let (cfg, dir) = load(&args)?;
            let out = run_experiment(&cfg)?;
            for p in write_outputs(&out, &dir)? {
                println!("{}", p.display());
            }
        }
        Command::Sweep { args, axis, values } => {
            let (cfg, dir) = load(&args)?;
            let axis: SweepAxis = axis.parse()?;
            let values = values.iter().map(|v| parse_value(v)).collect::<Result<Vec<_>>>()?;
            let table = run_sweep(&cfg, axis, &values)?;
            create_dir(&dir)?;
            let csv = dir.join(format!("sweep_{axis}.csv"));
            write_sweep_csv(&table, &csv)?;
            let json = dir.join(format!("sweep_{axis}.json"));
            std::fs::write(&json, to_json(&table)).map_err(|e| CliError::Io {
                path: json.clone(),
                message: e.to_string(),
            })?;
            println!("{}\n{}", csv.display(), json.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
