use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use sr_opo_comb::config::RunConfig;
use sr_opo_comb::scenario::{self, SCENARIOS};

/// Simulates a frequency-multiplexed photon-pair source built on a singly
/// resonant waveguide cavity and writes plot-ready CSV curves plus JSON
/// summaries. Scenarios: calibrate, scan, beats, heralded_waveform,
/// heralded_g2, rates, spectrum, cluster.
#[derive(Parser, Debug)]
#[command(name = "sr-opo-comb", version, arg_required_else_help = true)]
struct Cli {
    /// Scenario to run
    scenario: String,

    /// Config file (TOML); falls back to $SR_OPO_COMB_CONFIG, then to
    /// built-in device defaults
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory, created if missing
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Override the seed from the config
    #[arg(long)]
    seed: Option<u64>,

    /// Run parameter sweeps data parallel
    #[arg(long)]
    parallel: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.scenario != "calibrate" && !SCENARIOS.contains(&cli.scenario.as_str()) {
        eprintln!(
            "unknown scenario '{}'; expected calibrate or one of {}",
            cli.scenario,
            SCENARIOS.join(", ")
        );
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> sr_opo_comb::Result<Vec<PathBuf>> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    scenario::run_scenario(&cli.scenario, &cfg, &cli.out, cli.parallel)
}
