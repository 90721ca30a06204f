use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ultralocal_cli::config::{ModeName, RunConfig};
use ultralocal_cli::pipeline::{compare_modes, run_pipeline, summary_csv};

/// Design, verify and simulate an ultra-local fault estimator.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Design mode, overriding the config (iss, hinf, h2, mixed-hinf, mixed-h2).
    #[arg(long)]
    mode: Option<String>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Noise seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Run hinf, h2, mixed-hinf and mixed-h2 and write a comparison table.
    #[arg(long)]
    compare: bool,
}

fn load(args: &Args) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::load(&args.config).map_err(|e| e.to_string())?;
    if let Some(m) = &args.mode {
        cfg.design.mode = ModeName::parse(m).ok_or_else(|| format!("--mode: unknown mode `{m}`"))?;
    }
    if let Some(seed) = args.seed {
        cfg.simulation.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let out = cfg.output.dir.clone();
    if args.compare {
        return match compare_modes(&cfg, &out) {
            Ok(results) => {
                let rows: Vec<_> = results.iter().map(|r| r.summary.clone()).collect();
                print!("{}", summary_csv(&rows));
                for r in &results {
                    if let Err(e) = &r.outcome {
                        eprintln!("{}: {e}", r.mode.as_str());
                    }
                }
                match results.iter().find_map(|r| r.outcome.as_ref().err()) {
                    Some(e) if results.iter().all(|r| r.outcome.is_err()) => ExitCode::from(e.exit_code() as u8),
                    _ => ExitCode::SUCCESS,
                }
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(e.exit_code() as u8)
            }
        };
    }
    match run_pipeline(&cfg, &out) {
        Ok(outcome) => {
            print!("{}", summary_csv(std::slice::from_ref(&outcome.summary)));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
