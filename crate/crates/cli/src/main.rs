use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nematic_cli::{apply_overrides, dispatch, Command, ConfigError, RunConfig};

/// Thread count for the parallel kernels; unset uses every core.
const THREADS_ENV: &str = "NEMATIC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "nematic", version, about = "Poiseuille flow of nematic liquid crystals")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped configuration: chl20-special, general, cusp or zero.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// `key=value` with dotted keys, e.g. `grid.n=641`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn load(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let base = match (&cli.config, &cli.preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::shipped(name)?,
        (None, None) => return Err(ConfigError::Invalid(vec!["pass --config PATH or --preset NAME".into()])),
    };
    let mut value = toml::Value::Table(base.to_toml().parse().expect("canonical TOML"));
    apply_overrides(&mut value, &cli.overrides)?;
    let mut cfg = RunConfig::from_value(value)?;
    if let Some(out) = &cli.out {
        cfg.output = Some(out.clone());
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got '{v}'");
                return ExitCode::from(2);
            }
        }
    }
    let (cfg, run) = match load(&cli).and_then(|cfg| cfg.resolve().map(|r| (cfg, r))) {
        Ok(pair) => pair,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match dispatch(cli.command, &cfg, &run) {
        Ok(summary) => {
            for v in &summary.verdicts {
                println!("{:<28} {} ({:.3e} vs {:.3e})", v.name, if v.passed { "pass" } else { "FAIL" }, v.value, v.threshold);
            }
            if let Some(e) = &summary.error {
                eprintln!("error: {e}");
            }
            println!("wrote {} ({:.2}s)", run.output.display(), summary.wall_time);
            ExitCode::from(summary.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: cannot write to {}: {e}", run.output.display());
            ExitCode::from(3)
        }
    }
}
