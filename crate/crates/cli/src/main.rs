use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qrf::io::Config;
use qrf::tasks::run_task;
use qrf::Error;

/// Quantum radiance field experiments on a statevector simulator.
///
/// Settings come from an optional `key = value` config file; any
/// `--key value` (or `--key=value`) after it overrides that key.
/// Relative output directories are placed under $QRF_OUTPUT_ROOT when set.
///
/// Exit codes: 0 success, 2 config error, 3 numeric divergence,
/// 4 resource limit, 1 anything else.
#[derive(Debug, Parser)]
#[command(name = "qrf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Regress an image from pixel coordinates.
    Fit2d(TaskArgs),
    /// Fit the toy volume scene from rendered views.
    Fit3d(TaskArgs),
    /// Render a checkpoint; `--quantum_pixels k` (k <= 4) adds the
    /// quantum-composited pixel demo.
    Render(TaskArgs),
    /// Quantum counting and mean estimation on an energy file.
    Qcount(TaskArgs),
    /// Error-versus-cost study of quantum counting against Monte Carlo.
    Convergence(TaskArgs),
    /// Grid of image fits over activations, encoders and circuits.
    Ablate(TaskArgs),
}

#[derive(Debug, clap::Args)]
struct TaskArgs {
    /// Config file with `key = value` lines.
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Overrides as `--key value` pairs.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

impl Command {
    fn split(self) -> (&'static str, TaskArgs) {
        match self {
            Command::Fit2d(a) => ("fit2d", a),
            Command::Fit3d(a) => ("fit3d", a),
            Command::Render(a) => ("render", a),
            Command::Qcount(a) => ("qcount", a),
            Command::Convergence(a) => ("convergence", a),
            Command::Ablate(a) => ("ablate", a),
        }
    }
}

fn apply_overrides(cfg: &mut Config, args: &[String]) -> Result<(), Error> {
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("expected `--key value`, got `{flag}`")))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| Error::Config(format!("`--{key}` needs a value")))?;
                (key.to_string(), v.clone())
            }
        };
        cfg.set(&key.replace('-', "_"), value);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<String, Error> {
    let (task, args) = cli.command.split();
    let mut cfg = match &args.config {
        Some(path) => Config::load(path)?,
        None => Config::new(),
    };
    apply_overrides(&mut cfg, &args.overrides)?;
    run_task(task, &cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
