use clap::{Parser, ValueEnum};
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use diffqec_cli::commands::{cmd_attribute, cmd_bench, cmd_decode, cmd_gen, cmd_postselect, cmd_train, CliError};
use diffqec_cli::config::{Overrides, RunConfig};
use diffqec_cli::verify::cmd_verify;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    /// Simulate memory experiments and write one dataset per history length.
    Gen,
    /// Train the denoiser with the short-to-long curriculum.
    Train,
    /// Decode a dataset with a named decoder.
    Decode,
    /// Per-distance decode latency tables.
    Bench,
    /// Logical error rate after discarding low-confidence shots.
    Postselect,
    /// Integrated-gradients attribution and saliency-reweighted matching.
    Attribute,
    /// Run the invariant suite.
    Verify,
}

#[derive(Debug, Parser)]
#[command(name = "diffqec", version, about = "Diffusion decoding laboratory for rotated surface codes")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// diffqec, mwpm, ml or lookup.
    #[arg(long)]
    decoder: Option<String>,
    /// Code distance.
    #[arg(long)]
    d: Option<usize>,
    /// Comma-separated history lengths.
    #[arg(long, value_delimiter = ',')]
    rounds: Option<Vec<usize>>,
    /// Physical error rate.
    #[arg(long)]
    p: Option<f64>,
    /// Measurement flip rate.
    #[arg(long)]
    pmeas: Option<f64>,
    #[arg(long)]
    shots: Option<usize>,
    /// Comma-separated discard ratios.
    #[arg(long, value_delimiter = ',')]
    rho: Option<Vec<f64>>,
    /// Saliency reweighting strength.
    #[arg(long)]
    lambda: Option<f64>,
    /// Reverse chains per shot.
    #[arg(long)]
    chains: Option<usize>,
    /// Diffusion steps T.
    #[arg(long)]
    steps: Option<usize>,
}

fn emit(value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    // a closed pipe on stdout is not a failure; the outputs are on disk
    let _ = writeln!(std::io::stdout(), "{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(CliError::Validation)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        out: cli.out,
        decoder: cli.decoder,
        d: cli.d,
        rounds: cli.rounds,
        p: cli.p,
        pmeas: cli.pmeas,
        shots: cli.shots,
        rho: cli.rho,
        lambda: cli.lambda,
        chains: cli.chains,
        steps: cli.steps,
    });
    cfg.validate().map_err(CliError::Validation)?;
    match cli.command {
        Command::Gen => emit(&cmd_gen(&cfg)?),
        Command::Train => emit(&cmd_train(&cfg)?),
        Command::Decode => emit(&cmd_decode(&cfg)?),
        Command::Bench => emit(&cmd_bench(&cfg)?),
        Command::Postselect => emit(&cmd_postselect(&cfg)?),
        Command::Attribute => emit(&cmd_attribute(&cfg)?),
        Command::Verify => cmd_verify(&cfg).map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
