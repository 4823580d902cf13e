use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use arraysep_cli::config::{Overrides, RunConfig, VariantChoice};
use arraysep_cli::run::{evaluate, run, variant_names};
use arraysep_cli::CliError;

#[derive(Debug, Parser)]
#[command(name = "arraysep", version, about = "Microphone-array source separation on simulated scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the scene in CONFIG, separate it and score every variant.
    Separate {
        config: PathBuf,
        /// One variant or `all`.
        #[arg(long, value_parser = parse_variant)]
        variant: Option<VariantChoice>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the scene seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dump_spectrograms: bool,
    },
    /// Score an estimate against a reference (first channel of each).
    Evaluate {
        reference: PathBuf,
        estimate: PathBuf,
        #[arg(long, default_value_t = 1024)]
        frame_size: usize,
        #[arg(long, default_value_t = 512)]
        hop_size: usize,
    },
}

fn parse_variant(s: &str) -> Result<VariantChoice, String> {
    s.parse()
        .map_err(|_| format!("expected one of {}", variant_names()))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Separate {
            config,
            variant,
            out,
            seed,
            dump_spectrograms,
        } => {
            let overrides = Overrides {
                variant,
                out,
                seed,
                spectrograms: dump_spectrograms,
            };
            let cfg = RunConfig::load(&config, &overrides)?;
            let summary = run(&cfg)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", summary.table());
            for r in &summary.runs {
                println!("{:<14} real-time factor {:.3}", r.report.variant.to_string(), r.real_time_factor);
            }
            println!("outputs in {}", cfg.out_dir.display());
        }
        Command::Evaluate {
            reference,
            estimate,
            frame_size,
            hop_size,
        } => {
            let e = evaluate(&reference, &estimate, frame_size, hop_size)?;
            println!("snr_db = {:.4}", e.snr_db);
            println!("lsd_db = {:.4}", e.lsd_db);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
