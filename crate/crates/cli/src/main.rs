use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rffid::exp::Variant;
use rffid_cli::commands::{self, EvalSplit, Overrides};

#[derive(Parser)]
#[command(name = "rffid", version, about = "ZigBee preamble fingerprinting workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Default)]
struct OverrideArgs {
    /// Experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of cross-validation folds.
    #[arg(long)]
    folds: Option<usize>,
    /// Comma-separated SNR points in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_grid: Option<Vec<f64>>,
    /// Number of synthetic devices.
    #[arg(long)]
    devices: Option<usize>,
    /// Frames per device per SNR point.
    #[arg(long)]
    frames: Option<usize>,
}

impl OverrideArgs {
    fn into_overrides(self, epochs: Option<usize>) -> Overrides {
        Overrides {
            seed: self.seed,
            folds: self.folds,
            snr_grid: self.snr_grid,
            devices: self.devices,
            frames: self.frames,
            epochs,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset with its fold splits and normalization statistics.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Train one variant on one fold; writes a checkpoint and `<out>.log.csv`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = parse_variant)]
        variant: Variant,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        fold: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Cap on training epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a checkpoint on a split of its fold; writes an experiment record.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Merge experiment records into per-SNR tables.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        records: Vec<PathBuf>,
    },
    /// Print (or write) the reference configuration with every default.
    Defaults {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse::<Variant>().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> rffid_cli::Result<()> {
    match cli.command {
        Command::Gen { config, out, overrides } => {
            commands::cmd_gen(config.as_deref(), &out, &overrides.into_overrides(None))?;
        }
        Command::Train { data, variant, out, fold, seed, epochs } => {
            let o = OverrideArgs { seed, ..Default::default() }.into_overrides(epochs);
            let ckpt = commands::cmd_train(&data, variant, &out, fold, &o)?;
            eprintln!("best epoch {} validation {:.2}%", ckpt.header.best_epoch, ckpt.header.best_val_accuracy);
        }
        Command::Eval { checkpoint, data, out, split } => {
            let which = match split {
                SplitArg::Train => EvalSplit::Train,
                SplitArg::Validation => EvalSplit::Validation,
                SplitArg::Test => EvalSplit::Test,
            };
            let record = commands::cmd_eval(&checkpoint, &data, &out, which)?;
            for p in &record.summary {
                eprintln!("{:>6} dB  {:6.2}%", p.snr_db, p.accuracy.mean);
            }
        }
        Command::Report { out, records } => {
            commands::cmd_report(&records, &out)?;
        }
        Command::Defaults { out } => commands::cmd_defaults(out.as_deref())?,
    }
    Ok(())
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
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
