mod commands;
mod error;
mod settings;

use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use viper_core::synthworld::Split;

use crate::commands::LossFlags;
use crate::error::CliResult;

/// Visual contact pressure estimation with weak force/torque labels.
///
/// Exit codes: 0 success, 1 usage or settings error, 2 runtime failure.
#[derive(Debug, Parser)]
#[command(name = "viper", version)]
struct Cli {
    /// Log more (-v debug, -vv trace). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct SettingsArgs {
    /// TOML settings file. Flags take precedence over it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one setting, e.g. `train.iterations=2000`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl SettingsArgs {
    fn load(&self) -> CliResult<settings::Settings> {
        settings::load(self.config.as_deref(), &self.set)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a dataset of fully and weakly labeled frames.
    GenData {
        #[command(flatten)]
        settings: SettingsArgs,
        /// Dataset seed (overrides `dataset.seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a network and write a checkpoint.
    Train {
        #[command(flatten)]
        settings: SettingsArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset directory written by gen-data.
        #[arg(long)]
        data: PathBuf,
        /// Loss switches, e.g. `domain=on,ft=off`.
        #[arg(long, value_parser = commands::parse_loss_flags, default_value = "")]
        flags: LossFlags,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint, or the ground-truth oracle, on a dataset split.
    Eval {
        #[arg(long, required_unless_present = "oracle", conflicts_with = "oracle")]
        checkpoint: Option<PathBuf>,
        /// Predict the ground truth instead of running a model.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        data: PathBuf,
        /// Directory for metrics.csv, metrics.txt and metrics.json.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Train and score all four loss combinations over several seeds.
    Ablate {
        #[command(flatten)]
        settings: SettingsArgs,
        /// First training seed; further runs count up from it.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        data: PathBuf,
        /// Directory for ablation.csv, ablation.txt and rows.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run randomized grasping episodes and report per-object success.
    ServoBench {
        #[command(flatten)]
        settings: SettingsArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, required_unless_present = "oracle", conflicts_with = "oracle")]
        checkpoint: Option<PathBuf>,
        /// Servo on the simulator's true pressure.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        trials: Option<usize>,
        /// Directory for bench.txt, bench.json and trajectories.jsonl.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Serve the session API.
    Serve {
        #[command(flatten)]
        settings: SettingsArgs,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Default checkpoint for LEARNED sessions.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Scene seeds handed to sessions, e.g. `1-100` or `3,8,21`.
        #[arg(long, value_parser = commands::parse_seed_pool, default_value = "1-100")]
        seed_pool: commands::SeedPool,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData { settings, seed, out } => commands::gen_data(settings.load()?, seed, &out),
        Command::Train {
            settings,
            seed,
            data,
            flags,
            out,
        } => commands::train_cmd(settings.load()?, seed, flags, &data, &out),
        Command::Eval {
            checkpoint,
            data,
            report,
            split,
            ..
        } => commands::eval_cmd(checkpoint.as_deref(), &data, &report, split.into()),
        Command::Ablate {
            settings,
            seed,
            data,
            out,
        } => commands::ablate(settings.load()?, seed, &data, &out),
        Command::ServoBench {
            settings,
            seed,
            checkpoint,
            trials,
            report,
            ..
        } => commands::servo_bench(settings.load()?, seed, checkpoint.as_deref(), trials, report.as_deref()),
        Command::Serve {
            settings,
            port,
            host,
            checkpoint,
            seed_pool,
        } => commands::serve(settings.load()?, SocketAddr::new(host, port), checkpoint, seed_pool),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
