use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use deepsc::harness::config::{parse_channels, parse_snr_grid, ExperimentConfig};
use deepsc::harness::run;
use deepsc::{Error, Result};

/// Speech semantic communication over simulated fading channels.
#[derive(Parser)]
#[command(name = "deepsc", version = env!("DEEPSC_BUILD_ID"))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model on the configured channel and SNR.
    Train(Common),
    /// Evaluate a checkpoint over the channel x SNR grid.
    Eval(Common),
    /// Run the classical A-law/turbo/64-QAM chain over the grid.
    Baseline(Common),
    /// Train one model per channel family and test each on all families.
    CrossTrain(Common),
    /// Merge report directories into one results.csv and summary.
    Report {
        /// Directories holding results.csv (and metadata.txt).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; per-purpose seeds derive from it.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Checkpoint to evaluate (default: <out-dir>/model.dsc).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// `start:step:stop` or a comma list; `inf` allowed.
    #[arg(long, allow_hyphen_values = true)]
    snr_grid: Option<String>,
    /// Training channel for `train`/`eval`; test channel list otherwise.
    #[arg(long)]
    channel: Option<String>,
    #[arg(long)]
    pesq_cmd: Option<String>,
    /// Any configuration key, `section.key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

fn load(c: &Common, train_channel: bool) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
        cfg.apply_seed();
    }
    for kv in &c.sets {
        cfg.apply_override(kv)?;
    }
    if let Some(d) = &c.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(g) = &c.snr_grid {
        cfg.eval.snr_grid = parse_snr_grid(g)?;
    }
    if let Some(ch) = &c.channel {
        if train_channel {
            cfg.train.channel.family = ch.parse()?;
        } else {
            cfg.eval.channels = parse_channels(ch)?;
        }
    }
    if let Some(p) = &c.pesq_cmd {
        cfg.pesq_cmd = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => {
            let cfg = load(&c, true)?;
            let (out, path) = run::run_train(&cfg)?;
            let last = out.curve.last().map(|r| r.mean_loss / (cfg.gain * cfg.gain));
            println!(
                "trained {} epochs ({} steps{}), final loss {}, checkpoint {}",
                out.curve.len(),
                out.step_losses.len(),
                if out.stopped_early { ", early stop" } else { "" },
                last.map(|l| format!("{l:.4e}")).unwrap_or_else(|| "-".into()),
                path.display()
            );
        }
        Command::Eval(c) => {
            let cfg = load(&c, true)?;
            let ckpt = c.checkpoint.clone().unwrap_or_else(|| cfg.out_dir.join(run::CHECKPOINT_FILE));
            print!("{}", run::run_eval(&cfg, &ckpt)?.summary());
        }
        Command::Baseline(c) => {
            let cfg = load(&c, false)?;
            print!("{}", run::run_baseline(&cfg)?.summary());
        }
        Command::CrossTrain(c) => {
            let cfg = load(&c, false)?;
            print!("{}", run::cross_train(&cfg)?.report.summary());
        }
        Command::Report { inputs, out_dir } => {
            print!("{}", run::run_report(&inputs, &out_dir)?.summary());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
