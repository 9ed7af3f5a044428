use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use remixmatch::runner::{
    evaluate, format_ablation_table, load_datasets, parse_metrics, plot_metrics, run_ablation_suite,
    train, with_workers, Checkpoint, TrainConfig,
};
use remixmatch::Result;

#[derive(Parser)]
#[command(name = "remixmatch", version, about = "Semi-supervised image classification with augmentation anchoring and distribution alignment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// `synth` or a directory with IDX or CIFAR-10 binary files.
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn config(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        if let Some(d) = &self.data {
            cfg.data = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write metrics and a checkpoint.
    Train(RunArgs),
    /// Report the EMA error rate of a checkpoint on the test set.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Data to evaluate on; defaults to the data recorded in the checkpoint.
        #[arg(long)]
        data: Option<String>,
    },
    /// Train the baseline and every ablation variant.
    Ablate(RunArgs),
    /// Draw one metrics column as a text chart.
    Plot {
        /// A metrics.csv file or a run directory containing one.
        path: PathBuf,
        #[arg(long, default_value = "test_error")]
        column: String,
        #[arg(long, default_value_t = 60)]
        width: usize,
        #[arg(long, default_value_t = 15)]
        height: usize,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.config()?;
            let out = args.out.clone().unwrap_or_else(|| PathBuf::from("run"));
            let (train_set, test_set) = load_datasets(&cfg)?;
            let outcome = with_workers(|| train(&cfg, &train_set, &test_set, Some(&out)))??;
            say(&format!("final_error={:.4}\nwrote {}", outcome.final_error, out.display()));
        }
        Command::Eval { checkpoint, data } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let mut cfg = ckpt.config.clone();
            if let Some(d) = data {
                cfg.data = d;
            }
            let (_, test_set) = load_datasets(&cfg)?;
            let err = with_workers(|| evaluate(&ckpt, &test_set))??;
            say(&format!("error_rate={err:.4}"));
        }
        Command::Ablate(args) => {
            let cfg = args.config()?;
            let out = args.out.clone().unwrap_or_else(|| PathBuf::from("ablation"));
            let (train_set, test_set) = load_datasets(&cfg)?;
            let results = with_workers(|| run_ablation_suite(&cfg, &train_set, &test_set, Some(&out)))??;
            let table = format_ablation_table(&results);
            std::fs::write(out.join("ablation.csv"), &table)?;
            say(table.trim_end());
        }
        Command::Plot { path, column, width, height } => {
            let file = if path.is_dir() { path.join("metrics.csv") } else { path };
            let text = read(&file)?;
            say(plot_metrics(&parse_metrics(&text)?, &column, width, height)?.trim_end());
        }
    }
    Ok(())
}

/// Prints a line, ignoring a closed stdout.
fn say(text: &str) {
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| remixmatch::Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
