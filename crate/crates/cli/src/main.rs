mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graphcoco::eval::EmbedMode;
use graphcoco::exec::configure_threads;
use graphcoco::trainer::EraseMode;
use graphcoco::Execution;
use serde::de::DeserializeOwned;

use commands::SweepAxis;
use config::{DatasetSpec, ExperimentConfig};
use error::CliError;

/// Complementary contrastive learning on graph datasets.
#[derive(Parser)]
#[command(name = "graphcoco", version, about)]
struct Cli {
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic two-class dataset in TUDataset format.
    GenData {
        /// Graphs per class.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "SYNTH")]
        name: String,
    },
    /// Train an encoder; writes checkpoint.bin, history.csv and config.json.
    Train(RunArgs),
    /// Probe a checkpoint; writes probe.csv and diagnostics.csv.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train and probe every erase mode; writes ablate.csv.
    Ablate(RunArgs),
    /// Train and probe once per value of one setting; writes sweep.csv.
    Sweep {
        #[arg(long, value_enum)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// JSON experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding TUDataset files.
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Dataset name prefix inside --data; inferred when unique.
    #[arg(long, requires = "data")]
    name: Option<String>,
    /// Generate a synthetic dataset with this many graphs per class.
    #[arg(long)]
    synthetic: Option<usize>,
    #[arg(long, requires = "synthetic", default_value_t = 0)]
    data_seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    delta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    /// standard, none, rand, non_min or bi.
    #[arg(long, value_parser = parse_snake::<EraseMode>)]
    erase_mode: Option<EraseMode>,
    /// Sets the ratio of both augmentations.
    #[arg(long)]
    aug_ratio: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    /// anchor or concat.
    #[arg(long, value_parser = parse_snake::<EmbedMode>)]
    embed: Option<EmbedMode>,
    #[arg(long)]
    eval_seed: Option<u64>,
}

fn parse_snake<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(dir) = &self.data {
            let name = match &self.name {
                Some(n) => n.clone(),
                None => commands::infer_dataset_name(dir)?,
            };
            cfg.dataset = Some(DatasetSpec::Tudataset { dir: dir.clone(), name });
        }
        if let Some(n) = self.synthetic {
            cfg.dataset = Some(DatasetSpec::Synthetic {
                n_per_class: n,
                seed: self.data_seed,
            });
        }
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        let t = &mut cfg.train;
        macro_rules! set {
            ($($flag:ident => $field:expr),* $(,)?) => {
                $(if let Some(v) = self.$flag { $field = v; })*
            };
        }
        set! {
            epochs => t.epochs,
            batch_size => t.batch_size,
            lr => t.lr,
            delta => t.delta,
            tau => t.tau,
            layers => t.layers,
            hidden => t.hidden,
            erase_mode => t.erase_mode,
            seed => t.seed,
            folds => cfg.eval.folds,
            embed => cfg.eval.embed,
            eval_seed => cfg.eval.seed,
        }
        if let Some(p) = self.aug_ratio {
            t.policy.first.p = p;
            t.policy.second.p = p;
        }
        if self.top_k.is_some() {
            cfg.eval.top_k = self.top_k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn threads_from_env() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("GCOCO_THREADS") else {
        return Ok(());
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n >= 1 => {
            if !configure_threads(n) {
                log::debug!("thread pool already configured or sequential build");
            }
            Ok(())
        }
        _ => Err(CliError::Config {
            path: "GCOCO_THREADS".into(),
            message: format!("expected a positive integer, got {raw:?}"),
        }),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    threads_from_env()?;
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::GenData { n, seed, out, name } => commands::gen_data(n as usize, seed, &out, &name),
        Command::Train(args) => commands::train(&args.resolve()?, exec),
        Command::Eval { checkpoint, run } => commands::eval(&run.resolve()?, &checkpoint, exec),
        Command::Ablate(args) => commands::ablate(&args.resolve()?, exec),
        Command::Sweep { axis, values, run } => commands::sweep(&run.resolve()?, axis, &values, exec),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
