use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use graphcoco::augment::AugmentPolicy;
use graphcoco::eval::{
    default_top_k, embed_all, format_real, linear_probe_cv, positive_pair_overlaps, ProbeReport,
};
use graphcoco::exec::map_indexed;
use graphcoco::graphdata::{load_tudataset, synth_two_class, write_tudataset, GraphDataset};
use graphcoco::rng::{derive, tag};
use graphcoco::trainer::{train_with, Checkpoint, EraseMode, TrainConfig};
use graphcoco::Execution;
use log::{info, warn};

use crate::config::{DatasetSpec, EvalConfig, ExperimentConfig};
use crate::error::CliError;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn output_dir(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.output_dir.clone().ok_or_else(|| CliError::Config {
        path: "output_dir".into(),
        message: "no output directory given (use --out)".into(),
    })?;
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    Ok(dir)
}

pub fn load_dataset(spec: Option<&DatasetSpec>) -> Result<GraphDataset, CliError> {
    match spec {
        None => Err(CliError::Config {
            path: "dataset".into(),
            message: "no dataset given (use --data or --synthetic)".into(),
        }),
        Some(DatasetSpec::Tudataset { dir, name }) => Ok(load_tudataset(dir, name)?),
        Some(DatasetSpec::Synthetic { n_per_class, seed }) => Ok(synth_two_class(*n_per_class, *seed)),
    }
}

/// The single `{name}_A.txt` prefix in `dir`.
pub fn infer_dataset_name(dir: &Path) -> Result<String, CliError> {
    let entries = fs::read_dir(dir).map_err(io_err(dir))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|f| f.strip_suffix("_A.txt")).map(String::from))
        .collect();
    names.sort();
    match names.len() {
        1 => Ok(names.remove(0)),
        0 => Err(CliError::Config {
            path: "dataset.tudataset.name".into(),
            message: format!("no *_A.txt file in {}", dir.display()),
        }),
        _ => Err(CliError::Config {
            path: "dataset.tudataset.name".into(),
            message: format!("several datasets in {} ({}); pass --name", dir.display(), names.join(", ")),
        }),
    }
}

pub fn gen_data(n: usize, seed: u64, out: &Path, name: &str) -> Result<(), CliError> {
    let data = synth_two_class(n, seed);
    write_tudataset(&data, out, name)?;
    info!("wrote {} graphs to {}", data.len(), out.display());
    Ok(())
}

/// Probe report of the checkpoint's embeddings.
pub fn probe(data: &GraphDataset, ckpt: &Checkpoint, eval: &EvalConfig, exec: Execution) -> Result<ProbeReport, CliError> {
    let table = embed_all(data, ckpt, eval.embed, exec)?;
    Ok(linear_probe_cv(&table, eval.folds, eval.seed, &eval.probe, exec)?)
}

pub fn train(cfg: &ExperimentConfig, exec: Execution) -> Result<(), CliError> {
    let data = load_dataset(cfg.dataset.as_ref())?;
    let dir = output_dir(cfg)?;
    let out = train_with(&data, &cfg.train, exec)?;
    let ckpt_path = dir.join(CHECKPOINT_FILE);
    out.checkpoint.save(&ckpt_path).map_err(|source| CliError::Checkpoint {
        path: ckpt_path.clone(),
        source,
    })?;
    let rows: Vec<Vec<String>> = out
        .history
        .iter()
        .zip(&out.mask_zeros)
        .enumerate()
        .map(|(e, (l, z))| vec![e.to_string(), format_real(*l), z.to_string()])
        .collect();
    write_csv(&dir.join("history.csv"), &["epoch", "loss", "mask_zeros"], &rows)?;
    let resolved = dir.join("config.json");
    let json = serde_json::to_string_pretty(cfg).expect("config serializes");
    fs::write(&resolved, json).map_err(io_err(&resolved))?;
    info!(
        "trained {} epochs: loss {} -> {}",
        out.history.len(),
        out.history.first().copied().unwrap_or(f64::NAN),
        out.history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn eval(cfg: &ExperimentConfig, checkpoint: &Path, exec: Execution) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(checkpoint).map_err(|source| CliError::Checkpoint {
        path: checkpoint.to_path_buf(),
        source,
    })?;
    let data = load_dataset(cfg.dataset.as_ref())?;
    let dir = output_dir(cfg)?;
    let report = probe(&data, &ckpt, &cfg.eval, exec)?;
    let mut rows: Vec<Vec<String>> = report
        .fold_accuracies
        .iter()
        .enumerate()
        .map(|(f, a)| vec![f.to_string(), format_real(*a), String::new()])
        .collect();
    rows.push(vec!["mean".into(), format_real(report.mean), format_real(report.std)]);
    write_csv(&dir.join("probe.csv"), &["fold", "accuracy", "std"], &rows)?;

    let top_k = cfg.eval.top_k.unwrap_or_else(|| default_top_k(ckpt.model.embedding_width()));
    let policy = AugmentPolicy {
        seed: derive(cfg.eval.seed, &[tag::DIAG]),
        ..ckpt.config.policy
    };
    let overlaps = positive_pair_overlaps(&ckpt.model, &data, &policy, 0, top_k, exec)?;
    let rows: Vec<Vec<String>> = overlaps
        .iter()
        .enumerate()
        .map(|(i, o)| vec![i.to_string(), format_real(*o)])
        .collect();
    write_csv(&dir.join("diagnostics.csv"), &["pair_id", "overlap"], &rows)?;
    info!("probe accuracy {:.4} ± {:.4}", report.mean, report.std);
    Ok(())
}

pub fn ablate(cfg: &ExperimentConfig, exec: Execution) -> Result<(), CliError> {
    let data = load_dataset(cfg.dataset.as_ref())?;
    let dir = output_dir(cfg)?;
    let results = map_indexed(exec, &EraseMode::ALL, |_, &mode| {
        let train_cfg = TrainConfig {
            erase_mode: mode,
            ..cfg.train
        };
        let out = train_with(&data, &train_cfg, exec)?;
        let report = probe(&data, &out.checkpoint, &cfg.eval, exec)?;
        Ok::<_, CliError>((mode, out, report))
    });
    let mut rows = Vec::new();
    for r in results {
        let (mode, out, report) = r?;
        info!("{mode}: {} coordinates erased in the first minibatch", out.first_batch_mask_zeros);
        rows.push(vec![
            mode.to_string(),
            format_real(report.mean),
            format_real(report.std),
            format_real(*out.history.last().unwrap_or(&f64::NAN)),
            out.first_batch_mask_zeros.to_string(),
        ]);
    }
    write_csv(
        &dir.join("ablate.csv"),
        &["erase_mode", "mean_acc", "std_acc", "final_loss", "first_batch_mask_zeros"],
        &rows,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepAxis {
    Delta,
    AugRatio,
}

impl SweepAxis {
    fn apply(self, base: &TrainConfig, value: f64) -> TrainConfig {
        let mut cfg = *base;
        match self {
            SweepAxis::Delta => cfg.delta = value,
            SweepAxis::AugRatio => {
                cfg.policy.first.p = value;
                cfg.policy.second.p = value;
            }
        }
        cfg
    }

    fn check(self, value: f64) -> bool {
        match self {
            SweepAxis::Delta => (0.0..=1.0).contains(&value),
            SweepAxis::AugRatio => (0.0..1.0).contains(&value),
        }
    }
}

/// Values in first-seen order, without repeats.
pub fn dedupe(values: &[f64]) -> Vec<f64> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for &v in values {
        // 0.0 and -0.0 are the same sweep point
        let key = (v + 0.0).to_bits();
        if seen.insert(key) {
            out.push(v);
        } else {
            warn!("duplicate sweep value {v} ignored");
        }
    }
    out
}

pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64], exec: Execution) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Config {
            path: "values".into(),
            message: "no sweep values given".into(),
        });
    }
    for (i, &v) in values.iter().enumerate() {
        if !axis.check(v) {
            return Err(CliError::Config {
                path: format!("values[{i}]"),
                message: format!("{v} is outside the {axis:?} domain"),
            });
        }
    }
    let values = dedupe(values);
    let data = load_dataset(cfg.dataset.as_ref())?;
    let dir = output_dir(cfg)?;
    let results = map_indexed(exec, &values, |_, &v| {
        let out = train_with(&data, &axis.apply(&cfg.train, v), exec)?;
        probe(&data, &out.checkpoint, &cfg.eval, exec)
    });
    let mut rows = Vec::new();
    for (v, r) in values.iter().zip(results) {
        let report = r?;
        rows.push(vec![format_real(*v), format_real(report.mean), format_real(report.std)]);
    }
    write_csv(&dir.join("sweep.csv"), &["value", "mean_acc", "std_acc"], &rows)
}
