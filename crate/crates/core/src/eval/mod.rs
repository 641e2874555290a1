//! Frozen-encoder embeddings, k-fold linear probe and diagnostics of the
//! highlighted-dimension effect.

mod probe;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use probe::{fit_logistic, stratified_folds, LogisticModel, ProbeSettings};

use crate::augment::AugmentPolicy;
use crate::cocoloss::build_mask;
use crate::encoder::{EncoderError, Model};
use crate::exec::{map_indexed, map_range, Execution};
use crate::graphdata::GraphDataset;
use crate::trainer::Checkpoint;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("need at least 2 folds, got {0}")]
    Folds(usize),
    #[error("class {class} has {count} members, fewer than {folds} folds")]
    TooFewMembers { class: usize, count: usize, folds: usize },
    #[error("probe needs at least two classes")]
    SingleClass,
    #[error("table has {rows} rows but {labels} labels")]
    Rows { rows: usize, labels: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("top_k must lie in 1..={dim}, got {top_k}")]
    TopK { top_k: usize, dim: usize },
    #[error("gradient is the zero vector")]
    ZeroVector,
    #[error("embedding contains non-finite values")]
    NonFinite,
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("{0}")]
    Labels(String),
}

/// Which embedding represents a graph downstream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedMode {
    /// The flattened readout `r`.
    #[default]
    Anchor,
    /// `r` followed by `r` erased with its own mask.
    Concat,
}

/// One flattened embedding per graph, with its class.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl EmbeddingTable {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self, EvalError> {
        if rows.len() != labels.len() {
            return Err(EvalError::Rows {
                rows: rows.len(),
                labels: labels.len(),
            });
        }
        if let Some(first) = rows.first() {
            if let Some(bad) = rows.iter().find(|r| r.len() != first.len()) {
                return Err(EvalError::DimMismatch(first.len(), bad.len()));
            }
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite);
        }
        Ok(Self { rows, labels })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

/// Un-augmented embeddings of every graph under the checkpoint's encoder.
pub fn embed_all(
    data: &GraphDataset,
    ckpt: &Checkpoint,
    mode: EmbedMode,
    exec: Execution,
) -> Result<EmbeddingTable, EvalError> {
    let labels = data.labels().map_err(|e| EvalError::Labels(e.to_string()))?;
    let delta = ckpt.config.delta;
    let rows = map_indexed(exec, data.graphs(), |_, g| {
        let r = ckpt.model.embed(g)?;
        let mut row = r.data().to_vec();
        if mode == EmbedMode::Concat {
            let mask = build_mask(&r, delta);
            row.extend(r.data().iter().zip(mask.as_tensor().data()).map(|(v, m)| v * m));
        }
        Ok::<_, EncoderError>(row)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    EmbeddingTable::new(rows, labels)
}

/// Held-out accuracies of a k-fold probe.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
}

impl ProbeReport {
    pub fn from_folds(fold_accuracies: Vec<f64>) -> Self {
        let n = fold_accuracies.len() as f64;
        let mean = fold_accuracies.iter().sum::<f64>() / n;
        let var = fold_accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        Self {
            fold_accuracies,
            mean,
            std: var.sqrt(),
        }
    }
}

/// Stratified k-fold cross-validation of a multinomial logistic-regression
/// probe. Features are standardized with training-fold statistics.
pub fn linear_probe_cv(
    table: &EmbeddingTable,
    folds: usize,
    seed: u64,
    settings: &ProbeSettings,
    exec: Execution,
) -> Result<ProbeReport, EvalError> {
    let assignment = stratified_folds(&table.labels, folds, seed)?;
    let classes = table.labels.iter().max().map_or(0, |m| m + 1);
    let accs = map_range(exec, folds, |f| {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..table.len()).partition(|&i| assignment[i] != f);
        let model = fit_logistic(table, &train, classes, settings);
        let correct = test
            .iter()
            .filter(|&&i| model.predict(&table.rows[i]) == table.labels[i])
            .count();
        correct as f64 / test.len() as f64
    });
    Ok(ProbeReport::from_folds(accs))
}

fn top_k_indices(v: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    // stable sort keeps lower indices first among ties
    idx.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()));
    idx.truncate(k);
    idx
}

fn check_top_k(top_k: usize, dim: usize) -> Result<(), EvalError> {
    if top_k == 0 || top_k > dim {
        return Err(EvalError::TopK { top_k, dim });
    }
    Ok(())
}

/// Fraction of shared indices among the `top_k` largest-magnitude
/// coordinates of `z1` and `z2`. Ties go to the lower index.
pub fn highlighted_overlap(z1: &[f64], z2: &[f64], top_k: usize) -> Result<f64, EvalError> {
    if z1.len() != z2.len() {
        return Err(EvalError::DimMismatch(z1.len(), z2.len()));
    }
    check_top_k(top_k, z1.len())?;
    let a = top_k_indices(z1, top_k);
    let b = top_k_indices(z2, top_k);
    let shared = a.iter().filter(|i| b.contains(i)).count();
    Ok(shared as f64 / top_k as f64)
}

/// Share of the total absolute gradient carried by its `top_k` largest
/// coordinates.
pub fn gradient_concentration(grad: &[f64], top_k: usize) -> Result<f64, EvalError> {
    check_top_k(top_k, grad.len())?;
    let total: f64 = grad.iter().map(|g| g.abs()).sum();
    if total == 0.0 {
        return Err(EvalError::ZeroVector);
    }
    let top: f64 = top_k_indices(grad, top_k).iter().map(|&i| grad[i].abs()).sum();
    Ok(top / total)
}

/// Default diagnostic `top_k`: one eighth of the dimensions, at least one.
pub fn default_top_k(dim: usize) -> usize {
    (dim / 8).max(1)
}

/// Highlighted overlap of each graph's two augmented views, measured on the
/// flattened readouts. Views are drawn from `policy` at pseudo-epoch `round`.
pub fn positive_pair_overlaps(
    model: &Model,
    data: &GraphDataset,
    policy: &AugmentPolicy,
    round: u64,
    top_k: usize,
    exec: Execution,
) -> Result<Vec<f64>, EvalError> {
    map_indexed(exec, data.graphs(), |i, g| {
        let (v1, v2) = policy.views(g, round, i as u64);
        let r1 = model.embed(&v1)?;
        let r2 = model.embed(&v2)?;
        highlighted_overlap(r1.data(), r2.data(), top_k)
    })
    .into_iter()
    .collect()
}

/// `v` with 17 significant digits, enough to round-trip any `f64`.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}
