use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{EmbeddingTable, EvalError};
use crate::rng::{stream, tag};

/// Logistic-regression probe hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSettings {
    /// L2 weight on the coefficients (not the intercepts).
    pub reg: f64,
    pub max_iter: usize,
    /// Stop once every gradient entry is below this in magnitude.
    pub tol: f64,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            reg: 1e-3,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

/// Fold index of every row. Each class's members are shuffled with a stream
/// keyed by `seed` and the class, then dealt round-robin; the dealing
/// continues across classes so fold sizes stay balanced.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>, EvalError> {
    if folds < 2 {
        return Err(EvalError::Folds(folds));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        members[y].push(i);
    }
    if members.iter().filter(|m| !m.is_empty()).count() < 2 {
        return Err(EvalError::SingleClass);
    }
    if let Some((class, m)) = members
        .iter()
        .enumerate()
        .find(|(_, m)| !m.is_empty() && m.len() < folds)
    {
        return Err(EvalError::TooFewMembers {
            class,
            count: m.len(),
            folds,
        });
    }
    let mut out = vec![0; labels.len()];
    let mut next = 0;
    for (class, m) in members.iter_mut().enumerate() {
        m.shuffle(&mut stream(seed, &[tag::FOLDS, class as u64]));
        for &i in m.iter() {
            out[i] = next % folds;
            next += 1;
        }
    }
    Ok(out)
}

/// Standardization plus a softmax-linear classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// `dim × classes`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
    classes: usize,
}

impl LogisticModel {
    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    fn logits_std(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (i, xi) in x.iter().enumerate() {
            let w = &self.weights[i * self.classes..(i + 1) * self.classes];
            for (o, wc) in out.iter_mut().zip(w) {
                *o += xi * wc;
            }
        }
        out
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.logits_std(&self.standardize(x))
    }

    /// Highest-logit class; ties go to the lower class.
    pub fn predict(&self, x: &[f64]) -> usize {
        let l = self.logits(x);
        (0..l.len()).fold(0, |best, c| if l[c] > l[best] { c } else { best })
    }
}

fn softmax_in_place(l: &mut [f64]) {
    let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in l.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in l.iter_mut() {
        *v /= s;
    }
}

/// Largest eigenvalue of `X̃ᵀX̃ / n` for `X̃ = [X, 1]`, by power iteration.
fn gram_top_eigenvalue(x: &[Vec<f64>]) -> f64 {
    let d = x[0].len() + 1;
    let n = x.len() as f64;
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut u = vec![0.0; d];
        for row in x {
            let proj: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[d - 1];
            for (ui, a) in u.iter_mut().zip(row.iter().chain(std::iter::once(&1.0))) {
                *ui += proj * a / n;
            }
        }
        let norm = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = u.into_iter().map(|a| a / norm).collect();
    }
    lambda
}

/// Full-batch gradient descent on the L2-regularized softmax cross-entropy
/// over `rows`, with step `1 / L` for the loss's smoothness bound `L`.
pub fn fit_logistic(table: &EmbeddingTable, rows: &[usize], classes: usize, settings: &ProbeSettings) -> LogisticModel {
    let d = table.dim();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in rows {
        for (m, v) in mean.iter_mut().zip(&table.rows[i]) {
            *m += v / n;
        }
    }
    let mut scale = vec![0.0; d];
    for &i in rows {
        for ((s, v), m) in scale.iter_mut().zip(&table.rows[i]).zip(&mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    let scale: Vec<f64> = scale.into_iter().map(|s| if s > 0.0 { s.sqrt() } else { 1.0 }).collect();
    let mut model = LogisticModel {
        mean,
        scale,
        weights: vec![0.0; d * classes],
        bias: vec![0.0; classes],
        classes,
    };
    let x: Vec<Vec<f64>> = rows.iter().map(|&i| model.standardize(&table.rows[i])).collect();
    let y: Vec<usize> = rows.iter().map(|&i| table.labels[i]).collect();
    let step = 1.0 / (0.5 * gram_top_eigenvalue(&x) + settings.reg);

    for _ in 0..settings.max_iter {
        let mut gw = vec![0.0; d * classes];
        let mut gb = vec![0.0; classes];
        for (xi, &yi) in x.iter().zip(&y) {
            let mut p = model.logits_std(xi);
            softmax_in_place(&mut p);
            p[yi] -= 1.0;
            for (j, xj) in xi.iter().enumerate() {
                for c in 0..classes {
                    gw[j * classes + c] += xj * p[c] / n;
                }
            }
            for c in 0..classes {
                gb[c] += p[c] / n;
            }
        }
        for (g, w) in gw.iter_mut().zip(&model.weights) {
            *g += settings.reg * w;
        }
        let max = gw.iter().chain(&gb).fold(0.0f64, |m, g| m.max(g.abs()));
        if max < settings.tol {
            break;
        }
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= step * g;
        }
        for (b, g) in model.bias.iter_mut().zip(&gb) {
            *b -= step * g;
        }
    }
    model
}
