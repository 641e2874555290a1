//! Erasing operation and the batched contrastive objective.
//!
//! The first view's embedding `r⁽¹⁾` is min-max scaled to `[0, 1]`; every
//! coordinate whose scaled value exceeds `δ` is zeroed in the second view's
//! embedding before projection. The mask is data, not a differentiable
//! input: gradients reach `r⁽²⁾` only through the kept coordinates.
//!
//! Positive pairs compare the first view with the erased second view.
//! Negatives compare un-erased embeddings across graphs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ndiff::{log_sum_exp, NdError, Tape, Tensor, Var};

pub type EmbeddingMatrix = Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("threshold delta must lie in [0, 1], got {0}")]
    Delta(f64),
    #[error("temperature tau must be positive and finite, got {0}")]
    Tau(f64),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("batch views have {z1_pos}/{z1_neg}/{z2_pos}/{z2_neg} entries")]
    RaggedBatch {
        z1_pos: usize,
        z1_neg: usize,
        z2_pos: usize,
        z2_neg: usize,
    },
    #[error(transparent)]
    Nd(#[from] NdError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub delta: f64,
    pub tau: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { delta: 0.7, tau: 0.2 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(LossError::Delta(self.delta));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(LossError::Tau(self.tau));
        }
        Ok(())
    }
}

/// Binary matrix; `0` marks an erased coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskMatrix(Tensor);

impl MaskMatrix {
    pub fn ones(shape: &[usize]) -> Self {
        Self(Tensor::ones(shape))
    }

    /// Wraps a tensor whose entries are all `0` or `1`.
    pub fn from_bits(bits: Tensor) -> Option<Self> {
        bits.data()
            .iter()
            .all(|&b| b == 0.0 || b == 1.0)
            .then_some(Self(bits))
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn shape(&self) -> &[usize] {
        self.0.shape()
    }

    pub fn kept(&self) -> usize {
        self.0.data().iter().filter(|&&b| b == 1.0).count()
    }

    pub fn erased(&self) -> usize {
        self.0.numel() - self.kept()
    }

    /// Elementwise product of two masks: erased if either erases.
    pub fn and(&self, other: &MaskMatrix) -> MaskMatrix {
        MaskMatrix(self.0.zip_map(&other.0, |a, b| a * b))
    }
}

/// `(r − min r) / (max r − min r)` with the global scalar min and max;
/// a constant matrix maps to all zeros.
pub fn minmax_scale(r: &EmbeddingMatrix) -> EmbeddingMatrix {
    let (lo, hi) = r
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return Tensor::zeros(r.shape());
    }
    r.map(|v| (v - lo) / range)
}

/// `M_ij = 0` where the scaled `r1_ij > delta` (strict), else `1`.
pub fn build_mask(r1: &EmbeddingMatrix, delta: f64) -> MaskMatrix {
    threshold_mask(&minmax_scale(r1), |v| v > delta)
}

/// Mask from an already scaled embedding, erasing where `erase(v)` holds.
pub fn threshold_mask(scaled: &EmbeddingMatrix, erase: impl Fn(f64) -> bool) -> MaskMatrix {
    MaskMatrix(scaled.map(|v| if erase(v) { 0.0 } else { 1.0 }))
}

/// `r̂ = r2 ⊙ M`, with `M` recorded as a constant.
pub fn erase(tape: &mut Tape, r2: Var, mask: &MaskMatrix) -> Result<Var, NdError> {
    tape.hadamard_const(r2, mask.as_tensor())
}

/// Projected views of one minibatch, all recorded on the same tape.
///
/// `z1_pos` and `z1_neg` are the same variables unless the first view is
/// itself erased for its positive pair.
#[derive(Clone, Debug, Default)]
pub struct BatchViews {
    pub z1_pos: Vec<Var>,
    pub z1_neg: Vec<Var>,
    pub z2_pos: Vec<Var>,
    pub z2_neg: Vec<Var>,
}

impl BatchViews {
    pub fn len(&self) -> usize {
        self.z1_pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z1_pos.is_empty()
    }

    pub fn push(&mut self, z1_pos: Var, z1_neg: Var, z2_pos: Var, z2_neg: Var) {
        self.z1_pos.push(z1_pos);
        self.z1_neg.push(z1_neg);
        self.z2_pos.push(z2_pos);
        self.z2_neg.push(z2_neg);
    }
}

/// Minibatch InfoNCE:
///
/// ```text
/// L = −(1/B) Σ_j Σ_{k∈{1,2}} log( e^{s⁺_j} / (e^{s⁺_j} + Σ_{j′≠j, q∈{1,2}} e^{sim(z⁽ᵏ⁾_{j,−}, z⁽q⁾_{j′,−})/τ}) )
/// s⁺_j = sim(z⁽¹⁾_{j,+}, z⁽²⁾_{j,+}) / τ
/// ```
///
/// `sim` is cosine similarity. The positive term is the same for both `k`;
/// only the negative set changes. Each log-ratio is evaluated as
/// `logsumexp([s⁺, negatives…]) − s⁺`.
pub fn infonce_batch(tape: &mut Tape, batch: &BatchViews, cfg: &LossConfig) -> Result<Var, LossError> {
    let b = batch.len();
    if b == 0 {
        return Err(LossError::EmptyBatch);
    }
    if [batch.z1_neg.len(), batch.z2_pos.len(), batch.z2_neg.len()]
        .iter()
        .any(|&n| n != b)
    {
        return Err(LossError::RaggedBatch {
            z1_pos: b,
            z1_neg: batch.z1_neg.len(),
            z2_pos: batch.z2_pos.len(),
            z2_neg: batch.z2_neg.len(),
        });
    }
    let inv_tau = 1.0 / cfg.tau;

    // negatives: index v = 2j + (q − 1) over the un-erased views
    let neg_views: Vec<Var> = (0..b)
        .flat_map(|j| [batch.z1_neg[j], batch.z2_neg[j]])
        .collect();
    let m = neg_views.len();
    let mut neg_sim: Vec<Option<Var>> = vec![None; m * m];
    for a in 0..m {
        for c in a + 1..m {
            if a / 2 == c / 2 {
                continue;
            }
            let s = tape.cosine_sim(neg_views[a], neg_views[c])?;
            let s = tape.scale(s, inv_tau)?;
            neg_sim[a * m + c] = Some(s);
            neg_sim[c * m + a] = Some(s);
        }
    }

    let mut terms = Vec::with_capacity(2 * b);
    for j in 0..b {
        let pos = tape.cosine_sim(batch.z1_pos[j], batch.z2_pos[j])?;
        let pos = tape.scale(pos, inv_tau)?;
        for k in 0..2 {
            let anchor = 2 * j + k;
            let mut logits = Vec::with_capacity(2 * b - 1);
            logits.push(pos);
            for other in 0..m {
                if other / 2 != j {
                    logits.push(neg_sim[anchor * m + other].expect("cross-graph pair"));
                }
            }
            let stacked = tape.concat_rows(&logits)?;
            let lse = tape.log_sum_exp(stacked)?;
            terms.push(tape.sub(lse, pos)?);
        }
    }
    let stacked = tape.concat_rows(&terms)?;
    let total = tape.sum_all(stacked)?;
    Ok(tape.scale(total, 1.0 / b as f64)?)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Single-anchor InfoNCE with inner-product scores,
/// `−log softmax(⟨u, v⁺⟩/τ ; ⟨u, v⁻⟩/τ …)`, evaluated directly.
pub fn infonce_inner(u: &[f64], v_pos: &[f64], v_negs: &[Vec<f64>], tau: f64) -> f64 {
    let mut scores = vec![dot(u, v_pos) / tau];
    scores.extend(v_negs.iter().map(|v| dot(u, v) / tau));
    log_sum_exp(&scores) - scores[0]
}

/// Closed-form gradients of [`infonce_inner`]:
///
/// ```text
/// ∂L/∂u  = −(1/τ) ((1 − p⁺) v⁺ − Σ p⁻ v⁻)
/// ∂L/∂v⁺ = −((1 − p⁺)/τ) u
/// ```
///
/// with `p` the softmax weights of the scores.
pub fn infonce_grad_analytic(u: &[f64], v_pos: &[f64], v_negs: &[Vec<f64>], tau: f64) -> (Vec<f64>, Vec<f64>) {
    let mut scores = vec![dot(u, v_pos) / tau];
    scores.extend(v_negs.iter().map(|v| dot(u, v) / tau));
    let lse = log_sum_exp(&scores);
    let p: Vec<f64> = scores.iter().map(|s| (s - lse).exp()).collect();
    let one_minus = 1.0 - p[0];
    let grad_u = (0..u.len())
        .map(|i| {
            let neg: f64 = v_negs.iter().zip(&p[1..]).map(|(v, pi)| pi * v[i]).sum();
            -(one_minus * v_pos[i] - neg) / tau
        })
        .collect();
    let grad_v = u.iter().map(|ui| -one_minus / tau * ui).collect();
    (grad_u, grad_v)
}

/// [`infonce_inner`] recorded on a tape, with `u` a row and every `v` a
/// column so inner products are plain matrix products.
pub fn infonce_inner_on_tape(tape: &mut Tape, u: Var, v_pos: Var, v_negs: &[Var], tau: f64) -> Result<Var, NdError> {
    let pos = tape.matmul(u, v_pos)?;
    let pos = tape.scale(pos, 1.0 / tau)?;
    let mut logits = vec![pos];
    for &v in v_negs {
        let s = tape.matmul(u, v)?;
        logits.push(tape.scale(s, 1.0 / tau)?);
    }
    let stacked = tape.concat_rows(&logits)?;
    let lse = tape.log_sum_exp(stacked)?;
    tape.sub(lse, pos)
}
