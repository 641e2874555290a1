//! Training loop: shuffled minibatches, two augmented views per graph,
//! erasing, batched InfoNCE and one Adam step per minibatch.
//!
//! Per-graph encoder passes run on their own tapes, possibly in parallel.
//! A second tape takes the resulting embeddings as inputs and records the
//! masks, the projection head and the loss. Its backward pass yields the head
//! gradients plus `∂L/∂r` for every view, which then seed the per-graph
//! backward passes. Gradients are summed in batch order, so results do not
//! depend on the execution mode.

mod adam;
mod checkpoint;

use log::debug;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{adam_step, AdamState};
pub use checkpoint::Checkpoint;

use crate::augment::{AugmentError, AugmentPolicy};
use crate::cocoloss::{
    build_mask, erase, infonce_batch, minmax_scale, threshold_mask, BatchViews, LossConfig, LossError, MaskMatrix,
};
use crate::encoder::{flatten, readout, BoundParams, CheckpointError, EncoderError, Model};
use crate::exec::{map_range, Execution};
use crate::graphdata::{Graph, GraphDataset};
use crate::ndiff::{GradMap, NdError, Tape, Tensor, Var};
use crate::rng::{self, stream, tag, StreamRng};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize, loss: f64 },
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Nd(#[from] NdError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl TrainError {
    /// Whether the failure is numerical rather than a configuration problem.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            TrainError::NonFinite { .. }
                | TrainError::Nd(NdError::NonFinite { .. } | NdError::ZeroNorm)
                | TrainError::Loss(LossError::Nd(NdError::NonFinite { .. } | NdError::ZeroNorm))
                | TrainError::Encoder(EncoderError::Nd(NdError::NonFinite { .. } | NdError::ZeroNorm))
        )
    }
}

/// How the erase mask is derived from the two view embeddings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EraseMode {
    /// Erase the second view where the scaled first view exceeds `delta`.
    #[default]
    Standard,
    /// No erasing.
    None,
    /// The standard mask with its entries shuffled.
    Rand,
    /// Erase the second view where the scaled first view is below `1 − delta`.
    NonMin,
    /// Standard, plus erase the first view by the second view's mask.
    Bi,
}

impl EraseMode {
    pub const ALL: [EraseMode; 5] = [
        EraseMode::Standard,
        EraseMode::None,
        EraseMode::Rand,
        EraseMode::NonMin,
        EraseMode::Bi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EraseMode::Standard => "standard",
            EraseMode::None => "none",
            EraseMode::Rand => "rand",
            EraseMode::NonMin => "non_min",
            EraseMode::Bi => "bi",
        }
    }
}

impl std::fmt::Display for EraseMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub delta: f64,
    pub tau: f64,
    pub layers: usize,
    pub hidden: usize,
    pub erase_mode: EraseMode,
    pub policy: AugmentPolicy,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            lr: 0.01,
            delta: 0.7,
            tau: 0.2,
            layers: 3,
            hidden: 32,
            erase_mode: EraseMode::Standard,
            policy: AugmentPolicy::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn loss(&self) -> LossConfig {
        LossConfig {
            delta: self.delta,
            tau: self.tau,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.layers == 0 {
            return Err(TrainError::Config("layers must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(TrainError::Config("hidden must be at least 1".into()));
        }
        self.loss().validate()?;
        self.policy.validate()?;
        Ok(())
    }
}

/// Masks applied to one graph's pair of views.
#[derive(Clone, Debug, PartialEq)]
pub struct ErasePlan {
    /// Applied to the second view for the positive pair.
    pub second: MaskMatrix,
    /// Applied to the first view for the positive pair, if at all.
    pub first: Option<MaskMatrix>,
}

impl ErasePlan {
    pub fn zeros(&self) -> usize {
        self.second.erased()
    }
}

/// Row-major shuffle of the mask entries.
pub fn shuffle_mask(mask: &MaskMatrix, rng: &mut StreamRng) -> MaskMatrix {
    let mut bits = mask.as_tensor().clone();
    bits.data_mut().shuffle(rng);
    MaskMatrix::from_bits(bits).expect("shuffled bits")
}

/// Masks of `mode` for views with embeddings `r1`, `r2`. `rng` is only drawn
/// from by [`EraseMode::Rand`].
pub fn plan_masks(mode: EraseMode, r1: &Tensor, r2: &Tensor, delta: f64, rng: &mut StreamRng) -> ErasePlan {
    let second = match mode {
        EraseMode::Standard | EraseMode::Bi => build_mask(r1, delta),
        EraseMode::None => MaskMatrix::ones(r1.shape()),
        EraseMode::Rand => shuffle_mask(&build_mask(r1, delta), rng),
        EraseMode::NonMin => threshold_mask(&minmax_scale(r1), |v| v < 1.0 - delta),
    };
    let first = (mode == EraseMode::Bi).then(|| build_mask(r2, delta));
    ErasePlan { second, first }
}

/// Loss, parameter gradients and masks of one minibatch.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub loss: f64,
    pub grads: GradMap,
    pub plans: Vec<ErasePlan>,
}

struct ViewPass {
    tape: Tape,
    r1: Var,
    r2: Var,
}

fn encode_views(model: &Model, v1: &Graph, v2: &Graph) -> Result<ViewPass, EncoderError> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, &model.params);
    let h1 = model.encoder.forward(v1, &bound, &mut tape)?;
    let r1 = readout(&h1, model.hidden(), &mut tape)?;
    let h2 = model.encoder.forward(v2, &bound, &mut tape)?;
    let r2 = readout(&h2, model.hidden(), &mut tape)?;
    Ok(ViewPass { tape, r1, r2 })
}

fn project(model: &Model, tape: &mut Tape, bound: &BoundParams, r: Var) -> Result<Var, EncoderError> {
    let flat = flatten(r, tape)?;
    model.head.project(flat, bound, tape)
}

/// Forward and backward pass over one minibatch of view pairs.
///
/// `plan(j, r1, r2)` supplies the masks of pair `j` from its embedding values;
/// masks are constants, so gradients flow only through kept coordinates.
pub fn batch_step<P>(
    model: &Model,
    views: &[(Graph, Graph)],
    plan: P,
    loss_cfg: &LossConfig,
    exec: Execution,
) -> Result<StepResult, TrainError>
where
    P: Fn(usize, &Tensor, &Tensor) -> ErasePlan,
{
    let passes = map_range(exec, views.len(), |j| encode_views(model, &views[j].0, &views[j].1))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, &model.params);
    let mut batch = BatchViews::default();
    let mut inputs = Vec::with_capacity(passes.len());
    let mut plans = Vec::with_capacity(passes.len());
    for (j, pass) in passes.iter().enumerate() {
        let r1_val = pass.tape.value(pass.r1);
        let r2_val = pass.tape.value(pass.r2);
        let p = plan(j, r1_val, r2_val);
        let r1 = tape.input(r1_val.clone());
        let r2 = tape.input(r2_val.clone());
        let r2_erased = erase(&mut tape, r2, &p.second)?;
        let z2_pos = project(model, &mut tape, &bound, r2_erased)?;
        let z2_neg = project(model, &mut tape, &bound, r2)?;
        let z1_neg = project(model, &mut tape, &bound, r1)?;
        let z1_pos = match &p.first {
            Some(m) => {
                let r1_erased = erase(&mut tape, r1, m)?;
                project(model, &mut tape, &bound, r1_erased)?
            }
            None => z1_neg,
        };
        batch.push(z1_pos, z1_neg, z2_pos, z2_neg);
        inputs.push((r1, r2));
        plans.push(p);
    }
    let loss_var = infonce_batch(&mut tape, &batch, loss_cfg)?;
    let loss = tape.value(loss_var).item();
    let grads = tape.backward(loss_var)?;
    let mut total = GradMap::zeros_like(&model.params);
    grads.accumulate_into(&mut total)?;

    let seeds: Vec<_> = inputs.iter().map(|&(r1, r2)| (grads.wrt(r1), grads.wrt(r2))).collect();
    let per_graph = map_range(exec, passes.len(), |j| {
        let pass = &passes[j];
        let (g1, g2) = &seeds[j];
        let g = pass
            .tape
            .backward_multi(vec![(pass.r1, g1.clone()), (pass.r2, g2.clone())])?;
        let mut map = GradMap::zeros_like(&model.params);
        g.accumulate_into(&mut map)?;
        Ok::<_, NdError>(map)
    });
    for g in per_graph {
        total.merge(&g?)?;
    }
    Ok(StepResult {
        loss,
        grads: total,
        plans,
    })
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Mean minibatch loss per epoch.
    pub history: Vec<f64>,
    /// Erased coordinates of the second-view masks, summed per epoch.
    pub mask_zeros: Vec<u64>,
    /// Erased coordinates in the very first minibatch, before any update.
    pub first_batch_mask_zeros: u64,
}

/// Trains a fresh model with the default execution mode.
pub fn train(data: &GraphDataset, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_with(data, cfg, Execution::default())
}

pub fn train_with(data: &GraphDataset, cfg: &TrainConfig, exec: Execution) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut model = Model::new(data.feature_dim(), cfg.layers, cfg.hidden, cfg.seed);
    let mut adam = AdamState::new(&model.params);
    let policy = AugmentPolicy {
        seed: rng::derive(cfg.seed, &[tag::VIEW, cfg.policy.seed]),
        ..cfg.policy
    };
    let loss_cfg = cfg.loss();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut mask_zeros = Vec::with_capacity(cfg.epochs);
    let mut first_batch_mask_zeros = 0;

    for epoch in 0..cfg.epochs {
        let e = epoch as u64;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut stream(cfg.seed, &[tag::SHUFFLE, e]));
        let mut losses = Vec::new();
        let mut zeros = 0u64;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let views = map_range(exec, chunk.len(), |j| {
                let i = chunk[j];
                policy.views(&data.graphs()[i], e, i as u64)
            });
            let plan = |j: usize, r1: &Tensor, r2: &Tensor| {
                let mut rng = stream(cfg.seed, &[tag::MASK, e, chunk[j] as u64]);
                plan_masks(cfg.erase_mode, r1, r2, cfg.delta, &mut rng)
            };
            let step = batch_step(&model, &views, plan, &loss_cfg, exec)?;
            if !step.loss.is_finite() || !step.grads.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: b,
                    loss: step.loss,
                });
            }
            let batch_zeros = step.plans.iter().map(|p| p.zeros() as u64).sum::<u64>();
            if epoch == 0 && b == 0 {
                first_batch_mask_zeros = batch_zeros;
            }
            zeros += batch_zeros;
            adam_step(&mut model.params, &step.grads, &mut adam, cfg.lr)?;
            losses.push(step.loss);
        }
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        debug!("epoch {epoch}: loss {mean:.6}, {zeros} erased");
        history.push(mean);
        mask_zeros.push(zeros);
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            model,
            config: *cfg,
            epoch: cfg.epochs,
            history: history.clone(),
        },
        history,
        mask_zeros,
        first_batch_mask_zeros,
    })
}
