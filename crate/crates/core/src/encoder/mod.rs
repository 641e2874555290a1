//! GIN encoder, per-layer sum-pooling readout and projection head.
//!
//! Layer `l` updates node representations as
//!
//! ```text
//! h⁽ˡ⁾ = relu(MLPₗ(h⁽ˡ⁻¹⁾ + Σ_{m ∈ N(n)} h_m⁽ˡ⁻¹⁾)),   MLPₗ(x) = W₂ relu(W₁ x + b₁) + b₂
//! ```
//!
//! with `h⁽⁰⁾` the node features. The readout sums every layer's node
//! representations into one row, giving a `K × F′` graph embedding.

mod checkpoint;

use rand::Rng;
use thiserror::Error;

use crate::graphdata::Graph;
use crate::ndiff::{NdError, ParamId, ParamSet, Tape, Tensor, Var};
use crate::rng::{stream, tag};

pub(crate) use checkpoint::{put_f64, put_u64};
pub use checkpoint::{read_model, write_model, ByteReader, CheckpointError, ModelHeader, CHECKPOINT_MAGIC};

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("graph has feature dimension {got}, encoder expects {expected}")]
    FeatureDim { expected: usize, got: usize },
    #[error("readout expects {expected} layers of width {width}, got shapes {got:?}")]
    Ragged {
        expected: usize,
        width: usize,
        got: Vec<Vec<usize>>,
    },
    #[error(transparent)]
    Nd(#[from] NdError),
}

/// Parameter handles of one GIN layer.
#[derive(Clone, Debug, PartialEq)]
pub struct GinLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GinEncoder {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: Vec<GinLayer>,
}

/// Two-layer MLP `z = W₂ relu(W₁ r + b₁) + b₂` on the flattened embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionHead {
    pub width: usize,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

/// Encoder and head layouts plus their parameter values.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub encoder: GinEncoder,
    pub head: ProjectionHead,
    pub params: ParamSet,
}

/// `U(−1/√fan_in, 1/√fan_in)` bias row.
fn bias(rng: &mut impl Rng, fan_in: usize, width: usize) -> Tensor {
    let a = 1.0 / (fan_in as f64).sqrt();
    Tensor::row_vector((0..width).map(|_| rng.random_range(-a..a)).collect())
}

fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-a..a)).collect();
    Tensor::matrix(fan_in, fan_out, data).expect("glorot shape")
}

impl Model {
    /// Glorot-uniform weights and small uniform biases, drawn from `seed`.
    pub fn new(input_dim: usize, layers: usize, hidden: usize, seed: u64) -> Self {
        assert!(layers >= 1, "encoder needs at least one layer");
        let mut rng = stream(seed, &[tag::INIT]);
        let mut params = ParamSet::new();
        let mut gin = Vec::with_capacity(layers);
        for l in 0..layers {
            let in_dim = if l == 0 { input_dim } else { hidden };
            gin.push(GinLayer {
                in_dim,
                out_dim: hidden,
                w1: params.register(format!("gin{l}.w1"), glorot(&mut rng, in_dim, hidden)),
                b1: params.register(format!("gin{l}.b1"), bias(&mut rng, in_dim, hidden)),
                w2: params.register(format!("gin{l}.w2"), glorot(&mut rng, hidden, hidden)),
                b2: params.register(format!("gin{l}.b2"), bias(&mut rng, hidden, hidden)),
            });
        }
        let width = layers * hidden;
        let head = ProjectionHead {
            width,
            w1: params.register("head.w1", glorot(&mut rng, width, width)),
            b1: params.register("head.b1", bias(&mut rng, width, width)),
            w2: params.register("head.w2", glorot(&mut rng, width, width)),
            b2: params.register("head.b2", bias(&mut rng, width, width)),
        };
        Self {
            encoder: GinEncoder {
                input_dim,
                hidden,
                layers: gin,
            },
            head,
            params,
        }
    }

    pub fn layers(&self) -> usize {
        self.encoder.layers.len()
    }

    pub fn hidden(&self) -> usize {
        self.encoder.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim
    }

    /// Width of the flattened embedding, `K · F′`.
    pub fn embedding_width(&self) -> usize {
        self.layers() * self.hidden()
    }

    /// Readout embedding `r` (K × F′) of one graph, without recording
    /// gradients for later use.
    pub fn embed(&self, g: &Graph) -> Result<Tensor, EncoderError> {
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, &self.params);
        let reps = self.encoder.forward(g, &bound, &mut tape)?;
        let r = readout(&reps, self.hidden(), &mut tape)?;
        Ok(tape.value(r).clone())
    }
}

/// Every parameter of a [`ParamSet`] registered on one tape.
#[derive(Clone, Debug)]
pub struct BoundParams(Vec<Var>);

impl BoundParams {
    pub fn bind(tape: &mut Tape, params: &ParamSet) -> Self {
        Self(params.ids().map(|id| tape.param(id, params.get(id))).collect())
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }
}

/// `x W + 1 bᵀ`, with the bias row replicated through a constant ones column.
fn affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var, NdError> {
    let rows = tape.value(x).rows();
    let xw = tape.matmul(x, w)?;
    let ones = tape.constant(Tensor::ones(&[rows, 1]));
    let bias = tape.matmul(ones, b)?;
    tape.add(xw, bias)
}

/// `A + I` for the graph's adjacency matrix: sum aggregation over
/// neighbours plus the node's own representation.
pub fn propagation_matrix(g: &Graph) -> Tensor {
    let n = g.node_count();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = 1.0;
    }
    for &(a, b) in g.edges() {
        data[a * n + b] = 1.0;
        data[b * n + a] = 1.0;
    }
    Tensor::matrix(n, n, data).expect("square")
}

impl GinEncoder {
    /// Node representations of every layer, `h⁽¹⁾ … h⁽ᴷ⁾`.
    pub fn forward(&self, g: &Graph, params: &BoundParams, tape: &mut Tape) -> Result<Vec<Var>, EncoderError> {
        if g.feature_dim() != self.input_dim {
            return Err(EncoderError::FeatureDim {
                expected: self.input_dim,
                got: g.feature_dim(),
            });
        }
        let prop = tape.constant(propagation_matrix(g));
        let mut h = tape.constant(g.features().clone());
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let agg = tape.matmul(prop, h)?;
            let z = affine(tape, agg, params.var(layer.w1), params.var(layer.b1))?;
            let z = tape.relu(z)?;
            let z = affine(tape, z, params.var(layer.w2), params.var(layer.b2))?;
            h = tape.relu(z)?;
            out.push(h);
        }
        Ok(out)
    }
}

/// Sum-pools each layer's node representations into one row and stacks the
/// rows into a `K × F′` embedding.
pub fn readout(layer_reps: &[Var], width: usize, tape: &mut Tape) -> Result<Var, EncoderError> {
    let shapes: Vec<Vec<usize>> = layer_reps.iter().map(|v| tape.value(*v).shape().to_vec()).collect();
    let ragged = layer_reps.is_empty()
        || shapes
            .iter()
            .any(|s| s.len() != 2 || s[1] != width || s[0] != shapes[0][0]);
    if ragged {
        return Err(EncoderError::Ragged {
            expected: layer_reps.len(),
            width,
            got: shapes,
        });
    }
    let pooled = layer_reps
        .iter()
        .map(|&h| tape.row_sum(h))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(tape.concat_rows(&pooled)?)
}

/// Row-major flattening of a `K × F′` embedding into `1 × K·F′`.
pub fn flatten(r: Var, tape: &mut Tape) -> Result<Var, NdError> {
    let n = tape.value(r).numel();
    tape.reshape(r, &[1, n])
}

impl ProjectionHead {
    pub fn project(&self, r_flat: Var, params: &BoundParams, tape: &mut Tape) -> Result<Var, EncoderError> {
        let shape = tape.value(r_flat).shape().to_vec();
        if shape != [1, self.width] {
            return Err(NdError::ShapeMismatch {
                op: "project",
                left: vec![1, self.width],
                right: shape,
            }
            .into());
        }
        let h = affine(tape, r_flat, params.var(self.w1), params.var(self.b1))?;
        let h = tape.relu(h)?;
        Ok(affine(tape, h, params.var(self.w2), params.var(self.b2))?)
    }
}
