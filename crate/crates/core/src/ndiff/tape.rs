use std::sync::atomic::{AtomicU64, Ordering};

use super::{GradMap, NdError, ParamId, Tensor};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    index: usize,
    tape: u64,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    RowSum(Var),
    ConcatRows(Vec<Var>),
    HadamardConst(Var, Tensor),
    SumAll(Var),
    Log(Var),
    Exp(Var),
    L2NormRows(Var),
    Cosine { u: Var, v: Var, nu: f64, nv: f64 },
    LogSumExp(Var),
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of primitive applications.
///
/// Nodes are appended in evaluation order, so a reverse sweep over the node
/// list is a valid topological order for backpropagation.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Parameters registered on this tape, in registration order.
    pub fn registered_params(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.params.iter().map(|(id, _)| *id)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node { value, op });
        Var {
            index,
            tape: self.id,
        }
    }

    fn push_checked(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var, NdError> {
        if !value.is_finite() {
            return Err(NdError::NonFinite { op: op_name });
        }
        Ok(self.push(value, op))
    }

    fn check(&self, v: Var) -> Result<(), NdError> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(NdError::NotOnTape(v.index));
        }
        Ok(())
    }

    /// Value of a recorded variable.
    ///
    /// Panics if `v` belongs to a different tape.
    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.tape, self.id, "variable recorded on a different tape");
        &self.nodes[v.index].value
    }

    /// Records a leaf whose gradient is available through
    /// [`Gradients::wrt`] but which is not a trainable parameter.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Alias of [`Tape::input`] for values that are never differentiated.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Registers a trainable parameter on the tape.
    pub fn param(&mut self, id: ParamId, value: &Tensor) -> Var {
        let v = self.push(value.clone(), Op::Param);
        self.params.push((id, v));
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.check(a)?;
        self.check(b)?;
        let out = self.value(a).matmul(self.value(b))?;
        self.push_checked("matmul", out, Op::MatMul(a, b))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NdError> {
        self.check(a)?;
        self.check(b)?;
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(NdError::ShapeMismatch {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push_checked("add", out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push_checked("sub", out, Op::Sub(a, b))
    }

    /// Scalar-times-tensor; the only broadcasting form supported.
    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, NdError> {
        self.check(a)?;
        let out = self.value(a).map(|x| x * factor);
        self.push_checked("scale", out, Op::Scale(a, factor))
    }

    /// Elementwise `max(x, 0)`; the subgradient at exactly zero is zero.
    pub fn relu(&mut self, a: Var) -> Result<Var, NdError> {
        self.check(a)?;
        let out = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        Ok(self.push(out, Op::Relu(a)))
    }

    /// Sums the rows of an `n × c` matrix into a `1 × c` row.
    pub fn row_sum(&mut self, a: Var) -> Result<Var, NdError> {
        self.check(a)?;
        let x = self.value(a);
        let (n, c) = x.dims2("row_sum")?;
        let mut out = vec![0.0; c];
        for i in 0..n {
            for (o, v) in out.iter_mut().zip(x.row(i)) {
                *o += v;
            }
        }
        self.push_checked("row_sum", Tensor::row_vector(out), Op::RowSum(a))
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NdError> {
        let first = *parts.first().ok_or(NdError::Empty { op: "concat_rows" })?;
        self.check(first)?;
        let (_, c) = self.value(first).dims2("concat_rows")?;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            self.check(p)?;
            let t = self.value(p);
            let (r, pc) = t.dims2("concat_rows")?;
            if pc != c {
                return Err(NdError::ShapeMismatch {
                    op: "concat_rows",
                    left: self.value(first).shape().to_vec(),
                    right: t.shape().to_vec(),
                });
            }
            rows += r;
            data.extend_from_slice(t.data());
        }
        let out = Tensor::matrix(rows, c, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Elementwise product with a constant mask that never receives gradient.
    pub fn hadamard_const(&mut self, a: Var, mask: &Tensor) -> Result<Var, NdError> {
        self.check(a)?;
        let x = self.value(a);
        if x.shape() != mask.shape() {
            return Err(NdError::ShapeMismatch {
                op: "hadamard_const",
                left: x.shape().to_vec(),
                right: mask.shape().to_vec(),
            });
        }
        let out = x.zip_map(mask, |v, m| v * m);
        self.push_checked("hadamard_const", out, Op::HadamardConst(a, mask.clone()))
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var, NdError> {
        self.check(a)?;
        let s = self.value(a).data().iter().sum();
        self.push_checked("sum_all", Tensor::scalar(s), Op::SumAll(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var, NdError> {
        self.check(a)?;
        let out = self.value(a).map(f64::ln);
        self.push_checked("log", out, Op::Log(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, NdError> {
        self.check(a)?;
        let out = self.value(a).map(f64::exp);
        self.push_checked("exp", out, Op::Exp(a))
    }

    /// Euclidean norm of each row, as an `n × 1` column.
    pub fn l2_norm_rows(&mut self, a: Var) -> Result<Var, NdError> {
        self.check(a)?;
        let x = self.value(a);
        let (n, _) = x.dims2("l2_norm_rows")?;
        let norms: Vec<f64> = (0..n).map(|i| norm(x.row(i))).collect();
        let out = Tensor::matrix(n, 1, norms)?;
        self.push_checked("l2_norm_rows", out, Op::L2NormRows(a))
    }

    /// Cosine similarity of two equally shaped tensors viewed as flat vectors.
    pub fn cosine_sim(&mut self, u: Var, v: Var) -> Result<Var, NdError> {
        self.same_shape("cosine_sim", u, v)?;
        let (a, b) = (self.value(u).data(), self.value(v).data());
        let (nu, nv) = (norm(a), norm(b));
        if nu == 0.0 || nv == 0.0 {
            return Err(NdError::ZeroNorm);
        }
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        self.push_checked(
            "cosine_sim",
            Tensor::scalar(dot / (nu * nv)),
            Op::Cosine { u, v, nu, nv },
        )
    }

    /// `ln Σ exp(x_i)` over all entries, shifted by the maximum.
    pub fn log_sum_exp(&mut self, a: Var) -> Result<Var, NdError> {
        self.check(a)?;
        let x = self.value(a);
        if x.numel() == 0 {
            return Err(NdError::Empty { op: "log_sum_exp" });
        }
        let out = log_sum_exp(x.data());
        self.push_checked("log_sum_exp", Tensor::scalar(out), Op::LogSumExp(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, NdError> {
        self.check(a)?;
        let out = self.value(a).reshaped(shape)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NdError> {
        self.check(loss)?;
        let value = self.value(loss);
        if !value.is_scalar() {
            return Err(NdError::NotScalar(value.shape().to_vec()));
        }
        self.backward_seeded(loss, Tensor::ones(value.shape()))
    }

    /// Vector-Jacobian product: propagates `seed` (shaped like `output`)
    /// back through the tape.
    pub fn backward_seeded(&self, output: Var, seed: Tensor) -> Result<Gradients, NdError> {
        self.backward_multi(vec![(output, seed)])
    }

    /// Propagates several seeds at once; equivalent to the sum of the
    /// individual vector-Jacobian products.
    pub fn backward_multi(&self, seeds: Vec<(Var, Tensor)>) -> Result<Gradients, NdError> {
        let mut last = 0;
        for (v, seed) in &seeds {
            self.check(*v)?;
            if seed.shape() != self.value(*v).shape() {
                return Err(NdError::ShapeMismatch {
                    op: "backward",
                    left: self.value(*v).shape().to_vec(),
                    right: seed.shape().to_vec(),
                });
            }
            last = last.max(v.index);
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for (v, seed) in seeds {
            accumulate(&mut grads, v, seed);
        }

        for idx in (0..=last).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Param => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let ga = g.matmul(&bv.transpose())?;
                    let gb = av.transpose().matmul(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|x| -x));
                    accumulate(&mut grads, *a, g);
                }
                Op::Scale(a, f) => accumulate(&mut grads, *a, g.map(|x| x * f)),
                Op::Relu(a) => {
                    let gx = self
                        .value(*a)
                        .zip_map(&g, |x, gi| if x > 0.0 { gi } else { 0.0 });
                    accumulate(&mut grads, *a, gx);
                }
                Op::RowSum(a) => {
                    let (n, c) = self.value(*a).dims2("row_sum")?;
                    let mut data = Vec::with_capacity(n * c);
                    for _ in 0..n {
                        data.extend_from_slice(g.data());
                    }
                    accumulate(&mut grads, *a, Tensor::matrix(n, c, data)?);
                }
                Op::ConcatRows(parts) => {
                    let c = g.cols();
                    let mut offset = 0;
                    for p in parts {
                        let pv = self.value(*p);
                        let len = pv.numel();
                        let slice = g.data()[offset..offset + len].to_vec();
                        offset += len;
                        accumulate(&mut grads, *p, Tensor::matrix(len / c.max(1), c, slice)?);
                    }
                }
                Op::HadamardConst(a, mask) => {
                    accumulate(&mut grads, *a, g.zip_map(mask, |gi, m| gi * m));
                }
                Op::SumAll(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    accumulate(&mut grads, *a, Tensor::filled(&shape, g.item()));
                }
                Op::Log(a) => {
                    let gx = g.zip_map(self.value(*a), |gi, x| gi / x);
                    accumulate(&mut grads, *a, gx);
                }
                Op::Exp(a) => {
                    let gx = g.zip_map(&node.value, |gi, y| gi * y);
                    accumulate(&mut grads, *a, gx);
                }
                Op::L2NormRows(a) => {
                    let x = self.value(*a);
                    let c = x.cols();
                    let mut data = Vec::with_capacity(x.numel());
                    for i in 0..x.rows() {
                        let n = node.value.data()[i];
                        let gi = g.data()[i];
                        data.extend(
                            x.row(i)
                                .iter()
                                .map(|&v| if n > 0.0 { gi * v / n } else { 0.0 }),
                        );
                    }
                    accumulate(&mut grads, *a, Tensor::matrix(x.rows(), c, data)?);
                }
                Op::Cosine { u, v, nu, nv } => {
                    let cos = node.value.item();
                    let gs = g.item();
                    let (uv, vv) = (self.value(*u), self.value(*v));
                    let denom = nu * nv;
                    let gu = uv.zip_map(vv, |ui, vi| gs * (vi / denom - cos * ui / (nu * nu)));
                    let gv = vv.zip_map(uv, |vi, ui| gs * (ui / denom - cos * vi / (nv * nv)));
                    accumulate(&mut grads, *u, gu);
                    accumulate(&mut grads, *v, gv);
                }
                Op::LogSumExp(a) => {
                    let x = self.value(*a);
                    let lse = node.value.item();
                    let gs = g.item();
                    accumulate(&mut grads, *a, x.map(|xi| gs * (xi - lse).exp()));
                }
                Op::Reshape(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    accumulate(&mut grads, *a, g.reshaped(&shape)?);
                }
            }
        }

        Ok(Gradients {
            tape: self.id,
            grads,
            params: self.params.clone(),
            shapes: self.nodes[..]
                .iter()
                .map(|n| n.value.shape().to_vec())
                .collect(),
        })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.index] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Numerically stable `ln Σ exp(x_i)`.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Result of a reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to an input, constant or parameter; zeros when
    /// the variable does not influence the output. Intermediate gradients are
    /// released during the sweep and also read as zeros.
    pub fn wrt(&self, v: Var) -> Tensor {
        assert_eq!(v.tape, self.tape, "variable recorded on a different tape");
        match self.grads.get(v.index) {
            Some(Some(g)) => g.clone(),
            Some(None) => Tensor::zeros(&self.shapes[v.index]),
            None => panic!("variable {} not on this tape", v.index),
        }
    }

    /// Adds parameter gradients into `map`. A parameter registered more than
    /// once accumulates every use.
    pub fn accumulate_into(&self, map: &mut GradMap) -> Result<(), NdError> {
        for (id, var) in &self.params {
            if let Some(Some(g)) = self.grads.get(var.index) {
                map.add(*id, g)?;
            }
        }
        Ok(())
    }
}
