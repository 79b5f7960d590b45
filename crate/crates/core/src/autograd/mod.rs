//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records every operation of one forward pass in topological
//! order. [`Tape::backward`] walks the record in reverse and accumulates
//! gradients into each node; a parameter read at several sites therefore
//! receives the sum of all per-site contributions, which is what lets one
//! AFU be shared by many neurons.
//!
//! Tapes are cheap and meant to be rebuilt for every forward pass.

mod gradcheck;
mod kernels;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::activations::ActivationSpec;
use crate::error::{Error, Result};
use crate::rng::{symmetric_uniform, SeededRng};
use crate::tensor::{check_shape, Tensor};

pub use gradcheck::{grad_check, numerical_gradient};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(0);

/// Parameter initialisation scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitSpec {
    Constant(f64),
    /// Uniform on `[-a, a)`.
    Uniform(f64),
}

impl InitSpec {
    /// `Uniform(sqrt(6 / (fan_in + fan_out)))`.
    pub fn glorot(fan_in: usize, fan_out: usize) -> Self {
        InitSpec::Uniform((6.0 / (fan_in + fan_out) as f64).sqrt())
    }

    pub fn sample(self, shape: &[usize], rng: &mut SeededRng) -> Result<Tensor> {
        let n = check_shape(shape)?;
        let data = match self {
            InitSpec::Constant(c) => vec![c; n],
            InitSpec::Uniform(a) => (0..n).map(|_| symmetric_uniform(rng, a)).collect(),
        };
        Tensor::new(shape.to_vec(), data)
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorRef {
    tape: u64,
    id: usize,
    shape: Vec<usize>,
}

impl TensorRef {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Handles to the four parameter groups of one AFU on a tape.
#[derive(Clone, Debug)]
pub struct AfuKappa {
    pub w0: TensorRef,
    pub b0: TensorRef,
    pub w1: TensorRef,
    pub b1: TensorRef,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Matmul,
    Transpose,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Sum,
    Mean,
    Max0Diff,
    AddBias,
    Activation(ActivationSpec),
    Afu {
        base: ActivationSpec,
        hidden: usize,
        per_column: bool,
    },
    LogSoftmax,
    Pick(Vec<usize>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    inputs: Vec<usize>,
    value: Tensor,
    requires_grad: bool,
}

#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    params: Vec<usize>,
}

/// Gradient of a scalar loss with respect to every registered parameter.
#[derive(Clone, Debug, Default)]
pub struct GradientMap {
    entries: BTreeMap<usize, Tensor>,
}

impl GradientMap {
    pub fn get(&self, param: &TensorRef) -> Option<&Tensor> {
        self.entries.get(&param.id)
    }

    /// Gradients in the order of `params`. Panics if one is not a parameter of
    /// the tape that produced this map.
    pub fn collect(&self, params: &[TensorRef]) -> Vec<Tensor> {
        params
            .iter()
            .map(|p| {
                self.entries
                    .get(&p.id)
                    .unwrap_or_else(|| panic!("node {} is not a registered parameter", p.id))
                    .clone()
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Tensor)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }
}

/// How two operand shapes combine in an elementwise binary op.
#[derive(Clone, Copy, PartialEq)]
enum Broadcast {
    Same,
    LeftScalar,
    RightScalar,
}

fn broadcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<(Broadcast, Vec<usize>)> {
    let na: usize = a.iter().product();
    let nb: usize = b.iter().product();
    if a == b {
        Ok((Broadcast::Same, a.to_vec()))
    } else if nb == 1 {
        Ok((Broadcast::RightScalar, a.to_vec()))
    } else if na == 1 {
        Ok((Broadcast::LeftScalar, b.to_vec()))
    } else {
        Err(Error::Shape {
            op,
            left: a.to_vec(),
            right: b.to_vec(),
        })
    }
}

fn binary_map(
    mode: Broadcast,
    a: &[f64],
    b: &[f64],
    n: usize,
    f: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    match mode {
        Broadcast::Same => a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect(),
        Broadcast::RightScalar => a.iter().map(|&x| f(x, b[0])).collect(),
        Broadcast::LeftScalar => (0..n).map(|i| f(a[0], b[i])).collect(),
    }
}

fn as_matrix(shape: &[usize]) -> Option<(usize, usize)> {
    match shape {
        [r, c] => Some((*r, *c)),
        _ => None,
    }
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

    /// Node ids registered as trainable, in registration order.
    pub fn param_ids(&self) -> &[usize] {
        &self.params
    }

    pub fn value(&self, r: &TensorRef) -> &Tensor {
        assert_eq!(r.tape, self.id, "tensor handle from another tape");
        &self.nodes[r.id].value
    }

    fn check(&self, r: &TensorRef) -> Result<()> {
        if r.tape == self.id && r.id < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::ForeignTensor)
        }
    }

    fn push(&mut self, op: Op, inputs: Vec<usize>, value: Tensor) -> Result<TensorRef> {
        if !value.all_finite() {
            return Err(Error::NonFinite(format!("{op:?} output")));
        }
        let requires_grad = match op {
            Op::Leaf => false,
            _ => inputs.iter().any(|&i| self.nodes[i].requires_grad),
        };
        let id = self.nodes.len();
        let shape = value.shape().to_vec();
        self.nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad,
        });
        Ok(TensorRef {
            tape: self.id,
            id,
            shape,
        })
    }

    /// A new trainable leaf initialised from `init`.
    pub fn param(
        &mut self,
        shape: &[usize],
        init: InitSpec,
        rng: &mut SeededRng,
    ) -> Result<TensorRef> {
        if shape.is_empty() {
            return Err(Error::InvalidShape(Vec::new()));
        }
        let value = init.sample(shape, rng)?;
        self.param_from(value)
    }

    /// A trainable leaf holding `value`.
    pub fn param_from(&mut self, value: Tensor) -> Result<TensorRef> {
        let r = self.push(Op::Leaf, Vec::new(), value)?;
        self.nodes[r.id].requires_grad = true;
        self.params.push(r.id);
        Ok(r)
    }

    /// A non-trainable leaf (data, labels, masks).
    pub fn constant(&mut self, value: Tensor) -> Result<TensorRef> {
        self.push(Op::Leaf, Vec::new(), value)
    }

    pub fn matmul(&mut self, a: &TensorRef, b: &TensorRef) -> Result<TensorRef> {
        self.check(a)?;
        self.check(b)?;
        let shape_err = || Error::Shape {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        };
        let (m, k) = as_matrix(&a.shape).ok_or_else(shape_err)?;
        let (k2, n) = as_matrix(&b.shape).ok_or_else(shape_err)?;
        if k != k2 {
            return Err(shape_err());
        }
        let mut out = vec![0.0; m * n];
        kernels::gemm_nn(
            self.nodes[a.id].value.data(),
            self.nodes[b.id].value.data(),
            &mut out,
            m,
            k,
            n,
        );
        self.push(Op::Matmul, vec![a.id, b.id], Tensor::matrix(m, n, out)?)
    }

    pub fn transpose(&mut self, a: &TensorRef) -> Result<TensorRef> {
        self.check(a)?;
        let (r, c) = as_matrix(&a.shape).ok_or_else(|| Error::Shape {
            op: "transpose",
            left: a.shape.clone(),
            right: Vec::new(),
        })?;
        let out = kernels::transpose(self.nodes[a.id].value.data(), r, c);
        self.push(Op::Transpose, vec![a.id], Tensor::matrix(c, r, out)?)
    }

    fn elementwise(
        &mut self,
        op: Op,
        name: &'static str,
        a: &TensorRef,
        b: &TensorRef,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<TensorRef> {
        self.check(a)?;
        self.check(b)?;
        let (mode, shape) = broadcast(name, &a.shape, &b.shape)?;
        let n = shape.iter().product();
        let out = binary_map(
            mode,
            self.nodes[a.id].value.data(),
            self.nodes[b.id].value.data(),
            n,
            f,
        );
        self.push(op, vec![a.id, b.id], Tensor::new(shape, out)?)
    }

    pub fn add(&mut self, a: &TensorRef, b: &TensorRef) -> Result<TensorRef> {
        self.elementwise(Op::Add, "add", a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: &TensorRef, b: &TensorRef) -> Result<TensorRef> {
        self.elementwise(Op::Sub, "sub", a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: &TensorRef, b: &TensorRef) -> Result<TensorRef> {
        self.elementwise(Op::Mul, "mul", a, b, |x, y| x * y)
    }

    /// `max(0, a - b)` elementwise; the subgradient at `a == b` is 0.
    pub fn max0diff(&mut self, a: &TensorRef, b: &TensorRef) -> Result<TensorRef> {
        self.elementwise(Op::Max0Diff, "max0diff", a, b, |x, y| (x - y).max(0.0))
    }

    pub fn scale(&mut self, a: &TensorRef, c: f64) -> Result<TensorRef> {
        self.check(a)?;
        let v = &self.nodes[a.id].value;
        let out = v.data().iter().map(|x| x * c).collect();
        let t = Tensor::new(v.shape().to_vec(), out)?;
        self.push(Op::Scale(c), vec![a.id], t)
    }

    pub fn sum(&mut self, a: &TensorRef) -> Result<TensorRef> {
        self.check(a)?;
        let s = self.nodes[a.id].value.data().iter().sum();
        self.push(Op::Sum, vec![a.id], Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: &TensorRef) -> Result<TensorRef> {
        self.check(a)?;
        let v = self.nodes[a.id].value.data();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        self.push(Op::Mean, vec![a.id], Tensor::scalar(m))
    }

    /// Row-broadcast bias: `a[i, j] + bias[j]` for `a` of shape `[rows, n]`.
    pub fn add_bias(&mut self, a: &TensorRef, bias: &TensorRef) -> Result<TensorRef> {
        self.check(a)?;
        self.check(bias)?;
        let (rows, n) = as_matrix(&a.shape).ok_or_else(|| Error::Shape {
            op: "add_bias",
            left: a.shape.clone(),
            right: bias.shape.clone(),
        })?;
        if bias.numel() != n {
            return Err(Error::Shape {
                op: "add_bias",
                left: a.shape.clone(),
                right: bias.shape.clone(),
            });
        }
        let av = self.nodes[a.id].value.data();
        let bv = self.nodes[bias.id].value.data();
        let mut out = av.to_vec();
        for row in out.chunks_exact_mut(n) {
            for (o, b) in row.iter_mut().zip(bv) {
                *o += b;
            }
        }
        self.push(
            Op::AddBias,
            vec![a.id, bias.id],
            Tensor::matrix(rows, n, out)?,
        )
    }

    pub fn activation(&mut self, a: &TensorRef, spec: ActivationSpec) -> Result<TensorRef> {
        self.check(a)?;
        let v = &self.nodes[a.id].value;
        let out = v.data().iter().map(|&z| spec.eval(z)).collect();
        let t = Tensor::new(v.shape().to_vec(), out)?;
        self.push(Op::Activation(spec), vec![a.id], t)
    }

    /// Apply an AFU elementwise:
    /// `G(z) = sum_i w1[i] * base(w0[i] * z + b0[i]) + b1`.
    ///
    /// With one parameter group, every element shares it. With one group per
    /// column of a `[rows, cols]` input, column `c` uses group `c`.
    pub fn afu(
        &mut self,
        z: &TensorRef,
        base: ActivationSpec,
        groups: &[AfuKappa],
    ) -> Result<TensorRef> {
        self.check(z)?;
        let hidden = self.check_afu_groups(groups)?;
        let cols = if z.shape.len() >= 2 {
            z.shape[1..].iter().product()
        } else {
            1
        };
        let per_column = groups.len() > 1;
        if per_column && groups.len() != cols {
            return Err(Error::Shape {
                op: "afu",
                left: z.shape.clone(),
                right: vec![groups.len(), hidden],
            });
        }
        let kappa: Vec<[&[f64]; 4]> = groups.iter().map(|g| self.kappa_values(g)).collect();
        let zv = &self.nodes[z.id].value;
        let out = zv
            .data()
            .iter()
            .enumerate()
            .map(|(e, &x)| {
                let k = &kappa[if per_column { e % cols } else { 0 }];
                afu_value(base, k, x)
            })
            .collect();
        let t = Tensor::new(zv.shape().to_vec(), out)?;
        let mut inputs = vec![z.id];
        for g in groups {
            inputs.extend([g.w0.id, g.b0.id, g.w1.id, g.b1.id]);
        }
        self.push(
            Op::Afu {
                base,
                hidden,
                per_column,
            },
            inputs,
            t,
        )
    }

    fn check_afu_groups(&self, groups: &[AfuKappa]) -> Result<usize> {
        let first = groups.first().ok_or(Error::InvalidWidth)?;
        let hidden = first.w0.numel();
        for g in groups {
            for r in [&g.w0, &g.b0, &g.w1, &g.b1] {
                self.check(r)?;
            }
            for r in [&g.b0, &g.w1] {
                if r.numel() != hidden {
                    return Err(Error::Shape {
                        op: "afu",
                        left: first.w0.shape.clone(),
                        right: r.shape.clone(),
                    });
                }
            }
            if g.w0.numel() != hidden || g.b1.numel() != 1 {
                return Err(Error::Shape {
                    op: "afu",
                    left: first.w0.shape.clone(),
                    right: g.b1.shape.clone(),
                });
            }
        }
        Ok(hidden)
    }

    fn kappa_values(&self, g: &AfuKappa) -> [&[f64]; 4] {
        [
            self.nodes[g.w0.id].value.data(),
            self.nodes[g.b0.id].value.data(),
            self.nodes[g.w1.id].value.data(),
            self.nodes[g.b1.id].value.data(),
        ]
    }

    /// Row-wise `log softmax` of a `[rows, classes]` matrix, via log-sum-exp
    /// with the row maximum subtracted.
    pub fn log_softmax(&mut self, a: &TensorRef) -> Result<TensorRef> {
        self.check(a)?;
        let (rows, c) = as_matrix(&a.shape).ok_or_else(|| Error::Shape {
            op: "log_softmax",
            left: a.shape.clone(),
            right: Vec::new(),
        })?;
        let v = self.nodes[a.id].value.data();
        let mut out = vec![0.0; rows * c];
        for (src, dst) in v.chunks_exact(c).zip(out.chunks_exact_mut(c)) {
            let m = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + src.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s - lse;
            }
        }
        self.push(Op::LogSoftmax, vec![a.id], Tensor::matrix(rows, c, out)?)
    }

    /// Select `a[i, index[i]]` for every row, giving a `[rows]` vector.
    pub fn pick(&mut self, a: &TensorRef, index: &[usize]) -> Result<TensorRef> {
        self.check(a)?;
        let (rows, c) = as_matrix(&a.shape).ok_or_else(|| Error::Shape {
            op: "pick",
            left: a.shape.clone(),
            right: vec![index.len()],
        })?;
        if rows != index.len() {
            return Err(Error::Shape {
                op: "pick",
                left: a.shape.clone(),
                right: vec![index.len()],
            });
        }
        if let Some(&bad) = index.iter().find(|&&k| k >= c) {
            return Err(Error::Label {
                label: bad as i64,
                reason: format!("class index out of range 0..{c}"),
            });
        }
        let v = self.nodes[a.id].value.data();
        let out = index
            .iter()
            .enumerate()
            .map(|(i, &k)| v[i * c + k])
            .collect();
        self.push(Op::Pick(index.to_vec()), vec![a.id], Tensor::vector(out))
    }

    /// Exact reverse-mode gradients of a scalar `loss` with respect to every
    /// registered parameter. Unreachable parameters get all-zero gradients.
    pub fn backward(&self, loss: &TensorRef) -> Result<GradientMap> {
        self.check(loss)?;
        if loss.numel() != 1 {
            return Err(Error::Rank(loss.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(vec![1.0]);
        for idx in (0..=loss.id).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
        }
        let mut entries = BTreeMap::new();
        for &p in &self.params {
            let value = &self.nodes[p].value;
            let g = match grads.get_mut(p).and_then(Option::take) {
                Some(g) => Tensor::new(value.shape().to_vec(), g)?,
                None => Tensor::zeros(value.shape())?,
            };
            entries.insert(p, g);
        }
        Ok(GradientMap { entries })
    }

    fn wants(&self, id: usize) -> bool {
        self.nodes[id].requires_grad
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let inputs = &node.inputs;
        let val = |i: usize| self.nodes[inputs[i]].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Matmul => {
                let (m, k) = as_matrix(self.nodes[inputs[0]].value.shape()).unwrap();
                let n = node.value.shape()[1];
                if self.wants(inputs[0]) {
                    let da = slot(grads, inputs[0], m * k);
                    kernels::gemm_nt(g, val(1), da, m, n, k);
                }
                if self.wants(inputs[1]) {
                    let db = slot(grads, inputs[1], k * n);
                    kernels::gemm_tn(val(0), g, db, m, k, n);
                }
            }
            Op::Transpose => {
                let (r, c) = as_matrix(self.nodes[inputs[0]].value.shape()).unwrap();
                let back = kernels::transpose(g, c, r);
                add_into(slot(grads, inputs[0], r * c), &back);
            }
            Op::Add | Op::Sub | Op::Mul | Op::Max0Diff => {
                self.propagate_binary(&node.op, inputs, g, grads);
            }
            Op::Scale(c) => {
                let da = slot(grads, inputs[0], g.len());
                for (d, x) in da.iter_mut().zip(g) {
                    *d += c * x;
                }
            }
            Op::Sum | Op::Mean => {
                let n = self.nodes[inputs[0]].value.len();
                let s = if matches!(node.op, Op::Mean) {
                    g[0] / n as f64
                } else {
                    g[0]
                };
                for d in slot(grads, inputs[0], n).iter_mut() {
                    *d += s;
                }
            }
            Op::AddBias => {
                let n = self.nodes[inputs[1]].value.len();
                if self.wants(inputs[0]) {
                    add_into(slot(grads, inputs[0], g.len()), g);
                }
                if self.wants(inputs[1]) {
                    let db = slot(grads, inputs[1], n);
                    for row in g.chunks_exact(n) {
                        add_into(db, row);
                    }
                }
            }
            Op::Activation(spec) => {
                let z = val(0);
                let da = slot(grads, inputs[0], g.len());
                for ((d, &x), &gi) in da.iter_mut().zip(z).zip(g) {
                    *d += gi * spec.derivative(x);
                }
            }
            Op::Afu {
                base,
                hidden,
                per_column,
            } => self.propagate_afu(*base, *hidden, *per_column, inputs, g, grads),
            Op::LogSoftmax => {
                let c = node.value.shape()[1];
                let da = slot(grads, inputs[0], g.len());
                for ((gr, lp), d) in g
                    .chunks_exact(c)
                    .zip(node.value.data().chunks_exact(c))
                    .zip(da.chunks_exact_mut(c))
                {
                    let total: f64 = gr.iter().sum();
                    for ((di, gi), li) in d.iter_mut().zip(gr).zip(lp) {
                        *di += gi - li.exp() * total;
                    }
                }
            }
            Op::Pick(index) => {
                let src = &self.nodes[inputs[0]].value;
                let c = src.shape()[1];
                let da = slot(grads, inputs[0], src.len());
                for (i, (&k, gi)) in index.iter().zip(g).enumerate() {
                    da[i * c + k] += gi;
                }
            }
        }
    }

    fn propagate_binary(
        &self,
        op: &Op,
        inputs: &[usize],
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let a = &self.nodes[inputs[0]].value;
        let b = &self.nodes[inputs[1]].value;
        let n = g.len();
        let pick = |t: &Tensor, i: usize| {
            if t.len() == 1 {
                t.data()[0]
            } else {
                t.data()[i]
            }
        };
        // Local partials (d/da, d/db) at element i.
        let partial = |i: usize| -> (f64, f64) {
            let (x, y) = (pick(a, i), pick(b, i));
            match op {
                Op::Add => (1.0, 1.0),
                Op::Sub => (1.0, -1.0),
                Op::Mul => (y, x),
                Op::Max0Diff => {
                    if x - y > 0.0 {
                        (1.0, -1.0)
                    } else {
                        (0.0, 0.0)
                    }
                }
                _ => unreachable!(),
            }
        };
        for (side, t) in [(0usize, a), (1usize, b)] {
            if !self.wants(inputs[side]) {
                continue;
            }
            let d = slot(grads, inputs[side], t.len());
            if t.len() == 1 && n > 1 {
                let mut s = 0.0;
                for (i, gi) in g.iter().enumerate() {
                    let p = partial(i);
                    s += gi * if side == 0 { p.0 } else { p.1 };
                }
                d[0] += s;
            } else {
                for (i, gi) in g.iter().enumerate() {
                    let p = partial(i);
                    d[i] += gi * if side == 0 { p.0 } else { p.1 };
                }
            }
        }
    }

    fn propagate_afu(
        &self,
        base: ActivationSpec,
        hidden: usize,
        per_column: bool,
        inputs: &[usize],
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let z = &self.nodes[inputs[0]].value;
        let groups = (inputs.len() - 1) / 4;
        let cols = if per_column { groups } else { 1 };
        let kappa: Vec<[&[f64]; 4]> = (0..groups)
            .map(|k| {
                let at = |j: usize| self.nodes[inputs[1 + 4 * k + j]].value.data();
                [at(0), at(1), at(2), at(3)]
            })
            .collect();
        let want_z = self.wants(inputs[0]);
        let want_kappa: Vec<bool> = (0..groups)
            .map(|k| (0..4).any(|j| self.wants(inputs[1 + 4 * k + j])))
            .collect();

        // [w0, b0, w1] grads of length `hidden`, then b1, per group.
        let mut dk = vec![vec![0.0; 3 * hidden + 1]; groups];
        let mut dz = if want_z {
            vec![0.0; z.len()]
        } else {
            Vec::new()
        };
        for (e, (&x, &gi)) in z.data().iter().zip(g).enumerate() {
            let k = if per_column { e % cols } else { 0 };
            let [w0, b0, w1, _] = kappa[k];
            let mut dzi = 0.0;
            let acc = &mut dk[k];
            for i in 0..hidden {
                let u = w0[i] * x + b0[i];
                let (psi, dpsi) = base.eval_with_derivative(u);
                let inner = gi * w1[i] * dpsi;
                dzi += inner * w0[i];
                if want_kappa[k] {
                    acc[i] += inner * x;
                    acc[hidden + i] += inner;
                    acc[2 * hidden + i] += gi * psi;
                }
            }
            if want_kappa[k] {
                acc[3 * hidden] += gi;
            }
            if want_z {
                dz[e] = dzi;
            }
        }
        if want_z {
            add_into(slot(grads, inputs[0], z.len()), &dz);
        }
        for (k, acc) in dk.iter().enumerate() {
            if !want_kappa[k] {
                continue;
            }
            let parts = [
                &acc[..hidden],
                &acc[hidden..2 * hidden],
                &acc[2 * hidden..3 * hidden],
                &acc[3 * hidden..],
            ];
            for (j, part) in parts.into_iter().enumerate() {
                let id = inputs[1 + 4 * k + j];
                if self.wants(id) {
                    add_into(slot(grads, id, part.len()), part);
                }
            }
        }
    }
}

/// `G(z)` for one parameter group `[w0, b0, w1, b1]`.
#[inline]
pub(crate) fn afu_value(base: ActivationSpec, k: &[&[f64]; 4], z: f64) -> f64 {
    let [w0, b0, w1, b1] = *k;
    let mut s = 0.0;
    for i in 0..w0.len() {
        s += w1[i] * base.eval(w0[i] * z + b0[i]);
    }
    s + b1[0]
}

fn slot(grads: &mut [Option<Vec<f64>>], id: usize, n: usize) -> &mut Vec<f64> {
    grads[id].get_or_insert_with(|| vec![0.0; n])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
