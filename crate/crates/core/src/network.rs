//! Dense host networks with fixed or AFU activations.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::activations::ActivationSpec;
use crate::afu::{Afu, SharingScope};
use crate::autograd::{AfuKappa, InitSpec, Tape, TensorRef};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::experiments::grid::{GridField, GridSpec};
use crate::rng::{seeded, SeededRng};
use crate::tensor::Tensor;

/// Post-activations with magnitude below this count as "dead".
pub const DEAD_THRESHOLD: f64 = 1e-6;

/// Rows per tape when evaluating large inputs.
const EVAL_CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, kept units scaled by `1 / (1 - rate)`.
    Train,
    /// No dropout, no scaling.
    Eval,
}

/// What a layer applies after its affine map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerActivation {
    Fixed(ActivationSpec),
    /// Index into [`Network::afus`].
    Afu(usize),
    /// Neuron `j` uses `afus[first + j]`.
    AfuPerNeuron {
        first: usize,
    },
}

/// Activation requested for a layer before AFUs are allocated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActivationChoice {
    Fixed(ActivationSpec),
    Afu,
}

impl FromStr for ActivationChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "afu" {
            Ok(ActivationChoice::Afu)
        } else {
            s.parse().map(ActivationChoice::Fixed)
        }
    }
}

impl fmt::Display for ActivationChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationChoice::Fixed(a) => a.fmt(f),
            ActivationChoice::Afu => f.write_str("afu"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub units: usize,
    pub activation: ActivationChoice,
    pub dropout: f64,
}

impl LayerSpec {
    pub fn new(units: usize, activation: ActivationChoice) -> Self {
        Self {
            units,
            activation,
            dropout: 0.0,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout = rate;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AfuSettings {
    pub hidden_units: usize,
    pub base: ActivationSpec,
    pub scope: SharingScope,
}

impl Default for AfuSettings {
    fn default() -> Self {
        Self {
            hidden_units: 8,
            base: ActivationSpec::Relu,
            scope: SharingScope::Network,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// `[out, in]`, one row per neuron.
    pub weights: Tensor,
    /// `[out]`.
    pub bias: Tensor,
    pub activation: LayerActivation,
    /// Applied to this layer's output in [`Mode::Train`] only.
    pub dropout: f64,
}

impl DenseLayer {
    pub fn new(
        weights: Tensor,
        bias: Tensor,
        activation: LayerActivation,
        dropout: f64,
    ) -> Result<Self> {
        let out = weights.shape().first().copied().unwrap_or(0);
        if weights.shape().len() != 2 || bias.len() != out {
            return Err(Error::Shape {
                op: "dense layer",
                left: weights.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!(
                "dropout rate {dropout} not in [0, 1)"
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
            dropout,
        })
    }

    pub fn units(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input_dim: usize,
    layers: Vec<DenseLayer>,
    afus: Vec<Afu>,
    scope: Option<SharingScope>,
}

/// A network's parameters registered on one tape.
#[derive(Clone, Debug)]
pub struct BoundNetwork {
    /// Same order as [`Network::parameters`].
    pub params: Vec<TensorRef>,
    layers: Vec<(TensorRef, TensorRef)>,
    afus: Vec<AfuKappa>,
}

impl Network {
    /// Build with Glorot-uniform weights, zero biases, and AFUs allocated
    /// according to `afu.scope`.
    pub fn build(
        input_dim: usize,
        specs: &[LayerSpec],
        afu: Option<&AfuSettings>,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Self::build_with_bias_init(input_dim, specs, afu, false, rng)
    }

    /// As [`Network::build`]; with `random_bias` the biases are drawn from the
    /// same uniform range as the layer's weights.
    pub fn build_with_bias_init(
        input_dim: usize,
        specs: &[LayerSpec],
        afu: Option<&AfuSettings>,
        random_bias: bool,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        let uses_afu = specs.iter().any(|s| s.activation == ActivationChoice::Afu);
        let settings = match (uses_afu, afu) {
            (true, Some(s)) => Some(*s),
            (true, None) => {
                return Err(Error::Config(
                    "layer requests an AFU but no AFU settings given".into(),
                ))
            }
            (false, _) => None,
        };

        let mut layers = Vec::with_capacity(specs.len());
        let mut afu_count = 0usize;
        let mut fan_in = input_dim;
        for spec in specs {
            if spec.units == 0 || fan_in == 0 {
                return Err(Error::InvalidShape(vec![spec.units, fan_in]));
            }
            let init = InitSpec::glorot(fan_in, spec.units);
            let weights = init.sample(&[spec.units, fan_in], rng)?;
            let bias = if random_bias {
                init.sample(&[spec.units], rng)?
            } else {
                Tensor::zeros(&[spec.units])?
            };
            let activation = match (spec.activation, settings) {
                (ActivationChoice::Fixed(a), _) => LayerActivation::Fixed(a),
                (ActivationChoice::Afu, Some(s)) => match s.scope {
                    SharingScope::Network => {
                        afu_count = 1;
                        LayerActivation::Afu(0)
                    }
                    SharingScope::PerLayer => {
                        afu_count += 1;
                        LayerActivation::Afu(afu_count - 1)
                    }
                    SharingScope::PerNeuron => {
                        let first = afu_count;
                        afu_count += spec.units;
                        LayerActivation::AfuPerNeuron { first }
                    }
                },
                (ActivationChoice::Afu, None) => unreachable!(),
            };
            layers.push(DenseLayer::new(weights, bias, activation, spec.dropout)?);
            fan_in = spec.units;
        }

        let afus = match settings {
            Some(s) => (0..afu_count)
                .map(|_| Afu::with_default_init(s.hidden_units, s.base, rng))
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        Self::from_parts(input_dim, layers, afus, settings.map(|s| s.scope))
    }

    pub fn from_parts(
        input_dim: usize,
        layers: Vec<DenseLayer>,
        afus: Vec<Afu>,
        scope: Option<SharingScope>,
    ) -> Result<Self> {
        let mut fan_in = input_dim;
        for l in &layers {
            if l.inputs() != fan_in {
                return Err(Error::Shape {
                    op: "network",
                    left: vec![fan_in],
                    right: l.weights.shape().to_vec(),
                });
            }
            match l.activation {
                LayerActivation::Afu(i) if i >= afus.len() => {
                    return Err(Error::Config(format!("AFU index {i} out of range")))
                }
                LayerActivation::AfuPerNeuron { first } if first + l.units() > afus.len() => {
                    return Err(Error::Config(format!(
                        "per-neuron AFUs {first}..{} out of range",
                        first + l.units()
                    )))
                }
                _ => {}
            }
            fan_in = l.units();
        }
        Ok(Self {
            input_dim,
            layers,
            afus,
            scope,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.units())
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn afus(&self) -> &[Afu] {
        &self.afus
    }

    pub fn afus_mut(&mut self) -> &mut [Afu] {
        &mut self.afus
    }

    pub fn scope(&self) -> Option<SharingScope> {
        self.scope
    }

    /// Layer weights and biases in order, then each AFU's `w0, b0, w1, b1`.
    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::new();
        for l in &self.layers {
            out.push(&l.weights);
            out.push(&l.bias);
        }
        for a in &self.afus {
            out.extend(a.parameters());
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
        }
        for a in &mut self.afus {
            out.extend(a.parameters_mut());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// Treat `params` (in [`Network::parameters`] order) as this network's
    /// parameters. Used to drive the forward pass from perturbed copies.
    pub fn rebind(&self, params: &[TensorRef]) -> Result<BoundNetwork> {
        let expected = 2 * self.layers.len() + 4 * self.afus.len();
        if params.len() != expected {
            return Err(Error::Shape {
                op: "rebind",
                left: vec![params.len()],
                right: vec![expected],
            });
        }
        let (dense, afu) = params.split_at(2 * self.layers.len());
        Ok(BoundNetwork {
            params: params.to_vec(),
            layers: dense
                .chunks(2)
                .map(|c| (c[0].clone(), c[1].clone()))
                .collect(),
            afus: afu
                .chunks(4)
                .map(|c| AfuKappa {
                    w0: c[0].clone(),
                    b0: c[1].clone(),
                    w1: c[2].clone(),
                    b1: c[3].clone(),
                })
                .collect(),
        })
    }

    pub fn bind(&self, tape: &mut Tape) -> Result<BoundNetwork> {
        let mut params = Vec::new();
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let w = tape.param_from(l.weights.clone())?;
            let b = tape.param_from(l.bias.clone())?;
            params.push(w.clone());
            params.push(b.clone());
            layers.push((w, b));
        }
        let mut afus = Vec::with_capacity(self.afus.len());
        for a in &self.afus {
            let k = a.bind(tape)?;
            params.extend([k.w0.clone(), k.b0.clone(), k.w1.clone(), k.b1.clone()]);
            afus.push(k);
        }
        Ok(BoundNetwork {
            params,
            layers,
            afus,
        })
    }

    /// Record the forward pass for a `[batch, input_dim]` input. Returns each
    /// layer's output (after activation and, in train mode, dropout).
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        bound: &BoundNetwork,
        x: &TensorRef,
        mode: Mode,
        rng: &mut SeededRng,
    ) -> Result<Vec<TensorRef>> {
        if x.shape().len() != 2 || x.shape()[1] != self.input_dim {
            return Err(Error::Shape {
                op: "network input",
                left: x.shape().to_vec(),
                right: vec![self.input_dim],
            });
        }
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (layer, (w, b)) in self.layers.iter().zip(&bound.layers) {
            let wt = tape.transpose(w)?;
            let z = tape.matmul(&h, &wt)?;
            let z = tape.add_bias(&z, b)?;
            let mut a = match layer.activation {
                LayerActivation::Fixed(spec) => tape.activation(&z, spec)?,
                LayerActivation::Afu(i) => self.afus[i].apply(tape, &z, &bound.afus[i])?,
                LayerActivation::AfuPerNeuron { first } => {
                    let base = self.afus[first].base();
                    tape.afu(&z, base, &bound.afus[first..first + layer.units()])?
                }
            };
            if mode == Mode::Train && layer.dropout > 0.0 {
                let keep = 1.0 - layer.dropout;
                let mask: Vec<f64> = (0..a.numel())
                    .map(|_| {
                        if rng.random::<f64>() < layer.dropout {
                            0.0
                        } else {
                            1.0 / keep
                        }
                    })
                    .collect();
                let m = tape.constant(Tensor::new(a.shape().to_vec(), mask)?)?;
                a = tape.mul(&a, &m)?;
            }
            outputs.push(a.clone());
            h = a;
        }
        Ok(outputs)
    }

    /// Outputs of every layer for a `[batch, input_dim]` input.
    pub fn forward_layers(
        &self,
        x: &Tensor,
        mode: Mode,
        rng: &mut SeededRng,
    ) -> Result<Vec<Tensor>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape)?;
        let xr = tape.constant(x.clone())?;
        let outs = self.forward_on_tape(&mut tape, &bound, &xr, mode, rng)?;
        Ok(outs.iter().map(|r| tape.value(r).clone()).collect())
    }

    /// Network output for a `[batch, input_dim]` input.
    pub fn forward_batch(&self, x: &Tensor, mode: Mode, rng: &mut SeededRng) -> Result<Tensor> {
        let mut outs = self.forward_layers(x, mode, rng)?;
        Ok(outs.pop().expect("at least one layer"))
    }

    /// Eval-mode output for a batch, evaluated in chunks.
    pub fn eval_batch(&self, x: &Tensor) -> Result<Tensor> {
        let rows = x.rows();
        let d = x.cols();
        let mut out = Vec::with_capacity(rows * self.output_dim());
        let mut rng = seeded(0);
        for start in (0..rows).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(rows);
            let chunk = Tensor::matrix(end - start, d, x.data()[start * d..end * d].to_vec())?;
            out.extend_from_slice(self.forward_batch(&chunk, Mode::Eval, &mut rng)?.data());
        }
        Tensor::matrix(rows, self.output_dim(), out)
    }

    /// Output for a single feature vector.
    pub fn forward(&self, x: &[f64], mode: Mode, rng: &mut SeededRng) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::Shape {
                op: "network input",
                left: vec![x.len()],
                right: vec![self.input_dim],
            });
        }
        let xt = Tensor::matrix(1, x.len(), x.to_vec())?;
        Ok(self.forward_batch(&xt, mode, rng)?.into_data())
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<i64> {
        let out = self.forward(x, Mode::Eval, &mut seeded(0))?;
        Ok(predict_label(&out))
    }

    /// For every hidden neuron, the fraction of samples whose post-activation
    /// magnitude is below [`DEAD_THRESHOLD`]. One vector per hidden layer.
    pub fn activation_stats(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        if data.is_empty() {
            return Err(Error::Size {
                requested: 1,
                available: 0,
            });
        }
        let hidden = self.layers.len().saturating_sub(1);
        let mut dead: Vec<Vec<usize>> = self.layers[..hidden]
            .iter()
            .map(|l| vec![0; l.units()])
            .collect();
        let mut rng = seeded(0);
        let all: Vec<usize> = (0..data.len()).collect();
        for chunk in all.chunks(EVAL_CHUNK) {
            let x = data.features_matrix(chunk)?;
            let outs = self.forward_layers(&x, Mode::Eval, &mut rng)?;
            for (counts, out) in dead.iter_mut().zip(&outs) {
                let units = counts.len();
                for row in out.data().chunks_exact(units) {
                    for (c, v) in counts.iter_mut().zip(row) {
                        if v.abs() < DEAD_THRESHOLD {
                            *c += 1;
                        }
                    }
                }
            }
        }
        let n = data.len() as f64;
        Ok(dead
            .into_iter()
            .map(|c| c.into_iter().map(|k| k as f64 / n).collect())
            .collect())
    }

    /// Post-activation of one neuron over a 2-D input grid.
    pub fn neuron_activation_map(
        &self,
        layer: usize,
        neuron: usize,
        grid: &GridSpec,
    ) -> Result<GridField> {
        if self.input_dim != 2 {
            return Err(Error::Unsupported(format!(
                "activation maps need a 2-D input network, this one takes {}",
                self.input_dim
            )));
        }
        let units = self
            .layers
            .get(layer)
            .map(|l| l.units())
            .ok_or_else(|| Error::Config(format!("no layer {layer}")))?;
        if neuron >= units {
            return Err(Error::Config(format!(
                "layer {layer} has no neuron {neuron}"
            )));
        }
        let points = grid.points();
        let mut values = Vec::with_capacity(points.len() / 2);
        let mut rng = seeded(0);
        for chunk in points.chunks(2 * EVAL_CHUNK) {
            let x = Tensor::matrix(chunk.len() / 2, 2, chunk.to_vec())?;
            let outs = self.forward_layers(&x, Mode::Eval, &mut rng)?;
            values.extend(outs[layer].data().chunks_exact(units).map(|r| r[neuron]));
        }
        GridField::new(*grid, values)
    }

    /// Eval-mode scalar output over a 2-D input grid.
    pub fn score_field(&self, grid: &GridSpec) -> Result<GridField> {
        if self.input_dim != 2 || self.output_dim() != 1 {
            return Err(Error::Unsupported(
                "score fields need a 2-input, 1-output network".into(),
            ));
        }
        let points = grid.points();
        let x = Tensor::matrix(points.len() / 2, 2, points)?;
        GridField::new(*grid, self.eval_batch(&x)?.into_data())
    }
}

/// Binary (one output): sign with 0 mapped to +1. Multiclass: argmax, lowest
/// index wins ties.
pub fn predict_label(output: &[f64]) -> i64 {
    if output.len() == 1 {
        if output[0] >= 0.0 {
            1
        } else {
            -1
        }
    } else {
        let mut best = 0;
        for (i, v) in output.iter().enumerate() {
            if *v > output[best] {
                best = i;
            }
        }
        best as i64
    }
}
