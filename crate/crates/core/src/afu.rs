//! Activation Function Units.
//!
//! An AFU is a one-hidden-layer scalar network used as an activation:
//!
//! ```text
//! G(z) = sum_i w1[i] * base(w0[i] * z + b0[i]) + b1
//! ```
//!
//! with `N` hidden units, so it carries exactly `3N + 1` learnable values.
//! One AFU may be bound to many activation sites; its gradient is then the
//! sum over all of them (see [`crate::autograd`]).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::activations::ActivationSpec;
use crate::autograd::{AfuKappa, InitSpec, Tape, TensorRef};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Which activation sites share one AFU.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharingScope {
    /// One AFU for every AFU-bound site in the network.
    Network,
    /// One AFU per AFU-bound layer.
    PerLayer,
    /// One AFU per neuron of every AFU-bound layer.
    PerNeuron,
}

impl SharingScope {
    pub fn name(self) -> &'static str {
        match self {
            SharingScope::Network => "network",
            SharingScope::PerLayer => "per_layer",
            SharingScope::PerNeuron => "per_neuron",
        }
    }
}

impl fmt::Display for SharingScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SharingScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "network" => Ok(SharingScope::Network),
            "per_layer" => Ok(SharingScope::PerLayer),
            "per_neuron" => Ok(SharingScope::PerNeuron),
            other => Err(Error::Config(format!(
                "unknown AFU scope '{other}' (valid: network, per_layer, per_neuron)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Afu {
    base: ActivationSpec,
    w0: Tensor,
    b0: Tensor,
    w1: Tensor,
    b1: Tensor,
}

pub const AFU_FILE_SCHEMA: &str = "afu-params/v1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AfuFile {
    schema: String,
    hidden_units: usize,
    base: ActivationSpec,
    w0: Vec<f64>,
    b0: Vec<f64>,
    w1: Vec<f64>,
    b1: f64,
}

impl Afu {
    /// New AFU with `w0`, `w1` drawn from `init` and zero biases.
    pub fn new(
        hidden_units: usize,
        base: ActivationSpec,
        init: InitSpec,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if hidden_units == 0 {
            return Err(Error::InvalidWidth);
        }
        let w0 = init.sample(&[hidden_units], rng)?;
        let w1 = init.sample(&[hidden_units], rng)?;
        Ok(Self {
            base,
            w0,
            b0: Tensor::zeros(&[hidden_units])?,
            w1,
            b1: Tensor::scalar(0.0),
        })
    }

    /// Weights uniform on `±sqrt(6 / (N + 1))`, biases zero.
    pub fn with_default_init(
        hidden_units: usize,
        base: ActivationSpec,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Self::new(hidden_units, base, Self::default_init(hidden_units), rng)
    }

    pub fn default_init(hidden_units: usize) -> InitSpec {
        InitSpec::glorot(hidden_units, 1)
    }

    pub fn from_parts(
        base: ActivationSpec,
        w0: Vec<f64>,
        b0: Vec<f64>,
        w1: Vec<f64>,
        b1: f64,
    ) -> Result<Self> {
        let n = w0.len();
        if n == 0 {
            return Err(Error::InvalidWidth);
        }
        if b0.len() != n || w1.len() != n {
            return Err(Error::Shape {
                op: "afu",
                left: vec![w0.len(), b0.len(), w1.len()],
                right: vec![n; 3],
            });
        }
        let afu = Self {
            base,
            w0: Tensor::vector(w0),
            b0: Tensor::vector(b0),
            w1: Tensor::vector(w1),
            b1: Tensor::scalar(b1),
        };
        if !afu.parameters().iter().all(|t| t.all_finite()) {
            return Err(Error::NonFinite("AFU parameters".into()));
        }
        Ok(afu)
    }

    pub fn hidden_units(&self) -> usize {
        self.w0.len()
    }

    pub fn base(&self) -> ActivationSpec {
        self.base
    }

    /// `3N + 1`.
    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    pub fn w0(&self) -> &[f64] {
        self.w0.data()
    }

    pub fn b0(&self) -> &[f64] {
        self.b0.data()
    }

    pub fn w1(&self) -> &[f64] {
        self.w1.data()
    }

    pub fn b1(&self) -> f64 {
        self.b1.data()[0]
    }

    /// Parameter tensors in the order `w0, b0, w1, b1`.
    pub fn parameters(&self) -> [&Tensor; 4] {
        [&self.w0, &self.b0, &self.w1, &self.b1]
    }

    pub fn parameters_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w0, &mut self.b0, &mut self.w1, &mut self.b1]
    }

    /// All `3N + 1` values flattened in `w0, b0, w1, b1` order.
    pub fn flat_parameters(&self) -> Vec<f64> {
        self.parameters()
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    /// Register the parameters as trainable leaves on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Result<AfuKappa> {
        Ok(AfuKappa {
            w0: tape.param_from(self.w0.clone())?,
            b0: tape.param_from(self.b0.clone())?,
            w1: tape.param_from(self.w1.clone())?,
            b1: tape.param_from(self.b1.clone())?,
        })
    }

    /// Apply elementwise on the tape, using previously bound parameters.
    pub fn apply(&self, tape: &mut Tape, z: &TensorRef, kappa: &AfuKappa) -> Result<TensorRef> {
        tape.afu(z, self.base, std::slice::from_ref(kappa))
    }

    /// `G(z)` without validation.
    pub fn eval(&self, z: f64) -> f64 {
        let mut s = 0.0;
        for ((w0, b0), w1) in self.w0().iter().zip(self.b0()).zip(self.w1()) {
            s += w1 * self.base.eval(w0 * z + b0);
        }
        s + self.b1()
    }

    /// `G(z)`, rejecting non-finite inputs or intermediates.
    pub fn forward(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::NonFinite(format!("AFU input {z}")));
        }
        let v = self.eval(z);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("AFU output at z={z}")));
        }
        Ok(v)
    }

    /// `dG/dz`.
    pub fn derivative(&self, z: f64) -> f64 {
        let mut s = 0.0;
        for ((w0, b0), w1) in self.w0().iter().zip(self.b0()).zip(self.w1()) {
            s += w1 * w0 * self.base.derivative(w0 * z + b0);
        }
        s
    }

    /// `count` evenly spaced `(z, G(z))` pairs over `[z_min, z_max]`,
    /// endpoints included.
    pub fn sample(&self, z_min: f64, z_max: f64, count: usize) -> Result<Vec<(f64, f64)>> {
        sample_curve(|z| self.forward(z), z_min, z_max, count)
    }

    pub fn to_toml_string(&self) -> String {
        let file = AfuFile {
            schema: AFU_FILE_SCHEMA.to_string(),
            hidden_units: self.hidden_units(),
            base: self.base,
            w0: self.w0().to_vec(),
            b0: self.b0().to_vec(),
            w1: self.w1().to_vec(),
            b1: self.b1(),
        };
        toml::to_string(&file).expect("AFU parameters serialise")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: AfuFile =
            toml::from_str(s).map_err(|e| Error::Config(format!("AFU file: {e}")))?;
        if file.schema != AFU_FILE_SCHEMA {
            return Err(Error::Config(format!(
                "AFU file schema '{}' is not {AFU_FILE_SCHEMA}",
                file.schema
            )));
        }
        if file.w0.len() != file.hidden_units {
            return Err(Error::Config(format!(
                "AFU file declares {} hidden units but has {} weights",
                file.hidden_units,
                file.w0.len()
            )));
        }
        Self::from_parts(file.base, file.w0, file.b0, file.w1, file.b1)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s)
    }
}

/// Evenly spaced samples of `f` over `[min, max]`, endpoints included.
pub fn sample_curve(
    f: impl Fn(f64) -> Result<f64>,
    min: f64,
    max: f64,
    count: usize,
) -> Result<Vec<(f64, f64)>> {
    if !(min < max) {
        return Err(Error::Range { min, max });
    }
    if count < 2 {
        return Err(Error::TooFewPoints { min: 2, got: count });
    }
    (0..count)
        .map(|i| {
            let z = linspace_at(min, max, count, i);
            f(z).map(|g| (z, g))
        })
        .collect()
}

/// Point `i` of `count` evenly spaced values on `[min, max]`; the last one is
/// exactly `max`.
pub fn linspace_at(min: f64, max: f64, count: usize, i: usize) -> f64 {
    if i + 1 == count {
        max
    } else {
        min + (max - min) * i as f64 / (count - 1) as f64
    }
}
