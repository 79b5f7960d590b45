//! Experiment configuration files.
//!
//! A config is TOML with a required `experiment = "toy" | "smoothness" |
//! "mnist"` key. Every other key is optional and falls back to the defaults
//! of that experiment kind; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::activations::ActivationSpec;
use crate::afu::SharingScope;
use crate::error::{Error, Result};
use crate::experiments::train::{OptimizerKind, TrainSettings};
use crate::loss::LossSpec;
use crate::network::{ActivationChoice, AfuSettings, LayerSpec};
use crate::optim::LrSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Toy,
    Smoothness,
    Mnist,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Toy => "toy",
            ExperimentKind::Smoothness => "smoothness",
            ExperimentKind::Mnist => "mnist",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub units: usize,
    /// A canonical activation name or `"afu"`.
    pub activation: String,
    #[serde(default)]
    pub dropout: f64,
}

impl LayerConfig {
    fn new(units: usize, activation: &str, dropout: f64) -> Self {
        Self {
            units,
            activation: activation.into(),
            dropout,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub layers: Vec<LayerConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AfuConfig {
    pub hidden_units: usize,
    pub base: ActivationSpec,
    pub scope: SharingScope,
}

impl Default for AfuConfig {
    fn default() -> Self {
        Self {
            hidden_units: 8,
            base: ActivationSpec::Relu,
            scope: SharingScope::Network,
        }
    }
}

impl From<AfuConfig> for AfuSettings {
    fn from(c: AfuConfig) -> Self {
        AfuSettings {
            hidden_units: c.hidden_units,
            base: c.base,
            scope: c.scope,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    /// Adam step size, or the AdaDelta step multiplier.
    pub lr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyDataConfig {
    pub n_per_cluster: usize,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistConfig {
    /// Directory with the four uncompressed IDX files. Falls back to the
    /// `AFU_MNIST_DIR` environment variable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    pub train_subset: usize,
    pub test_subset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothnessConfig {
    pub hidden_layers: usize,
    pub width: usize,
    /// Saved AFU to use. Defaults to the toy run's AFU file in the output
    /// directory for the same seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub afu_file: Option<PathBuf>,
    /// Use a freshly initialised AFU (built from `[afu]`) instead of a file.
    pub random_afu: bool,
}

/// Sampling ranges for emitted fields and curves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputGrid {
    pub field_min: f64,
    pub field_max: f64,
    pub field_resolution: usize,
    pub curve_min: f64,
    pub curve_max: f64,
    pub curve_points: usize,
}

impl Default for OutputGrid {
    fn default() -> Self {
        Self {
            field_min: -3.0,
            field_max: 3.0,
            field_resolution: 201,
            curve_min: -5.0,
            curve_max: 5.0,
            curve_points: 201,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Output file prefix.
    pub name: String,
    pub seed: u64,
    pub epochs: usize,
    /// Omit for full-batch training.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_at_train_accuracy: Option<f64>,
    pub out_dir: PathBuf,
    pub loss: LossSpec,
    pub network: NetworkConfig,
    pub afu: AfuConfig,
    pub optimizer: OptimizerConfig,
    pub schedule: LrSchedule,
    pub toy: ToyDataConfig,
    pub mnist: MnistConfig,
    pub smoothness: SmoothnessConfig,
    pub grid: OutputGrid,
}

impl ExperimentConfig {
    fn common(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            name: experiment.name().into(),
            seed: 0,
            epochs: 1,
            batch_size: None,
            stop_at_train_accuracy: None,
            out_dir: PathBuf::from("out"),
            loss: LossSpec::Hinge,
            network: NetworkConfig {
                layers: vec![
                    LayerConfig::new(4, "afu", 0.0),
                    LayerConfig::new(1, "linear", 0.0),
                ],
            },
            afu: AfuConfig::default(),
            optimizer: OptimizerConfig {
                kind: OptimizerKind::Adam,
                lr: 0.01,
            },
            schedule: LrSchedule::default(),
            toy: ToyDataConfig {
                n_per_cluster: 500,
                sigma: 0.5,
            },
            mnist: MnistConfig {
                data_dir: None,
                train_subset: 10_000,
                test_subset: 2_000,
            },
            smoothness: SmoothnessConfig {
                hidden_layers: 5,
                width: 10,
                afu_file: None,
                random_afu: false,
            },
            grid: OutputGrid::default(),
        }
    }

    /// 2-4-1 network with a network-wide AFU, hinge loss, full-batch Adam.
    pub fn toy() -> Self {
        Self {
            epochs: 500,
            stop_at_train_accuracy: Some(1.0),
            ..Self::common(ExperimentKind::Toy)
        }
    }

    pub fn smoothness() -> Self {
        Self::common(ExperimentKind::Smoothness)
    }

    /// 784-256-128-10 with AFU hidden layers and a linear output, NLL,
    /// AdaDelta with a 0.7 decay.
    pub fn mnist() -> Self {
        Self {
            epochs: 3,
            batch_size: Some(64),
            loss: LossSpec::NegativeLogLikelihood,
            network: NetworkConfig {
                layers: vec![
                    LayerConfig::new(256, "afu", 0.25),
                    LayerConfig::new(128, "afu", 0.5),
                    LayerConfig::new(10, "linear", 0.0),
                ],
            },
            optimizer: OptimizerConfig {
                kind: OptimizerKind::Adadelta,
                lr: 1.0,
            },
            schedule: LrSchedule {
                base_lr: 1.0,
                gamma: 0.7,
            },
            ..Self::common(ExperimentKind::Mnist)
        }
    }

    pub fn default_for(kind: ExperimentKind) -> Self {
        match kind {
            ExperimentKind::Toy => Self::toy(),
            ExperimentKind::Smoothness => Self::smoothness(),
            ExperimentKind::Mnist => Self::mnist(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        let kind = match user.get("experiment") {
            Some(v) => v
                .clone()
                .try_into::<ExperimentKind>()
                .map_err(|e| Error::Config(format!("experiment: {e}")))?,
            None => return Err(Error::Config("missing `experiment` key".into())),
        };
        let mut merged = toml::Table::try_from(Self::default_for(kind))
            .map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, user);
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("name {:?} is not a plain file prefix", self.name));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == Some(0) {
            return bad("batch_size must be at least 1".into());
        }
        if let Some(a) = self.stop_at_train_accuracy {
            if !(a > 0.0 && a <= 1.0) {
                return bad(format!("stop_at_train_accuracy {a} not in (0, 1]"));
            }
        }
        if self.network.layers.is_empty() {
            return bad("network needs at least one layer".into());
        }
        self.layer_specs()?;
        if self.afu.hidden_units == 0 {
            return Err(Error::InvalidWidth);
        }
        if !(self.optimizer.lr > 0.0) || !self.optimizer.lr.is_finite() {
            return bad(format!(
                "optimizer lr must be positive, got {}",
                self.optimizer.lr
            ));
        }
        self.schedule.validate()?;
        if !(self.toy.sigma > 0.0) || self.toy.n_per_cluster == 0 {
            return bad("toy data needs sigma > 0 and n_per_cluster >= 1".into());
        }
        if self.mnist.train_subset == 0 || self.mnist.test_subset == 0 {
            return bad("MNIST subsets must be non-empty".into());
        }
        if self.smoothness.hidden_layers == 0 || self.smoothness.width == 0 {
            return bad("smoothness network needs hidden layers of width >= 1".into());
        }
        let g = &self.grid;
        if !(g.field_min < g.field_max) || !(g.curve_min < g.curve_max) {
            return bad("grid ranges need min < max".into());
        }
        if g.field_resolution < 3 || g.curve_points < 2 {
            return bad("grid needs field_resolution >= 3 and curve_points >= 2".into());
        }
        Ok(())
    }

    pub fn layer_specs(&self) -> Result<Vec<LayerSpec>> {
        self.network
            .layers
            .iter()
            .map(|l| {
                let act: ActivationChoice = l.activation.parse()?;
                if !(0.0..1.0).contains(&l.dropout) {
                    return Err(Error::Config(format!(
                        "dropout {} not in [0, 1)",
                        l.dropout
                    )));
                }
                if l.units == 0 {
                    return Err(Error::InvalidShape(vec![0]));
                }
                Ok(LayerSpec::new(l.units, act).with_dropout(l.dropout))
            })
            .collect()
    }

    pub fn uses_afu(&self) -> bool {
        self.network.layers.iter().any(|l| l.activation == "afu")
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            epochs: self.epochs,
            batch_size: self.batch_size,
            loss: self.loss,
            optimizer: self.optimizer.kind,
            lr: self.optimizer.lr,
            schedule: self.schedule,
            seed: self.seed,
            stop_at_train_accuracy: self.stop_at_train_accuracy,
        }
    }

    /// Prefix shared by every file this run emits.
    pub fn file_prefix(&self) -> String {
        format!("{}_s{}_", self.name, self.seed)
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
