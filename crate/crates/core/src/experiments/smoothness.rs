use std::path::PathBuf;
use std::time::Instant;

use super::grid::{GridField, GridSpec};
use super::report::RunReport;
use crate::activations::ActivationSpec;
use crate::afu::Afu;
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::network::{ActivationChoice, DenseLayer, LayerActivation, LayerSpec, Network};
use crate::rng::derived;

/// Randomly initialised host: 2 inputs, `hidden_layers x width` ReLU units,
/// one linear output. Biases share the weights' uniform range.
pub fn random_host(cfg: &ExperimentConfig) -> Result<Network> {
    let s = &cfg.smoothness;
    let mut specs = vec![
        LayerSpec::new(s.width, ActivationChoice::Fixed(ActivationSpec::Relu));
        s.hidden_layers
    ];
    specs.push(LayerSpec::new(
        1,
        ActivationChoice::Fixed(ActivationSpec::Linear),
    ));
    Network::build_with_bias_init(2, &specs, None, true, &mut derived(cfg.seed, 1))
}

/// The same weights with every hidden activation replaced by `afu`.
pub fn with_afu(host: &Network, afu: &Afu) -> Result<Network> {
    let last = host.layers().len() - 1;
    let layers = host
        .layers()
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let act = if k < last {
                LayerActivation::Afu(0)
            } else {
                l.activation
            };
            DenseLayer::new(l.weights.clone(), l.bias.clone(), act, l.dropout)
        })
        .collect::<Result<Vec<_>>>()?;
    Network::from_parts(
        host.input_dim(),
        layers,
        vec![afu.clone()],
        Some(crate::afu::SharingScope::Network),
    )
}

/// Where the smoothness run looks for its AFU when none is configured.
pub fn default_afu_file(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join(format!(
        "{}_s{}_afu.toml",
        ExperimentKind::Toy.name(),
        cfg.seed
    ))
}

fn afu_source(cfg: &ExperimentConfig) -> Result<Afu> {
    if cfg.smoothness.random_afu {
        return Afu::with_default_init(
            cfg.afu.hidden_units,
            cfg.afu.base,
            &mut derived(cfg.seed, 3),
        );
    }
    let path = cfg
        .smoothness
        .afu_file
        .clone()
        .unwrap_or_else(|| default_afu_file(cfg));
    if !path.exists() {
        return Err(Error::Config(format!(
            "AFU file {} not found; run train-toy with the same seed and output directory first, \
             name a file, or ask for a random AFU",
            path.display()
        )));
    }
    Afu::load(&path)
}

/// Score fields of the ReLU host and of the same host using `afu`.
pub fn smoothness_fields(cfg: &ExperimentConfig, afu: &Afu) -> Result<(GridField, GridField)> {
    let g = &cfg.grid;
    let grid = GridSpec::square(g.field_min, g.field_max, g.field_resolution)?;
    let host = random_host(cfg)?;
    let relu = host.score_field(&grid)?;
    let learned = with_afu(&host, afu)?.score_field(&grid)?;
    Ok((relu, learned))
}

/// Emit both score fields and their roughness values
/// (`roughness_relu`, `roughness_afu` metrics). Roughness grows with the
/// field's amplitude, so each field's value range is reported too.
pub fn smoothness_analysis(cfg: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    cfg.validate()?;
    let afu = afu_source(cfg)?;
    let (relu, learned) = smoothness_fields(cfg, &afu)?;
    let mut report = RunReport::new(cfg, &cfg.out_dir);
    report.emit("relu_scores.csv", &relu.to_csv())?;
    report.emit("afu_scores.csv", &learned.to_csv())?;
    report.emit("afu.toml", &afu.to_toml_string())?;
    report
        .metrics
        .insert("roughness_relu".into(), relu.roughness());
    report
        .metrics
        .insert("roughness_afu".into(), learned.roughness());
    for (key, field) in [("score_range_relu", &relu), ("score_range_afu", &learned)] {
        let (lo, hi) = field
            .values()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        report.metrics.insert(key.into(), hi - lo);
    }
    report.wall_clock = start.elapsed();
    report.finish()?;
    Ok(report)
}
