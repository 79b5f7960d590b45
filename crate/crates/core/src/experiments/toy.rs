use std::time::Instant;

use super::contour::{boundary_extract, polylines_to_csv};
use super::grid::GridSpec;
use super::report::{curve_to_csv, epochs_to_csv, RunReport};
use super::train::{train, EpochRecord};
use super::{afu_curve, curve_argmin, curve_is_monotone};
use crate::config::ExperimentConfig;
use crate::data::{gen_xor_toy, ToyConfig, TOY_CENTERS};
use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::network::{AfuSettings, Network};
use crate::rng::derived;

/// The toy training set for `cfg`.
pub fn toy_data(cfg: &ExperimentConfig) -> Result<crate::data::Dataset> {
    gen_xor_toy(&ToyConfig {
        n_per_cluster: cfg.toy.n_per_cluster,
        sigma: cfg.toy.sigma,
        seed: cfg.seed,
    })
}

/// Train the 2-input scalar-output network of `cfg` on the XOR clusters and
/// emit the score field, its zero contour, AFU curves before and after
/// training, the first hidden layer's activation maps and the loss curve.
pub fn run_toy(cfg: &ExperimentConfig, on_epoch: impl FnMut(&EpochRecord)) -> Result<RunReport> {
    let start = Instant::now();
    cfg.validate()?;
    if cfg.loss != LossSpec::Hinge {
        return Err(Error::Config(
            "the toy experiment trains with hinge loss".into(),
        ));
    }
    let data = toy_data(cfg)?;
    let specs = cfg.layer_specs()?;
    let settings = cfg.uses_afu().then(|| AfuSettings::from(cfg.afu));
    let mut net = Network::build(2, &specs, settings.as_ref(), &mut derived(cfg.seed, 1))?;
    if net.output_dim() != 1 {
        return Err(Error::Config(
            "the toy network needs a single output unit".into(),
        ));
    }
    let before = net.afus().to_vec();

    let history = train(&mut net, &data, None, &cfg.train_settings(), on_epoch)?;
    let mut report = RunReport::new(cfg, &cfg.out_dir);
    report.initial_loss = Some(history.initial_loss);
    report.final_train_accuracy = Some(history.last().train_accuracy);
    report.epochs = history.epochs.clone();
    report.emit("loss.csv", &epochs_to_csv(&history.epochs))?;

    let g = &cfg.grid;
    let grid = GridSpec::square(g.field_min, g.field_max, g.field_resolution)?;
    let scores = net.score_field(&grid)?;
    report.emit("scores.csv", &scores.to_csv())?;
    let lines = boundary_extract(&scores, 0.0);
    report.emit("boundary.csv", &polylines_to_csv(&lines))?;
    report
        .metrics
        .insert("boundary_polylines".into(), lines.len() as f64);
    let mut centres_ok = 0;
    for ((cx, cy), label) in TOY_CENTERS {
        if net.predict_class(&[cx, cy])? == label {
            centres_ok += 1;
        }
    }
    report
        .metrics
        .insert("centres_classified".into(), centres_ok as f64);

    let single = net.afus().len() == 1;
    for (k, (b, a)) in before.iter().zip(net.afus()).enumerate() {
        let stem = if single {
            "afu".to_string()
        } else {
            format!("afu{k}")
        };
        report.emit(
            &format!("{stem}_before.csv"),
            &curve_to_csv(&afu_curve(b, g)?),
        )?;
        let after = afu_curve(a, g)?;
        report.emit(&format!("{stem}_after.csv"), &curve_to_csv(&after))?;
        report.emit(&format!("{stem}.toml"), &a.to_toml_string())?;
        if let Some(z) = curve_argmin(&after) {
            report.metrics.insert(format!("{stem}_argmin"), z);
        }
        report.metrics.insert(
            format!("{stem}_monotone"),
            if curve_is_monotone(&after) { 1.0 } else { 0.0 },
        );
    }

    if net.layers().len() > 1 {
        for k in 0..net.layers()[0].units() {
            let map = net.neuron_activation_map(0, k, &grid)?;
            report.emit(&format!("neuron{k}.csv"), &map.to_csv())?;
        }
    }
    for (l, fractions) in net.activation_stats(&data)?.iter().enumerate() {
        for (k, f) in fractions.iter().enumerate() {
            report
                .metrics
                .insert(format!("dead_fraction_l{l}_n{k}"), *f);
        }
    }

    report.wall_clock = start.elapsed();
    report.finish()?;
    Ok(report)
}
