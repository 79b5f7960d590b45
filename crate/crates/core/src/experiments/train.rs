//! The shared mini-batch training loop.

use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::network::{predict_label, Mode, Network};
use crate::optim::{AdaDelta, Adam, LrSchedule, Optimizer};
use crate::rng::{derived, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Adadelta,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub loss: LossSpec,
    pub optimizer: OptimizerKind,
    /// Multiplies the schedule output.
    pub lr: f64,
    pub schedule: LrSchedule,
    pub seed: u64,
    /// Stop once train accuracy reaches this value.
    pub stop_at_train_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss over the epoch's batches, measured before each update.
    pub train_loss: f64,
    pub train_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHistory {
    /// Eval-mode loss on the training set before any update.
    pub initial_loss: f64,
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn last(&self) -> &EpochRecord {
        self.epochs.last().expect("at least one epoch")
    }
}

fn divergence(epoch: usize, loss: f64) -> Error {
    Error::Divergence { epoch, loss }
}

/// Eval-mode mean loss over a dataset.
pub fn evaluate_loss(net: &Network, data: &Dataset, loss: LossSpec) -> Result<f64> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(2048) {
        let x = data.features_matrix(chunk)?;
        let out = net.eval_batch(&x)?;
        let mut tape = Tape::new();
        let o = tape.constant(out)?;
        let l = loss.on_tape(&mut tape, &o, &data.labels(chunk))?;
        total += tape.value(&l).item()? * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Fraction of samples whose predicted label matches.
pub fn accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Size {
            requested: 1,
            available: 0,
        });
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let out = net.eval_batch(&data.features_matrix(&idx)?)?;
    let width = net.output_dim();
    let correct = out
        .data()
        .chunks_exact(width)
        .zip(data.samples())
        .filter(|(o, s)| predict_label(o) == s.label)
        .count();
    Ok(correct as f64 / data.len() as f64)
}

/// One forward, backward and update on a batch; returns the batch loss.
fn sgd_step(
    net: &mut Network,
    opt: &mut dyn Optimizer,
    data: &Dataset,
    batch: &[usize],
    loss: LossSpec,
    rng: &mut SeededRng,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape)?;
    let x = tape.constant(data.features_matrix(batch)?)?;
    let outs = net.forward_on_tape(&mut tape, &bound, &x, Mode::Train, rng)?;
    let out = outs.last().expect("at least one layer");
    let l = loss.on_tape(&mut tape, out, &data.labels(batch))?;
    let grads = tape.backward(&l)?.collect(&bound.params);
    opt.step(&mut net.parameters_mut(), &grads)?;
    tape.value(&l).item()
}

/// Train `net` in place. `on_epoch` sees every finished epoch.
pub fn train(
    net: &mut Network,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    settings: &TrainSettings,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainHistory> {
    if settings.epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    settings.schedule.validate()?;
    let initial_loss = evaluate_loss(net, train_set, settings.loss)?;
    if !initial_loss.is_finite() {
        return Err(divergence(0, initial_loss));
    }
    let mut opt: Box<dyn Optimizer> = match settings.optimizer {
        OptimizerKind::Adam => Box::new(Adam::new(settings.lr)),
        OptimizerKind::Adadelta => Box::new(AdaDelta::default()),
    };
    let scale_lr = settings.optimizer == OptimizerKind::Adadelta;
    let mut dropout_rng = derived(settings.seed, 2);
    let batch_size = settings.batch_size.unwrap_or(train_set.len());
    let mut epochs = Vec::with_capacity(settings.epochs);

    for epoch in 0..settings.epochs {
        let m = settings.schedule.lr(epoch);
        opt.set_lr_multiplier(if scale_lr { settings.lr * m } else { m });
        let shuffle_seed = settings.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ epoch as u64;
        let batches = if settings.batch_size.is_none() {
            vec![(0..train_set.len()).collect()]
        } else {
            train_set.batches(batch_size, shuffle_seed)?
        };
        let mut loss_sum = 0.0;
        for batch in &batches {
            let loss = match sgd_step(
                net,
                opt.as_mut(),
                train_set,
                batch,
                settings.loss,
                &mut dropout_rng,
            ) {
                Ok(l) => l,
                Err(Error::NonFinite(_) | Error::NonFiniteGradient { .. }) => {
                    return Err(divergence(epoch, f64::NAN))
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(divergence(epoch, loss));
            }
            loss_sum += loss * batch.len() as f64;
            if !net.parameters().iter().all(|p| p.all_finite()) {
                return Err(divergence(epoch, loss));
            }
        }
        let train_loss = loss_sum / train_set.len() as f64;
        if !train_loss.is_finite() {
            return Err(divergence(epoch, train_loss));
        }
        let train_accuracy = accuracy(net, train_set)?;
        let test_accuracy = test_set.map(|t| accuracy(net, t)).transpose()?;
        let record = EpochRecord {
            epoch,
            train_loss,
            train_accuracy,
            test_accuracy,
        };
        on_epoch(&record);
        epochs.push(record);
        if settings
            .stop_at_train_accuracy
            .is_some_and(|target| train_accuracy >= target)
        {
            break;
        }
    }
    Ok(TrainHistory {
        initial_loss,
        epochs,
    })
}
