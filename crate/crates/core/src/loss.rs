//! Hinge and negative log-likelihood losses. Batch losses are the mean of
//! the per-sample losses.

use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, TensorRef};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSpec {
    /// `max(0, 1 - y f)` on a scalar output, labels in {-1, +1}.
    Hinge,
    /// `-log softmax(logits)[y]`, labels in `0..C`.
    #[serde(rename = "nll")]
    NegativeLogLikelihood,
}

fn check_signed(y: i64) -> Result<()> {
    if y == 1 || y == -1 {
        Ok(())
    } else {
        Err(Error::Label {
            label: y,
            reason: "hinge loss needs labels in {-1, +1}".into(),
        })
    }
}

fn check_class(y: i64, classes: usize) -> Result<usize> {
    if y >= 0 && (y as usize) < classes {
        Ok(y as usize)
    } else {
        Err(Error::Label {
            label: y,
            reason: format!("class index outside 0..{classes}"),
        })
    }
}

pub fn hinge_loss(f: f64, y: i64) -> Result<f64> {
    check_signed(y)?;
    Ok((1.0 - y as f64 * f).max(0.0))
}

pub fn nll_loss(logits: &[f64], y: i64) -> Result<f64> {
    let k = check_class(y, logits.len())?;
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    Ok(lse - logits[k])
}

/// Probabilities from the stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl LossSpec {
    /// Mean batch loss on the tape for a `[batch, outputs]` network output.
    pub fn on_tape(self, tape: &mut Tape, output: &TensorRef, labels: &[i64]) -> Result<TensorRef> {
        let shape = output.shape().to_vec();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(Error::Shape {
                op: "loss",
                left: shape,
                right: vec![labels.len()],
            });
        }
        match self {
            LossSpec::Hinge => {
                if shape[1] != 1 {
                    return Err(Error::Shape {
                        op: "hinge loss",
                        left: shape,
                        right: vec![labels.len(), 1],
                    });
                }
                let mut y = Vec::with_capacity(labels.len());
                for &l in labels {
                    check_signed(l)?;
                    y.push(l as f64);
                }
                let yc = tape.constant(Tensor::matrix(labels.len(), 1, y)?)?;
                let one = tape.constant(Tensor::scalar(1.0))?;
                let margin = tape.mul(&yc, output)?;
                let per_sample = tape.max0diff(&one, &margin)?;
                tape.mean(&per_sample)
            }
            LossSpec::NegativeLogLikelihood => {
                let classes = shape[1];
                let index = labels
                    .iter()
                    .map(|&l| check_class(l, classes))
                    .collect::<Result<Vec<_>>>()?;
                let lp = tape.log_softmax(output)?;
                let picked = tape.pick(&lp, &index)?;
                let m = tape.mean(&picked)?;
                tape.scale(&m, -1.0)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::grad_check;
    use proptest::prelude::*;

    #[test]
    fn hinge_values() {
        assert_eq!(hinge_loss(2.0, 1).unwrap(), 0.0);
        assert_eq!(hinge_loss(0.0, 1).unwrap(), 1.0);
        assert_eq!(hinge_loss(-1.0, 1).unwrap(), 2.0);
        assert!(matches!(hinge_loss(0.0, 0), Err(Error::Label { .. })));
    }

    #[test]
    fn nll_values() {
        let uniform = [0.3; 10];
        for y in 0..10 {
            assert!((nll_loss(&uniform, y).unwrap() - 10f64.ln()).abs() < 1e-12);
        }
        assert!((nll_loss(&[0.0, 0.0], 0).unwrap() - 2f64.ln()).abs() < 1e-12);
        let mut dominant = [0.0; 10];
        dominant[3] = 100.0;
        let l = nll_loss(&dominant, 3).unwrap();
        assert!(l.is_finite() && (0.0..=1e-40).contains(&l), "{l}");
        assert!(matches!(nll_loss(&[0.0, 0.0], 2), Err(Error::Label { .. })));
        assert!(nll_loss(&[0.0, 0.0], -1).is_err());
    }

    #[test]
    fn tape_losses_match_scalar_forms() {
        let mut tape = Tape::new();
        let out = tape
            .constant(Tensor::matrix(3, 1, vec![2.0, 0.0, -1.0]).unwrap())
            .unwrap();
        let l = LossSpec::Hinge
            .on_tape(&mut tape, &out, &[1, 1, 1])
            .unwrap();
        assert_eq!(tape.value(&l).data(), &[1.0]);

        let logits = vec![0.5, -1.0, 2.0, 0.1, 0.1, 0.1];
        let out = tape
            .constant(Tensor::matrix(2, 3, logits.clone()).unwrap())
            .unwrap();
        let l = LossSpec::NegativeLogLikelihood
            .on_tape(&mut tape, &out, &[2, 0])
            .unwrap();
        let expect =
            (nll_loss(&logits[..3], 2).unwrap() + nll_loss(&logits[3..], 0).unwrap()) / 2.0;
        assert!((tape.value(&l).data()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn tape_loss_label_errors() {
        let mut tape = Tape::new();
        let out = tape
            .constant(Tensor::matrix(1, 1, vec![0.0]).unwrap())
            .unwrap();
        assert!(LossSpec::Hinge.on_tape(&mut tape, &out, &[0]).is_err());
        let out = tape
            .constant(Tensor::matrix(1, 3, vec![0.0; 3]).unwrap())
            .unwrap();
        assert!(LossSpec::NegativeLogLikelihood
            .on_tape(&mut tape, &out, &[3])
            .is_err());
    }

    proptest! {
        #[test]
        fn hinge_gradient_is_minus_y_inside_margin(f in -3.0f64..3.0, pos in any::<bool>()) {
            let y = if pos { 1 } else { -1 };
            prop_assume!((1.0 - y as f64 * f).abs() > 1e-3);
            let mut tape = Tape::new();
            let o = tape.param_from(Tensor::matrix(1, 1, vec![f]).unwrap()).unwrap();
            let l = LossSpec::Hinge.on_tape(&mut tape, &o, &[y]).unwrap();
            let g = tape.backward(&l).unwrap().get(&o).unwrap().data()[0];
            let expect = if (y as f64) * f < 1.0 { -(y as f64) } else { 0.0 };
            prop_assert_eq!(g, expect);
            let fd = (hinge_loss(f + 1e-6, y).unwrap() - hinge_loss(f - 1e-6, y).unwrap()) / 2e-6;
            prop_assert!((fd - expect).abs() < 1e-6);
        }

        #[test]
        fn nll_is_nonnegative_and_softmax_normalised(
            logits in prop::collection::vec(-50.0f64..50.0, 2..12),
            pick in 0usize..12,
        ) {
            let y = (pick % logits.len()) as i64;
            prop_assert!(nll_loss(&logits, y).unwrap() >= 0.0);
            let total: f64 = softmax(&logits).iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn nll_gradient_matches_fd(logits in prop::collection::vec(-5.0f64..5.0, 2..6)) {
            let c = logits.len();
            let f = |t: &mut Tape, p: &[crate::autograd::TensorRef]| {
                LossSpec::NegativeLogLikelihood.on_tape(t, &p[0], &[(c - 1) as i64])
            };
            let err = grad_check(f, &[Tensor::matrix(1, c, logits.clone()).unwrap()], 1e-5).unwrap();
            prop_assert!(err <= 1e-6);
        }
    }
}
