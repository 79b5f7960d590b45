//! The canonical activation functions, each with its exact derivative.
//!
//! These serve both as fixed network activations and as the base function
//! inside an AFU. All forms are evaluated in a way that stays finite for
//! `|z| <= 700`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationSpec {
    Linear,
    Relu,
    /// `0.01 z` for `z < 0`, `z` otherwise. At the kink the derivative is
    /// taken from the negative side (0.01).
    LeakyRelu,
    Sigmoid,
    Tanh,
    /// `z * sigmoid(z)` (no β).
    Swish,
    /// `z * tanh(softplus(z))`.
    Mish,
}

impl ActivationSpec {
    pub const LEAKY_SLOPE: f64 = 0.01;

    pub const ALL: [ActivationSpec; 7] = [
        ActivationSpec::Linear,
        ActivationSpec::Relu,
        ActivationSpec::LeakyRelu,
        ActivationSpec::Sigmoid,
        ActivationSpec::Tanh,
        ActivationSpec::Swish,
        ActivationSpec::Mish,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationSpec::Linear => "linear",
            ActivationSpec::Relu => "relu",
            ActivationSpec::LeakyRelu => "leaky_relu",
            ActivationSpec::Sigmoid => "sigmoid",
            ActivationSpec::Tanh => "tanh",
            ActivationSpec::Swish => "swish",
            ActivationSpec::Mish => "mish",
        }
    }

    /// `g(z)`. Unchecked; see [`act_forward`] for the validating form.
    #[inline]
    pub fn eval(self, z: f64) -> f64 {
        match self {
            ActivationSpec::Linear => z,
            ActivationSpec::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            ActivationSpec::LeakyRelu => {
                if z < 0.0 {
                    Self::LEAKY_SLOPE * z
                } else {
                    z
                }
            }
            ActivationSpec::Sigmoid => sigmoid(z),
            ActivationSpec::Tanh => z.tanh(),
            ActivationSpec::Swish => z * sigmoid(z),
            ActivationSpec::Mish => z * softplus(z).tanh(),
        }
    }

    /// `g'(z)`. ReLU uses 0 at the kink, leaky ReLU uses 0.01.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            ActivationSpec::Linear => 1.0,
            ActivationSpec::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationSpec::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    Self::LEAKY_SLOPE
                }
            }
            ActivationSpec::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            ActivationSpec::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            ActivationSpec::Swish => {
                let s = sigmoid(z);
                s + z * s * (1.0 - s)
            }
            ActivationSpec::Mish => {
                let t = softplus(z).tanh();
                t + z * (1.0 - t * t) * sigmoid(z)
            }
        }
    }

    /// Value and derivative together; shares the transcendental work.
    #[inline]
    pub fn eval_with_derivative(self, z: f64) -> (f64, f64) {
        match self {
            ActivationSpec::Sigmoid => {
                let s = sigmoid(z);
                (s, s * (1.0 - s))
            }
            ActivationSpec::Tanh => {
                let t = z.tanh();
                (t, 1.0 - t * t)
            }
            ActivationSpec::Swish => {
                let s = sigmoid(z);
                (z * s, s + z * s * (1.0 - s))
            }
            ActivationSpec::Mish => {
                let t = softplus(z).tanh();
                (z * t, t + z * (1.0 - t * t) * sigmoid(z))
            }
            _ => (self.eval(z), self.derivative(z)),
        }
    }
}

impl fmt::Display for ActivationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActivationSpec::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::UnknownActivation(s.to_string()))
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` as `max(z, 0) + ln(1 + e^-|z|)`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn act_forward(spec: ActivationSpec, z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::NonFinite(format!("{spec} input {z}")));
    }
    Ok(spec.eval(z))
}

pub fn act_derivative(spec: ActivationSpec, z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::NonFinite(format!("{spec} input {z}")));
    }
    Ok(spec.derivative(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn central_difference(spec: ActivationSpec, z: f64, h: f64) -> f64 {
        (spec.eval(z + h) - spec.eval(z - h)) / (2.0 * h)
    }

    #[test]
    fn zero_and_symmetry_values() {
        use ActivationSpec::*;
        assert_eq!(Relu.eval(-0.5), 0.0);
        assert_eq!(Relu.eval(2.0), 2.0);
        assert_eq!(Sigmoid.eval(0.0), 0.5);
        assert_eq!(Tanh.eval(0.0), 0.0);
        assert_eq!(Swish.eval(0.0), 0.0);
        assert_eq!(Mish.eval(0.0), 0.0);
        assert_eq!(LeakyRelu.eval(-1.0), -0.01);
    }

    #[test]
    fn simple_derivatives() {
        assert_eq!(ActivationSpec::Sigmoid.derivative(0.0), 0.25);
        for z in [-3.0, 0.0, 17.5] {
            assert_eq!(ActivationSpec::Linear.derivative(z), 1.0);
        }
    }

    #[test]
    fn kink_conventions() {
        assert_eq!(ActivationSpec::Relu.derivative(0.0), 0.0);
        assert_eq!(ActivationSpec::LeakyRelu.derivative(0.0), 0.01);
    }

    #[test]
    fn rejects_non_finite_input() {
        assert!(matches!(
            act_forward(ActivationSpec::Mish, f64::NAN),
            Err(Error::NonFinite(_))
        ));
        assert!(act_derivative(ActivationSpec::Relu, f64::INFINITY).is_err());
    }

    #[test]
    fn names_round_trip_and_unknown_lists_valid() {
        for a in ActivationSpec::ALL {
            assert_eq!(a.name().parse::<ActivationSpec>().unwrap(), a);
        }
        let msg = "gish".parse::<ActivationSpec>().unwrap_err().to_string();
        for a in ActivationSpec::ALL {
            assert!(msg.contains(a.name()), "{msg}");
        }
    }

    #[test]
    fn self_gated_forms_approach_identity() {
        for spec in [ActivationSpec::Swish, ActivationSpec::Mish] {
            assert!((spec.eval(40.0) - 40.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn stable_over_wide_range() {
        for i in -7000..=7000 {
            let z = i as f64 * 0.1;
            for spec in ActivationSpec::ALL {
                let (v, d) = spec.eval_with_derivative(z);
                assert!(v.is_finite() && d.is_finite(), "{spec} at {z}");
                assert_eq!(v, spec.eval(z));
                assert_eq!(d, spec.derivative(z));
            }
        }
    }

    #[test]
    fn mish_derivative_matches_fd_on_fixed_sample() {
        let mut rng = crate::rng::seeded(7);
        for _ in 0..200 {
            let z = crate::rng::symmetric_uniform(&mut rng, 10.0);
            let fd = central_difference(ActivationSpec::Mish, z, 1e-5);
            let an = ActivationSpec::Mish.derivative(z);
            assert!((an - fd).abs() / an.abs().max(1.0) <= 1e-6, "z={z}");
        }
    }

    proptest! {
        #[test]
        fn relu_identity_on_nonnegative(z in 0.0f64..1e6) {
            prop_assert_eq!(ActivationSpec::Relu.eval(z), z);
        }

        #[test]
        fn bounded_forms(z in -700.0f64..700.0) {
            let s = ActivationSpec::Sigmoid.eval(z);
            let t = ActivationSpec::Tanh.eval(z);
            // Saturation rounds to the bound in f64; strictness holds on a moderate range.
            if z.abs() < 30.0 {
                prop_assert!(s > 0.0 && s < 1.0);
            }
            if z.abs() < 15.0 {
                prop_assert!(t > -1.0 && t < 1.0);
            }
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!((-1.0..=1.0).contains(&t));
        }

        #[test]
        fn derivatives_match_central_differences(z in -20.0f64..20.0) {
            for spec in ActivationSpec::ALL {
                let kinked = matches!(spec, ActivationSpec::Relu | ActivationSpec::LeakyRelu);
                if kinked && z.abs() <= 1e-3 {
                    continue;
                }
                let fd = central_difference(spec, z, 1e-5);
                let an = spec.derivative(z);
                prop_assert!((an - fd).abs() / an.abs().max(1.0) <= 1e-6,
                    "{} z={} an={} fd={}", spec, z, an, fd);
            }
        }
    }
}
