//! Neural networks whose activation functions are themselves small learnable
//! networks (Activation Function Units), trained jointly with the host
//! network.
//!
//! The crate contains a reverse-mode autodiff tape, the canonical activation
//! functions, the AFU, dense networks with configurable AFU sharing, losses
//! and optimisers, dataset handling, and the experiment drivers used by the
//! `afu` command-line tool.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activations;
pub mod afu;
pub mod autograd;
pub mod config;
pub mod data;
pub mod error;
pub mod experiments;
pub mod loss;
pub mod network;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use activations::ActivationSpec;
pub use afu::{Afu, SharingScope};
pub use autograd::{GradientMap, InitSpec, Tape, TensorRef};
pub use error::{Error, Result};
pub use network::{Mode, Network};
pub use tensor::Tensor;
