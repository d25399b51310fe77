//! Radial prediction layers (RPL): an open-world alternative to the softmax
//! output layer, together with everything needed to train and study it.
//!
//! The crate contains a small reverse-mode autodiff engine, dense and
//! convolutional networks, softmax and RPL heads, Bayes-by-backprop training,
//! dataset loaders, FGSM and evaluation metrics. The `examples/` directory
//! shows each capability end to end; the `rpl` binary wraps the same
//! functions for command-line use.

pub mod autodiff;
pub mod bayes;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod heads;
pub mod layers;
pub mod metrics;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
