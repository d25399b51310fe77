//! Minimal reverse-mode automatic differentiation over dense tensors.
//!
//! Build a [`Tape`], create leaves with [`Tape::param`] or
//! [`Tape::constant`], compose operations on the returned [`Var`]s, and
//! call [`Tape::backward`] on a scalar loss.
//!
//! ```
//! use rpl::autodiff::Tape;
//! use rpl::Tensor;
//!
//! let tape = Tape::<f64>::new();
//! let x = tape.param(Tensor::from_vec(vec![-1.0, 2.0]));
//! let loss = x.relu().sum();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0]);
//! ```

mod gradcheck;
mod ops;
mod tape;

pub use gradcheck::{finite_difference_check, graph_fn, RELATIVE_ERROR_FLOOR};
pub use tape::{Gradients, Tape, Var};

pub(crate) use ops::{sign, softplus};
