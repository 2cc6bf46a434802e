//! Minimal define-by-run reverse-mode automatic differentiation.
//!
//! Values live in [`Tensor`]s. A forward pass records operations on a
//! [`Tape`], which hands out [`Var`] handles; [`Tape::backward`] walks the
//! recorded graph once in reverse and returns the [`Gradients`] of a scalar
//! loss with respect to every node that requires them.
//!
//! ```
//! use autodiff::{Tape, Tensor};
//!
//! let w = Tensor::<f32>::from_vec(vec![1], vec![1.0]).unwrap().parameter();
//! let x = Tensor::from_vec(vec![1], vec![2.0]).unwrap();
//! let y = Tensor::from_vec(vec![1], vec![0.0]).unwrap();
//!
//! let mut tape = Tape::new();
//! let wv = tape.leaf(&w);
//! let xv = tape.leaf(&x);
//! let yv = tape.leaf(&y);
//! let pred = tape.mul(wv, xv).unwrap();
//! let loss = tape.mse_loss(pred, yv).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(wv).unwrap(), &[8.0]);
//! ```

mod error;
pub mod gradcheck;
mod kernels;
mod optim;
mod real;
mod tape;
mod tensor;

pub use error::{Error, Result};
pub use optim::{sgd_step, Sgd};
pub use real::Real;
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Init, Tensor};
