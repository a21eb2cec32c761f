//! Reverse-mode automatic differentiation.
//!
//! A [`Graph`] is rebuilt on every forward pass: each operation computes its
//! value eagerly and records how to propagate gradients. Parameters live in a
//! [`ParameterStore`] that the graph borrows; [`Graph::backward`] returns the
//! gradient of a scalar root which is then accumulated into the store and
//! consumed by [`optimizer_step`].

mod array;
mod check;
mod graph;
mod gru;
mod optim;
mod params;

pub use array::Array;
pub use check::{check_gradients, GradCheck, REL_FLOOR};
pub use graph::{Gradients, Graph, Var};
pub(crate) use graph::softmax_in_place;
pub use gru::GruCell;
pub use optim::{clip_grad_norm, global_grad_norm, optimizer_step, OptimizerConfig};
pub use params::{Dense, ParamId, Parameter, ParameterStore};
