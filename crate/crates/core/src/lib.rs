//! Action semantics networks for multi-agent reinforcement learning.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every algorithmic
//! piece of the framework:
//!
//! * [`autodiff`]: a define-by-run reverse-mode tape over dense `f64`
//!   arrays, parameter stores, optimizers and a GRU cell.
//! * [`nets`]: observation/action layouts, the ASN family (basic,
//!   homogeneous, mixed, multi-action) and the vanilla, dueling, attention and
//!   entity-attention baselines.
//! * [`algos`]: replay, exploration schedules, IQL/VDN/QMIX value learners
//!   and PPO/A2C policy learners.
//! * [`env`]: the grid-combat stochastic game with `mmo` and `marines`
//!   presets and scripted opponents.
//! * [`runner`]: training and evaluation loops that tie the pieces together
//!   without touching the filesystem.
//!
//! Enable the `std` feature to get runtime SIMD detection in the matrix
//! kernels and `std::error::Error` impls.
#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod algos;
pub mod autodiff;
pub mod env;
mod error;
pub mod nets;
pub mod runner;

pub use error::{Error, Result};
